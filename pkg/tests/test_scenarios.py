"""Scenario construction: advertised flags, anchors, samplers."""

from __future__ import annotations

import math

import numpy as np
import pytest

import distpair.dual as ops
import distpair.linalg as la
from distpair.chart_geometry import cov_at, div_vector, einstein_tensor
from distpair.endo_fields import sqrt_psd
from distpair.scenarios import (
    SCENARIO_NAMES,
    build_scenario,
    conformal_hopf,
    einstein_a1,
    einstein_factor,
    einstein_s3xt2,
    hopf_contact_s3,
    non_allowed_rotated,
    random_scalar_field,
    random_vector_field,
    scaled_identity,
    warped_torus,
)


@pytest.mark.parametrize("name", SCENARIO_NAMES)
def test_construction_probe_supports_advertised_flags(name):
    sc = build_scenario(name)
    ev = sc.pair.evidence
    assert ev["adapted"] < 1e-8
    if sc.pair.self_adjoint:
        assert ev["self_adjoint"] < 1e-8
    if sc.pair.allowed:
        assert ev["allowed"] < 1e-8
    if sc.pair.div_pp_star_zero:
        assert ev["div_pp_star"] < 1e-8
    if sc.pair.div_p_squared_zero:
        assert ev["div_p_squared"] < 1e-8


def test_rotated_pair_flags():
    sc = non_allowed_rotated()
    assert sc.pair.evidence["adapted"] < 1e-10
    assert not sc.pair.allowed and not sc.pair.self_adjoint


def test_scaled_identity_rejects_zero():
    with pytest.raises(ValueError):
        scaled_identity(warped_torus(), 0.0)


def test_einstein_block_coefficient_anchors():
    assert abs(einstein_a1(math.pi / 2) - math.sqrt(1.25)) < 1e-14
    assert abs(einstein_a1(0.0)) < 1e-14
    rng = np.random.default_rng(7)
    for u in rng.uniform(0, 2 * math.pi, size=6):
        assert abs(einstein_a1(u) ** 2 + einstein_factor(u)) < 1e-13


def test_einstein_pair_is_psd_root_of_minus_einstein_tensor():
    sc = einstein_s3xt2()
    rng = np.random.default_rng(8)
    for _ in range(4):
        x = sc.sample_points(rng, 1)[0]
        E = einstein_tensor(sc.geom, x)
        minus_e = [[-v for v in row] for row in E]
        g = sc.geom.jet1(x).g
        root = sqrt_psd(minus_e, g=g)
        total = sc.pair.total()(x)
        assert np.allclose(np.array(root), np.array(total), atol=1e-8)


def test_hopf_field_is_unit_geodesic_divergence_free():
    sc = hopf_contact_s3()
    xi = sc.extras["xi"]
    rng = np.random.default_rng(9)
    for _ in range(5):
        x = sc.sample_points(rng, 1)[0]
        g = sc.geom.jet1(x).g
        v = xi(x)
        assert abs(la.bilinear(g, v, v) - 1.0) < 1e-12
        acc = cov_at(sc.geom, x, v, xi)
        assert la.bilinear(g, acc, acc) < 1e-20
        assert abs(div_vector(sc.geom, xi, x)) < 1e-12


def test_quarter_turn_endo_is_conformally_invariant():
    base = hopf_contact_s3()
    conf = conformal_hopf()
    rng = np.random.default_rng(10)
    for _ in range(5):
        x = base.sample_points(rng, 1)[0]
        pb = np.array(base.extras["phi"](x), dtype=float)
        pc = np.array(conf.extras["phi"](x), dtype=float)
        assert np.abs(pb - pc).max() < 1e-12


def test_conformal_field_is_not_geodesic():
    conf = conformal_hopf()
    xi = conf.extras["xi"]
    rng = np.random.default_rng(11)
    worst_acc = worst_div = 0.0
    for _ in range(6):
        x = conf.sample_points(rng, 1)[0]
        g = conf.geom.jet1(x).g
        v = xi(x)
        assert abs(la.bilinear(g, v, v) - 1.0) < 1e-12  # still unit length
        acc = cov_at(conf.geom, x, v, xi)
        worst_acc = max(worst_acc, math.sqrt(max(la.bilinear(g, acc, acc), 0.0)))
        worst_div = max(worst_div, abs(div_vector(conf.geom, xi, x)))
    assert worst_acc > 1e-2 and worst_div > 1e-2


def test_sampled_fields_are_differentiable_everywhere_sampled():
    rng = np.random.default_rng(12)
    for name in SCENARIO_NAMES:
        sc = build_scenario(name)
        X = random_vector_field(sc, rng)
        f = random_scalar_field(sc, rng)
        x = sc.sample_points(rng, 1)[0]
        d = cov_at(sc.geom, x, list(rng.normal(size=sc.chart.dim)), X)
        assert all(np.isfinite(float(c)) for c in d)
        from distpair.dual import directional_scalar

        df = directional_scalar(f, x, list(rng.normal(size=sc.chart.dim)))
        assert np.isfinite(float(df))


def test_sample_points_respect_bounds_and_seed():
    sc = warped_torus()
    rng1 = np.random.default_rng(13)
    rng2 = np.random.default_rng(13)
    pts1 = sc.sample_points(rng1, 10)
    pts2 = sc.sample_points(rng2, 10)
    assert pts1 == pts2
    for p in pts1:
        for c, (lo, hi) in zip(p, sc.sample_bounds):
            assert lo <= c <= hi


def test_grid_builder_broadcasts_single_count():
    sc = einstein_s3xt2()
    grid = sc.grid(6)
    assert grid.counts == (6, 6, 6, 6, 6)
    grid = sc.grid((8, 8, 8, 4, 4))
    assert grid.counts == (8, 8, 8, 4, 4)
