"""Structural tensors, the curvature identity, divergences, invariants."""

from __future__ import annotations

import math

import numpy as np
import pytest

import distpair.dual as ops
import distpair.linalg as la
from distpair.chart_geometry import cov_at, riemann, riemann_up
from distpair.dist_tensors import (
    as_field,
    b_tensors,
    codazzi_residual,
    contact_identity_residual,
    contact_structure_residuals,
    dist_invariants,
    div_p,
    div_p_paths,
    field_b1,
    field_b2,
    field_check_b1,
    field_hat_b1,
    collapse_residual,
    mean_curvature_batch,
    div_equivalence_residuals,
    rp_reduced,
    trace_identity_residuals,
    tsr_tensors,
    walczak_pointwise_residual,
    walczak_residual_batch,
)
from distpair.endo_fields import EndoPair, allowed_forms, apply_endo, gnorm
from distpair.scenarios import (
    build_scenario,
    conformal_hopf,
    einstein_s3xt2,
    flat_torus_projectors,
    hopf_contact_s3,
    non_allowed_rotated,
    scaled_identity,
    warped_torus,
)

ALL_SCENARIOS = (
    "flat-torus",
    "scaled-identity",
    "warped-torus",
    "einstein-s3xt2",
    "hopf-s3",
)


# -- structural tensors -------------------------------------------------------


def test_b_tensors_warped_torus_closed_form():
    sc = warped_torus()
    rng = np.random.default_rng(50)
    for _ in range(4):
        u, v = rng.uniform(0, 2 * math.pi, size=2)
        X = list(rng.normal(size=2))
        Y = list(rng.normal(size=2))
        bt = b_tensors(sc.pair, sc.geom, [float(u), float(v)], X, Y)
        wprime = math.cos(u)
        # orthoprojector pair: the three index-2 tensors coincide and equal
        # (0, w' X^u Y^v); the index-1 family vanishes identically
        want2 = [0.0, wprime * X[0] * Y[1]]
        for key in ("b2", "hat_b2", "check_b2"):
            assert np.allclose(bt[key], want2, atol=1e-12), key
        for key in ("b1", "hat_b1", "check_b1"):
            assert np.allclose(bt[key], [0.0, 0.0], atol=1e-12), key


def test_b2_at_origin_matches_hand_value():
    sc = warped_torus()
    bt = b_tensors(sc.pair, sc.geom, [0.0, 0.7], [1.0, 0.0], [0.0, 1.0])
    assert np.allclose(bt["b2"], [0.0, 1.0], atol=1e-14)


def test_structural_tensors_are_tensorial_for_allowed_pair():
    sc = warped_torus()
    rng = np.random.default_rng(51)

    def f(z):
        return 1.0 + 0.5 * ops.sin(z[0]) * ops.cos(z[1])

    x = sc.sample_points(rng, 1)[0]
    args = [list(rng.normal(size=2)) for _ in range(4)]
    base = tsr_tensors(sc.pair, sc.geom, x, *args)
    fx = f(x)
    for slot in range(4):
        mod = list(args)
        const = mod[slot]
        mod[slot] = lambda z, c=const: la.vec_scale(f(z), c)
        scaled = tsr_tensors(sc.pair, sc.geom, x, *mod)
        for key in base:
            assert abs(scaled[key] - fx * base[key]) < 1e-12, (slot, key)


def test_tensoriality_fails_without_allowedness():
    sc = non_allowed_rotated()
    rng = np.random.default_rng(52)

    def f(z):
        return 1.0 + 0.5 * ops.sin(z[0]) * ops.cos(z[1])

    worst = 0.0
    for _ in range(3):
        x = sc.sample_points(rng, 1)[0]
        args = [list(rng.normal(size=2)) for _ in range(4)]
        base = tsr_tensors(sc.pair, sc.geom, x, *args)
        fx = f(x)
        for slot in range(4):
            mod = list(args)
            const = mod[slot]
            mod[slot] = lambda z, c=const: la.vec_scale(f(z), c)
            scaled = tsr_tensors(sc.pair, sc.geom, x, *mod)
            worst = max(
                worst, max(abs(scaled[k] - fx * base[k]) for k in base)
            )
    assert worst > 1e-3


# -- unconditional compatibility identities -----------------------------------


def test_unconditional_identities_hold_for_any_adapted_pair():
    """Four pairings between the first-order forms and the structural tensors
    that hold for every adapted pair, allowed or not."""
    sc = non_allowed_rotated()
    geom, pair = sc.geom, sc.pair
    rng = np.random.default_rng(55)
    for _ in range(8):
        x = sc.sample_points(rng, 1)[0]
        X, Y, Z = [list(rng.normal(size=2)) for _ in range(3)]
        g = geom.jet1(x).g
        forms, _ = allowed_forms(pair, geom, x, Y, Z)
        xf, yf = as_field(X), as_field(Y)

        from distpair.dist_tensors import field_check_b2, field_hat_b2

        hat2 = field_hat_b2(geom, pair, xf, apply_endo(pair.p2, yf))(x)
        chk2 = field_check_b2(geom, pair, apply_endo(pair.p1, xf), yf)(x)
        p2b2 = la.mat_vec(pair.p2(x), field_b2(geom, pair, xf, yf)(x))
        assert (
            abs(
                la.bilinear(g, forms["b2_star"], X)
                - la.bilinear(g, la.vec_sub(hat2, chk2), Z)
            )
            < 1e-12
        )
        assert (
            abs(
                la.bilinear(g, forms["b2_plain"], X)
                - la.bilinear(g, la.vec_sub(p2b2, chk2), Z)
            )
            < 1e-12
        )

        hat1 = field_hat_b1(geom, pair, xf, apply_endo(pair.p1, yf))(x)
        chk1 = field_check_b1(geom, pair, apply_endo(pair.p2, xf), yf)(x)
        p1b1 = la.mat_vec(pair.p1(x), field_b1(geom, pair, xf, yf)(x))
        assert (
            abs(
                la.bilinear(g, forms["b1_star"], X)
                - la.bilinear(g, la.vec_sub(hat1, chk1), Z)
            )
            < 1e-12
        )
        assert (
            abs(
                la.bilinear(g, forms["b1_plain"], X)
                - la.bilinear(g, la.vec_sub(p1b1, chk1), Z)
            )
            < 1e-12
        )


@pytest.mark.parametrize("name", ALL_SCENARIOS)
def test_structural_tensor_collapse_on_allowed_pairs(name):
    sc = build_scenario(name)
    rng = np.random.default_rng(57)
    dim = sc.chart.dim
    for _ in range(5):
        x = sc.sample_points(rng, 1)[0]
        vx = list(rng.normal(size=dim))
        vy = list(rng.normal(size=dim))
        forms, _ = collapse_residual(sc.pair, sc.geom, x, vx, vy)
        g = sc.geom.jet1(x).g
        for key, vec in forms.items():
            assert gnorm(g, vec) < 1e-10, key


def test_structural_tensor_collapse_fails_on_rotated_pair():
    sc = non_allowed_rotated()
    rng = np.random.default_rng(58)
    worst = 0.0
    for _ in range(10):
        x = sc.sample_points(rng, 1)[0]
        vx = list(rng.normal(size=2))
        vy = list(rng.normal(size=2))
        forms, _ = collapse_residual(sc.pair, sc.geom, x, vx, vy)
        g = sc.geom.jet1(x).g
        worst = max(worst, max(gnorm(g, v) for v in forms.values()))
    assert worst > 1e-3


# -- curvature identity -------------------------------------------------------


@pytest.mark.parametrize("name", ALL_SCENARIOS)
def test_codazzi_identity(name):
    sc = build_scenario(name)
    rng = np.random.default_rng(60)
    dim = sc.chart.dim
    for _ in range(12):
        x = sc.sample_points(rng, 1)[0]
        vecs = [list(rng.normal(size=dim)) for _ in range(4)]
        res = codazzi_residual(sc.pair, sc.geom, x, *vecs)
        assert res["normalized"] < 1e-10


@pytest.mark.parametrize("name", ["flat-torus", "warped-torus", "hopf-s3"])
def test_curvature_term_equals_riemann_for_projector_pairs(name):
    sc = build_scenario(name)
    rng = np.random.default_rng(61)
    dim = sc.chart.dim
    for _ in range(5):
        x = sc.sample_points(rng, 1)[0]
        y, x1, x2, z = [list(rng.normal(size=dim)) for _ in range(4)]
        parts = tsr_tensors(sc.pair, sc.geom, x, y, x1, x2, z)
        R = riemann(sc.geom, x)
        a = la.mat_vec(sc.pair.p2(x), y)
        b = la.mat_vec(sc.pair.p1(x), x1)
        c = la.mat_vec(sc.pair.p1(x), x2)
        d = la.mat_vec(sc.pair.p2(x), z)
        want = sum(
            R[i][j][k][l] * a[i] * b[j] * c[k] * d[l]
            for i in range(dim)
            for j in range(dim)
            for k in range(dim)
            for l in range(dim)
        )
        assert abs(parts["rp"] - want) < 1e-10


@pytest.mark.parametrize(
    "name", ["warped-torus", "scaled-identity", "hopf-s3", "einstein-s3xt2"]
)
def test_reduced_curvature_term_for_self_adjoint_pairs(name):
    sc = build_scenario(name)
    rng = np.random.default_rng(62)
    dim = sc.chart.dim
    for _ in range(4):
        x = sc.sample_points(rng, 1)[0]
        vecs = [list(rng.normal(size=dim)) for _ in range(4)]
        full = tsr_tensors(sc.pair, sc.geom, x, *vecs)["rp"]
        red = rp_reduced(sc.pair, sc.geom, x, *vecs)
        assert abs(full - red) < 1e-9 * (1.0 + abs(full))


def test_riccati_equation_on_warped_torus():
    """One-sided case (index-1 tensors vanish): second derivative of the
    index-2 tensor along the first distribution closes against curvature."""
    sc = warped_torus()
    geom, pair = sc.geom, sc.pair
    rng = np.random.default_rng(63)
    for _ in range(5):
        x = sc.sample_points(rng, 1)[0]
        X = [float(rng.normal()), 0.0]  # section of the first distribution
        Y = list(rng.normal(size=2))
        xf, yf = as_field(X), as_field(Y)
        b2_field = field_b2(geom, pair, xf, yf)

        nabla_x_x = cov_at(geom, x, X, xf)
        nabla_x_y = cov_at(geom, x, X, yf)
        deriv = la.vec_sub(
            la.vec_sub(
                cov_at(geom, x, X, b2_field),
                field_b2(geom, pair, as_field(nabla_x_x), yf)(x),
            ),
            field_b2(geom, pair, xf, as_field(nabla_x_y))(x),
        )
        b2_val = b2_field(x)
        second = field_b2(geom, pair, xf, as_field(b2_val))(x)
        Rup = riemann_up(geom, x)
        a = la.mat_vec(pair.p2(x), Y)
        b = la.mat_vec(pair.p1(x), X)
        curv = [
            sum(
                Rup[m][i][j][k] * a[i] * b[j] * b[k]
                for i in range(2)
                for j in range(2)
                for k in range(2)
            )
            for m in range(2)
        ]
        total = la.vec_add(la.vec_add(deriv, second), curv)
        assert gnorm(geom.jet1(x).g, total) < 1e-10


def test_identity_terms_scale_with_degree_five():
    base = warped_torus()
    scaled = scaled_identity(warped_torus(), 2.0)
    rng = np.random.default_rng(64)
    x = base.sample_points(rng, 1)[0]
    vecs = [list(rng.normal(size=2)) for _ in range(4)]
    pb = tsr_tensors(base.pair, base.geom, x, *vecs)
    ps = tsr_tensors(scaled.pair, scaled.geom, x, *vecs)
    for key in pb:
        if abs(pb[key]) > 1e-12:
            assert abs(ps[key] / pb[key] - 32.0) < 1e-9  # 2**5
        else:
            assert abs(ps[key]) < 1e-10


def test_structural_tensor_scales_with_degree_three():
    base = warped_torus()
    scaled = scaled_identity(warped_torus(), 2.0)
    rng = np.random.default_rng(65)
    x = base.sample_points(rng, 1)[0]
    X, Y = [list(rng.normal(size=2)) for _ in range(2)]
    bb = b_tensors(base.pair, base.geom, x, X, Y)["b2"]
    bs = b_tensors(scaled.pair, scaled.geom, x, X, Y)["b2"]
    assert np.allclose(np.array(bs), 8.0 * np.array(bb), atol=1e-12)


# -- modified divergence ------------------------------------------------------


def test_div_p_two_routes_agree_even_for_nonadjoint_p():
    sc = non_allowed_rotated()
    rng = np.random.default_rng(70)

    def X(z):
        return [ops.sin(z[0] - z[1]), ops.cos(z[0]) * ops.sin(z[1])]

    for _ in range(6):
        x = sc.sample_points(rng, 1)[0]
        for p in (sc.pair.p1, sc.pair.p2, sc.pair.total()):
            tr, dens = div_p_paths(p, sc.geom, X, x)
            assert abs(tr - dens) < 1e-10


def test_div_p_of_full_projector_sum_is_plain_divergence():
    sc = warped_torus()
    from distpair.chart_geometry import div_vector

    def X(z):
        return [ops.cos(z[1]), ops.sin(z[0] + z[1])]

    x = [1.2, 0.8]
    assert abs(div_p(sc.pair.total(), sc.geom, X, x) - div_vector(sc.geom, X, x)) < 1e-12


@pytest.mark.parametrize("name", ALL_SCENARIOS)
def test_div_equivalences_characterization(name):
    from distpair.scenarios import random_scalar_field, random_vector_field

    sc = build_scenario(name)
    rng = np.random.default_rng(71)
    X = random_vector_field(sc, rng)
    f = random_scalar_field(sc, rng)
    for _ in range(5):
        x = sc.sample_points(rng, 1)[0]
        res = div_equivalence_residuals(sc.pair.total(), sc.geom, X, x, f)
        assert res["div_pp_star"] < 1e-10
        assert res["normalized"] < 1e-10


def test_div_equivalence_conditional_parts_fail_without_divergence_free_q():
    """P = f * id is adapted to nothing special: div(P P^*) != 0, and the
    conditional identities miss by exactly the predicted defect."""
    ft = flat_torus_projectors(1, 1)

    def f(z):
        return 2.0 + ops.sin(z[0]) * ops.cos(z[1])

    def p_endo(z):
        s = f(z)
        return [[s, 0.0], [0.0, s]]

    def X(z):
        return [ops.cos(z[1]), ops.sin(z[0])]

    def h(z):
        return ops.cos(z[0] + z[1])

    rng = np.random.default_rng(72)
    for _ in range(5):
        x = ft.sample_points(rng, 1)[0]
        res = div_equivalence_residuals(p_endo, ft.geom, X, x, h)
        assert res["vs_hs_inner"] < 1e-12  # unconditional route always holds
        # defect of the conditional route: |(div (f^2 id))(X)| = |X(f^2)|
        u, v = x
        fv = 2.0 + math.sin(u) * math.cos(v)
        df2 = [
            2 * fv * math.cos(u) * math.cos(v),
            -2 * fv * math.sin(u) * math.sin(v),
        ]
        xv = [math.cos(v), math.sin(u)]
        want = abs(df2[0] * xv[0] + df2[1] * xv[1])
        assert abs(res["vs_div_qx"] - want) < 1e-10
        assert res["div_pp_star"] > 1e-3


# -- frame-summed invariants ---------------------------------------------------


def test_invariants_closed_form_on_warped_torus():
    sc = warped_torus()
    inv = dist_invariants(sc.pair, sc.geom, [0.0, 1.4])
    # at u = 0: w' = 1, w'' = 0; the second distribution is totally geodesic
    # inside its own leaves but has mean curvature -w' relative to the first
    assert abs(inv.norms["h2"] - 1.0) < 1e-12
    assert abs(inv.norms["H2"] - 1.0) < 1e-12
    for key in ("h1", "t1", "t2", "H1"):
        assert abs(inv.norms[key]) < 1e-12, key
    assert abs(inv.smix + 1.0) < 1e-12


def test_invariants_closed_form_on_hopf():
    sc = hopf_contact_s3()
    rng = np.random.default_rng(80)
    for _ in range(3):
        x = sc.sample_points(rng, 1)[0]
        inv = dist_invariants(sc.pair, sc.geom, x)
        # the circle fibration is totally geodesic with antisymmetric mixing
        assert abs(inv.norms["t1"] - 2.0) < 1e-10
        assert abs(inv.smix - 2.0) < 1e-10
        for key in ("h1", "h2", "t2", "H1", "H2"):
            assert abs(inv.norms[key]) < 1e-10, key


def test_mean_curvature_closed_form_on_warped_torus():
    sc = warped_torus()
    u = 0.6
    cols = [np.array([u]), np.array([2.0])]
    H = mean_curvature_batch(sc.geom, sc.pair, cols)
    assert abs(H[0][0] + math.cos(u)) < 1e-12  # H = (-w'(u), 0)
    assert abs(H[1][0]) < 1e-12


def test_smix_two_independent_routes():
    """Batched engine value vs the frame-summed tower evaluation of the
    reduced curvature-type term."""
    from distpair.chart_geometry import frame_column_field
    from distpair.dist_tensors import dist_invariants_batch

    for builder in (warped_torus, hopf_contact_s3):
        sc = builder()
        rng = np.random.default_rng(81)
        x = sc.sample_points(rng, 1)[0]
        dim = sc.chart.dim
        cols = [np.array([c]) for c in x]
        smix_engine = float(dist_invariants_batch(sc.geom, sc.pair, cols)["smix"][0])
        frames = [frame_column_field(sc.geom, s) for s in range(dim)]
        smix_towers = 0.0
        for s in range(dim):
            for t in range(dim):
                smix_towers += rp_reduced(
                    sc.pair, sc.geom, x, frames[t], frames[s], frames[s], frames[t]
                )
        assert abs(smix_engine - smix_towers) < 1e-9


def test_invariants_independent_of_frame_rotation():
    sc = hopf_contact_s3()
    rng = np.random.default_rng(82)
    x = sc.sample_points(rng, 1)[0]
    base = dist_invariants(sc.pair, sc.geom, x)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    rot = [[float(v) for v in row] for row in q]
    rotated = dist_invariants(sc.pair, sc.geom, x, rotation=rot)
    assert abs(base.smix - rotated.smix) < 1e-10
    for key in base.norms:
        assert abs(base.norms[key] - rotated.norms[key]) < 1e-10


@pytest.mark.parametrize("name", ALL_SCENARIOS)
def test_divergence_formula_pointwise(name):
    sc = build_scenario(name)
    rng = np.random.default_rng(83)
    pts = sc.sample_points(rng, 20)
    cols = [np.array([p[i] for p in pts]) for i in range(sc.chart.dim)]
    _, norm = walczak_residual_batch(sc.geom, sc.pair, cols)
    assert float(np.max(norm)) < 1e-6


def test_divergence_formula_closed_form_on_warped_torus():
    # both sides equal -(w'' + w'^2) pointwise
    sc = warped_torus()
    for u in (0.0, 0.9, 3.1):
        res = walczak_pointwise_residual(sc.pair, sc.geom, [u, 0.3])
        assert res["normalized"] < 1e-8
        inv = dist_invariants(sc.pair, sc.geom, [u, 0.3])
        rhs = (
            inv.smix
            + inv.norms["h1"]
            + inv.norms["h2"]
            - inv.norms["t1"]
            - inv.norms["t2"]
            - inv.norms["H1"]
            - inv.norms["H2"]
        )
        want = -(-math.sin(u) + math.cos(u) ** 2)
        assert abs(rhs - want) < 1e-10


# -- frame-trace identities -----------------------------------------------------


@pytest.mark.parametrize(
    "name,npts",
    [
        ("flat-torus", 2),
        ("warped-torus", 4),
        ("scaled-identity", 3),
        ("hopf-s3", 3),
        ("einstein-s3xt2", 1),
    ],
)
def test_frame_trace_identities(name, npts):
    sc = build_scenario(name)
    rng = np.random.default_rng(90)
    for x in sc.sample_points(rng, npts):
        res = trace_identity_residuals(sc.pair, sc.geom, x)
        for key in ("t1", "t2", "s1", "s2", "aux"):
            assert res[f"{key}_normalized"] < 1e-9, (key, x)


# -- contact structure ----------------------------------------------------------


def test_contact_structure_equations():
    for builder in (hopf_contact_s3, conformal_hopf):
        sc = builder()
        rng = np.random.default_rng(95)
        phi, xi = sc.extras["phi"], sc.extras["xi"]
        for _ in range(6):
            x = sc.sample_points(rng, 1)[0]
            res = contact_structure_residuals(phi, xi, sc.geom, x)
            assert max(res.values()) < 1e-12, res


def test_contact_divergence_identity_sign():
    """The identity holds with the *sum* of the acceleration and divergence
    pairings; the variant with a relative minus sign is refuted on a
    conformally rescaled sphere where both pairings are nonzero."""
    rng = np.random.default_rng(96)

    base = hopf_contact_s3()
    for _ in range(5):
        x = base.sample_points(rng, 1)[0]
        vx = list(rng.normal(size=3))
        res = contact_identity_residual(
            base.extras["phi"], base.extras["xi"], base.geom, vx, x
        )
        assert res["plus_normalized"] < 1e-12

    conf = conformal_hopf()
    worst_minus = 0.0
    for _ in range(8):
        x = conf.sample_points(rng, 1)[0]
        vx = list(rng.normal(size=3))
        res = contact_identity_residual(
            conf.extras["phi"], conf.extras["xi"], conf.geom, vx, x
        )
        assert res["plus_normalized"] < 1e-12
        worst_minus = max(worst_minus, res["minus_normalized"])
    assert worst_minus > 1e-3
