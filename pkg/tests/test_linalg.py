"""Nested-list linear algebra used by the geometry kernels."""

from __future__ import annotations

import math

import numpy as np

import distpair.linalg as la


def _random_spd(rng, n):
    a = rng.normal(size=(n, n))
    m = a @ a.T + n * np.eye(n)
    return [[float(v) for v in row] for row in m]


def test_inverse_and_det_match_numpy():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3, 5):
        g = _random_spd(rng, n)
        inv, det = la.inverse_and_det(g)
        assert abs(det - np.linalg.det(np.array(g))) < 1e-8 * abs(det)
        prod = np.array(la.mat_mul(g, inv))
        assert np.allclose(prod, np.eye(n), atol=1e-10)


def test_lu_solve():
    rng = np.random.default_rng(1)
    g = _random_spd(rng, 4)
    lo, up = la.lu_nopivot(g)
    b = list(rng.normal(size=4))
    x = la.lu_solve(lo, up, b)
    assert np.allclose(np.array(g) @ np.array(x), b, atol=1e-10)


def test_gram_schmidt_frame_orthonormalizes():
    rng = np.random.default_rng(2)
    for n in (2, 3, 5):
        g = _random_spd(rng, n)
        L = la.gram_schmidt_frame(g)
        # columns of L are g-orthonormal: L^T g L = I
        prod = np.array(la.mat_mul(la.transpose(L), la.mat_mul(g, L)))
        assert np.allclose(prod, np.eye(n), atol=1e-10)


def test_bilinear_and_basic_ops():
    g = [[2.0, 0.5], [0.5, 1.0]]
    x = [1.0, -1.0]
    y = [0.5, 2.0]
    want = sum(g[i][j] * x[i] * y[j] for i in range(2) for j in range(2))
    assert abs(la.bilinear(g, x, y) - want) < 1e-15
    assert la.vec_add(x, y) == [1.5, 1.0]
    assert la.vec_scale(2.0, x) == [2.0, -2.0]
    assert la.trace(g) == 3.0
    assert la.mat_scale(2.0, g)[0] == [4.0, 1.0]


def test_pairwise_sum_is_deterministic_and_accurate():
    rng = np.random.default_rng(3)
    vals = list(rng.normal(size=10001) * 1e8)
    s1 = la.pairwise_sum(vals)
    s2 = la.pairwise_sum(list(vals))
    assert s1 == s2  # bitwise reproducible
    assert abs(s1 - math.fsum(vals)) < 1e-4 * max(1.0, abs(math.fsum(vals)))
    assert la.pairwise_sum([]) == 0.0
    assert la.pairwise_sum([3.25]) == 3.25
