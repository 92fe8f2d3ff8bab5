"""Endomorphism fields on chart domains and pair-level conditions.

An endomorphism field is a callable z -> nested-list matrix P[i][j] in mixed
position ((P X)^i = P[i][j] X^j), evaluable on float/array/dual points like
everything else in this package.  A pair (P1, P2) is *adapted* when the four
mixed products P1 P2^*, P1^* P2, P2 P1^*, P2^* P1 vanish; the four
first-order forms in :func:`allowed_forms` are the additional derivative
conditions gating the curvature-level identities in dist_tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import linalg as la
from .chart_geometry import cov_at, ensure_geometry


def adjoint_matrix(g, g_inv, p):
    """Metric adjoint of a mixed endomorphism matrix: P^* = g^{-1} P^T g."""
    return la.mat_mul(g_inv, la.mat_mul(la.transpose(p), g))


def adjoint(p_endo, chart, x):
    """P^*(x) for an endomorphism field on a chart."""
    geom = ensure_geometry(chart)
    jet = geom.jet1(x)
    return adjoint_matrix(jet.g, jet.g_inv, p_endo(x))


def adjoint_field(geom, p_endo):
    """Field closure z -> P^*(z)."""
    geom = ensure_geometry(geom)

    def fld(z):
        jet = geom.jet1(z)
        return adjoint_matrix(jet.g, jet.g_inv, p_endo(z))

    return fld


@dataclass
class EndoPair:
    """A pair of endomorphism fields plus advertised structural flags.

    Flags describe what the pair is supposed to satisfy; ``evidence`` holds
    measured residuals from the construction-time probe.  Nothing downstream
    trusts the flags without re-measuring.
    """

    p1: Callable
    p2: Callable
    self_adjoint: bool = False
    orthogonal_components: bool = True
    allowed: bool = False
    div_pp_star_zero: bool = False
    div_p_squared_zero: bool = False
    evidence: dict = field(default_factory=dict)

    def total(self):
        def fld(z):
            return la.mat_add(self.p1(z), self.p2(z))

        return fld


def _frob(m):
    return float(np.sqrt(sum(float(v) ** 2 for row in m for v in row)))


def pair_product_norms(pair, chart, x):
    """Frobenius norms of the four adaptedness products at x."""
    geom = ensure_geometry(chart)
    jet = geom.jet1(x)
    p1 = pair.p1(x)
    p2 = pair.p2(x)
    p1s = adjoint_matrix(jet.g, jet.g_inv, p1)
    p2s = adjoint_matrix(jet.g, jet.g_inv, p2)
    return {
        "p1_p2_star": _frob(la.mat_mul(p1, p2s)),
        "p1_star_p2": _frob(la.mat_mul(p1s, p2)),
        "p2_p1_star": _frob(la.mat_mul(p2, p1s)),
        "p2_star_p1": _frob(la.mat_mul(p2s, p1)),
        "scale": _frob(p1) * _frob(p2),
    }


def self_adjoint_defects(pair, chart, x):
    geom = ensure_geometry(chart)
    jet = geom.jet1(x)
    out = {}
    for name, pf in (("p1", pair.p1), ("p2", pair.p2)):
        p = pf(x)
        ps = adjoint_matrix(jet.g, jet.g_inv, p)
        out[name] = _frob(la.mat_sub(p, ps))
    return out


def check_pair(pair, chart, points):
    """Adaptedness (+ self-adjointness if advertised) over a sample set.

    Returns max_abs / max_normalized over all points and all product norms.
    """
    max_abs = 0.0
    max_norm = 0.0
    for x in points:
        prods = pair_product_norms(pair, chart, x)
        scale = prods.pop("scale")
        vals = list(prods.values())
        if pair.self_adjoint:
            vals.extend(self_adjoint_defects(pair, chart, x).values())
        worst = max(vals)
        max_abs = max(max_abs, worst)
        max_norm = max(max_norm, worst / (1.0 + scale))
    return {"max_abs": max_abs, "max_normalized": max_norm, "samples": len(points)}


# -- first-order compatibility forms ---------------------------------------


def _const_field(vec):
    def fld(_z):
        return vec

    return fld


def apply_endo(mat_field, vec_field):
    def fld(z):
        return la.mat_vec(mat_field(z), vec_field(z))

    return fld


def gnorm(g, v):
    return float(np.sqrt(max(float(la.bilinear(g, v, v)), 0.0)))


def allowed_forms(pair, chart, x, vec_x, vec_y):
    """The four first-order compatibility forms at x on slot vectors (X, Y).

    For an adapted pair each form is tensorial in both slots, so constant
    extension of X and Y is faithful.  Returns (forms, normalizers); each
    normalizer sums the magnitudes of the two terms whose difference is the
    form (used for normalized residual reporting).
    """
    geom = ensure_geometry(chart)
    x_fld = _const_field(vec_x)
    y_fld = _const_field(vec_y)
    g = geom.jet1(x).g

    forms = {}
    norms = {}
    for tag, pa, pb in (("b1", pair.p1, pair.p2), ("b2", pair.p2, pair.p1)):
        pa_adj = adjoint_field(geom, pa)
        pb_adj = adjoint_field(geom, pb)
        d_main = la.mat_vec(pa(x), vec_x)
        pa_star_y = apply_endo(pa_adj, y_fld)
        pa_pa_star_y = apply_endo(pa, pa_star_y)
        t_shared = la.mat_vec(
            la.mat_mul(pb_adj(x), pb(x)), cov_at(geom, x, d_main, pa_star_y)
        )
        t_plain = la.mat_vec(pb_adj(x), cov_at(geom, x, d_main, pa_pa_star_y))
        d_star = la.mat_vec(la.mat_mul(pa_adj(x), pa(x)), vec_x)
        t_star = la.mat_vec(pb(x), cov_at(geom, x, d_star, pa_star_y))
        forms[f"{tag}_plain"] = la.vec_sub(t_shared, t_plain)
        forms[f"{tag}_star"] = la.vec_sub(t_shared, t_star)
        shared_norm = gnorm(g, t_shared)
        norms[f"{tag}_plain"] = shared_norm + gnorm(g, t_plain)
        norms[f"{tag}_star"] = shared_norm + gnorm(g, t_star)
    return forms, norms


def allowed_residual(pair, chart, x, vec_x, vec_y):
    """(max residual, max normalized residual) over the four forms at x."""
    geom = ensure_geometry(chart)
    forms, norms = allowed_forms(pair, geom, x, vec_x, vec_y)
    g = geom.jet1(x).g
    worst = 0.0
    worst_norm = 0.0
    for key, v in forms.items():
        r = gnorm(g, v)
        worst = max(worst, r)
        worst_norm = max(worst_norm, r / (1.0 + norms[key]))
    return worst, worst_norm


# -- positive-semidefinite square root -------------------------------------


class NotPositiveSemidefinite(ValueError):
    pass


def sqrt_psd(s, g=None, tol=1e-8):
    """Metric-self-adjoint PSD square root of a mixed endomorphism matrix.

    Conjugating with the Cholesky factor of g turns a g-self-adjoint mixed
    matrix into a plain symmetric one; take its eigenvalue square root and
    conjugate back.  Eigenvalues below -tol raise; tiny negatives clamp to 0.
    Float-only (this is a verification utility, not part of the AD towers).
    """
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    gm = np.eye(n) if g is None else np.asarray(g, dtype=float)
    chol = np.linalg.cholesky(gm)
    sym = chol.T @ s @ np.linalg.inv(chol.T)
    sym = 0.5 * (sym + sym.T)
    w, v = np.linalg.eigh(sym)
    if w.min() < -tol:
        raise NotPositiveSemidefinite(f"eigenvalue {w.min():.3e} below -{tol:.1e}")
    w = np.clip(w, 0.0, None)
    root = v @ np.diag(np.sqrt(w)) @ v.T
    return np.linalg.solve(chol.T, root @ chol.T)
