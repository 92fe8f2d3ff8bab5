"""Structural tensors of an endomorphism pair and the identities they satisfy.

Everything here comes in two implementation styles on purpose:

* generic AD towers (closures over `cov_at`) evaluated pointwise — these
  follow the defining formulas slot by slot and are used for the four-argument
  curvature identity, the compatibility identities and the frame-trace left-hand
  sides;
* a batched component engine (numpy einsum over a node axis) for the
  frame-summed invariants (second fundamental forms, integrability tensors,
  mean curvatures, mixed scalar curvature) used by the pointwise formula
  checks and the quadrature module.

The two styles double as cross-checks of each other in the test suite.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import dual as ops
from . import linalg as la
from .chart_geometry import (
    christoffel,
    cov_at,
    cov_deriv_vector,
    div_endo,
    div_vector,
    ensure_geometry,
    frame_column_field,
    lie_bracket,
    nabla_field,
)
from .dual import eps_part, fresh_tag, seed_point
from .endo_fields import adjoint_field, adjoint_matrix, apply_endo, gnorm


def as_field(v):
    if callable(v):
        return v

    def fld(_z):
        return v

    return fld


# -- the six structural tensor fields ---------------------------------------
#
# Slot conventions (fixed throughout): index-1 tensors take (Y, X), index-2
# tensors take (X, Y).  The first argument is the one whose projected image
# is differentiated; the second feeds the direction.


def field_b1(geom, pair, y_fld, x_fld):
    """B1(Y, X) = P1^* nabla_{P1 X} (P2 Y)."""
    geom = ensure_geometry(geom)
    inner = apply_endo(pair.p2, y_fld)
    p1s = adjoint_field(geom, pair.p1)

    def fld(z):
        d = la.mat_vec(pair.p1(z), x_fld(z))
        return la.mat_vec(p1s(z), cov_at(geom, z, d, inner))

    return fld


def field_b2(geom, pair, x_fld, y_fld):
    """B2(X, Y) = P2^* nabla_{P2 Y} (P1 X)."""
    geom = ensure_geometry(geom)
    inner = apply_endo(pair.p1, x_fld)
    p2s = adjoint_field(geom, pair.p2)

    def fld(z):
        d = la.mat_vec(pair.p2(z), y_fld(z))
        return la.mat_vec(p2s(z), cov_at(geom, z, d, inner))

    return fld


def field_hat_b1(geom, pair, y_fld, x_fld):
    """hat B1(Y, X) = P1 nabla_{P1^* X} (P2^* Y)."""
    geom = ensure_geometry(geom)
    p1s = adjoint_field(geom, pair.p1)
    inner = apply_endo(adjoint_field(geom, pair.p2), y_fld)

    def fld(z):
        d = la.mat_vec(p1s(z), x_fld(z))
        return la.mat_vec(pair.p1(z), cov_at(geom, z, d, inner))

    return fld


def field_hat_b2(geom, pair, x_fld, y_fld):
    """hat B2(X, Y) = P2 nabla_{P2^* Y} (P1^* X)."""
    geom = ensure_geometry(geom)
    p2s = adjoint_field(geom, pair.p2)
    inner = apply_endo(adjoint_field(geom, pair.p1), x_fld)

    def fld(z):
        d = la.mat_vec(p2s(z), y_fld(z))
        return la.mat_vec(pair.p2(z), cov_at(geom, z, d, inner))

    return fld


def field_check_b1(geom, pair, y_fld, x_fld):
    """check B1(Y, X) = P1 nabla_{P1 X} (P2^* Y)."""
    geom = ensure_geometry(geom)
    inner = apply_endo(adjoint_field(geom, pair.p2), y_fld)

    def fld(z):
        d = la.mat_vec(pair.p1(z), x_fld(z))
        return la.mat_vec(pair.p1(z), cov_at(geom, z, d, inner))

    return fld


def field_check_b2(geom, pair, x_fld, y_fld):
    """check B2(X, Y) = P2 nabla_{P2 Y} (P1^* X)."""
    geom = ensure_geometry(geom)
    inner = apply_endo(adjoint_field(geom, pair.p1), x_fld)

    def fld(z):
        d = la.mat_vec(pair.p2(z), y_fld(z))
        return la.mat_vec(pair.p2(z), cov_at(geom, z, d, inner))

    return fld


def b_tensors(pair, chart, x, vec_x, vec_y):
    """All six structural tensors at x on (X, Y), as vectors."""
    geom = ensure_geometry(chart)
    xf = as_field(vec_x)
    yf = as_field(vec_y)
    return {
        "b1": field_b1(geom, pair, yf, xf)(x),
        "b2": field_b2(geom, pair, xf, yf)(x),
        "hat_b1": field_hat_b1(geom, pair, yf, xf)(x),
        "hat_b2": field_hat_b2(geom, pair, xf, yf)(x),
        "check_b1": field_check_b1(geom, pair, yf, xf)(x),
        "check_b2": field_check_b2(geom, pair, xf, yf)(x),
    }


def collapse_residual(pair, chart, x, vec_x, vec_y):
    """Residual vectors of the four compatibility coincidences at x.

    For an allowed pair, P2 B2(X,Y) = hat B2(X, P2 Y) = check B2(P1 X, Y) and
    the index-1 mirror; this returns the four differences together with their
    term-magnitude normalizers.
    """
    geom = ensure_geometry(chart)
    xf = as_field(vec_x)
    yf = as_field(vec_y)
    g = geom.jet1(x).g

    p2_b2 = la.mat_vec(pair.p2(x), field_b2(geom, pair, xf, yf)(x))
    hat2 = field_hat_b2(geom, pair, xf, apply_endo(pair.p2, yf))(x)
    chk2 = field_check_b2(geom, pair, apply_endo(pair.p1, xf), yf)(x)

    p1_b1 = la.mat_vec(pair.p1(x), field_b1(geom, pair, yf, xf)(x))
    hat1 = field_hat_b1(geom, pair, yf, apply_endo(pair.p1, xf))(x)
    chk1 = field_check_b1(geom, pair, apply_endo(pair.p2, yf), xf)(x)

    forms = {
        "b2_vs_hat": la.vec_sub(p2_b2, hat2),
        "b2_vs_check": la.vec_sub(p2_b2, chk2),
        "b1_vs_hat": la.vec_sub(p1_b1, hat1),
        "b1_vs_check": la.vec_sub(p1_b1, chk1),
    }
    norms = {
        "b2_vs_hat": gnorm(g, p2_b2) + gnorm(g, hat2),
        "b2_vs_check": gnorm(g, p2_b2) + gnorm(g, chk2),
        "b1_vs_hat": gnorm(g, p1_b1) + gnorm(g, hat1),
        "b1_vs_check": gnorm(g, p1_b1) + gnorm(g, chk1),
    }
    return forms, norms


# -- the four-argument curvature identity ------------------------------------


def tsr_tensors(pair, chart, x, y, x1, x2, z_slot):
    """The five scalars of the curvature identity at x.

    Arguments may be constant vectors or vector-field closures (the latter is
    used by the trace sums and the tensoriality tests).  Returns a dict with
    t1, t2, s1, s2, rp.
    """
    geom = ensure_geometry(chart)
    yf, x1f, x2f, zf = (as_field(v) for v in (y, x1, x2, z_slot))
    p1, p2 = pair.p1, pair.p2
    p1s = adjoint_field(geom, p1)
    p2s = adjoint_field(geom, p2)

    p1x1 = apply_endo(p1, x1f)
    p2y = apply_endo(p2, yf)
    p2z = apply_endo(p2, zf)
    p1x2 = apply_endo(p1, x2f)
    p1sx2 = apply_endo(p1s, x2f)

    g = geom.jet1(x).g
    zv = zf(x)
    x2v = x2f(x)
    p1x1_at = p1x1(x)
    p2y_at = p2y(x)

    def ip(a, b):
        return la.bilinear(g, a, b)

    # nabla_{P1 X1}(P2 Y) and nabla_{P2 Y}(P1 X1) show up in several slots
    v_x1_dir = cov_at(geom, x, p1x1_at, p2y)  # nabla_{P1X1} P2Y
    v_y_dir = cov_at(geom, x, p2y_at, p1x1)  # nabla_{P2Y} P1X1

    t1_a = la.mat_vec(p2(x), cov_at(geom, x, p1x1_at, field_b2(geom, pair, x2f, yf)))
    t1_b = field_check_b2(geom, pair, nabla_field(geom, p1x1, p1x2), yf)(x)
    t1_c = field_hat_b2(geom, pair, x2f, as_field(v_x1_dir))(x)
    t1 = ip(la.vec_sub(la.vec_sub(t1_a, t1_b), t1_c), zv)

    t2_a = la.mat_vec(p1(x), cov_at(geom, x, p2y_at, field_b1(geom, pair, zf, x1f)))
    t2_b = field_check_b1(geom, pair, nabla_field(geom, p2y, p2z), x1f)(x)
    t2_c = field_hat_b1(geom, pair, zf, as_field(v_y_dir))(x)
    t2 = ip(la.vec_sub(la.vec_sub(t2_a, t2_b), t2_c), x2v)

    s1 = ip(field_hat_b2(geom, pair, x2f, as_field(v_y_dir))(x), zv)
    s2 = ip(field_hat_b1(geom, pair, zf, as_field(v_x1_dir))(x), x2v)

    # curvature-type term: five towers
    t_a = la.mat_vec(
        p2s(x), cov_at(geom, x, p2y_at, apply_endo(p2, nabla_field(geom, p1x1, p1sx2)))
    )
    t_b = la.mat_vec(
        p2(x), cov_at(geom, x, p2y_at, apply_endo(p1s, nabla_field(geom, p1x1, p1x2)))
    )
    t_c = la.mat_vec(
        p2s(x), cov_at(geom, x, p1x1_at, apply_endo(p1, nabla_field(geom, p2y, p1sx2)))
    )
    t_d = la.mat_vec(
        p2(x), cov_at(geom, x, p1x1_at, apply_endo(p2s, nabla_field(geom, p2y, p1x2)))
    )
    w = la.mat_vec(
        la.mat_add(p1s(x), p2s(x)), lie_bracket(p2y, p1x1)(x)
    )
    t_e = la.mat_vec(p2(x), cov_at(geom, x, w, p1sx2))
    rp_vec = la.vec_sub(la.vec_sub(la.vec_sub(la.vec_add(t_a, t_b), t_c), t_d), t_e)
    rp = ip(rp_vec, zv)

    return {"t1": t1, "t2": t2, "s1": s1, "s2": s2, "rp": rp}


def codazzi_residual(pair, chart, x, y, x1, x2, z_slot):
    """|t1 + t2 + s1 + s2 + rp| at x, absolute and term-normalized."""
    parts = tsr_tensors(pair, chart, x, y, x1, x2, z_slot)
    total = parts["t1"] + parts["t2"] + parts["s1"] + parts["s2"] + parts["rp"]
    denom = 1.0 + sum(abs(v) for v in parts.values())
    return {"residual": abs(total), "normalized": abs(total) / denom, "parts": parts}


def rp_reduced(pair, chart, x, y, x1, x2, z_slot):
    """Curvature-type term in the reduced form valid for self-adjoint pairs."""
    geom = ensure_geometry(chart)
    yf, x1f, x2f, zf = (as_field(v) for v in (y, x1, x2, z_slot))
    p_total = pair.total()
    p1x1 = apply_endo(pair.p1, x1f)
    p2y = apply_endo(pair.p2, yf)
    p1x2 = apply_endo(pair.p1, x2f)
    g = geom.jet1(x).g

    fld1 = apply_endo(p_total, nabla_field(geom, p1x1, p1x2))
    fld2 = apply_endo(p_total, nabla_field(geom, p2y, p1x2))
    w = la.mat_vec(p_total(x), lie_bracket(p2y, p1x1)(x))
    vec = la.vec_sub(
        la.vec_sub(cov_at(geom, x, p2y(x), fld1), cov_at(geom, x, p1x1(x), fld2)),
        cov_at(geom, x, w, p1x2),
    )
    return la.bilinear(g, la.mat_vec(pair.p2(x), vec), zf(x))


# -- modified divergence ------------------------------------------------------


def div_p_paths(p_endo, chart, vec_field, x):
    """div_P X two ways: connection-trace form and the metric-derivative form.

    Both use Q = P P^* (always metric-self-adjoint, no assumption on P).
    """
    geom = ensure_geometry(chart)
    n = geom.chart.dim
    jet = geom.jet1(x)
    p = p_endo(x)
    ps = adjoint_matrix(jet.g, jet.g_inv, p)
    q = la.mat_mul(p, ps)
    xv = vec_field(x)
    jac = ops.partials_vector(vec_field, x)
    gamma = geom.gamma(x)

    trace_form = sum(
        q[m][k] * (jac[m][k] + sum(gamma[k][m][j] * xv[j] for j in range(n)))
        for m in range(n)
        for k in range(n)
    )

    q_up = la.mat_mul(q, jet.g_inv)
    metric_form = sum(q[i][j] * jac[i][j] for i in range(n) for j in range(n))
    metric_form = metric_form + 0.5 * sum(
        q_up[i][j] * jet.dg[k][i][j] * xv[k]
        for i in range(n)
        for j in range(n)
        for k in range(n)
    )
    return trace_form, metric_form


def div_p(p_endo, chart, vec_field, x):
    return div_p_paths(p_endo, chart, vec_field, x)[0]


def hs_inner_with_grad(p_endo, chart, vec_field, x):
    """<P P^*, nabla X> in the trace inner product (equals div_P X always)."""
    geom = ensure_geometry(chart)
    jet = geom.jet1(x)
    p = p_endo(x)
    q = la.mat_mul(p, adjoint_matrix(jet.g, jet.g_inv, p))
    cov = cov_deriv_vector(geom, vec_field, x)
    grad_endo = la.transpose(cov)  # (nabla X)^k_i as a mixed matrix
    grad_star = adjoint_matrix(jet.g, jet.g_inv, grad_endo)
    return la.trace(la.mat_mul(grad_star, q))


def pp_star_field(geom, p_endo):
    geom = ensure_geometry(geom)

    def fld(z):
        jet = geom.jet1(z)
        p = p_endo(z)
        return la.mat_mul(p, adjoint_matrix(jet.g, jet.g_inv, p))

    return fld


def div_equivalence_residuals(p_endo, chart, vec_field, x, scalar_field):
    """Residuals of the modified-divergence characterization at x.

    Returns the divergence-free defect of P P^* (the precondition), and the
    three identity residuals: div_P X vs div(P P^* X), div_P X vs the trace
    inner product <P P^*, nabla X> (which holds unconditionally), and the
    product rule div_P(f X) = f div(P P^* X) + (P P^* X)(f).
    """
    geom = ensure_geometry(chart)
    n = geom.chart.dim
    jet = geom.jet1(x)
    q_field = pp_star_field(geom, p_endo)
    div_q = div_endo(geom, q_field, x)
    div_q_norm = float(
        np.sqrt(
            max(
                float(
                    sum(
                        div_q[i] * jet.g_inv[i][j] * div_q[j]
                        for i in range(n)
                        for j in range(n)
                    )
                ),
                0.0,
            )
        )
    )

    dp = div_p(p_endo, geom, vec_field, x)
    qx_field = apply_endo(q_field, vec_field)
    div_qx = div_vector(geom, qx_field, x)
    r_div = abs(dp - div_qx)

    hs = hs_inner_with_grad(p_endo, geom, vec_field, x)
    r_hs = abs(dp - hs)

    def fx_field(z):
        return la.vec_scale(scalar_field(z), vec_field(z))

    lhs = div_p(p_endo, geom, fx_field, x)
    qx_at = la.mat_vec(q_field(x), vec_field(x))
    rhs = scalar_field(x) * div_qx + ops.directional_scalar(scalar_field, x, qx_at)
    r_leibniz = abs(lhs - rhs)

    scale = abs(dp) + abs(div_qx) + abs(hs)
    return {
        "div_pp_star": div_q_norm,
        "vs_div_qx": r_div,
        "vs_hs_inner": r_hs,
        "leibniz": r_leibniz,
        "normalized": max(r_div, r_hs, r_leibniz) / (1.0 + scale),
    }


# -- batched component engine --------------------------------------------------


def _columns(x):
    """Normalize a point / batch into a list of (N,) float arrays."""
    cols = [np.atleast_1d(np.asarray(c, dtype=float)) for c in x]
    n_nodes = max(c.shape[0] for c in cols)
    return [np.broadcast_to(c, (n_nodes,)) if c.shape[0] != n_nodes else c for c in cols]


def _nested_to_array(obj, shape, n_nodes):
    out = np.zeros(shape + (n_nodes,))
    for idx in itertools.product(*(range(s) for s in shape)):
        v = obj
        for i in idx:
            v = v[i]
        out[idx] = v
    return out


def _diff_field(field, cols, n, shape, n_nodes):
    """Stack field values and all first partials: (value, d[k] array)."""
    val = _nested_to_array(field(cols), shape, n_nodes)
    d = np.zeros((n,) + shape + (n_nodes,))
    for k in range(n):
        tag = fresh_tag()
        seeded = seed_point(cols, [1.0 if i == k else 0.0 for i in range(n)], tag)
        out = field(seeded)
        d[k] = _nested_to_array(_eps_nested(out, tag, shape), shape, n_nodes)
    return val, d


def _eps_nested(obj, tag, shape):
    if len(shape) == 0:
        return eps_part(obj, tag)
    return [_eps_nested(o, tag, shape[1:]) for o in obj]


def _second_partials(field, cols, n, shape, n_nodes):
    """d2[k][l] = d_k d_l of a matrix field, symmetric in (k, l)."""
    d2 = np.zeros((n, n) + shape + (n_nodes,))
    for l in range(n):
        tag_l = fresh_tag()
        pl = seed_point(cols, [1.0 if i == l else 0.0 for i in range(n)], tag_l)
        for k in range(l + 1):
            tag_k = fresh_tag()
            plk = seed_point(pl, [1.0 if i == k else 0.0 for i in range(n)], tag_k)
            out = field(plk)
            block = _nested_to_array(
                _eps_nested(_eps_nested(out, tag_k, shape), tag_l, shape),
                shape,
                n_nodes,
            )
            d2[k, l] = block
            d2[l, k] = block
    return d2


def batch_metric_data(geom, cols):
    """g, ginv, sqrt_det, dg, Gamma as stacked arrays at a batch of nodes."""
    geom = ensure_geometry(geom)
    n = geom.chart.dim
    n_nodes = cols[0].shape[0]
    jet = geom.jet1(list(cols))
    g = _nested_to_array(jet.g, (n, n), n_nodes)
    ginv = _nested_to_array(jet.g_inv, (n, n), n_nodes)
    sqrt_det = np.broadcast_to(np.asarray(jet.sqrt_det, dtype=float), (n_nodes,))
    dg = _nested_to_array(jet.dg, (n, n, n), n_nodes)
    gamma = _nested_to_array(christoffel(jet).gamma, (n, n, n), n_nodes)
    return {"g": g, "ginv": ginv, "sqrt_det": sqrt_det, "dg": dg, "gamma": gamma}


def _gamma_field(geom):
    def fld(z):
        return christoffel(geom.jet1(z)).gamma

    return fld


def _frame_product_fields(geom, pair, rotation):
    chart = geom.chart

    def frame(z):
        frame_mat = la.gram_schmidt_frame(chart.metric(z))
        if rotation is not None:
            frame_mat = la.mat_mul(frame_mat, rotation)
        return frame_mat

    def a_field(z):
        return la.mat_mul(pair.p1(z), frame(z))

    def b_field(z):
        return la.mat_mul(pair.p2(z), frame(z))

    def p_field(z):
        return la.mat_add(pair.p1(z), pair.p2(z))

    return a_field, b_field, p_field


def mean_curvature_batch(geom, pair, cols, rotation=None):
    """H = H1 + H2 at a batch of nodes, shape (n, N).  First-order data only."""
    geom = ensure_geometry(geom)
    n = geom.chart.dim
    n_nodes = cols[0].shape[0]
    a_field, b_field, _ = _frame_product_fields(geom, pair, rotation)
    a0, da = _diff_field(a_field, cols, n, (n, n), n_nodes)
    b0, db = _diff_field(b_field, cols, n, (n, n), n_nodes)
    gamma = _nested_to_array(
        christoffel(geom.jet1(list(cols))).gamma, (n, n, n), n_nodes
    )
    p1 = _nested_to_array(pair.p1(list(cols)), (n, n), n_nodes)
    p2 = _nested_to_array(pair.p2(list(cols)), (n, n), n_nodes)

    cov_a = da + np.einsum("kimn,mtn->iktn", gamma, a0)
    cov_b = db + np.einsum("kimn,mtn->iktn", gamma, b0)
    h1_pre = np.einsum("isn,iksn->kn", a0, cov_a)
    h2_pre = np.einsum("itn,iktn->kn", b0, cov_b)
    return np.einsum("kmn,mn->kn", p2, h1_pre) + np.einsum("kmn,mn->kn", p1, h2_pre)


def dist_invariants_batch(geom, pair, cols, rotation=None):
    """All frame-summed invariants of the pair at a batch of nodes.

    Valid for self-adjoint pairs (the curvature-type trace uses the reduced
    form).  Returns arrays keyed by name; forms carry frame indices (s, t).
    """
    geom = ensure_geometry(geom)
    n = geom.chart.dim
    n_nodes = cols[0].shape[0]
    a_field, b_field, p_field = _frame_product_fields(geom, pair, rotation)

    a0, da = _diff_field(a_field, cols, n, (n, n), n_nodes)
    b0, db = _diff_field(b_field, cols, n, (n, n), n_nodes)
    d2a = _second_partials(a_field, cols, n, (n, n), n_nodes)
    p0, dp = _diff_field(p_field, cols, n, (n, n), n_nodes)
    gam0, dgam = _diff_field(_gamma_field(geom), cols, n, (n, n, n), n_nodes)
    g0 = _nested_to_array(geom.jet1(list(cols)).g, (n, n), n_nodes)
    p1 = _nested_to_array(pair.p1(list(cols)), (n, n), n_nodes)
    p2 = _nested_to_array(pair.p2(list(cols)), (n, n), n_nodes)

    # cov_a[i, k, t] = (nabla_{d_i} A_t)^k  (A_t = t-th projected frame field)
    cov_a = da + np.einsum("kimn,mtn->iktn", gam0, a0)
    cov_b = db + np.einsum("kimn,mtn->iktn", gam0, b0)

    m1 = np.einsum("isn,iktn->kstn", a0, cov_a)  # nabla_{A_s} A_t
    m2 = np.einsum("isn,iktn->kstn", b0, cov_b)  # nabla_{B_s} B_t
    m3 = np.einsum("itn,iksn->ktsn", b0, cov_a)  # nabla_{B_t} A_s

    h1_pre = 0.5 * (m1 + np.swapaxes(m1, 1, 2))
    t1_pre = 0.5 * (m1 - np.swapaxes(m1, 1, 2))
    h2_pre = 0.5 * (m2 + np.swapaxes(m2, 1, 2))
    t2_pre = 0.5 * (m2 - np.swapaxes(m2, 1, 2))

    def pnorm_sq(proj, pre):
        return np.einsum("kln,kmn,mstn,lstn->n", g0, proj, pre, pre)

    norm_h1 = pnorm_sq(p2, h1_pre)
    norm_t1 = pnorm_sq(p2, t1_pre)
    norm_h2 = pnorm_sq(p1, h2_pre)
    norm_t2 = pnorm_sq(p1, t2_pre)

    hv1_pre = np.einsum("kssn->kn", m1)
    hv2_pre = np.einsum("kssn->kn", m2)
    norm_hv1 = np.einsum("kln,kmn,mn,ln->n", g0, p2, hv1_pre, hv1_pre)
    norm_hv2 = np.einsum("kln,kmn,mn,ln->n", g0, p1, hv2_pre, hv2_pre)
    hv1 = np.einsum("kmn,mn->kn", p2, hv1_pre)
    hv2 = np.einsum("kmn,mn->kn", p1, hv2_pre)

    # mixed curvature trace, reduced form: sum over frame pairs (s, t) of
    #   <nabla_{B_t}(P nabla_{A_s} A_s), B_t> - <nabla_{A_s}(P nabla_{B_t} A_s), B_t>
    #   - <nabla_{P [B_t, A_s]} A_s, B_t>
    dm1_diag = (
        np.einsum("djsn,jmsn->dmsn", da, cov_a)
        + np.einsum("jsn,djmsn->dmsn", a0, d2a)
        + np.einsum("jsn,dmjqn,qsn->dmsn", a0, dgam, a0)
        + np.einsum("jsn,mjqn,dqsn->dmsn", a0, gam0, da)
    )
    g1 = np.einsum("kmn,mssn->ksn", p0, m1)
    dg1 = np.einsum("dkmn,mssn->dksn", dp, m1) + np.einsum(
        "kmn,dmsn->dksn", p0, dm1_diag
    )
    cg1 = dg1 + np.einsum("kimn,msn->iksn", gam0, g1)
    term1 = np.einsum("itn,iksn,kln,ltn->n", b0, cg1, g0, b0)

    dm3 = (
        np.einsum("djtn,jmsn->dmtsn", db, cov_a)
        + np.einsum("jtn,djmsn->dmtsn", b0, d2a)
        + np.einsum("jtn,dmjqn,qsn->dmtsn", b0, dgam, a0)
        + np.einsum("jtn,mjqn,dqsn->dmtsn", b0, gam0, da)
    )
    g2 = np.einsum("kmn,mtsn->ktsn", p0, m3)
    dg2 = np.einsum("dkmn,mtsn->dktsn", dp, m3) + np.einsum(
        "kmn,dmtsn->dktsn", p0, dm3
    )
    cg2 = dg2 + np.einsum("kimn,mtsn->iktsn", gam0, g2)
    term2 = np.einsum("isn,iktsn,kln,ltn->n", a0, cg2, g0, b0)

    lie = np.einsum("itn,imsn->mtsn", b0, da) - np.einsum("isn,imtn->mtsn", a0, db)
    v_lie = np.einsum("kmn,mtsn->ktsn", p0, lie)
    nabla_lie = np.einsum("itsn,iksn->ktsn", v_lie, cov_a)
    term3 = np.einsum("ktsn,kln,ltn->n", nabla_lie, g0, b0)

    smix = term1 - term2 - term3

    return {
        "h1": np.einsum("kmn,mstn->kstn", p2, h1_pre),
        "h2": np.einsum("kmn,mstn->kstn", p1, h2_pre),
        "t1": np.einsum("kmn,mstn->kstn", p2, t1_pre),
        "t2": np.einsum("kmn,mstn->kstn", p1, t2_pre),
        "H1": hv1,
        "H2": hv2,
        "norm_h1": norm_h1,
        "norm_h2": norm_h2,
        "norm_t1": norm_t1,
        "norm_t2": norm_t2,
        "norm_H1": norm_hv1,
        "norm_H2": norm_hv2,
        "smix": smix,
    }


@dataclass
class FrameData:
    """Orthonormal frame and its projected images at a point."""

    frame: np.ndarray
    p1_frame: np.ndarray
    p2_frame: np.ndarray


@dataclass
class DistInvariants:
    h1: np.ndarray
    h2: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    norms: dict
    smix: float


def frame_data(pair, chart, x):
    geom = ensure_geometry(chart)
    frame = np.array(la.gram_schmidt_frame(geom.jet1(x).g), dtype=float)
    p1 = np.array(pair.p1(x), dtype=float)
    p2 = np.array(pair.p2(x), dtype=float)
    return FrameData(frame=frame, p1_frame=p1 @ frame, p2_frame=p2 @ frame)


def dist_invariants(pair, chart, x, rotation=None):
    """Pointwise frame-summed invariants (pre: pair self-adjoint)."""
    geom = ensure_geometry(chart)
    cols = _columns(x)
    raw = dist_invariants_batch(geom, pair, cols, rotation=rotation)
    norms = {
        "h1": float(raw["norm_h1"][0]),
        "h2": float(raw["norm_h2"][0]),
        "t1": float(raw["norm_t1"][0]),
        "t2": float(raw["norm_t2"][0]),
        "H1": float(raw["norm_H1"][0]),
        "H2": float(raw["norm_H2"][0]),
    }
    return DistInvariants(
        h1=raw["h1"][..., 0],
        h2=raw["h2"][..., 0],
        t1=raw["t1"][..., 0],
        t2=raw["t2"][..., 0],
        H1=raw["H1"][..., 0],
        H2=raw["H2"][..., 0],
        norms=norms,
        smix=float(raw["smix"][0]),
    )


def formula_terms_batch(geom, pair, cols):
    """(lhs-free) right-hand side of the divergence formula at a batch:
    smix + |h1|^2 + |h2|^2 - |t1|^2 - |t2|^2 - |H1|^2 - |H2|^2."""
    raw = dist_invariants_batch(geom, pair, cols)
    rhs = (
        raw["smix"]
        + raw["norm_h1"]
        + raw["norm_h2"]
        - raw["norm_t1"]
        - raw["norm_t2"]
        - raw["norm_H1"]
        - raw["norm_H2"]
    )
    scale = (
        np.abs(raw["smix"])
        + raw["norm_h1"]
        + raw["norm_h2"]
        + raw["norm_t1"]
        + raw["norm_t2"]
        + raw["norm_H1"]
        + raw["norm_H2"]
    )
    return rhs, scale


def div_p_batch(geom, p_endo, vec_field, cols):
    """div_P X at a batch of nodes (exact AD, no finite differences)."""
    geom = ensure_geometry(geom)
    n = geom.chart.dim
    n_nodes = cols[0].shape[0]
    data = batch_metric_data(geom, cols)
    p0 = _nested_to_array(p_endo(list(cols)), (n, n), n_nodes)
    ps = np.einsum("ikn,jkn,jln->iln", data["ginv"], p0, data["g"])
    q = np.einsum("ikn,kjn->ijn", p0, ps)
    xv, dx = _diff_field(vec_field, cols, n, (n,), n_nodes)
    cov_x = dx + np.einsum("kimn,mn->ikn", data["gamma"], xv)
    return np.einsum("ikn,ikn->n", q, cov_x)


def walczak_residual_batch(geom, pair, cols, h_step=1e-4):
    """Pointwise residual of the divergence formula at a batch of nodes.

    The right side comes from the invariants engine (AD-exact).  The left
    side div_P(H1+H2) needs one more derivative of frame-summed data, taken
    by central differences with Richardson extrapolation (h and h/2); the
    metric terms entering the divergence stay AD-exact.
    """
    geom = ensure_geometry(geom)
    n = geom.chart.dim
    n_nodes = cols[0].shape[0]

    def h_at(shifted):
        return mean_curvature_batch(geom, pair, shifted)

    def central(d, h):
        plus = [c + h if i == d else c for i, c in enumerate(cols)]
        minus = [c - h if i == d else c for i, c in enumerate(cols)]
        return (h_at(plus) - h_at(minus)) / (2.0 * h)

    dh = np.zeros((n, n, n_nodes))
    for d in range(n):
        coarse = central(d, h_step)
        fine = central(d, 0.5 * h_step)
        dh[d] = (4.0 * fine - coarse) / 3.0

    data = batch_metric_data(geom, cols)
    p0 = _nested_to_array(pair.total()(list(cols)), (n, n), n_nodes)
    ps = np.einsum("ikn,jkn,jln->iln", data["ginv"], p0, data["g"])
    q = np.einsum("ikn,kjn->ijn", p0, ps)
    q_up = np.einsum("iln,ljn->ijn", q, data["ginv"])
    h0 = mean_curvature_batch(geom, pair, cols)
    lhs = np.einsum("ijn,ijn->n", q, dh) + 0.5 * np.einsum(
        "ijn,kijn,kn->n", q_up, data["dg"], h0
    )

    rhs, scale = formula_terms_batch(geom, pair, cols)
    residual = np.abs(lhs - rhs)
    return residual, residual / (1.0 + scale + np.abs(lhs))


def walczak_pointwise_residual(pair, chart, x, h_step=1e-4):
    geom = ensure_geometry(chart)
    res, norm = walczak_residual_batch(geom, pair, _columns(x), h_step=h_step)
    return {"residual": float(res[0]), "normalized": float(norm[0])}


# -- frame-trace identities ----------------------------------------------------


def trace_identity_residuals(pair, chart, x):
    """Frame-trace identities for the four curvature-identity ingredients.

    The left sides sum the four-argument tensors over an orthonormal frame
    field; the right sides are the independently-derived divergence-style
    expressions.  Also returns the auxiliary index-2 cancellation sum.
    Preconditions: pair allowed and self-adjoint.
    """
    geom = ensure_geometry(chart)
    n = geom.chart.dim
    g = geom.jet1(x).g
    p1, p2 = pair.p1, pair.p2

    frames = [frame_column_field(geom, s) for s in range(n)]
    p1_frames = [apply_endo(p1, e) for e in frames]
    p2_frames = [apply_endo(p2, e) for e in frames]

    def ip(a, b):
        return la.bilinear(g, a, b)

    lhs = {"t1": 0.0, "t2": 0.0, "s1": 0.0, "s2": 0.0}
    for s in range(n):
        for t in range(n):
            parts = tsr_tensors(
                pair, geom, x, frames[t], frames[s], frames[s], frames[t]
            )
            lhs["t1"] += parts["t1"]
            lhs["t2"] += parts["t2"]
            lhs["s1"] += parts["s1"]
            lhs["s2"] += parts["s2"]

    # cached covariant derivatives of projected frame fields at x
    na = [[cov_at(geom, x, p1_frames[s](x), p1_frames[t]) for t in range(n)] for s in range(n)]
    nb = [[cov_at(geom, x, p2_frames[s](x), p2_frames[t]) for t in range(n)] for s in range(n)]

    rhs = {k: 0.0 for k in ("t1", "t2", "s1", "s2")}
    aux = 0.0
    for s in range(n):
        for t in range(n):
            # index-1 trace: <nabla_{P1 e_s} P1 e_s, P1 nabla_{P2 e_t} P2 e_t>
            #                - D_{P1 e_s} <P1 nabla_{P2 e_t} P2 e_t, P1 e_s>
            def scal_1(z, _s=s, _t=t):
                v = cov_at(geom, z, p2_frames[_t](z), p2_frames[_t])
                return la.bilinear(
                    geom.jet1(z).g, la.mat_vec(p1(z), v), p1_frames[_s](z)
                )

            rhs["t1"] += ip(na[s][s], la.mat_vec(p1(x), nb[t][t])) - ops.directional_scalar(
                scal_1, x, p1_frames[s](x)
            )

            # index-2 trace: D_{P2 e_t} <nabla_{P1 e_s} P2 e_t, P1 e_s>
            #                + <nabla_{P2 e_t} P2 e_t, P2 nabla_{P1 e_s} P1 e_s>
            def scal_2(z, _s=s, _t=t):
                v = cov_at(geom, z, p1_frames[_s](z), p2_frames[_t])
                return la.bilinear(geom.jet1(z).g, v, p1_frames[_s](z))

            rhs["t2"] += ops.directional_scalar(scal_2, x, p2_frames[t](x)) + ip(
                nb[t][t], la.mat_vec(p2(x), na[s][s])
            )

            rhs["s2"] += ip(la.mat_vec(p2(x), na[s][t]), na[t][s])
            rhs["s1"] += ip(la.mat_vec(p1(x), nb[s][t]), nb[t][s])

            # auxiliary cancellation: <P1 nabla_{P2 e_s} P2 e_t, nabla_{P2 e_t} P2 e_s>
            #                         + <nabla_{P2 nabla_{P2 e_t} P1 e_s} P2 e_t, P1 e_s>
            w = la.mat_vec(p2(x), cov_at(geom, x, p2_frames[t](x), p1_frames[s]))
            aux += ip(la.mat_vec(p1(x), nb[s][t]), nb[t][s]) + ip(
                cov_at(geom, x, w, p2_frames[t]), p1_frames[s](x)
            )

    out = {}
    for key in ("t1", "t2", "s1", "s2"):
        diff = abs(lhs[key] - rhs[key])
        out[key] = diff
        out[f"{key}_normalized"] = diff / (1.0 + abs(lhs[key]) + abs(rhs[key]))
    out["aux"] = abs(aux)
    out["aux_normalized"] = abs(aux) / (1.0 + abs(aux))
    return out


# -- contact-structure checks ------------------------------------------------


def contact_structure_residuals(phi, xi, chart, x):
    """Residuals of the almost-contact structure equations at x."""
    geom = ensure_geometry(chart)
    n = geom.chart.dim
    jet = geom.jet1(x)
    phi_m = phi(x)
    xi_v = xi(x)
    eta = [sum(jet.g[i][j] * xi_v[j] for j in range(n)) for i in range(n)]
    xi_eta = [[xi_v[i] * eta[j] for j in range(n)] for i in range(n)]
    ident = la.eye(n)
    phi_sq = la.mat_mul(phi_m, phi_m)
    phi_star = adjoint_matrix(jet.g, jet.g_inv, phi_m)

    def frob(m):
        return float(np.sqrt(sum(float(v) ** 2 for row in m for v in row)))

    return {
        "phi_squared": frob(la.mat_add(phi_sq, la.mat_sub(ident, xi_eta))),
        "phi_xi": float(
            np.sqrt(sum(float(v) ** 2 for v in la.mat_vec(phi_m, xi_v)))
        ),
        "eta_phi": float(
            np.sqrt(
                sum(
                    float(sum(eta[i] * phi_m[i][j] for i in range(n))) ** 2
                    for j in range(n)
                )
            )
        ),
        "phi_phi_star": frob(
            la.mat_sub(la.mat_mul(phi_m, phi_star), la.mat_sub(ident, xi_eta))
        ),
        "phi_star_phi": frob(
            la.mat_sub(la.mat_mul(phi_star, phi_m), la.mat_sub(ident, xi_eta))
        ),
        "eta_xi": abs(float(la.bilinear(jet.g, xi_v, xi_v)) - 1.0),
    }


def contact_identity_residual(phi, xi, chart, vec_x, x):
    """Divergence identity for phi phi^* against both candidate signs.

    The identity implemented as correct:
        (div phi phi^*)(X) = -( <nabla_xi xi, X> + (div xi) <xi, X> ).
    Returns residuals of this ("plus") and of the variant with the relative
    minus sign, plus a shared normalizer.
    """
    geom = ensure_geometry(chart)
    xf = as_field(vec_x)
    jet = geom.jet1(x)
    xv = xf(x)
    s_field = pp_star_field(geom, phi)
    div_s = div_endo(geom, s_field, x)
    lhs = sum(div_s[j] * xv[j] for j in range(len(xv)))
    xi_v = xi(x)
    acc = la.bilinear(jet.g, cov_at(geom, x, xi_v, xi), xv)
    dv = div_vector(geom, xi, x) * la.bilinear(jet.g, xi_v, xv)
    scale = 1.0 + abs(acc) + abs(dv) + abs(lhs)
    return {
        "plus": abs(lhs + (acc + dv)),
        "minus": abs(lhs + (acc - dv)),
        "plus_normalized": abs(lhs + (acc + dv)) / scale,
        "minus_normalized": abs(lhs + (acc - dv)) / scale,
    }
