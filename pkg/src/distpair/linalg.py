"""Small dense linear algebra over generic payloads.

Matrices are nested lists; entries may be floats, numpy arrays (batched
evaluation) or dual numbers, so nothing here may branch on entry values.
The LU factorization therefore runs without pivoting — it is only ever
applied to symmetric positive-definite matrices (the metric), where no-pivot
LU is numerically safe.
"""

from __future__ import annotations

from . import dual as ops


def zeros(n, m=None):
    m = n if m is None else m
    return [[0.0 for _ in range(m)] for _ in range(n)]


def eye(n):
    return [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]


def mat_vec(a, x):
    return [sum(ai[j] * x[j] for j in range(len(x))) for ai in a]


def mat_mul(a, b):
    n, k, m = len(a), len(b), len(b[0])
    return [[sum(a[i][s] * b[s][j] for s in range(k)) for j in range(m)] for i in range(n)]


def mat_add(a, b):
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_sub(a, b):
    return [[x - y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_scale(c, a):
    return [[c * x for x in row] for row in a]


def transpose(a):
    return [list(col) for col in zip(*a)]


def trace(a):
    return sum(a[i][i] for i in range(len(a)))


def vec_add(x, y):
    return [a + b for a, b in zip(x, y)]


def vec_sub(x, y):
    return [a - b for a, b in zip(x, y)]


def vec_scale(c, x):
    return [c * a for a in x]


def bilinear(g, x, y):
    """<x, y>_g = sum_ij x_i g_ij y_j."""
    return sum(x[i] * sum(g[i][j] * y[j] for j in range(len(y))) for i in range(len(x)))


def lu_nopivot(a):
    """Doolittle LU without pivoting.  Caller guarantees nonzero pivots
    (metric matrices are SPD); entries may be duals or arrays."""
    n = len(a)
    upper = [row[:] for row in a]
    lower = eye(n)
    for k in range(n):
        piv = upper[k][k]
        for i in range(k + 1, n):
            m = upper[i][k] / piv
            lower[i][k] = m
            for j in range(k, n):
                upper[i][j] = upper[i][j] - m * upper[k][j]
    return lower, upper


def lu_det(upper):
    d = upper[0][0]
    for k in range(1, len(upper)):
        d = d * upper[k][k]
    return d


def lu_solve(lower, upper, b):
    n = len(b)
    y = [None] * n
    for i in range(n):
        y[i] = b[i] - sum(lower[i][j] * y[j] for j in range(i))
    x = [None] * n
    for i in reversed(range(n)):
        x[i] = (y[i] - sum(upper[i][j] * x[j] for j in range(i + 1, n))) / upper[i][i]
    return x


def inverse_and_det(a):
    lower, upper = lu_nopivot(a)
    n = len(a)
    cols = [lu_solve(lower, upper, [1.0 if i == j else 0.0 for i in range(n)]) for j in range(n)]
    inv = [[cols[j][i] for j in range(n)] for i in range(n)]
    return inv, lu_det(upper)


def gram_schmidt_frame(g):
    """Orthonormalize the coordinate basis against the metric g.

    Returns L with columns L[i][s] = components of the s-th orthonormal frame
    vector, so that L^T g L = Id.  Uses only +,-,*,/ and sqrt, hence works on
    dual/array payloads.
    """
    n = len(g)
    cols = []
    for s in range(n):
        v = [1.0 if k == s else 0.0 for k in range(n)]
        for u in cols:
            c = bilinear(g, u, v)
            v = [v[k] - c * u[k] for k in range(n)]
        nv = ops.sqrt(bilinear(g, v, v))
        cols.append([v[k] / nv for k in range(n)])
    return [[cols[s][i] for s in range(n)] for i in range(n)]


def pairwise_sum(values):
    """Sum a list by pairwise reduction (deterministic, low roundoff)."""
    vals = list(values)
    if not vals:
        return 0.0
    while len(vals) > 1:
        nxt = [vals[i] + vals[i + 1] for i in range(0, len(vals) - 1, 2)]
        if len(vals) % 2:
            nxt.append(vals[-1])
        vals = nxt
    return vals[0]
