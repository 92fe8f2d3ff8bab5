"""Built-in verification scenarios: charts, pairs, samplers, quadrature specs.

Each scenario bundles a chart, an endomorphism pair with advertised flags,
sampling bounds for pointwise checks, and the per-axis quadrature layout.
Advertised flags are probed numerically at construction (small seeded point
set, stored in ``pair.evidence``) and re-verified at full strength by the
checks — nothing downstream trusts a flag that has not been measured.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from . import dual as ops
from . import linalg as la
from .chart_geometry import Chart, Geometry, div_endo, ensure_geometry
from .dist_tensors import pp_star_field
from .endo_fields import (
    EndoPair,
    adjoint_field,
    allowed_residual,
    pair_product_norms,
    self_adjoint_defects,
)
from .quadrature import Axis, QuadratureGrid

TWO_PI = 2.0 * math.pi


@dataclass
class ScenarioManifold:
    name: str
    chart: Chart
    geom: Geometry
    pair: EndoPair
    quad_axes: tuple
    sample_bounds: tuple
    kind: str  # "torus" | "sphere-product"
    extras: dict = dc_field(default_factory=dict)
    integrand_degenerate: bool = False
    to_chart: Optional[Callable] = None
    quad_jacobian: Optional[Callable] = None

    def grid(self, counts):
        if isinstance(counts, int):
            counts = (counts,) * len(self.quad_axes)
        counts = tuple(counts)
        if len(counts) == 1:
            counts = counts * len(self.quad_axes)
        if len(counts) != len(self.quad_axes):
            raise ValueError(
                f"scenario {self.name} needs {len(self.quad_axes)} grid counts"
            )
        return QuadratureGrid(
            axes=self.quad_axes,
            counts=counts,
            to_chart=self.to_chart,
            jacobian=self.quad_jacobian,
        )

    def sample_points(self, rng, count):
        return [
            [float(rng.uniform(lo, hi)) for lo, hi in self.sample_bounds]
            for _ in range(count)
        ]


def _covector_gnorm(geom, x, omega):
    ginv = geom.jet1(x).g_inv
    n = len(omega)
    val = sum(omega[i] * ginv[i][j] * omega[j] for i in range(n) for j in range(n))
    return float(np.sqrt(max(float(val), 0.0)))


def probe_pair(scenario, n_points=5, seed=7):
    """Light construction-time measurement of the advertised flags."""
    rng = np.random.default_rng(seed)
    geom = scenario.geom
    pair = scenario.pair
    pts = scenario.sample_points(rng, n_points)
    ev = {}
    adapted = 0.0
    sadj = 0.0
    for x in pts:
        prods = pair_product_norms(pair, geom, x)
        prods.pop("scale")
        adapted = max(adapted, max(prods.values()))
        if pair.self_adjoint:
            sadj = max(sadj, max(self_adjoint_defects(pair, geom, x).values()))
    ev["adapted"] = adapted
    if pair.self_adjoint:
        ev["self_adjoint"] = sadj
    if pair.allowed:
        worst = 0.0
        for x in pts:
            vx = list(rng.normal(size=len(x)))
            vy = list(rng.normal(size=len(x)))
            worst = max(worst, allowed_residual(pair, geom, x, vx, vy)[0])
        ev["allowed"] = worst
    if pair.div_pp_star_zero:
        q_field = pp_star_field(geom, pair.total())
        ev["div_pp_star"] = max(
            _covector_gnorm(geom, x, div_endo(geom, q_field, x)) for x in pts
        )
    if pair.div_p_squared_zero:
        p_total = pair.total()

        def p_sq(z):
            p = p_total(z)
            return la.mat_mul(p, p)

        ev["div_p_squared"] = max(
            _covector_gnorm(geom, x, div_endo(geom, p_sq, x)) for x in pts
        )
    pair.evidence.update(ev)
    return ev


# -- torus scenarios ---------------------------------------------------------


def flat_torus_projectors(n1=1, n2=1):
    dim = n1 + n2
    identity = la.eye(dim)

    def metric(_z):
        return identity

    chart = Chart(
        name="flat-torus",
        dim=dim,
        metric=metric,
        domain=((0.0, TWO_PI),) * dim,
        periodic=(True,) * dim,
    )
    proj1 = [[1.0 if (i == j and i < n1) else 0.0 for j in range(dim)] for i in range(dim)]
    proj2 = [[1.0 if (i == j and i >= n1) else 0.0 for j in range(dim)] for i in range(dim)]
    pair = EndoPair(
        p1=lambda _z: proj1,
        p2=lambda _z: proj2,
        self_adjoint=True,
        allowed=True,
        div_pp_star_zero=True,
        div_p_squared_zero=True,
    )
    scenario = ScenarioManifold(
        name="flat-torus",
        chart=chart,
        geom=Geometry(chart),
        pair=pair,
        quad_axes=(Axis("periodic", 0.0, TWO_PI),) * dim,
        sample_bounds=((0.0, TWO_PI),) * dim,
        kind="torus",
        integrand_degenerate=True,
        extras={"split": (n1, n2)},
    )
    probe_pair(scenario)
    return scenario


def warped_torus(profile=None):
    """T^2 with metric du^2 + e^{2 w(u)} dv^2 and the coordinate projectors."""
    w = profile if profile is not None else ops.sin

    def metric(z):
        return [[1.0, 0.0], [0.0, ops.exp(2.0 * w(z[0]))]]

    chart = Chart(
        name="warped-torus",
        dim=2,
        metric=metric,
        domain=((0.0, TWO_PI), (0.0, TWO_PI)),
        periodic=(True, True),
    )
    proj1 = [[1.0, 0.0], [0.0, 0.0]]
    proj2 = [[0.0, 0.0], [0.0, 1.0]]
    pair = EndoPair(
        p1=lambda _z: proj1,
        p2=lambda _z: proj2,
        self_adjoint=True,
        allowed=True,
        div_pp_star_zero=True,
        div_p_squared_zero=True,
    )
    scenario = ScenarioManifold(
        name="warped-torus",
        chart=chart,
        geom=Geometry(chart),
        pair=pair,
        quad_axes=(Axis("periodic", 0.0, TWO_PI), Axis("periodic", 0.0, TWO_PI)),
        sample_bounds=((0.0, TWO_PI), (0.0, TWO_PI)),
        kind="torus",
        extras={"warp": w},
    )
    probe_pair(scenario)
    return scenario


def scaled_identity(base=None, c=2.0):
    """Rescale both members of a scenario's pair by a nonzero constant."""
    if c == 0:
        raise ValueError("scale must be nonzero")
    if base is None:
        base = warped_torus()
    old1, old2 = base.pair.p1, base.pair.p2
    pair = EndoPair(
        p1=lambda z: la.mat_scale(c, old1(z)),
        p2=lambda z: la.mat_scale(c, old2(z)),
        self_adjoint=base.pair.self_adjoint,
        allowed=base.pair.allowed,
        div_pp_star_zero=base.pair.div_pp_star_zero,
        div_p_squared_zero=base.pair.div_p_squared_zero,
    )
    extras = dict(base.extras)
    extras.update({"scale": c, "base": base.name})
    scenario = dataclasses.replace(
        base, name="scaled-identity", pair=pair, extras=extras
    )
    probe_pair(scenario)
    return scenario


def non_allowed_rotated(base=None, amplitude=0.5):
    """Adapted but non-self-adjoint, non-allowed pair on the warped torus.

    The images of the coordinate projectors are rotated by theta(u) inside
    the orthonormal frame; the rotation is a metric isometry, so the four
    adaptedness products still vanish exactly, but the derivative forms do
    not.  Used as the fail-path example for the allowedness check.
    """
    if base is None:
        base = warped_torus()
    w = base.extras["warp"]

    def rot(z):
        th = amplitude * ops.sin(z[0])
        c, s = ops.cos(th), ops.sin(th)
        ew = ops.exp(w(z[0]))
        # F Rot(th) F^{-1} with F = diag(1, e^{-w}) mapping frame to coords
        return [[c, -s * ew], [s / ew, c]]

    def p1(z):
        r = rot(z)
        return [[r[0][0], 0.0], [r[1][0], 0.0]]

    def p2(z):
        r = rot(z)
        return [[0.0, r[0][1]], [0.0, r[1][1]]]

    pair = EndoPair(p1=p1, p2=p2, self_adjoint=False, allowed=False)
    scenario = dataclasses.replace(
        base,
        name="warped-torus-rotated",
        pair=pair,
        extras={**base.extras, "rotation_amplitude": amplitude},
    )
    probe_pair(scenario)
    return scenario


# -- sphere-product scenarios -------------------------------------------------


def _round_sphere_factor(z3):
    x, y, w = z3[0], z3[1], z3[2]
    return 2.0 / (1.0 + x * x + y * y + w * w)


def _s3_frame(z3):
    """Orthonormal left-invariant frame of the round 3-sphere, in the
    stereographic chart (unit vectors for the conformally flat metric)."""
    x, y, w = z3[0], z3[1], z3[2]
    r2 = x * x + y * y + w * w
    half = (r2 - 1.0) * 0.5
    e1 = [half - x * x, w - x * y, -y - x * w]
    e2 = [-w - x * y, half - y * y, x - w * y]
    e3 = [y - x * w, -x - y * w, half - w * w]
    return e1, e2, e3


def _sphere_coords(z3):
    """Embedding coordinates (q0, q1, q2, q3) of the chart point — smooth,
    bounded building blocks for globally smooth test fields."""
    x, y, w = z3[0], z3[1], z3[2]
    r2 = x * x + y * y + w * w
    den = 1.0 / (1.0 + r2)
    return [(r2 - 1.0) * den, 2.0 * x * den, 2.0 * y * den, 2.0 * w * den]


def einstein_factor(u):
    """Closed form of the repeated S^3-block eigenvalue of the mixed Einstein
    tensor for the product metric used by einstein_s3xt2 (<= 0 everywhere)."""
    s2 = ops.sin(u) ** 2
    c2 = ops.cos(u) ** 2
    return -(s2 * ((c2 - 5.0) * c2 + 10.0)) / (1.0 + s2) ** 3


def einstein_a1(u):
    """sqrt(-einstein_factor): the S^3-block coefficient of P."""
    s = ops.sin(u)
    c2 = ops.cos(u) ** 2
    return ops.fabs(s) * ops.sqrt((c2 - 5.0) * c2 + 10.0) / (1.0 + s * s) ** 1.5


def _angular_axes():
    return (
        Axis("legendre", 0.0, math.pi),
        Axis("legendre", 0.0, math.pi),
        Axis("periodic", 0.0, TWO_PI),
    )


def _angular_to_chart(params):
    chi, theta, phi = params[0], params[1], params[2]
    r = np.tan(0.5 * chi)
    sin_t = np.sin(theta)
    out = [r * sin_t * np.cos(phi), r * sin_t * np.sin(phi), r * np.cos(theta)]
    out.extend(params[3:])
    return out


def _angular_jacobian(params):
    chi, theta = params[0], params[1]
    r = np.tan(0.5 * chi)
    return r * r * np.sin(theta) * 0.5 / np.cos(0.5 * chi) ** 2


def einstein_s3xt2():
    """Product of the round 3-sphere (radius-2 conformal factor) with a flat
    2-torus rescaled by 1 + sin^2 u; the pair is the PSD square root of minus
    the mixed Einstein tensor, split along the two factors."""
    dim = 5
    sqrt3 = math.sqrt(3.0)

    def metric(z):
        lam = _round_sphere_factor(z)
        lam2 = lam * lam
        tu = 1.0 + ops.sin(z[3]) ** 2
        row = lambda i, v: [v if j == i else 0.0 for j in range(dim)]
        return [row(0, lam2), row(1, lam2), row(2, lam2), row(3, tu), row(4, tu)]

    chart = Chart(
        name="einstein-s3xt2",
        dim=dim,
        metric=metric,
        domain=(
            (-math.inf, math.inf),
            (-math.inf, math.inf),
            (-math.inf, math.inf),
            (0.0, TWO_PI),
            (0.0, TWO_PI),
        ),
        periodic=(False, False, False, True, True),
        singular_locus="pair degenerates on the S^3 factor where sin u = 0",
    )

    def p1(z):
        a = einstein_a1(z[3])
        return [
            [a if (i == j and i < 3) else 0.0 for j in range(dim)] for i in range(dim)
        ]

    p2_mat = [
        [sqrt3 if (i == j and i >= 3) else 0.0 for j in range(dim)] for i in range(dim)
    ]

    pair = EndoPair(
        p1=p1,
        p2=lambda _z: p2_mat,
        self_adjoint=True,
        allowed=True,
        div_pp_star_zero=True,
        div_p_squared_zero=True,
    )
    scenario = ScenarioManifold(
        name="einstein-s3xt2",
        chart=chart,
        geom=Geometry(chart),
        pair=pair,
        quad_axes=_angular_axes()
        + (Axis("periodic", 0.0, TWO_PI), Axis("periodic", 0.0, TWO_PI)),
        sample_bounds=(
            (-2.0, 2.0),
            (-2.0, 2.0),
            (-2.0, 2.0),
            (0.0, TWO_PI),
            (0.0, TWO_PI),
        ),
        kind="sphere-product",
        integrand_degenerate=True,
        to_chart=_angular_to_chart,
        quad_jacobian=_angular_jacobian,
        extras={
            "einstein_factor": einstein_factor,
            "a1": einstein_a1,
            "a2": sqrt3,
        },
    )
    probe_pair(scenario)
    return scenario


_EPS3 = [
    [[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]],
    [[0.0, 0.0, -1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
    [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
]


def _cross_product_endo(geom, xi):
    """phi^k_j = sqrt(det g) g^{kl} eps_{lmj} xi^m — rotation by a quarter
    turn around xi in its orthogonal complement (3-d charts only)."""

    def fld(z):
        jet = geom.jet1(z)
        xiv = xi(z)
        out = []
        for k in range(3):
            row = []
            for j in range(3):
                acc = 0.0
                for l in range(3):
                    for m in range(3):
                        e = _EPS3[l][m][j]
                        if e != 0.0:
                            acc = acc + jet.g_inv[k][l] * (e * xiv[m])
                row.append(jet.sqrt_det * acc)
            out.append(row)
        return out

    return fld


def _unit_field_projectors(geom, xi):
    """Complementary orthoprojectors: onto span(xi) and its complement."""

    def eta(z):
        jet = geom.jet1(z)
        xiv = xi(z)
        return [sum(jet.g[i][j] * xiv[j] for j in range(3)) for i in range(3)]

    def p2(z):
        xiv = xi(z)
        ev = eta(z)
        return [[xiv[i] * ev[j] for j in range(3)] for i in range(3)]

    def p1(z):
        m = p2(z)
        return [
            [(1.0 if i == j else 0.0) - m[i][j] for j in range(3)] for i in range(3)
        ]

    return p1, p2, eta


def _hopf_scenario(name, conformal_strength=0.0):
    def psi(z):
        if conformal_strength == 0.0:
            return 0.0
        return conformal_strength * _sphere_coords(z)[0]

    def metric(z):
        lam = _round_sphere_factor(z)
        f = lam * lam
        if conformal_strength != 0.0:
            f = f * ops.exp(2.0 * psi(z))
        return [
            [f, 0.0, 0.0],
            [0.0, f, 0.0],
            [0.0, 0.0, f],
        ]

    chart = Chart(
        name=name,
        dim=3,
        metric=metric,
        domain=((-math.inf, math.inf),) * 3,
        periodic=(False, False, False),
    )
    geom = Geometry(chart)

    def xi(z):
        e1 = _s3_frame(z)[0]
        if conformal_strength == 0.0:
            return e1
        scale = ops.exp(-psi(z))
        return [scale * c for c in e1]

    phi = _cross_product_endo(geom, xi)
    p1, p2, eta = _unit_field_projectors(geom, xi)
    pair = EndoPair(
        p1=p1,
        p2=p2,
        self_adjoint=True,
        allowed=True,
        div_pp_star_zero=True,
        div_p_squared_zero=True,
    )
    scenario = ScenarioManifold(
        name=name,
        chart=chart,
        geom=geom,
        pair=pair,
        quad_axes=_angular_axes(),
        sample_bounds=((-2.0, 2.0),) * 3,
        kind="sphere-product",
        integrand_degenerate=True,
        to_chart=_angular_to_chart,
        quad_jacobian=_angular_jacobian,
        extras={"xi": xi, "phi": phi, "eta": eta},
    )
    probe_pair(scenario)
    return scenario


def hopf_contact_s3():
    """Round 3-sphere with its unit Killing circle field and the quarter-turn
    endomorphism around it; the pair splits the circle from its complement."""
    scenario = _hopf_scenario("hopf-s3")
    scenario.extras["conformal"] = conformal_hopf
    return scenario


def conformal_hopf(strength=0.3):
    """Conformal rescale of the round sphere keeping the circle field unit.

    Here the circle field is no longer geodesic or divergence-free, which is
    what separates the two candidate signs of the contact divergence identity.
    """
    return _hopf_scenario("hopf-s3-conformal", conformal_strength=strength)


# -- registry & samplers ------------------------------------------------------

SCENARIO_NAMES = (
    "flat-torus",
    "scaled-identity",
    "warped-torus",
    "einstein-s3xt2",
    "hopf-s3",
)


def build_scenario(name):
    if name == "flat-torus":
        return flat_torus_projectors(1, 1)
    if name == "scaled-identity":
        return scaled_identity(warped_torus(), 2.0)
    if name == "warped-torus":
        return warped_torus()
    if name == "einstein-s3xt2":
        return einstein_s3xt2()
    if name == "hopf-s3":
        return hopf_contact_s3()
    raise KeyError(name)


def _trig_scalar(rng, dim, scale=1.0):
    c0 = float(rng.normal()) * scale
    amp = rng.normal(size=(dim, 4)) * (scale / math.sqrt(dim))
    pairs = list(itertools.combinations(range(dim), 2))
    cross = rng.normal(size=(len(pairs),)) * (scale / max(1.0, math.sqrt(len(pairs))))

    def f(z):
        val = c0
        for i in range(dim):
            zi = z[i]
            val = (
                val
                + amp[i][0] * ops.sin(zi)
                + amp[i][1] * ops.cos(zi)
                + amp[i][2] * ops.sin(zi + zi)
                + amp[i][3] * ops.cos(zi + zi)
            )
        for idx, (i, j) in enumerate(pairs):
            val = val + cross[idx] * ops.cos(z[i] - z[j])
        return val

    return f


def _sphere_scalar(rng, scale=1.0):
    lin = rng.normal(size=(5,)) * scale
    quad = rng.normal(size=(4, 4)) * (0.5 * scale)

    def f(z3):
        q = _sphere_coords(z3)
        val = lin[0]
        for i in range(4):
            val = val + lin[i + 1] * q[i]
            for j in range(4):
                val = val + quad[i][j] * q[i] * q[j]
        return val

    return f


def random_scalar_field(scenario, rng):
    dim = scenario.chart.dim
    if scenario.kind == "torus":
        return _trig_scalar(rng, dim)
    sphere = _sphere_scalar(rng)
    if dim == 3:
        return sphere
    tail = _trig_scalar(rng, dim - 3, scale=0.5)

    def f(z):
        return sphere(z[:3]) * (1.0 + 0.3 * tail(z[3:])) + tail(z[3:])

    return f


def random_vector_field(scenario, rng):
    dim = scenario.chart.dim
    if scenario.kind == "torus":
        comps = [_trig_scalar(rng, dim) for _ in range(dim)]

        def fld(z):
            return [c(z) for c in comps]

        return fld

    if dim == 3:
        coeffs = [_sphere_scalar(rng) for _ in range(3)]

        def fld3(z):
            frame = _s3_frame(z)
            cs = [c(z) for c in coeffs]
            return [
                cs[0] * frame[0][i] + cs[1] * frame[1][i] + cs[2] * frame[2][i]
                for i in range(3)
            ]

        return fld3

    sphere_coeffs = [_sphere_scalar(rng, scale=0.7) for _ in range(3)]
    angle_coeffs = [_trig_scalar(rng, dim - 3, scale=0.5) for _ in range(3)]
    tail_s = [_sphere_scalar(rng, scale=0.6) for _ in range(dim - 3)]
    tail_t = [_trig_scalar(rng, dim - 3, scale=0.7) for _ in range(dim - 3)]

    def fld(z):
        s3 = z[:3]
        frame = _s3_frame(s3)
        cs = [
            sphere_coeffs[m](s3) * (1.0 + 0.5 * angle_coeffs[m](z[3:]))
            for m in range(3)
        ]
        out = [
            cs[0] * frame[0][i] + cs[1] * frame[1][i] + cs[2] * frame[2][i]
            for i in range(3)
        ]
        out.extend(tail_s[a](s3) * tail_t[a](z[3:]) for a in range(dim - 3))
        return out

    return fld


def random_vectors(rng, dim, count):
    return [list(map(float, rng.normal(size=dim))) for _ in range(count)]
