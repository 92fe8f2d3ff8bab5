"""Forward-mode automatic differentiation with nestable dual numbers.

A :class:`Dual` carries a value and a first-order perturbation with respect to
one differentiation pass, identified by an integer tag.  Tags are allocated by
:func:`fresh_tag` from a global monotone counter, so an outer differentiation
pass always has a strictly larger tag than anything created before it.  Binary
operations compare tags: the operand with the smaller tag is treated as a
constant of the outer pass.  This is what makes nested second-derivative
passes safe (no perturbation confusion).

Payloads (``val``/``eps``) may be floats, numpy arrays (for evaluating a whole
batch of points in one pass) or further ``Dual`` instances (nesting).
"""

from __future__ import annotations

import numpy as np

_tag_counter = 0


def fresh_tag() -> int:
    """Return a new differentiation tag, strictly larger than all previous."""
    global _tag_counter
    _tag_counter += 1
    return _tag_counter


class Dual:
    __slots__ = ("tag", "val", "eps")

    # Keep numpy from consuming Dual instances inside ufuncs/operators: with
    # __array_ufunc__ = None, ndarray.__add__(arr, dual) returns
    # NotImplemented and python dispatches to Dual.__radd__.
    __array_ufunc__ = None
    __array_priority__ = 1000.0

    def __init__(self, tag, val, eps):
        self.tag = tag
        self.val = val
        self.eps = eps

    def __repr__(self):
        return f"Dual(tag={self.tag}, val={self.val!r}, eps={self.eps!r})"

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            if other.tag > self.tag:
                return Dual(other.tag, self + other.val, other.eps)
            if other.tag == self.tag:
                return Dual(self.tag, self.val + other.val, self.eps + other.eps)
        return Dual(self.tag, self.val + other, self.eps)

    __radd__ = __add__

    def __neg__(self):
        return Dual(self.tag, -self.val, -self.eps)

    def __sub__(self, other):
        if isinstance(other, Dual):
            if other.tag > self.tag:
                return Dual(other.tag, self - other.val, -other.eps)
            if other.tag == self.tag:
                return Dual(self.tag, self.val - other.val, self.eps - other.eps)
        return Dual(self.tag, self.val - other, self.eps)

    def __rsub__(self, other):
        # other is never a Dual here
        return Dual(self.tag, other - self.val, -self.eps)

    def __mul__(self, other):
        if isinstance(other, Dual):
            if other.tag > self.tag:
                return Dual(other.tag, self * other.val, self * other.eps)
            if other.tag == self.tag:
                return Dual(
                    self.tag,
                    self.val * other.val,
                    self.val * other.eps + self.eps * other.val,
                )
        return Dual(self.tag, self.val * other, self.eps * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * _reciprocal(other)
        return Dual(self.tag, self.val / other, self.eps / other)

    def __rtruediv__(self, other):
        return other * _reciprocal(self)

    def __pow__(self, n):
        if isinstance(n, Dual):
            raise TypeError("dual exponents are not supported")
        if n == 2:
            return self * self
        v = self.val ** n
        return Dual(self.tag, v, (self.val ** (n - 1)) * n * self.eps)

    def __abs__(self):
        return fabs(self)


def _reciprocal(x):
    if isinstance(x, Dual):
        iv = _reciprocal(x.val)
        return Dual(x.tag, iv, -(iv * iv) * x.eps)
    return 1.0 / x


# -- elementary functions (dispatch on float / ndarray / Dual) ----------


def sin(x):
    if isinstance(x, Dual):
        return Dual(x.tag, sin(x.val), cos(x.val) * x.eps)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(x.tag, cos(x.val), -sin(x.val) * x.eps)
    return np.cos(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.val)
        return Dual(x.tag, e, e * x.eps)
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(x.tag, log(x.val), x.eps / x.val)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        r = sqrt(x.val)
        return Dual(x.tag, r, x.eps / (r * 2.0))
    return np.sqrt(x)


def sign_of(x):
    """Sign of the innermost (real) part; constant for differentiation."""
    while isinstance(x, Dual):
        x = x.val
    return np.sign(x)


def fabs(x):
    return x * sign_of(x)


def real_part(x):
    """Strip all dual layers, returning the underlying float/array value."""
    while isinstance(x, Dual):
        x = x.val
    return x


# -- seeding and extraction ---------------------------------------------


def seed_point(x, v, tag):
    """Perturb point ``x`` in direction ``v``: x_i + eps * v_i for pass `tag`."""
    return [Dual(tag, xi, vi) for xi, vi in zip(x, v)]


def val_part(c, tag):
    """Value of ``c`` with respect to pass ``tag`` (c itself if untagged)."""
    if isinstance(c, Dual) and c.tag == tag:
        return c.val
    return c


def eps_part(c, tag):
    """Derivative of ``c`` with respect to pass ``tag`` (0.0 if independent)."""
    if isinstance(c, Dual) and c.tag == tag:
        return c.eps
    return 0.0


def directional_scalar(f, x, v):
    """Derivative of scalar function f at x in direction v."""
    tag = fresh_tag()
    return eps_part(f(seed_point(x, v, tag)), tag)


def directional_vector(F, x, v):
    """(value, derivative) of component-list function F at x in direction v."""
    tag = fresh_tag()
    out = F(seed_point(x, v, tag))
    return [val_part(c, tag) for c in out], [eps_part(c, tag) for c in out]


def partials_vector(F, x):
    """Jacobian J[i][k] = d_i F^k as nested lists, one pass per coordinate."""
    n = len(x)
    jac = []
    for i in range(n):
        v = [1.0 if k == i else 0.0 for k in range(n)]
        _, d = directional_vector(F, x, v)
        jac.append(d)
    return jac
