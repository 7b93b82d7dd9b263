"""Generic scalar arithmetic for vector fields.

A vector field is written once as a function of a sequence of scalars and
returns a sequence of scalars. It may use ``+ - * /``, ``**`` with a constant
exponent, and the functions in this module (``exp``, ``log``, ``sin``,
``cos``, ``sqrt``, ``reciprocal``). The same definition then evaluates on
floats, on :class:`Dual` numbers (Jacobians, nested directional derivatives)
and on :class:`odefilter.taylor.TaylorPoly` series.
"""

import itertools

import numpy as np


def _dispatch(name, fallback):
    def fn(x):
        method = getattr(x, name, None)
        if method is not None and not isinstance(x, (np.ndarray, np.generic)):
            return method()
        return fallback(x)

    fn.__name__ = name
    fn.__doc__ = f"Generic ``{name}`` for floats, dual numbers and Taylor series."
    return fn


exp = _dispatch("exp", np.exp)
log = _dispatch("log", np.log)
sin = _dispatch("sin", np.sin)
cos = _dispatch("cos", np.cos)
sqrt = _dispatch("sqrt", np.sqrt)
reciprocal = _dispatch("reciprocal", lambda x: 1.0 / x)


def primal(x):
    """The plain floating-point value underlying a generic scalar."""
    while hasattr(x, "primal_value"):
        x = x.primal_value()
    return float(x)


_tags = itertools.count(1)


def new_tag():
    """A perturbation tag larger than every tag handed out before."""
    return next(_tags)


class Dual:
    """First-order dual number ``val + eps * e`` with a perturbation tag.

    ``val`` and ``eps`` may themselves be generic scalars, which gives nested
    forward mode; ``eps`` may also be a 1-d array to carry several tangent
    directions at once. Duals with different tags never mix their
    perturbations: the one with the larger tag treats the other as a constant.
    """

    __slots__ = ("val", "eps", "tag")
    # Make numpy scalars defer to the reflected operators below.
    __array_ufunc__ = None

    def __init__(self, val, eps, tag):
        self.val = val
        self.eps = eps
        self.tag = tag

    def primal_value(self):
        return self.val

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r}, tag={self.tag})"

    def _coerce(self, other):
        if isinstance(other, Dual):
            if other.tag == self.tag:
                return other
            if other.tag > self.tag:
                return NotImplemented
        return Dual(other, 0.0, self.tag)

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return Dual(self.val + o.val, self.eps + o.eps, self.tag)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return Dual(self.val - o.val, self.eps - o.eps, self.tag)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o - self

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return Dual(self.val * o.val, self.eps * o.val + self.val * o.eps, self.tag)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        q = self.val / o.val
        return Dual(q, (self.eps - q * o.eps) / o.val, self.tag)

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return o / self

    def __neg__(self):
        return Dual(-self.val, -self.eps, self.tag)

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            raise TypeError("only constant exponents are supported")
        if exponent == 0:
            return Dual(1.0, 0.0 * self.eps, self.tag)
        return Dual(self.val**exponent, exponent * self.val ** (exponent - 1) * self.eps, self.tag)

    def exp(self):
        e = exp(self.val)
        return Dual(e, e * self.eps, self.tag)

    def log(self):
        return Dual(log(self.val), self.eps / self.val, self.tag)

    def sin(self):
        return Dual(sin(self.val), cos(self.val) * self.eps, self.tag)

    def cos(self):
        return Dual(cos(self.val), -sin(self.val) * self.eps, self.tag)

    def sqrt(self):
        r = sqrt(self.val)
        return Dual(r, self.eps / (2.0 * r), self.tag)

    def reciprocal(self):
        return 1.0 / self


def tangent(y, tag):
    """The perturbation of ``y`` with respect to ``tag`` (zero for constants)."""
    if isinstance(y, Dual) and y.tag == tag:
        return y.eps
    return 0.0


def jvp(field, x, v):
    """Evaluate ``field`` at ``x`` and its directional derivative along ``v``."""
    tag = new_tag()
    out = field([Dual(xi, vi, tag) for xi, vi in zip(x, v)])
    values = [y.val if isinstance(y, Dual) and y.tag == tag else y for y in out]
    return values, [tangent(y, tag) for y in out]


def jacobian(field, x):
    """Dense Jacobian of ``field`` at the float vector ``x`` in one forward pass."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    tag = new_tag()
    seeds = np.eye(d)
    out = field([Dual(float(x[i]), seeds[i], tag) for i in range(d)])
    J = np.zeros((len(out), d))
    for i, y in enumerate(out):
        J[i] = tangent(y, tag)
    return J
