"""Truncated Taylor arithmetic and Taylor-mode initialisation of ODE filters.

:class:`TaylorPoly` coefficients are computed on demand and cached, one
order at a time. Evaluating a vector field on a series therefore records a
graph of coefficient recurrences; taylor-mode initialisation feeds the output
series back into the input (``x_{q+1} = y_q / (q + 1)``) and pulls one more
coefficient through the graph per order, which costs ``O(nu^2)`` coefficient
products overall.
"""

from math import factorial

import numpy as np

from . import generic
from .errors import InitialisationError, InvalidInputError, SingularSeriesError
from .sqrt_gaussian import SqrtGaussian


class _Tally:
    __slots__ = ("products",)

    def __init__(self):
        self.products = 0


def _is_series(x):
    return isinstance(x, TaylorPoly)


class TaylorPoly:
    """Truncated series ``sum_k c_k t^k`` for ``k = 0, ..., order``.

    Each coefficient is a float (scalar series) or a 1-d array (vector series,
    arithmetic acts elementwise). Coefficients beyond ``order`` are never read.

    >>> t = TaylorPoly([0.0, 1.0, 0.0, 0.0])
    >>> t.exp().coeffs
    array([1.        , 1.        , 0.5       , 0.16666667])
    """

    __slots__ = ("order", "_cache", "_rule", "_tally")
    __array_ufunc__ = None

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim not in (1, 2) or coeffs.shape[0] == 0:
            raise InvalidInputError(f"coefficients must have shape (K+1,) or (K+1, d), got {coeffs.shape}")
        self.order = coeffs.shape[0] - 1
        self._cache = [c if c.ndim else float(c) for c in coeffs]
        self._rule = None
        self._tally = _Tally()

    @classmethod
    def _lazy(cls, order, rule, tally):
        obj = cls.__new__(cls)
        obj.order = order
        obj._cache = []
        obj._rule = rule
        obj._tally = tally
        return obj

    @classmethod
    def constant(cls, value, order):
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros((order + 1, *value.shape))
        coeffs[0] = value
        return cls(coeffs)

    @classmethod
    def variable(cls, x0, order):
        """The series ``x0 + t`` (unit first coefficient)."""
        x0 = np.asarray(x0, dtype=float)
        coeffs = np.zeros((order + 1, *x0.shape))
        coeffs[0] = x0
        if order >= 1:
            coeffs[1] = 1.0
        return cls(coeffs)

    def coeff(self, k):
        if k < 0 or k > self.order:
            raise IndexError(f"coefficient {k} is beyond truncation order {self.order}")
        while len(self._cache) <= k:
            self._cache.append(self._rule(len(self._cache)))
        return self._cache[k]

    @property
    def coeffs(self):
        return np.array([self.coeff(k) for k in range(self.order + 1)])

    @property
    def shape(self):
        return np.shape(self.coeff(0))

    @property
    def products(self):
        """Number of coefficient products performed in this series' graph."""
        return self._tally.products

    def primal_value(self):
        return self.coeff(0)

    def __repr__(self):
        return f"TaylorPoly(order={self.order}, coeffs={self.coeffs!r})"

    def __len__(self):
        return self.shape[0] if self.shape else 0

    def __getitem__(self, i):
        if not self.shape:
            raise TypeError("scalar series cannot be indexed")
        return TaylorPoly._lazy(self.order, lambda k: float(self.coeff(k)[i]), self._tally)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def stack(cls, components):
        """Vector series from scalar series (or constants) of equal order."""
        orders = {c.order for c in components if _is_series(c)}
        if len(orders) != 1:
            raise InvalidInputError("components must include series of one common order")
        order = orders.pop()
        tally = next(c._tally for c in components if _is_series(c))
        comps = [c if _is_series(c) else cls.constant(c, order) for c in components]
        return cls._lazy(order, lambda k: np.array([c.coeff(k) for c in comps]), tally)

    # -- construction helpers -------------------------------------------------

    def _derive(self, rule):
        return TaylorPoly._lazy(self.order, rule, self._tally)

    def _other(self, other):
        if _is_series(other):
            if other.order != self.order:
                raise InvalidInputError(
                    f"truncation orders differ: {self.order} vs {other.order}"
                )
            s, o = self.shape, other.shape
            if s and o and s != o:
                raise InvalidInputError(f"series dimensions differ: {s} vs {o}")
            return other
        if isinstance(other, generic.Dual):
            return NotImplemented
        return TaylorPoly.constant(other, self.order)

    def _count(self, n):
        self._tally.products += n

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        b = self._other(other)
        if b is NotImplemented:
            return b
        return self._derive(lambda k: self.coeff(k) + b.coeff(k))

    __radd__ = __add__

    def __sub__(self, other):
        b = self._other(other)
        if b is NotImplemented:
            return b
        return self._derive(lambda k: self.coeff(k) - b.coeff(k))

    def __rsub__(self, other):
        b = self._other(other)
        if b is NotImplemented:
            return b
        return b - self

    def __neg__(self):
        return self._derive(lambda k: -self.coeff(k))

    def __pos__(self):
        return self

    def scale(self, c):
        def rule(k):
            self._count(1)
            return c * self.coeff(k)

        return self._derive(rule)

    def __mul__(self, other):
        if not _is_series(other) and not isinstance(other, generic.Dual):
            return self.scale(other)
        b = self._other(other)
        if b is NotImplemented:
            return b

        def rule(k):
            self._count(k + 1)
            return sum(self.coeff(j) * b.coeff(k - j) for j in range(k + 1))

        return self._derive(rule)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not _is_series(other) and not isinstance(other, generic.Dual):
            if np.any(np.asarray(other) == 0.0):
                raise SingularSeriesError("division by a zero constant")
            return self.scale(1.0 / np.asarray(other, dtype=float))
        b = self._other(other)
        if b is NotImplemented:
            return b
        return _divide(self, b)

    def __rtruediv__(self, other):
        b = self._other(other)
        if b is NotImplemented:
            return b
        return _divide(b, self)

    def reciprocal(self):
        return _divide(TaylorPoly.constant(np.ones(self.shape), self.order), self)

    def __pow__(self, exponent):
        if _is_series(exponent) or isinstance(exponent, generic.Dual):
            raise TypeError("only constant exponents are supported")
        u0 = np.asarray(self.coeff(0))
        is_natural = float(exponent).is_integer() and exponent >= 0
        if is_natural and exponent <= 2:
            if exponent == 0:
                return TaylorPoly.constant(np.ones(self.shape), self.order)
            return self if exponent == 1 else self * self
        if np.any(u0 == 0.0):
            if not is_natural:
                raise SingularSeriesError("non-integer power of a series with zero constant term")
            result, base, n = None, self, int(exponent)
            while n:
                if n & 1:
                    result = base if result is None else result * base
                base = base * base
                n >>= 1
            return result
        a = float(exponent)
        cache = []

        def rule(k):
            if k == 0:
                value = u0**a
            else:
                self._count(2 * k)
                value = sum(((a + 1.0) * j - k) * self.coeff(j) * cache[k - j] for j in range(1, k + 1))
                value = value / (k * u0)
            cache.append(value)
            return value

        return self._derive(rule)

    def sqrt(self):
        return self**0.5

    def exp(self):
        cache = []

        def rule(k):
            if k == 0:
                value = np.exp(self.coeff(0))
            else:
                self._count(2 * k)
                value = sum(j * self.coeff(j) * cache[k - j] for j in range(1, k + 1)) / k
            cache.append(value)
            return value

        return self._derive(rule)

    def log(self):
        u0 = self.coeff(0)
        if np.any(np.asarray(u0) == 0.0):
            raise SingularSeriesError("logarithm of a series with zero constant term")
        cache = []

        def rule(k):
            if k == 0:
                value = np.log(u0)
            else:
                self._count(2 * (k - 1))
                acc = sum(j * cache[j] * self.coeff(k - j) for j in range(1, k))
                value = (self.coeff(k) - acc / k) / u0
            cache.append(value)
            return value

        return self._derive(rule)

    def _sincos(self):
        s_cache, c_cache = [], []

        def extend(k):
            # both recurrences advance together
            while len(s_cache) <= k:
                n = len(s_cache)
                if n == 0:
                    s_cache.append(np.sin(self.coeff(0)))
                    c_cache.append(np.cos(self.coeff(0)))
                    continue
                self._count(4 * n)
                terms = [(j * self.coeff(j), n - j) for j in range(1, n + 1)]
                s_cache.append(sum(w * c_cache[i] for w, i in terms) / n)
                c_cache.append(-sum(w * s_cache[i] for w, i in terms) / n)

        def sin_rule(k):
            extend(k)
            return s_cache[k]

        def cos_rule(k):
            extend(k)
            return c_cache[k]

        return self._derive(sin_rule), self._derive(cos_rule)

    def sin(self):
        return self._sincos()[0]

    def cos(self):
        return self._sincos()[1]


def _divide(a, b):
    b0 = b.coeff(0)
    if np.any(np.asarray(b0) == 0.0):
        raise SingularSeriesError("division by a series with zero constant term")
    cache = []

    def rule(k):
        acc = a.coeff(k)
        if k:
            a._count(k)
            acc = acc - sum(b.coeff(j) * cache[k - j] for j in range(1, k + 1))
        value = acc / b0
        cache.append(value)
        return value

    return a._derive(rule)


def _output_coeff(y, k):
    if _is_series(y):
        return y.coeff(k)
    return float(y) if k == 0 else 0.0


def taylor_coefficients(field, x0, num):
    """Taylor coefficients ``x_0, ..., x_num`` of the ODE solution at ``t0``.

    Returns the ``(num + 1, d)`` coefficient array and the number of
    coefficient products spent.
    """
    x0 = np.asarray(x0, dtype=float)
    d = x0.shape[0]
    tally = _Tally()
    outputs = []

    def rule(k):
        if k == 0:
            return x0
        return np.array([_output_coeff(y, k - 1) for y in outputs]) / k

    x = TaylorPoly._lazy(num, rule, tally)
    try:
        ys = list(field(list(x)))
        if len(ys) != d:
            raise InitialisationError(f"vector field returned {len(ys)} components, expected {d}")
        outputs.extend(ys)
        coeffs = x.coeffs
    except InitialisationError:
        raise
    except Exception as exc:
        raise InitialisationError(f"taylor-mode initialisation failed: {exc}") from exc
    if not np.all(np.isfinite(coeffs)):
        raise InitialisationError("taylor-mode initialisation produced non-finite coefficients")
    return coeffs, tally.products


def _stack_from_coefficients(coeffs):
    return np.concatenate([factorial(q) * coeffs[q] for q in range(coeffs.shape[0])])


def taylor_mode_init(problem, nu):
    """Exact derivative stack ``(x(t0), x'(t0), ..., x^(nu)(t0))``, derivative-major."""
    if int(nu) != nu or nu < 1:
        raise InvalidInputError(f"order must be an integer >= 1, got {nu!r}")
    coeffs, _ = taylor_coefficients(problem.field, problem.x0, int(nu))
    return _stack_from_coefficients(coeffs)


def recursive_init_oracle(problem, nu):
    """Derivative stack via nested Jacobian-vector products.

    Uses ``F_0 = f`` and ``F_{i+1}(x) = J_{F_i}(x) f(x)`` (chain rule along
    the flow), so ``x^(q+1)(t0) = F_q(x0)``. The cost grows exponentially in
    ``nu``.
    """
    if int(nu) != nu or nu < 1:
        raise InvalidInputError(f"order must be an integer >= 1, got {nu!r}")
    if nu > 5:
        raise InvalidInputError("the recursive oracle is limited to nu <= 5")

    field = problem.field

    def next_level(F):
        def F_next(x):
            _, derivative = generic.jvp(F, x, field(x))
            return derivative

        return F_next

    x0 = [float(v) for v in problem.x0]
    stack = [np.asarray(x0)]
    F = field
    try:
        for _ in range(int(nu)):
            stack.append(np.array([generic.primal(v) for v in F(x0)], dtype=float))
            F = next_level(F)
    except Exception as exc:
        raise InitialisationError(f"recursive initialisation failed: {exc}") from exc
    return np.concatenate(stack)


def initial_distribution(problem, nu, num_exact=None, init_std=1e3):
    """Initial state for the filter.

    With ``num_exact=None`` all ``nu`` derivatives come from taylor mode and
    the covariance factor is zero. Otherwise only derivatives up to
    ``num_exact`` are exact; the remaining blocks of the mean are zero and the
    corresponding diagonal entries of the covariance factor are ``init_std``.
    """
    d = problem.dim
    if num_exact is None or num_exact >= nu:
        return SqrtGaussian.dirac(taylor_mode_init(problem, nu))
    if num_exact < 0:
        raise InvalidInputError("num_exact must be nonnegative")
    mean = np.zeros(d * (nu + 1))
    if num_exact == 0:
        mean[:d] = problem.x0
    else:
        mean[: d * (num_exact + 1)] = taylor_mode_init(problem, num_exact)
    factor = np.zeros((mean.shape[0], mean.shape[0]))
    tail = np.arange(d * (num_exact + 1), mean.shape[0])
    factor[tail, tail] = init_std
    return SqrtGaussian(mean, factor)
