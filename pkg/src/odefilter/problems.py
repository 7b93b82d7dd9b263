"""Benchmark initial value problems written against the generic-arithmetic contract."""

from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from . import generic
from .errors import FieldSingularityError, InvalidInputError

MOON_MASS = 0.012277471
THREE_BODY_PERIOD = 17.0652165601579625588917206249
THREE_BODY_EXTENDED_T = 25.5978248402
THREE_BODY_X0 = (0.994, 0.0, 0.0, -2.00158510637908252240537862224)


@dataclass(frozen=True)
class ODEProblem:
    """Autonomous initial value problem ``x' = field(x)``, ``x(t0) = x0`` on ``[t0, t1]``.

    ``field`` maps a sequence of generic scalars to a sequence of generic
    scalars (see :mod:`odefilter.generic`).
    """

    field: Callable[[Sequence], Sequence]
    x0: np.ndarray
    t0: float
    t1: float
    name: str = "ode"
    params: dict = dc_field(default_factory=dict, compare=False)

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "x0", x0)
        if x0.ndim != 1 or not np.all(np.isfinite(x0)):
            raise InvalidInputError("x0 must be a finite vector")
        if not self.t0 < self.t1:
            raise InvalidInputError(f"need t0 < t1, got [{self.t0}, {self.t1}]")
        fx = self.f(x0)
        if fx.shape != x0.shape or not np.all(np.isfinite(fx)):
            raise InvalidInputError("field(x0) must be finite with the shape of x0")

    @property
    def dim(self):
        return self.x0.shape[0]

    def f(self, x):
        """Evaluate the field on a float vector."""
        return np.array([generic.primal(v) for v in self.field([float(v) for v in x])])

    def jacobian(self, x):
        return generic.jacobian(self.field, x)

    def with_interval(self, t1=None, t0=None):
        t0 = self.t0 if t0 is None else t0
        t1 = self.t1 if t1 is None else t1
        return ODEProblem(self.field, self.x0, t0, t1, self.name, self.params)


def linear(rate=1.0, x0=1.0, t1=1.0):
    """Scalar linear test equation ``x' = rate * x``."""

    def field(x):
        return [rate * x[0]]

    return ODEProblem(field, [x0], 0.0, t1, name="linear", params={"rate": rate})


def lotka_volterra(t1=20.0):
    def field(x):
        x1, x2 = x
        return [0.5 * x1 - 0.05 * x1 * x2, -0.05 * x2 + 0.5 * x1 * x2]

    return ODEProblem(field, [20.0, 20.0], 0.0, t1, name="lotka")


def three_body(t1=THREE_BODY_PERIOD):
    """Restricted three-body problem in first-order form ``(x1, x2, x1', x2')``.

    The default interval is one period of the orbit; pass
    ``THREE_BODY_EXTENDED_T`` for the 150 % horizon.
    """
    mu1 = MOON_MASS
    mu2 = 1.0 - mu1

    def field(x):
        x1, x2, v1, v2 = x
        d1 = ((x1 + mu1) ** 2 + x2**2) ** 1.5
        d2 = ((x1 - mu2) ** 2 + x2**2) ** 1.5
        if generic.primal(d1) == 0.0 or generic.primal(d2) == 0.0:
            raise FieldSingularityError("three-body field evaluated at a primary's position")
        a1 = x1 + 2.0 * v2 - mu2 * (x1 + mu1) / d1 - mu1 * (x1 - mu2) / d2
        a2 = x2 - 2.0 * v1 - mu2 * x2 / d1 - mu1 * x2 / d2
        return [v1, v2, a1, a2]

    return ODEProblem(field, THREE_BODY_X0, 0.0, t1, name="threebody", params={"mu1": mu1})


def van_der_pol(mu=1000.0, t1=3000.0):
    if not mu > 0:
        raise InvalidInputError(f"mu must be positive, got {mu!r}")

    def field(x):
        x1, x2 = x
        return [x2, mu * (1.0 - x1 * x1) * x2 + x1]

    return ODEProblem(field, [2.0, 0.0], 0.0, t1, name="vanderpol", params={"mu": mu})


PROBLEMS = {
    "lotka": lotka_volterra,
    "threebody": three_body,
    "vanderpol": van_der_pol,
}
