"""Closing a monotone, unbounded potential with a C2 cubic so the bounded machinery applies.

A base ``V`` on ``[0, Q]`` (with ``V(0) = V0``) is continued on ``(Q, 1]`` by the unique
cubic ``P`` that matches value, slope and curvature at ``Q`` and reaches ``V0`` at 1.
The trajectory follows the original potential until the particle reaches ``Q``, at time
``T = int_0^Q dq / sqrt(2 (V0 - V(q)))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad

from .errors import InteriorBoundViolated, NonMonotoneBase
from .potgen import sensor_grid

__all__ = [
    "PolynomialBase",
    "ExtensionSpec",
    "ExtendedPotential",
    "build_cubic_extension",
    "make_extension",
    "extended_potential",
    "valid_time",
    "extract_valid_trajectory",
    "free_fall_spec",
    "BASE_PRESETS",
]

INTERIOR_GRID = 1001


class PolynomialBase:
    """Polynomial base potential; ``coeffs`` in ascending powers of ``q``."""

    def __init__(self, coeffs):
        self.poly = Polynomial(np.asarray(coeffs, dtype=float))
        self._d1 = self.poly.deriv()
        self._d2 = self._d1.deriv()

    def value(self, q):
        return self.poly(np.asarray(q, dtype=float))

    def deriv(self, q):
        return self._d1(np.asarray(q, dtype=float))

    def deriv2(self, q):
        return self._d2(np.asarray(q, dtype=float))

    def __call__(self, q):
        return self.value(q), self.deriv(q)


BASE_PRESETS = {
    "free-fall": PolynomialBase([2.0, -4.0]),
    "quadratic-drop": PolynomialBase([2.0, -2.0, -4.0]),
}


def build_cubic_extension(Q, V0, vQ, dvQ, ddvQ):
    """Monomial coefficients ``(c3, c2, c1, c0)`` of the C2 closing cubic.

    The four conditions are solved exactly in rational arithmetic on the binary
    inputs (Taylor form about ``Q``), then rounded once. Raises
    :class:`InteriorBoundViolated` if ``P >= V0`` on the interior check grid.
    """
    if not 0.0 < Q < 1.0:
        raise ValueError(f"Q must lie in (0, 1), got {Q}")
    Qf, V0f, a0, a1, a2 = (Fraction(float(x)) for x in (Q, V0, vQ, dvQ, ddvQ))
    a2 = a2 / 2
    d = 1 - Qf
    a3 = (V0f - a0 - a1 * d - a2 * d * d) / d**3
    # expand a0 + a1 (q-Q) + a2 (q-Q)^2 + a3 (q-Q)^3 into powers of q
    c3 = a3
    c2 = a2 - 3 * a3 * Qf
    c1 = a1 - 2 * a2 * Qf + 3 * a3 * Qf * Qf
    c0 = a0 - a1 * Qf + a2 * Qf * Qf - a3 * Qf**3
    coeffs = tuple(float(c) for c in (c3, c2, c1, c0))
    grid = np.linspace(Q, 1.0, INTERIOR_GRID + 2)[1:-1]
    worst = float(np.max(np.polyval(coeffs, grid)))
    if worst >= V0:
        raise InteriorBoundViolated(
            f"the closing cubic reaches {worst:.6g} >= V0 = {V0:g} inside ({Q:g}, 1); "
            "supply a custom extension for this base"
        )
    return coeffs


@dataclass(frozen=True)
class ExtensionSpec:
    Q: float
    V0: float
    base: object
    coeffs: tuple

    def residuals(self):
        """Errors of the four matching conditions."""
        P = np.poly1d(self.coeffs)
        Q = self.Q
        return (
            float(P(1.0) - self.V0),
            float(P(Q) - self.base.value(Q)),
            float(P.deriv()(Q) - self.base.deriv(Q)),
            float(P.deriv(2)(Q) - self.base.deriv2(Q)),
        )


def make_extension(base, Q, V0=None):
    """Spec for ``base`` (an object with ``value``, ``deriv`` and ``deriv2``)."""
    if isinstance(base, str):
        base = BASE_PRESETS[base]
    V0 = float(base.value(0.0)) if V0 is None else float(V0)
    coeffs = build_cubic_extension(Q, V0, base.value(Q), base.deriv(Q), base.deriv2(Q))
    return ExtensionSpec(float(Q), V0, base, coeffs)


def free_fall_spec():
    return make_extension(BASE_PRESETS["free-fall"], 0.5, 2.0)


class ExtendedPotential:
    """Composite potential: the base up to ``Q``, the closing cubic beyond it.

    Calling it returns ``(V, dV/dq)`` so it plugs into the integrators directly.
    """

    def __init__(self, spec):
        self.spec = spec
        self._P = np.poly1d(spec.coeffs)
        self._dP = self._P.deriv()

    def value(self, q):
        q = np.asarray(q, dtype=float)
        return np.where(q <= self.spec.Q, self.spec.base.value(q), self._P(q))

    def deriv(self, q):
        q = np.asarray(q, dtype=float)
        return np.where(q <= self.spec.Q, self.spec.base.deriv(q), self._dP(q))

    def __call__(self, q):
        return self.value(q), self.deriv(q)


def extended_potential(spec, m):
    """Values of the composite potential at ``m`` uniform sensors on ``[0, 1]``."""
    return ExtendedPotential(spec).value(sensor_grid(m, 1.0))


def _as_value_fn(base):
    return base.value if hasattr(base, "value") else base


def valid_time(base, V0, Q, epsabs=1e-9):
    """Time for a particle released at rest from the ``V0`` end to cross the base.

    The endpoint singularity is removed with ``q = s**2``. A base that rises towards
    ``Q`` (``V(Q) = V0``) is reflected first.
    """
    f = _as_value_fn(base)
    V0 = float(V0)
    if not Q > 0:
        raise ValueError("Q must be positive")
    v_lo, v_hi = float(f(0.0)), float(f(Q))
    scale = max(1.0, abs(V0))
    if abs(v_lo - V0) <= 1e-9 * scale and v_hi < V0:
        g = f
    elif abs(v_hi - V0) <= 1e-9 * scale and v_lo < V0:
        def g(q):
            return f(Q - q)
    else:
        raise NonMonotoneBase(f"base must equal V0 = {V0:g} at exactly one end of [0, {Q:g}]")

    def integrand(s):
        gap = V0 - float(g(s * s))
        if gap <= 0.0:
            raise NonMonotoneBase(f"V({s * s:.6g}) >= V0 inside the interval")
        return 2.0 * s / np.sqrt(2.0 * gap)

    value, _ = quad(integrand, 0.0, np.sqrt(Q), epsabs=epsabs, epsrel=1e-12, limit=200)
    return float(value)


def extract_valid_trajectory(traj, T_valid):
    """Nodes with ``t <= T_valid``; the cut is recorded in ``meta``."""
    if T_valid > traj.horizon * (1 + 1e-12):
        raise ValueError(f"T_valid = {T_valid} exceeds the horizon {traj.horizon}")
    keep = traj.t <= T_valid * (1 + 1e-12)
    meta = dict(traj.meta)
    meta.update(valid_time=float(T_valid), kept_nodes=int(keep.sum()))
    cls = type(traj)
    return cls(traj.t[keep], traj.q[..., keep], traj.p[..., keep], traj.dq[..., keep], traj.dp[..., keep], meta)
