"""Closed-form test potentials on [0, 1] and the exactly solvable trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange
from .potgen import sensor_grid

__all__ = [
    "NamedPotential",
    "MORSE_DE",
    "MORSE_A",
    "SMFF_ALPHA",
    "POTENTIAL_IDS",
    "get_named",
    "eval_named",
    "eval_named_deriv",
    "analytic_solution",
    "sample_named",
]

MORSE_DE = 8.0 / (np.sqrt(5.0) - 1.0) ** 2
MORSE_A = 3.0 * np.log((1.0 + np.sqrt(5.0)) / 2.0)
SMFF_ALPHA = 20.0
_SMFF_SERIES = 1e-6

KINDS = ("sho", "double-well", "morse", "mff", "smff")
POTENTIAL_IDS = KINDS


@dataclass(frozen=True)
class NamedPotential:
    kind: str
    de: float = MORSE_DE
    a: float = MORSE_A
    alpha: float = SMFF_ALPHA

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential {self.kind!r}; choose from {', '.join(KINDS)}")

    def value(self, q):
        return eval_named(self, q)

    def deriv(self, q):
        return eval_named_deriv(self, q)

    def __call__(self, q):
        return eval_named(self, q), eval_named_deriv(self, q)

    @property
    def has_exact_solution(self):
        return self.kind in ("sho", "mff")


def get_named(kind, **params):
    return NamedPotential(kind.lower(), **params)


def _xcoth(x, alpha):
    # x*coth(alpha*x) with the removable singularity at x = 0 handled by its series
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SMFF_SERIES
    xs = np.where(small, 1.0, x)
    full = xs / np.tanh(alpha * xs)
    series = 1.0 / alpha + alpha * x * x / 3.0
    return np.where(small, series, full)


def _xcoth_deriv(x, alpha):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SMFF_SERIES
    xs = np.where(small, 1.0, x)
    full = 1.0 / np.tanh(alpha * xs) - alpha * xs / np.sinh(alpha * xs) ** 2
    return np.where(small, 2.0 * alpha * x / 3.0, full)


def eval_named(pot, q):
    q = np.asarray(q, dtype=float)
    k = pot.kind
    if k == "sho":
        return 8.0 * (q - 0.5) ** 2
    if k == "double-well":
        return 625.0 / 8.0 * (q - 0.2) ** 2 * (q - 0.8) ** 2
    if k == "morse":
        return pot.de * (1.0 - np.exp(-pot.a * (q - 1.0 / 3.0))) ** 2
    if k == "mff":
        return 4.0 * np.abs(q - 0.5)
    return 4.0 * np.tanh(pot.alpha / 2.0) * _xcoth(q - 0.5, pot.alpha)


def eval_named_deriv(pot, q):
    """Analytic ``dV/dq``; the mirrored free fall uses 0 at its kink."""
    q = np.asarray(q, dtype=float)
    k = pot.kind
    if k == "sho":
        return 16.0 * (q - 0.5)
    if k == "double-well":
        return 625.0 / 4.0 * (q - 0.2) * (q - 0.8) * (2.0 * q - 1.0)
    if k == "morse":
        e = np.exp(-pot.a * (q - 1.0 / 3.0))
        return 2.0 * pot.de * pot.a * e * (1.0 - e)
    if k == "mff":
        return 4.0 * np.sign(q - 0.5)
    return 4.0 * np.tanh(pot.alpha / 2.0) * _xcoth_deriv(q - 0.5, pot.alpha)


def analytic_solution(kind, t):
    """Exact ``(q, p)`` for the harmonic oscillator or mirrored free fall on ``t in [0, 2]``."""
    kind = kind.kind if isinstance(kind, NamedPotential) else kind
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > 2):
        raise OutOfRange("closed forms are defined for t in [0, 2]")
    if kind == "sho":
        return 0.5 * (1.0 - np.cos(4.0 * t)), 2.0 * np.sin(4.0 * t)
    if kind == "mff":
        rise, fall = t < 0.5, t >= 1.5
        q = np.where(rise, 2.0 * t**2, np.where(fall, 2.0 * (2.0 - t) ** 2, -2.0 * t**2 + 4.0 * t - 1.0))
        p = np.where(rise, 4.0 * t, np.where(fall, -4.0 * (2.0 - t), -4.0 * t + 4.0))
        return q, p
    raise ValueError(f"no closed-form trajectory for {kind!r}")


def sample_named(pot, m, L=1.0):
    """Sensor abscissae and values of a named potential on the uniform grid."""
    if m < 2:
        raise ValueError("m must be >= 2")
    q = sensor_grid(m, L)
    return q, eval_named(pot, q)
