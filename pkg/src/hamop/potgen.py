"""Random bounded potentials built from GRF control values and clamped cubic B-splines.

The generated potentials satisfy ``V(0) = V(L) = V0`` and ``V <= V0`` everywhere, so a
particle released at rest from ``q = 0`` stays inside ``[0, L]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from ._random import child_rng, make_rng
from .bspline import ClampedBSplineCurve, SplineTable
from .errors import GenerationFailure, InfeasibleStratum, NonMonotoneAbscissa
from .grf import KernelConfig, sample_grf

__all__ = [
    "GeneratorConfig",
    "BoundedPotential",
    "sample_abscissae",
    "normalize_grf",
    "generate_potential",
    "generate_dataset",
    "sensor_grid",
]

MAX_RETRIES = 10
MAX_REDRAWS = 200


@dataclass(frozen=True)
class GeneratorConfig:
    domain_length: float = 1.0
    potential_scale: float = 2.0
    n_grf_range: tuple = (2, 7)
    omega: float = 0.05
    length_scale_range: tuple = (0.01, 0.2)
    n_sensors: int = 100
    seed: int = 8407
    reject_flat_ends: bool = True

    def __post_init__(self):
        lo, hi = self.n_grf_range
        if lo < 2 or hi < lo:
            raise ValueError(f"n_grf_range must satisfy 2 <= lo <= hi, got {self.n_grf_range}")
        if self.reject_flat_ends and hi < 3:
            raise ValueError("rejecting flat ends needs n_grf >= 3 to be reachable")
        if not self.domain_length > 0 or not self.potential_scale > 0:
            raise ValueError("domain_length and potential_scale must be positive")
        if not 0 < self.omega < 1.0 / (2 * hi):
            raise ValueError(f"omega must lie in (0, 1/(2*{hi})), got {self.omega}")
        llo, lhi = self.length_scale_range
        if not (0 < llo <= lhi <= 1):
            raise ValueError(f"length_scale_range must lie within (0, 1], got {self.length_scale_range}")
        if self.n_sensors < 2:
            raise ValueError("n_sensors must be >= 2")

    def to_dict(self):
        d = asdict(self)
        d["n_grf_range"] = list(self.n_grf_range)
        d["length_scale_range"] = list(self.length_scale_range)
        return d


def sensor_grid(m, L=1.0):
    """Uniform sensor abscissae ``i * L / (m - 1)``."""
    return np.arange(m, dtype=float) * (L / (m - 1))


@dataclass
class BoundedPotential:
    curve: ClampedBSplineCurve
    sensor_q: np.ndarray
    sensor_v: np.ndarray
    meta: dict = field(default_factory=dict)

    def table(self):
        return SplineTable([self.curve])


def sample_abscissae(n_grf, omega, L, rng):
    """Control-point abscissae: fixed ends ``0`` and ``L`` with one draw per stratum between."""
    n = int(n_grf)
    if n < 2:
        raise InfeasibleStratum("need n_grf >= 2 for the stratified abscissae")
    lows = np.empty(n)
    highs = np.empty(n)
    lows[0], highs[0] = omega, 1.0 / n - omega / 2
    i = np.arange(2, n)
    lows[1:-1] = (i - 1) / n + omega / 2
    highs[1:-1] = i / n - omega / 2
    lows[-1], highs[-1] = (n - 1) / n + omega / 2, 1.0 - omega
    if np.any(highs <= lows):
        raise InfeasibleStratum(f"omega={omega} leaves an empty stratum for n_grf={n}")
    rng = make_rng(rng)
    inner = rng.uniform(lows, highs) * L
    return np.concatenate([[0.0], inner, [L]])


def normalize_grf(values, V0):
    """Min-max map so the minimum goes to ``V0`` and the maximum to ``-V0``.

    A constant input maps to all zeros.
    """
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two values to normalise")
    lo, hi = x.min(), x.max()
    if hi - lo <= 1e-14:
        return np.zeros_like(x)
    return V0 - 2.0 * V0 * (x - lo) / (hi - lo)


class _FlatEnd(Exception):
    pass


def _draw(cfg, rng):
    n_lo, n_hi = cfg.n_grf_range
    n_grf = int(rng.integers(n_lo, n_hi + 1))
    l_lo, l_hi = cfg.length_scale_range
    length_scale = float(rng.uniform(l_lo, l_hi))
    grf = sample_grf(n_grf, KernelConfig(length_scale), rng)
    inner_v = normalize_grf(grf.values, cfg.potential_scale)
    if cfg.reject_flat_ends and (
        inner_v[0] >= cfg.potential_scale or inner_v[-1] >= cfg.potential_scale
    ):
        # V'(0) = 0 makes the rest state an equilibrium; V'(L) = 0 makes L a separatrix
        raise _FlatEnd
    q = sample_abscissae(n_grf, cfg.omega, cfg.domain_length, rng)
    v = np.concatenate([[cfg.potential_scale], inner_v, [cfg.potential_scale]])
    curve = ClampedBSplineCurve(np.column_stack([q, v]))
    sq = sensor_grid(cfg.n_sensors, cfg.domain_length)
    sv, _ = curve.eval_at_q(sq)
    return curve, sq, np.asarray(sv), n_grf, length_scale


def generate_potential(cfg, rng=None, *, seed_path=None):
    """One bounded potential.

    A draw is repeated from a generator spawned off ``rng`` when the curve folds back
    on itself (at most ``MAX_RETRIES`` times) or, with ``cfg.reject_flat_ends``,
    when the potential is flat at either end of the domain.
    """
    rng = make_rng(cfg.seed if rng is None else rng)
    attempt_rng = rng
    folds = 0
    for attempt in range(MAX_REDRAWS):
        try:
            curve, sq, sv, n_grf, ls = _draw(cfg, attempt_rng)
        except _FlatEnd:
            attempt_rng = rng.spawn(1)[0]
            continue
        except NonMonotoneAbscissa:
            folds += 1
            if folds > MAX_RETRIES:
                break
            attempt_rng = rng.spawn(1)[0]
            continue
        meta = {"n_grf": n_grf, "length_scale": ls, "attempt": attempt}
        if seed_path is not None:
            meta["seed_path"] = list(seed_path)
        return BoundedPotential(curve=curve, sensor_q=sq, sensor_v=sv, meta=meta)
    raise GenerationFailure(f"no usable curve after {attempt + 1} draws ({folds} non-monotone)")


def generate_dataset(cfg, n):
    """``n`` potentials; sample ``i`` comes from the child stream ``(cfg.seed, i)``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    out = []
    for i in range(n):
        try:
            out.append(generate_potential(cfg, child_rng(cfg.seed, i), seed_path=(cfg.seed, i)))
        except GenerationFailure as exc:
            raise GenerationFailure(f"potential {i}: {exc}", index=i) from exc
    return out
