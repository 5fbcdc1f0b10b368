"""Trajectory losses, timing and summary statistics."""

from __future__ import annotations

import time
from dataclasses import dataclass, asdict

import numpy as np

from .errors import EmptyInput, GridMismatch, LengthMismatch

__all__ = [
    "SampleLoss",
    "AggregateStats",
    "mse",
    "sample_loss",
    "batch_losses",
    "aggregate",
    "time_trajectory",
    "format_stats_table",
]


@dataclass(frozen=True)
class SampleLoss:
    l_q: float
    l_p: float
    l_tot: float
    time_seconds: float = 0.0


@dataclass(frozen=True)
class AggregateStats:
    mean: float
    std: float
    median: float
    iqr: float

    def as_dict(self):
        return asdict(self)


def mse(true, pred):
    """Per-node mean squared error ``mean((true - pred)**2)``."""
    a = np.asarray(true, dtype=float)
    b = np.asarray(pred, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise LengthMismatch(f"cannot compare shapes {a.shape} and {b.shape}")
    return float(np.mean((a - b) ** 2))


def sample_loss(true_traj, pred_traj, elapsed=0.0):
    """Position, momentum and total loss between two trajectories on the same grid."""
    if len(true_traj.t) != len(pred_traj.t) or not np.allclose(true_traj.t, pred_traj.t, rtol=0, atol=1e-12):
        raise GridMismatch("trajectories are sampled on different time grids")
    l_q = mse(true_traj.q, pred_traj.q)
    l_p = mse(true_traj.p, pred_traj.p)
    return SampleLoss(l_q, l_p, 0.5 * (l_q + l_p), float(elapsed))


def batch_losses(q_true, p_true, q_pred, p_pred):
    """Row-wise ``(l_q, l_p, l_tot)`` arrays for ``(N, m)`` inputs."""
    shapes = {np.shape(x) for x in (q_true, p_true, q_pred, p_pred)}
    if len(shapes) != 1:
        raise LengthMismatch(f"inconsistent shapes {sorted(shapes)}")
    l_q = np.mean((np.asarray(q_true) - q_pred) ** 2, axis=-1)
    l_p = np.mean((np.asarray(p_true) - p_pred) ** 2, axis=-1)
    return l_q, l_p, 0.5 * (l_q + l_p)


def aggregate(values):
    """Mean, population std, median and IQR (linear-interpolation quantiles)."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise EmptyInput("cannot aggregate an empty sample")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    return AggregateStats(float(x.mean()), float(x.std()), float(med), float(q3 - q1))


def time_trajectory(producer, pot, warmup=True):
    """Run ``producer(pot)`` once under a monotonic clock; returns ``(result, seconds)``.

    With ``warmup`` an untimed call is made first so caches and lazy imports do not
    count towards the measurement.
    """
    if warmup:
        producer(pot)
    t0 = time.perf_counter()
    out = producer(pot)
    return out, time.perf_counter() - t0


def format_stats_table(rows):
    """Plain-text table for ``{name: AggregateStats}``."""
    lines = [f"{'metric':<12}{'mean':>14}{'std':>14}{'median':>14}{'iqr':>14}"]
    for name, st in rows.items():
        lines.append(f"{name:<12}{st.mean:>14.4e}{st.std:>14.4e}{st.median:>14.4e}{st.iqr:>14.4e}")
    return "\n".join(lines)
