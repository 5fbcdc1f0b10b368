"""Estimator-style front end for the classical solvers.

``X`` is always the ``(N, m)`` matrix of potential values on the uniform sensor grid
over ``[0, L]`` and predictions are ``[q | p]`` on ``linspace(0, horizon, m)``, the
same contract as :class:`hamop.deeponet.DeepONetRegressor`. Because only sensor
values are available, each row is turned back into a function with a cubic spline.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array

from .deeponet import DeepONetRegressor, split_targets, stack_targets
from .dynamics import HamiltonianSystem, generate_labels, rk4_solve
from .potgen import sensor_grid

__all__ = ["SensorPotential", "NumericalSolver", "DeepONetRegressor", "split_targets", "stack_targets"]


class SensorPotential:
    """Row-wise cubic-spline potentials through sensor values; callable as ``(q, rows)``.

    Outside ``[0, L]`` each row is continued linearly with its end slope.
    """

    def __init__(self, V, L=1.0):
        V = np.atleast_2d(np.asarray(V, dtype=float))
        self.L = float(L)
        self.x = sensor_grid(V.shape[1], self.L)
        self.coef = CubicSpline(self.x, V, axis=1).c  # (4, m-1, N)
        self.size = V.shape[0]
        self._v_end = V[:, [0, -1]]
        d = CubicSpline(self.x, V, axis=1).derivative()
        self._d_end = np.stack([d(0.0), d(self.L)], axis=1)

    def __call__(self, q, rows):
        q = np.asarray(q, dtype=float)
        rows = np.asarray(rows)
        qc = np.clip(q, 0.0, self.L)
        k = np.clip(np.searchsorted(self.x, qc, side="right") - 1, 0, len(self.x) - 2)
        s = qc - self.x[k]
        c = self.coef[:, k, rows]
        v = ((c[0] * s + c[1]) * s + c[2]) * s + c[3]
        dv = (3.0 * c[0] * s + 2.0 * c[1]) * s + c[2]
        lo, hi = q < 0.0, q > self.L
        dv = np.where(lo, self._d_end[rows, 0], np.where(hi, self._d_end[rows, 1], dv))
        v = v + dv * (q - qc)
        return v, dv

    def system(self):
        return HamiltonianSystem(self, size=self.size, domain=(0.0, self.L), rowwise=True)


class NumericalSolver(RegressorMixin, BaseEstimator):
    """RK4 on the prediction grid, or fine-step GL4 resampled to it.

    There is nothing to learn; :meth:`fit` only validates and records the input width.
    """

    def __init__(self, method="rk4", horizon=2.0, domain_length=1.0, dt=5e-4):
        self.method = method
        self.horizon = horizon
        self.domain_length = domain_length
        self.dt = dt

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if self.method not in ("rk4", "gl4"):
            raise ValueError(f"method must be 'rk4' or 'gl4', got {self.method!r}")
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = check_array(X, dtype=np.float64)
        if self.method not in ("rk4", "gl4"):
            raise ValueError(f"method must be 'rk4' or 'gl4', got {self.method!r}")
        m = X.shape[1]
        sys = SensorPotential(X, self.domain_length).system()
        if self.method == "rk4":
            traj = rk4_solve(sys, T=self.horizon, n_nodes=m, check_domain=False)
        else:
            traj = generate_labels(sys, n_nodes=m, T=self.horizon, dt=self.dt)
        return stack_targets(traj.q, traj.p)
