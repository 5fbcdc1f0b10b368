"""Zero-mean Gaussian random field samples with a squared-exponential kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._random import make_rng
from .errors import CholeskyFailure

__all__ = ["KernelConfig", "GrfSample", "kernel_matrix", "sample_grf", "grf_nodes"]


@dataclass(frozen=True)
class KernelConfig:
    length_scale: float
    jitter: float = 1e-10

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if not 0 <= self.jitter < 1:
            raise ValueError(f"jitter must lie in [0, 1), got {self.jitter}")


@dataclass(frozen=True)
class GrfSample:
    nodes: np.ndarray
    values: np.ndarray


def grf_nodes(n):
    """Interior nodes ``i / (n + 1)`` for ``i = 1..n``."""
    return np.arange(1, n + 1, dtype=float) / (n + 1)


def kernel_matrix(nodes, cfg):
    """Squared-exponential covariance ``exp(-(x_i - x_j)^2 / (2 l^2))`` plus diagonal jitter."""
    x = np.asarray(nodes, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("nodes must be non-empty")
    d = x[:, None] - x[None, :]
    K = np.exp(-(d * d) / (2.0 * cfg.length_scale**2))
    K[np.diag_indices_from(K)] += cfg.jitter
    return K


def _cholesky(K, jitter, retries=3):
    extra = 0.0
    for attempt in range(retries + 1):
        try:
            return np.linalg.cholesky(K + extra * np.eye(len(K)))
        except np.linalg.LinAlgError:
            # first escalation adds 9*jitter so the total diagonal term becomes 10*jitter
            base = jitter if jitter > 0 else 1e-12
            extra = base * (10.0 ** (attempt + 1) - 1.0)
    raise CholeskyFailure(
        f"covariance not positive definite after {retries} jitter escalations"
    )


def sample_grf(n, cfg, rng=None):
    """Draw one field realisation at ``grf_nodes(n)``.

    Values are ``L @ z`` with ``L`` the lower Cholesky factor of the kernel matrix and
    ``z`` i.i.d. standard normals from ``rng``. On a failed factorisation the jitter is
    multiplied by 10, up to three times, before :class:`CholeskyFailure` is raised.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = make_rng(rng)
    nodes = grf_nodes(n)
    L = _cholesky(kernel_matrix(nodes, cfg), cfg.jitter)
    z = rng.standard_normal(n)
    return GrfSample(nodes=nodes, values=L @ z)
