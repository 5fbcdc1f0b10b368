"""Hamilton's equations with unit mass: integrators, resampling and label generation.

All integrators run a *batch* of independent systems at once. State arrays have
shape ``(B,)`` and trajectories ``(B, n_nodes)``; single-system helpers squeeze the
batch axis away.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bspline import SplineTable
from .errors import DomainEscape, FixedPointDivergence

__all__ = [
    "HamiltonianSystem",
    "Trajectory",
    "rk4_step",
    "rk4_solve",
    "gl4_step",
    "gl4_solve",
    "hermite_resample",
    "generate_label",
    "generate_labels",
    "energy",
]

_SQ3 = np.sqrt(3.0)
GL4_A = np.array([[0.25, 0.25 - _SQ3 / 6.0], [0.25 + _SQ3 / 6.0, 0.25]])
GL4_B = np.array([0.5, 0.5])
GL4_C = np.array([0.5 - _SQ3 / 6.0, 0.5 + _SQ3 / 6.0])


class HamiltonianSystem:
    """``H(q, p) = p^2/2 + V(q)`` for ``size`` independent potentials.

    ``potential`` maps an array of positions to ``(V, dV/dq)``. With ``rowwise=True``
    it is called as ``potential(q, rows)`` where ``rows[k]`` names the system that
    ``q[k]`` belongs to; otherwise every row shares one closed-form potential.
    """

    def __init__(self, potential, size=1, domain=(0.0, 1.0), rowwise=False, clamp=False):
        self.potential = potential
        self.size = int(size)
        self.domain = tuple(float(x) for x in domain)
        self.rowwise = rowwise
        self.clamp = clamp

    @classmethod
    def from_named(cls, named, size=1):
        return cls(named, size=size)

    @classmethod
    def from_curves(cls, curves, domain=(0.0, 1.0)):
        table = SplineTable(curves)
        return cls(table.evaluate, size=len(table), domain=domain, rowwise=True)

    @classmethod
    def from_potentials(cls, potentials, L=1.0):
        return cls.from_curves([p.curve for p in potentials], domain=(0.0, L))

    def _eval(self, q):
        q = np.asarray(q, dtype=float)
        if self.clamp:
            q = np.clip(q, *self.domain)
        if not self.rowwise:
            V, dV = self.potential(q)
            return np.asarray(V, dtype=float), np.asarray(dV, dtype=float)
        shape = q.shape
        rows = np.broadcast_to(np.arange(self.size), shape).ravel()
        V, dV = self.potential(q.ravel(), rows)
        return V.reshape(shape), dV.reshape(shape)

    def value(self, q):
        return self._eval(q)[0]

    def grad(self, q):
        return self._eval(q)[1]

    def energy(self, q, p):
        return 0.5 * np.asarray(p) ** 2 + self.value(q)


def energy(sys, q, p):
    """Total energy ``p^2/2 + V(q)``."""
    return sys.energy(q, p)


@dataclass
class Trajectory:
    """Node values of ``q(t)``, ``p(t)`` and their time derivatives.

    ``q``, ``p``, ``dq``, ``dp`` share shape ``(n,)`` for one system or ``(B, n)``.
    """

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    dq: np.ndarray
    dp: np.ndarray
    meta: dict = field(default_factory=dict)

    def __getitem__(self, i):
        return Trajectory(self.t, self.q[i], self.p[i], self.dq[i], self.dp[i], dict(self.meta))

    def __len__(self):
        return len(self.t)

    @property
    def horizon(self):
        return float(self.t[-1])

    def squeeze(self):
        if self.q.ndim == 2 and self.q.shape[0] == 1:
            return self[0]
        return self


def _initial_state(sys, x0):
    q0, p0 = x0
    q = np.broadcast_to(np.asarray(q0, dtype=float), (sys.size,)).copy()
    p = np.broadcast_to(np.asarray(p0, dtype=float), (sys.size,)).copy()
    return q, p


def rk4_step(sys, q, p, dt):
    """One classical Runge-Kutta step of ``(q', p') = (p, -V'(q))``."""
    k1q, k1p = p, -sys.grad(q)
    k2q, k2p = p + 0.5 * dt * k1p, -sys.grad(q + 0.5 * dt * k1q)
    k3q, k3p = p + 0.5 * dt * k2p, -sys.grad(q + 0.5 * dt * k2q)
    k4q, k4p = p + dt * k3p, -sys.grad(q + dt * k3q)
    q_new = q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    p_new = p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    return q_new, p_new


def _check_domain(sys, q, margin, step):
    lo, hi = sys.domain
    bad = (q < lo - margin) | (q > hi + margin) | ~np.isfinite(q)
    if bad.any():
        rows = np.nonzero(bad)[0].tolist()
        raise DomainEscape(f"trajectory left [{lo - margin}, {hi + margin}] at step {step} (rows {rows})")


def rk4_solve(sys, T=2.0, n_nodes=100, x0=(0.0, 0.0), margin=0.1, check_domain=True):
    """RK4 with exactly ``n_nodes - 1`` equal steps over ``[0, T]``; one node per step."""
    if n_nodes < 2:
        raise ValueError("n_nodes must be >= 2")
    dt = T / (n_nodes - 1)
    q, p = _initial_state(sys, x0)
    Q = np.empty((sys.size, n_nodes))
    P = np.empty((sys.size, n_nodes))
    Q[:, 0], P[:, 0] = q, p
    for j in range(1, n_nodes):
        q, p = rk4_step(sys, q, p, dt)
        if check_domain:
            _check_domain(sys, q, margin, j)
        Q[:, j], P[:, j] = q, p
    t = np.linspace(0.0, T, n_nodes)
    return Trajectory(t, Q, P, P.copy(), -sys.grad(Q.T).T, {"method": "rk4", "dt": dt})


def gl4_step(sys, q, p, dt, fp_tol=1e-13, max_iters=100):
    """One two-stage Gauss-Legendre step; returns ``(q, p, iterations)``.

    Because ``q' = p``, the position slopes satisfy ``Kq = p + dt A Kp`` exactly, so
    only the momentum slopes ``Kp_i = -V'(q + c_i dt p + dt^2 (A A Kp)_i)`` are
    iterated, starting from the force at the current state, until the max-norm
    update is at most ``fp_tol``.
    """
    f0 = -sys.grad(q)
    Kp = np.stack([f0, f0])
    base = q + dt * GL4_C[:, None] * p
    AA = dt * dt * (GL4_A @ GL4_A)
    for it in range(1, max_iters + 1):
        Kp_new = -sys.grad(base + AA @ Kp)
        delta = np.max(np.abs(Kp_new - Kp))
        Kp = Kp_new
        if not np.isfinite(delta):
            break
        if delta <= fp_tol:
            Kq = p + dt * (GL4_A @ Kp)
            return q + dt * (GL4_B @ Kq), p + dt * (GL4_B @ Kp), it
    raise FixedPointDivergence(f"stage iteration did not reach {fp_tol:g} in {max_iters} iterations (dt={dt:g})")


def gl4_solve(sys, T=2.0, dt=1e-3, fp_tol=1e-13, max_iters=100, x0=(0.0, 0.0), margin=0.1):
    """Fine-grid GL4 solution over ``[0, T]``.

    ``dt`` is shrunk to ``T / ceil(T / dt)`` so the grid ends exactly at ``T``. The
    result carries node derivatives for Hermite resampling.
    """
    if not dt > 0 or not fp_tol > 0:
        raise ValueError("dt and fp_tol must be positive")
    n_steps = max(1, int(np.ceil(T / dt - 1e-9)))
    h = T / n_steps
    q, p = _initial_state(sys, x0)
    Q = np.empty((sys.size, n_steps + 1))
    P = np.empty((sys.size, n_steps + 1))
    Q[:, 0], P[:, 0] = q, p
    max_used = 0
    for j in range(1, n_steps + 1):
        q, p, it = gl4_step(sys, q, p, h, fp_tol, max_iters)
        max_used = max(max_used, it)
        Q[:, j], P[:, j] = q, p
    _check_domain(sys, Q.min(axis=1), margin, n_steps)
    _check_domain(sys, Q.max(axis=1), margin, n_steps)
    t = np.linspace(0.0, T, n_steps + 1)
    dP = -sys.grad(Q.T).T
    return Trajectory(t, Q, P, P.copy(), dP, {"method": "gl4", "dt": h, "max_fp_iters": max_used})


def hermite_resample(fine, n_nodes, T=None):
    """Cubic Hermite interpolation of ``fine`` onto ``n_nodes`` uniform times in ``[0, T]``.

    Uses node values and node derivatives, so the interpolant is C1 and reproduces
    cubics exactly.
    """
    T = fine.horizon if T is None else T
    tf = fine.t
    if T > tf[-1] * (1 + 1e-12) or tf[0] > 0:
        raise ValueError("fine grid does not cover [0, T]")
    tn = np.linspace(0.0, T, n_nodes)
    k = np.clip(np.searchsorted(tf, tn, side="right") - 1, 0, len(tf) - 2)
    h = tf[k + 1] - tf[k]
    s = (tn - tf[k]) / h
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    d00 = (6 * s2 - 6 * s) / h
    d10 = 3 * s2 - 4 * s + 1
    d01 = (-6 * s2 + 6 * s) / h
    d11 = 3 * s2 - 2 * s

    def interp(y, dy):
        y0, y1 = y[..., k], y[..., k + 1]
        m0, m1 = dy[..., k], dy[..., k + 1]
        val = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
        der = d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1
        return val, der

    q, dq = interp(fine.q, fine.dq)
    p, dp = interp(fine.p, fine.dp)
    meta = dict(fine.meta)
    meta["resampled_from"] = len(tf)
    return Trajectory(tn, q, p, dq, dp, meta)


def generate_labels(sys, n_nodes=100, T=2.0, dt=5e-4, fp_tol=1e-13, max_halvings=4):
    """GL4 ground truth on a fine grid, resampled to ``n_nodes`` sensor times.

    If the stage iteration fails to converge, ``dt`` is halved (up to
    ``max_halvings`` times) and the whole batch is re-solved.
    """
    h = dt
    for attempt in range(max_halvings + 1):
        try:
            fine = gl4_solve(sys, T=T, dt=h, fp_tol=fp_tol)
            break
        except FixedPointDivergence:
            if attempt == max_halvings:
                raise
            h *= 0.5
    return hermite_resample(fine, n_nodes, T)


def generate_label(pot, n_nodes=100, T=2.0, dt=5e-4, fp_tol=1e-13):
    """Ground-truth trajectory of a single :class:`~hamop.potgen.BoundedPotential`."""
    sys = HamiltonianSystem.from_potentials([pot], L=float(pot.sensor_q[-1]))
    try:
        traj = generate_labels(sys, n_nodes, T, dt, fp_tol)
    except (FixedPointDivergence, DomainEscape) as exc:
        raise type(exc)(f"{exc} [potential meta: {pot.meta}]") from exc
    return traj[0]
