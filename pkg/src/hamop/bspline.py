"""Clamped uniform B-spline curves in the (q, V) plane.

A curve is parametrised by ``lam`` in [0, 1]; both coordinates are B-spline
combinations of the control points. Basis functions follow the Cox-de Boor
recursion with half-open support intervals, patched so that ``lam == 1`` selects
the last span.

Two evaluation paths exist. :meth:`ClampedBSplineCurve.eval` and friends work
directly from the recursion. :class:`SplineTable` converts one or more curves to
per-span cubic polynomials and inverts ``q(lam)`` with safeguarded Newton steps,
which is what the integrators use on hot paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpline, NonMonotoneAbscissa

__all__ = [
    "make_clamped_uniform_knots",
    "basis",
    "basis_matrix",
    "ClampedBSplineCurve",
    "SplineTable",
]


def make_clamped_uniform_knots(n_ctrl, degree=3):
    """Clamped knot vector of length ``n_ctrl + degree + 1`` with uniform interior knots."""
    if n_ctrl < degree + 1:
        raise DegenerateSpline(
            f"{n_ctrl} control points cannot carry a degree-{degree} spline"
        )
    n_spans = n_ctrl - degree
    interior = np.arange(1, n_spans, dtype=float) / n_spans
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


def _last_span(knots):
    # index j of the last non-empty interval [u_j, u_{j+1})
    nz = np.nonzero(np.diff(knots) > 0)[0]
    return int(nz[-1])


def basis(i, p, lam, knots):
    """Value of the ``i``-th degree-``p`` basis function at ``lam`` (scalar recursion)."""
    knots = np.asarray(knots, dtype=float)
    if p == 0:
        if knots[i] <= lam < knots[i + 1]:
            return 1.0
        if lam == knots[-1] and i == _last_span(knots):
            return 1.0
        return 0.0
    out = 0.0
    d1 = knots[i + p] - knots[i]
    if d1 > 0:
        out += (lam - knots[i]) / d1 * basis(i, p - 1, lam, knots)
    d2 = knots[i + p + 1] - knots[i + 1]
    if d2 > 0:
        out += (knots[i + p + 1] - lam) / d2 * basis(i + 1, p - 1, lam, knots)
    return out


def basis_matrix(lam, p, knots):
    """All degree-``p`` basis functions at every ``lam``; shape ``(len(lam), n_basis)``."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    knots = np.asarray(knots, dtype=float)
    n0 = len(knots) - 1
    N = ((knots[:-1][None, :] <= lam[:, None]) & (lam[:, None] < knots[1:][None, :])).astype(float)
    at_end = lam == knots[-1]
    if at_end.any():
        N[at_end, :] = 0.0
        N[at_end, _last_span(knots)] = 1.0
    for k in range(1, p + 1):
        n_k = n0 - k
        left_den = knots[k : k + n_k] - knots[:n_k]
        right_den = knots[k + 1 : k + 1 + n_k] - knots[1 : 1 + n_k]
        with np.errstate(divide="ignore", invalid="ignore"):
            lw = np.where(left_den > 0, (lam[:, None] - knots[:n_k]) / left_den, 0.0)
            rw = np.where(
                right_den > 0, (knots[k + 1 : k + 1 + n_k] - lam[:, None]) / right_den, 0.0
            )
        N = lw * N[:, :n_k] + rw * N[:, 1 : n_k + 1]
    return N


@dataclass
class ClampedBSplineCurve:
    """Planar clamped B-spline with control points ``(q_i, v_i)`` and uniform knots."""

    control_points: np.ndarray
    degree: int = 3
    knots: np.ndarray = field(default=None)

    def __post_init__(self):
        P = np.asarray(self.control_points, dtype=float)
        if P.ndim != 2 or P.shape[1] != 2:
            raise ValueError("control_points must have shape (C, 2)")
        self.control_points = P
        if self.knots is None:
            self.knots = make_clamped_uniform_knots(len(P), self.degree)
        else:
            self.knots = np.asarray(self.knots, dtype=float)
            if len(self.knots) != len(P) + self.degree + 1:
                raise DegenerateSpline("knot vector length must be C + degree + 1")
        if np.any(np.diff(P[:, 0]) <= 0):
            raise NonMonotoneAbscissa("control abscissae must be strictly increasing")

    @property
    def n_ctrl(self):
        return len(self.control_points)

    @property
    def q_range(self):
        return float(self.control_points[0, 0]), float(self.control_points[-1, 0])

    def eval(self, lam):
        """Curve point(s) ``(q, v)``; returns shape ``(2,)`` for scalar ``lam`` else ``(n, 2)``."""
        scalar = np.ndim(lam) == 0
        lam_arr = np.clip(np.atleast_1d(np.asarray(lam, dtype=float)), 0.0, 1.0)
        out = basis_matrix(lam_arr, self.degree, self.knots) @ self.control_points
        # clamped ends hit the first/last control points exactly
        out[lam_arr == 0.0] = self.control_points[0]
        out[lam_arr == 1.0] = self.control_points[-1]
        return out[0] if scalar else out

    def _derivative_spline(self):
        p, u, P = self.degree, self.knots, self.control_points
        den = (u[p + 1 : p + len(P)] - u[1 : len(P)])[:, None]
        Q = p * np.diff(P, axis=0) / den
        return Q, u[1:-1]

    def eval_derivative(self, lam):
        """``(dq/dlam, dv/dlam)`` from the degree-2 spline of scaled control differences."""
        scalar = np.ndim(lam) == 0
        lam_arr = np.clip(np.atleast_1d(np.asarray(lam, dtype=float)), 0.0, 1.0)
        Q, u = self._derivative_spline()
        out = basis_matrix(lam_arr, self.degree - 1, u) @ Q
        return out[0] if scalar else out

    def eval_at_q(self, q_target, tol=1e-12, max_iter=200):
        """Value ``v`` and slope ``dv/dq`` at abscissa ``q_target`` by bisection on ``lam``.

        Works element-wise on arrays. Raises :class:`NonMonotoneAbscissa` if
        ``dq/dlam <= 0`` at a located parameter, and ``ValueError`` if a target lies
        outside the curve's q range.
        """
        scalar = np.ndim(q_target) == 0
        qt = np.atleast_1d(np.asarray(q_target, dtype=float))
        q0, q1 = self.q_range
        if np.any(qt < q0) or np.any(qt > q1):
            raise ValueError(f"q_target outside [{q0}, {q1}]")
        lo = np.zeros_like(qt)
        hi = np.ones_like(qt)
        lam = 0.5 * (lo + hi)
        for _ in range(max_iter):
            lam = 0.5 * (lo + hi)
            qm = self.eval(lam)[:, 0]
            resid = qm - qt
            done = np.abs(resid) <= tol
            if done.all():
                break
            above = resid > 0
            hi = np.where(~done & above, lam, hi)
            lo = np.where(~done & ~above, lam, lo)
            if np.all(hi - lo <= 4 * np.finfo(float).eps):
                break
        # endpoint targets land exactly on the clamped control points
        lam = np.where(qt == q0, 0.0, np.where(qt == q1, 1.0, lam))
        pts = self.eval(lam)
        der = self.eval_derivative(lam)
        if np.any(der[:, 0] <= 0):
            raise NonMonotoneAbscissa("dq/dlam <= 0 encountered while inverting the abscissa")
        v = pts[:, 1]
        slope = der[:, 1] / der[:, 0]
        if scalar:
            return float(v[0]), float(slope[0])
        return v, slope


# Monomial basis on the local span coordinate s in [0, 1].
_S_NODES = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
_VANDER_INV = np.linalg.inv(np.vander(_S_NODES, 4, increasing=True))
# sub-grid used for the Newton starting guess inside each span
_N_SUB = 16


class SplineTable:
    """Batch of curves stored as per-span cubics for fast ``V(q)``, ``V'(q)`` lookup.

    Row ``b`` of every query array addresses curve ``b``. Curves with fewer spans are
    padded; padded spans are never selected because their breakpoints are ``+inf``.
    Queries outside a curve's q range are evaluated at the nearest end.
    """

    def __init__(self, curves):
        curves = list(curves)
        if not curves:
            raise ValueError("at least one curve required")
        n_spans = [c.n_ctrl - c.degree for c in curves]
        S = max(n_spans)
        B = len(curves)
        self.qcoef = np.zeros((B, S, 4))
        self.vcoef = np.zeros((B, S, 4))
        self.breaks = np.full((B, S + 1), np.inf)
        self.q_lo = np.empty(B)
        self.q_hi = np.empty(B)
        for b, (c, ns) in enumerate(zip(curves, n_spans)):
            edges = np.unique(c.knots)
            for s in range(ns):
                lam = edges[s] + _S_NODES * (edges[s + 1] - edges[s])
                pts = c.eval(lam)
                self.qcoef[b, s] = _VANDER_INV @ pts[:, 0]
                self.vcoef[b, s] = _VANDER_INV @ pts[:, 1]
            self.breaks[b, : ns + 1] = c.eval(edges)[:, 0]
            self.q_lo[b], self.q_hi[b] = c.q_range
            self.breaks[b, 0], self.breaks[b, ns] = c.q_range
        self.n_spans = np.asarray(n_spans)
        # q at s = k/_N_SUB on every span, for piecewise-linear starting guesses
        sub = np.arange(_N_SUB + 1) / _N_SUB
        self.qsub = self._poly(self.qcoef[:, :, None, :], sub[None, None, :])

    def __len__(self):
        return len(self.q_lo)

    @staticmethod
    def _poly(c, s):
        return c[..., 0] + s * (c[..., 1] + s * (c[..., 2] + s * c[..., 3]))

    @staticmethod
    def _dpoly(c, s):
        return c[..., 1] + s * (2.0 * c[..., 2] + s * 3.0 * c[..., 3])

    def locate(self, q, rows=None):
        """Span index and local coordinate solving ``q_span(s) = q`` for each query."""
        q = np.asarray(q, dtype=float)
        rows = np.arange(len(self)) if rows is None else np.asarray(rows)
        qc = np.clip(q, self.q_lo[rows], self.q_hi[rows])
        br = self.breaks[rows]
        span = np.sum(br[:, 1:-1] <= qc[:, None], axis=1)
        span = np.minimum(span, self.n_spans[rows] - 1)
        qa = self.qcoef[rows, span]
        qs = self.qsub[rows, span]
        k = np.clip(np.sum(qs[:, 1:-1] <= qc[:, None], axis=1), 0, _N_SUB - 1)
        idx = np.arange(len(rows))
        q0, q1 = qs[idx, k], qs[idx, k + 1]
        lo = k / _N_SUB
        hi = (k + 1) / _N_SUB
        s = lo + (qc - q0) / (q1 - q0) * (hi - lo)
        for _ in range(50):
            f = self._poly(qa, s) - qc
            d = self._dpoly(qa, s)
            step = f / d
            s_new = s - step
            bad = (s_new < lo) | (s_new > hi) | ~(d > 0)
            if bad.any():
                hi = np.where(f > 0, s, hi)
                lo = np.where(f < 0, s, lo)
                s_new = np.where(bad, 0.5 * (lo + hi), s_new)
            s = s_new
            if np.all(np.abs(step) <= 1e-11):
                # quadratic convergence: the step just taken leaves rounding-level error
                break
        return span, s, rows

    def evaluate(self, q, rows=None):
        """``(V, dV/dq)`` at ``q`` (one query per row).

        Outside a curve's q range the value continues linearly with the end slope,
        which keeps ``V`` and ``dV/dq`` consistent for energy bookkeeping.
        """
        q = np.asarray(q, dtype=float)
        span, s, rows = self.locate(q, rows)
        qa = self.qcoef[rows, span]
        va = self.vcoef[rows, span]
        V = self._poly(va, s)
        dV = self._dpoly(va, s) / self._dpoly(qa, s)
        q_c = np.clip(q, self.q_lo[rows], self.q_hi[rows])
        return V + dV * (q - q_c), dV
