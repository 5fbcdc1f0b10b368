import numpy as np
import pytest
from hypothesis import given, strategies as st

from hamop.bspline import (
    ClampedBSplineCurve,
    SplineTable,
    basis,
    basis_matrix,
    make_clamped_uniform_knots,
)
from hamop.errors import DegenerateSpline, NonMonotoneAbscissa


def random_curve(seed, n_ctrl=None):
    rng = np.random.default_rng(seed)
    C = n_ctrl or int(rng.integers(4, 10))
    q = np.sort(rng.uniform(0, 1, C))
    q[0], q[-1] = 0.0, 1.0
    q = np.maximum.accumulate(q + np.arange(C) * 1e-3)
    q = (q - q[0]) / (q[-1] - q[0])
    v = rng.uniform(-2, 2, C)
    return ClampedBSplineCurve(np.column_stack([q, v]))


def test_knots_bezier():
    assert make_clamped_uniform_knots(4, 3).tolist() == [0, 0, 0, 0, 1, 1, 1, 1]


def test_knots_six():
    u = make_clamped_uniform_knots(6, 3)
    assert np.allclose(u, [0, 0, 0, 0, 1 / 3, 2 / 3, 1, 1, 1, 1], rtol=0, atol=1e-16)
    assert len(np.unique(u)) == 4


def test_knots_nine_interior():
    u = make_clamped_uniform_knots(9, 3)
    assert np.allclose(u[4:9], np.arange(1, 6) / 6, rtol=0, atol=1e-16)
    assert len(u) == 13


def test_degenerate_knots():
    with pytest.raises(DegenerateSpline):
        make_clamped_uniform_knots(3, 3)


def test_bernstein_weights_at_half():
    u = make_clamped_uniform_knots(4, 3)
    w = [basis(i, 3, 0.5, u) for i in range(4)]
    assert np.allclose(w, [0.125, 0.375, 0.375, 0.125], rtol=0, atol=1e-15)


@pytest.mark.parametrize("C", [4, 5, 6, 9])
def test_partition_of_unity_and_nonnegativity(C):
    u = make_clamped_uniform_knots(C, 3)
    lam = np.linspace(0, 1, 1001)
    B = basis_matrix(lam, 3, u)
    assert np.max(np.abs(B.sum(axis=1) - 1.0)) <= 1e-12
    assert B.min() >= 0.0


@given(st.floats(0, 1), st.integers(4, 9))
def test_scalar_recursion_matches_matrix(lam, C):
    u = make_clamped_uniform_knots(C, 3)
    row = basis_matrix([lam], 3, u)[0]
    scalar = [basis(i, 3, lam, u) for i in range(C)]
    assert np.allclose(row, scalar, rtol=0, atol=1e-14)


def test_right_endpoint_patch():
    u = make_clamped_uniform_knots(6, 3)
    assert basis(5, 3, 1.0, u) == 1.0
    assert sum(basis(i, 3, 1.0, u) for i in range(6)) == 1.0


@given(st.integers(0, 10_000))
def test_clamped_endpoints_exact(seed):
    c = random_curve(seed)
    assert np.array_equal(c.eval(0.0), c.control_points[0])
    assert np.array_equal(c.eval(1.0), c.control_points[-1])


@given(st.integers(0, 10_000), st.floats(0, 1))
def test_convex_hull(seed, lam):
    c = random_curve(seed)
    pt = c.eval(lam)
    lo, hi = c.control_points.min(axis=0), c.control_points.max(axis=0)
    assert np.all(pt >= lo - 1e-12) and np.all(pt <= hi + 1e-12)


def test_constant_v_has_zero_derivative():
    P = np.column_stack([np.linspace(0, 1, 6), np.full(6, 1.5)])
    d = ClampedBSplineCurve(P).eval_derivative(np.linspace(0, 1, 51))
    assert np.max(np.abs(d[:, 1])) == 0.0


def test_linear_precision_of_q():
    P = np.column_stack([[0, 1 / 3, 2 / 3, 1], [0, 1, 0, 1]])
    d = ClampedBSplineCurve(P).eval_derivative(np.linspace(0, 1, 21))
    assert np.allclose(d[:, 0], 1.0, rtol=0, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_derivative_matches_finite_differences(seed):
    c = random_curve(seed)
    h = 1e-6
    for lam in (0.37, 0.11, 0.83):
        fd = (c.eval(lam + h) - c.eval(lam - h)) / (2 * h)
        an = c.eval_derivative(lam)
        assert np.all(np.abs(fd - an) <= 1e-6 * np.maximum(1.0, np.abs(an)))


def _span_cubics(c):
    """Exact per-span cubics in lam, recovered by interpolating 4 samples of eval."""
    edges = np.unique(c.knots)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        lam = np.linspace(a, b, 4)
        pts = c.eval(lam)
        out.append((a, b, [np.polyfit(lam - a, pts[:, k], 3) for k in range(2)]))
    return out


@pytest.mark.parametrize("seed", range(8))
def test_c2_across_interior_knots(seed):
    c = random_curve(seed, n_ctrl=4 + seed % 6)
    spans = _span_cubics(c)
    for (a0, b0, left), (a1, _, right) in zip(spans[:-1], spans[1:]):
        for k in range(2):
            for order in (0, 1, 2):
                lv = np.polyval(np.polyder(left[k], order), b0 - a0)
                rv = np.polyval(np.polyder(right[k], order), 0.0)
                assert abs(lv - rv) <= 1e-6 * max(1.0, abs(lv)), (order, lv, rv)


def test_second_differences_have_no_jump_at_knots():
    c = random_curve(11, n_ctrl=7)
    h = 1e-3
    lam = np.arange(0, 1 + h / 2, h)
    d2 = np.diff(c.eval(lam), 2, axis=0) / h**2
    # smooth second derivative: consecutive second differences move by O(h)
    assert np.max(np.abs(np.diff(d2, axis=0))) <= 10 * h * np.max(np.abs(d2))


def test_endpoint_inversion():
    c = random_curve(3)
    v, _ = c.eval_at_q(0.0)
    assert v == c.control_points[0, 1]


def test_linear_curve_inversion():
    q = np.linspace(0, 1, 5)
    c = ClampedBSplineCurve(np.column_stack([q, 2 * q]))
    v, dv = c.eval_at_q(0.3)
    assert v == pytest.approx(0.6, abs=1e-12)
    assert dv == pytest.approx(2.0, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(0, 1))
def test_inversion_roundtrip(seed, lam):
    c = random_curve(seed)
    qv = c.eval(lam)
    v, _ = c.eval_at_q(qv[0])
    assert abs(v - qv[1]) <= 1e-10


def test_outside_range_rejected():
    with pytest.raises(ValueError):
        random_curve(1).eval_at_q(1.5)


def test_non_monotone_control_polygon():
    with pytest.raises(NonMonotoneAbscissa):
        ClampedBSplineCurve([[0, 0], [0.5, 1], [0.4, 0], [1, 1]])


def test_folding_curve_detected():
    c = ClampedBSplineCurve([[0, 0], [0.1, 0], [0.2, 0], [1, 0]])
    # bend the polygon after validation so q(lam) runs backwards mid-curve
    c.control_points[1, 0], c.control_points[2, 0] = 1.5, -0.5
    with pytest.raises(NonMonotoneAbscissa):
        c.eval_at_q(np.linspace(0, 1, 101))


@given(st.integers(0, 10_000))
def test_table_agrees_with_bisection(seed):
    curves = [random_curve(seed + k) for k in range(3)]
    table = SplineTable(curves)
    q = np.linspace(0, 1, 17)
    for b, c in enumerate(curves):
        V, dV = table.evaluate(q, np.full(q.shape, b))
        v_ref, dv_ref = c.eval_at_q(q)
        assert np.max(np.abs(V - v_ref)) <= 1e-9
        assert np.max(np.abs(dV - dv_ref)) <= 1e-6 * max(1.0, np.abs(dv_ref).max())


def test_table_linear_extension_outside():
    c = random_curve(4)
    t = SplineTable([c])
    V0, d0 = t.evaluate(np.array([0.0]), np.array([0]))
    V, dV = t.evaluate(np.array([-0.01]), np.array([0]))
    assert dV[0] == d0[0]
    assert V[0] == pytest.approx(V0[0] - 0.01 * d0[0], abs=1e-14)
