import numpy as np
import pytest
from hypothesis import given, strategies as st

from hamop import potgen
from hamop._random import child_rng
from hamop.errors import GenerationFailure, InfeasibleStratum, NonMonotoneAbscissa
from hamop.potgen import (
    GeneratorConfig,
    generate_dataset,
    generate_potential,
    normalize_grf,
    sample_abscissae,
    sensor_grid,
)


def test_abscissae_strata_n3():
    lo = [0.05, 1 / 3 + 0.025, 2 / 3 + 0.025]
    hi = [1 / 3 - 0.025, 2 / 3 - 0.025, 0.95]
    for seed in range(200):
        q = sample_abscissae(3, 0.05, 1.0, np.random.default_rng(seed))
        assert q[0] == 0.0 and q[-1] == 1.0
        assert np.all(q[1:-1] >= lo) and np.all(q[1:-1] <= hi)


@given(st.integers(2, 7), st.floats(0.001, 0.07), st.floats(0.1, 10), st.integers(0, 2**32))
def test_abscissae_increasing_with_fixed_ends(n, omega, L, seed):
    q = sample_abscissae(n, omega, L, np.random.default_rng(seed))
    assert len(q) == n + 2
    assert q[0] == 0.0 and q[-1] == L
    assert np.all(np.diff(q) > 0)


def test_infeasible_stratum():
    with pytest.raises(InfeasibleStratum):
        sample_abscissae(7, 0.2, 1.0, np.random.default_rng(0))


@pytest.mark.parametrize(
    "x, expected",
    [([-1, 1], [2, -2]), ([5, 5, 5], [0, 0, 0]), ([0, 1, 2], [2, 0, -2])],
)
def test_normalize_examples(x, expected):
    assert normalize_grf(x, 2.0).tolist() == expected


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=10))
def test_normalize_range(x):
    y = normalize_grf(x, 2.0)
    assert np.all(y <= 2.0 + 1e-12) and np.all(y >= -2.0 - 1e-12)


def test_sensor_grid_uniform():
    g = sensor_grid(100, 1.0)
    assert g[0] == 0.0 and g[-1] == 1.0
    assert np.allclose(np.diff(g), 1 / 99, rtol=0, atol=1e-15)


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(n_grf_range=(1, 7))
    with pytest.raises(ValueError):
        GeneratorConfig(omega=0.08)
    with pytest.raises(ValueError):
        GeneratorConfig(length_scale_range=(0.0, 0.2))


@given(st.integers(0, 2**40))
def test_generated_potential_invariants(seed):
    pot = generate_potential(GeneratorConfig(seed=seed))
    v = pot.sensor_v
    assert abs(v[0] - 2.0) <= 1e-9 and abs(v[-1] - 2.0) <= 1e-9
    assert v.max() <= 2.0 + 1e-9
    assert np.all(np.isfinite(np.diff(v, 2)))
    assert 3 <= pot.meta["n_grf"] <= 7
    assert 0.01 <= pot.meta["length_scale"] <= 0.2


def test_flat_ends_rejected(small_potentials):
    for pot in small_potentials:
        _, dv0 = pot.curve.eval_at_q(0.0)
        _, dv1 = pot.curve.eval_at_q(1.0)
        assert dv0 < 0 < dv1


def test_determinism():
    cfg = GeneratorConfig(seed=5)
    a, b = generate_dataset(cfg, 5), generate_dataset(cfg, 5)
    for x, y in zip(a, b):
        assert x.sensor_v.tobytes() == y.sensor_v.tobytes()
        assert x.curve.control_points.tobytes() == y.curve.control_points.tobytes()


def test_prefix_property():
    cfg = GeneratorConfig(seed=42)
    one = generate_dataset(cfg, 1)[0]
    many = generate_dataset(cfg, 6)
    assert one.sensor_v.tobytes() == many[0].sensor_v.tobytes()
    assert many[3].meta["seed_path"] == [42, 3]


def test_dataset_size():
    assert len(generate_dataset(GeneratorConfig(seed=8407), 25)) == 25
    with pytest.raises(ValueError):
        generate_dataset(GeneratorConfig(), 0)


def test_failure_carries_index(monkeypatch):
    done = {"n": 0}
    real = potgen._draw

    def flaky(cfg, rng):
        # the first three potentials succeed, every later draw folds
        if done["n"] >= 3:
            raise NonMonotoneAbscissa("forced")
        out = real(cfg, rng)
        done["n"] += 1
        return out

    monkeypatch.setattr(potgen, "_draw", flaky)
    with pytest.raises(GenerationFailure) as info:
        generate_dataset(GeneratorConfig(seed=1), 10)
    assert info.value.index == 3


def test_retry_uses_fresh_generator(monkeypatch):
    real = potgen._draw
    seen = []

    def once_bad(cfg, rng):
        seen.append(rng)
        if len(seen) == 1:
            raise NonMonotoneAbscissa("forced")
        return real(cfg, rng)

    monkeypatch.setattr(potgen, "_draw", once_bad)
    pot = generate_potential(GeneratorConfig(), child_rng(7, 0))
    assert seen[0] is not seen[1]
    assert pot.meta["attempt"] == 1
