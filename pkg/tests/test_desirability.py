from dataclasses import replace

import numpy as np
import pytest

from lsdg import (
    DegenerateWeights,
    TrajectoryBatch,
    estimate_Z,
    estimate_Z_at,
    estimate_Z_field,
    gaussian_benchmark_spec,
    moving_wells_spec,
    path_cost,
    rollout_reference,
)
from lsdg.desirability import point_seed
from lsdg.game_model import gaussian_benchmark_z, quadratic_terminal, quadratic_well

from conftest import zero_cost_spec


def frozen_batch(spec, M=3):
    K = spec.n_steps
    return TrajectoryBatch(np.zeros((M, K + 1, 1)), np.zeros((M, K, 1)), None, 0.0, spec.dt, 0)


def test_zero_cost_gives_exact_one():
    spec = zero_cost_spec()
    batch = rollout_reference(spec, 0, 0.0, [0.4], 500, seed=1)
    np.testing.assert_array_equal(path_cost(batch, spec, 0).values, 0.0)
    est = estimate_Z(batch, spec, 0)
    assert est.value == 1.0 and est.std_error == 0.0 and est.ess == 500
    assert est.log_value == 0.0


@pytest.mark.parametrize("gamma, expected", [(0.0, 2 / 3), (0.6, 0.41667)])
def test_frozen_path_cost(gamma, expected):
    spec = moving_wells_spec(gamma)
    S = path_cost(frozen_batch(spec), spec, 0).values
    assert np.all(np.abs(S - expected) <= spec.dt + 1e-5)
    S_trap = path_cost(frozen_batch(spec), spec, 0, quadrature="trapezoid").values
    assert np.all(np.abs(S_trap - expected) <= spec.dt**2 + 1e-5)


def test_gaussian_benchmark_within_three_se():
    spec = gaussian_benchmark_spec()
    est = estimate_Z_at(spec, 0, 0.0, [0.0], 100_000, seed=7)
    exact = 1 / np.sqrt(1.5)
    assert abs(est.value - exact) <= 3 * est.std_error
    assert np.exp(est.log_value) == pytest.approx(est.value, rel=1e-12)
    assert 1 <= est.ess <= est.M


def test_streamed_matches_batch_estimate():
    spec = moving_wells_spec(0.6, dt=0.02)
    batch = rollout_reference(spec, 1, 0.2, [0.3], 9000, seed=5)
    a = estimate_Z(batch, spec, 1)
    b = estimate_Z_at(spec, 1, 0.2, [0.3], 9000, seed=5)
    assert a == b


def test_field_single_point_is_composition():
    spec = moving_wells_spec(0.0, dt=0.02)
    (field,) = estimate_Z_field(spec, 0, 0.0, [[0.5]], 2000, seed=3)
    batch = rollout_reference(spec, 0, 0.0, [0.5], 2000, seed=point_seed(3, 0))
    assert field == estimate_Z(batch, spec, 0)


def test_field_zero_costs():
    spec = zero_cost_spec()
    ests = estimate_Z_field(spec, 1, 0.5, np.linspace(-2, 2, 5), 300, seed=0)
    assert [e.value for e in ests] == [1.0] * 5


def test_field_gaussian_is_monotone():
    spec = gaussian_benchmark_spec()
    xs = [0.0, 0.5, 1.0]
    ests = estimate_Z_field(spec, 0, 0.0, xs, 100_000, seed=11)
    values = np.array([e.value for e in ests])
    exact = gaussian_benchmark_z(xs)
    for e, z in zip(ests, exact):
        assert abs(e.value - z) <= 3 * e.std_error
    assert np.all(np.diff(values) < 0)


def test_cost_scaling_scales_S():
    spec = moving_wells_spec(0.6, dt=0.02)
    batch = rollout_reference(spec, 0, 0.0, [0.0], 1000, seed=2)
    scaled = spec.with_costs([c.scaled(2.5) for c in spec.costs])
    np.testing.assert_allclose(path_cost(batch, scaled, 0).values, 2.5 * path_cost(batch, spec, 0).values,
                               rtol=1e-13)


def test_identity_alpha_ignores_other_players():
    spec = moving_wells_spec(0.0, dt=0.02)
    batch = rollout_reference(spec, 0, 0.0, [0.0], 1000, seed=2)
    other = spec.costs[1]
    changed = replace(other, running=quadratic_well(9.0, [3.0]), terminal=quadratic_terminal(4.0, [-2.0]))
    spec2 = spec.with_costs([spec.costs[0], changed])
    assert path_cost(batch, spec2, 0).values.tobytes() == path_cost(batch, spec, 0).values.tobytes()
    assert estimate_Z(batch, spec2, 0) == estimate_Z(batch, spec, 0)


def test_positive_and_deterministic():
    spec = moving_wells_spec(0.6, dt=0.02)
    a = estimate_Z_at(spec, 0, 0.0, [1.0], 3000, seed=8)
    b = estimate_Z_at(spec, 0, 0.0, [1.0], 3000, seed=8)
    assert a.value > 0 and a == b


def test_degenerate_weights_raise():
    spec = moving_wells_spec(0.0, dt=0.02)
    harsh = spec.with_costs([c.scaled(400.0) for c in spec.costs])
    with pytest.raises(DegenerateWeights) as err:
        estimate_Z_at(harsh, 0, 0.0, [0.0], 2000, seed=1)
    assert err.value.ess < 10
    estimate_Z_at(harsh, 0, 0.0, [0.0], 2000, seed=1, ess_floor=1.0)


def test_step_doubling_error():
    spec = moving_wells_spec(0.6, dt=0.02)
    plain = estimate_Z_at(spec, 0, 0.0, [0.0], 4000, seed=3)
    est = estimate_Z_at(spec, 0, 0.0, [0.0], 4000, seed=3, step_doubling=True)
    assert est.value == plain.value and est.step_error > 0
    gauss = estimate_Z_at(gaussian_benchmark_spec(), 0, 0.0, [0.0], 1000, seed=3, step_doubling=True)
    assert gauss.step_error == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        estimate_Z_at(spec, 0, 0.02, [0.0], 100, seed=3, step_doubling=True)
