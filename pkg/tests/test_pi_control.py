import numpy as np
import pytest

from lsdg import (
    CostModel,
    DynamicsModel,
    GameSpec,
    HorizonExhausted,
    SharedNoiseController,
    build_interaction_matrix,
    control_estimate,
    default_grid,
    make_pi_policy,
    moving_wells_spec,
    nash_closed_loop,
    riccati_lq_reference,
    rollout_controlled,
    rollout_reference,
    solve_linear_pde_fd,
)
from lsdg.game_model import quadratic_terminal, quadratic_well
from lsdg.pi_control import foc_residual
from lsdg.sde_engine import STREAM_POLICY, derive_seed

from conftest import zero_cost_spec


def single_well_spec(q=1.0, q_T=1.0, a=1.0, sigma=1.0, dt=0.01):
    return GameSpec(
        players=1,
        dynamics=DynamicsModel.brownian(sigma),
        costs=(CostModel(quadratic_well(q, [a]), quadratic_terminal(q_T, [a])),),
        nominal_controls=(np.zeros(1),),
        interaction=build_interaction_matrix([[1.0]]),
        horizon=1.0,
        dt=dt,
        initial_state=np.zeros(1),
    )


def test_zero_cost_correction_has_zero_mean():
    spec = zero_cost_spec(nominal=0.2)
    est = control_estimate(spec, 0, 0.0, [0.0], 20_000, seed=3)
    assert est.ess == pytest.approx(20_000)
    assert np.all(np.abs(est.value - 0.2) <= 4 * est.std_error)


def test_zero_cost_correction_over_many_states():
    spec = zero_cost_spec()
    xs = np.linspace(-3, 3, 100)
    ctrl = SharedNoiseController(spec, 0, 5000, seed=4)
    u, se, _ = ctrl.estimate(0.3, xs[:, None])
    # one shared sample: every query sees the same correction
    assert np.ptp(u) == 0.0
    assert abs(u.mean()) <= 4 * se.mean()


def test_single_well_matches_riccati():
    spec = single_well_spec()
    ric = riccati_lq_reference(1.0, 1.0, 1.0, 1.0, 1.0, dt=spec.dt)
    est = control_estimate(spec, 0, 0.0, [1.0], 100_000, seed=5)
    expected = float(ric.feedback(0.0, 1.0))
    assert abs(est.value[0] - expected) <= max(0.05 * abs(expected), 3 * est.std_error[0])


def test_gradient_consistency_with_fd():
    spec = moving_wells_spec(0.6, dt=0.01)
    field = solve_linear_pde_fd(spec, 0, default_grid(spec, nx=801, nt=400))
    t = 0.3
    for k, x in enumerate(np.linspace(-1.0, 1.0, 5)):
        est = control_estimate(spec, 0, t, [x], 40_000, seed=derive_seed(6, k))
        expected = spec.dynamics.sigma * float(field.log_gradient(t, x))
        assert abs(est.value[0] - expected) <= max(0.05 * abs(expected), 3 * est.std_error[0])


def test_policy_is_deterministic():
    spec = moving_wells_spec(0.6, dt=0.02)
    pol = make_pi_policy(spec, 1, 500, seed=9)
    a = pol(0.2, np.array([0.4]))
    b = pol(0.2, np.array([0.4]))
    assert np.array_equal(a, b)
    assert "M=500" in pol.descriptor


def test_shared_noise_matches_per_query_estimate():
    spec = moving_wells_spec(0.6, dt=0.02)
    ctrl = SharedNoiseController(spec, 0, 3000, seed=10)
    xs = np.array([[-0.7], [0.0], [1.2]])
    k = spec.step_index(0.4)
    u = ctrl.evaluate(0.4, xs)
    for r in range(3):
        est = control_estimate(spec, 0, 0.4, xs[r], 3000, ctrl.step_seed(k))
        np.testing.assert_allclose(u[r], est.value, rtol=1e-9, atol=1e-9)


def test_interpolated_controller_matches_exact():
    spec = moving_wells_spec(0.6, dt=0.02)
    xs = np.linspace(-2, 2, 1000)[:, None]
    exact = SharedNoiseController(spec, 1, 2000, seed=12).evaluate(0.2, xs)
    fast = SharedNoiseController(spec, 1, 2000, seed=12, interp_nodes=64)
    approx = fast.evaluate(0.2, xs)
    assert fast.interp_fallbacks == 0
    assert np.max(np.abs(approx - exact)) < 1e-5


def test_zero_cost_closed_loop_is_brownian():
    spec = zero_cost_spec(players=1, dt=0.02)
    (batch,) = nash_closed_loop(spec, 500, 20_000, seed=1)
    var = batch.terminal_states[:, 0].var(ddof=1)
    assert abs(var / (spec.dynamics.sigma**2 * spec.horizon) - 1) < 0.05
    ref = rollout_reference(spec, 0, 0.0, [0.0], 20_000, seed=2)
    diff = batch.terminal_states.mean() - ref.terminal_states.mean()
    assert abs(diff) <= 4 * np.sqrt(2 / 20_000)


def test_per_query_policy_closed_loop_on_zero_cost():
    spec = zero_cost_spec(players=1, dt=0.1)
    pol = make_pi_policy(spec, 0, 200, seed=2)
    batch = rollout_controlled(spec, 0, pol, 0.0, [0.0], 300, seed=3)
    assert abs(batch.terminal_states.mean()) <= 4 * batch.terminal_states.std() / np.sqrt(300)


def test_repulsive_closed_loop_separates():
    spec = moving_wells_spec(0.6, dt=0.02)
    b1, b2 = nash_closed_loop(spec, 3000, 400, seed=7)
    assert b1.terminal_states.mean() < 0 < b2.terminal_states.mean()


def test_first_order_condition_holds():
    spec = moving_wells_spec(0.6, dt=0.01)
    grid = default_grid(spec, nx=801, nt=400)
    fields = [solve_linear_pde_fd(spec, i, grid) for i in range(2)]
    t, x = 0.3, 0.25
    log_grad = np.array([f.log_gradient(t, x) for f in fields])
    grad_J = -(spec.interaction.alpha @ log_grad)[:, None]
    ests = [control_estimate(spec, i, t, [x], 40_000, seed=derive_seed(13, STREAM_POLICY, i)) for i in range(2)]
    controls = np.array([e.value for e in ests])
    res = foc_residual(spec, controls, grad_J)
    dominant = np.abs(grad_J[:, 0]) * spec.dynamics.sigma
    se = np.abs(spec.interaction.alpha) @ np.array([e.std_error[0] for e in ests])
    assert np.all(np.abs(res[:, 0]) <= np.maximum(0.05 * dominant, 3 * se))


def test_no_control_at_horizon():
    spec = zero_cost_spec()
    with pytest.raises(HorizonExhausted):
        control_estimate(spec, 0, 1.0, [0.0], 10, seed=0)
    with pytest.raises(HorizonExhausted):
        SharedNoiseController(spec, 0, 10, seed=0).evaluate(1.0, [[0.0]])
