import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsdg import (
    ConfigError,
    NonPositiveDesirability,
    NonPositiveDiagonal,
    OffGridTime,
    Overflow,
    SingularMatrix,
    build_interaction_matrix,
    cole_hopf_forward,
    cole_hopf_inverse,
    moving_wells_spec,
    spec_from_json,
    symmetric_alpha,
)
from lsdg.game_model import (
    DynamicsModel,
    GameSpec,
    mixed_running_cost,
    mixed_terminal_cost,
    quadratic_well,
    spec_from_dict,
    spec_to_dict,
)

from conftest import zero_cost_spec


def test_identity_interaction():
    m = build_interaction_matrix(np.eye(2))
    np.testing.assert_array_equal(m.beta, np.eye(2))
    assert m.condition_number == pytest.approx(1.0)


def test_symmetric_inverse_matches_dense_solve():
    m = build_interaction_matrix(symmetric_alpha(0.6))
    np.testing.assert_allclose(m.beta, [[1.5625, -0.9375], [-0.9375, 1.5625]], atol=1e-12)
    np.testing.assert_allclose(m.beta, np.linalg.inv(m.alpha), atol=1e-12)


def test_rank_one_is_singular():
    with pytest.raises(SingularMatrix):
        build_interaction_matrix([[1.0, 1.0], [1.0, 1.0]])


def test_condition_bound_enforced():
    with pytest.raises(SingularMatrix):
        build_interaction_matrix(symmetric_alpha(0.999), cond_bound=100.0)
    build_interaction_matrix(symmetric_alpha(0.999))


@pytest.mark.parametrize("diag", [0.0, -1.0])
def test_nonpositive_diagonal(diag):
    with pytest.raises(NonPositiveDiagonal):
        build_interaction_matrix([[1.0, 0.2], [0.1, diag]])


def test_interaction_is_read_only():
    m = build_interaction_matrix(symmetric_alpha(0.3))
    with pytest.raises(ValueError):
        m.beta[0, 0] = 2.0


def test_cole_hopf_examples():
    eye = build_interaction_matrix(np.eye(2))
    np.testing.assert_array_equal(cole_hopf_forward([0.0, 0.0], eye), [1.0, 1.0])
    np.testing.assert_allclose(cole_hopf_forward([2.0, 3.0], eye), np.exp([-2.0, -3.0]), rtol=1e-15)
    coupled = build_interaction_matrix(symmetric_alpha(0.6))
    np.testing.assert_allclose(cole_hopf_forward([1.0, 1.0], coupled), np.exp([-0.625, -0.625]), rtol=1e-13)
    np.testing.assert_array_equal(cole_hopf_inverse([1.0, 1.0], coupled), [0.0, 0.0])
    np.testing.assert_allclose(cole_hopf_inverse(np.exp([-1.0, -4.0]), eye), [1.0, 4.0], rtol=1e-15)


def test_cole_hopf_errors():
    eye = build_interaction_matrix(np.eye(2))
    with pytest.raises(Overflow):
        cole_hopf_forward([800.0, 0.0], eye)
    with pytest.raises(Overflow):
        cole_hopf_forward([80.0, 0.0], eye, max_exponent=50)
    with pytest.raises(NonPositiveDesirability):
        cole_hopf_inverse([1.0, 0.0], eye)
    with pytest.raises(NonPositiveDesirability):
        cole_hopf_inverse([1.0, np.nan], eye)


def test_cole_hopf_carries_trailing_axes():
    m = build_interaction_matrix(symmetric_alpha(-0.4))
    J = np.random.default_rng(3).normal(size=(2, 7, 5))
    Z = cole_hopf_forward(J, m)
    assert Z.shape == J.shape
    np.testing.assert_allclose(cole_hopf_inverse(Z, m), J, atol=1e-12)


@st.composite
def valid_alpha(draw, n_max=4):
    n = draw(st.integers(1, n_max))
    off = draw(st.lists(st.floats(-0.9, 0.9), min_size=n * n, max_size=n * n))
    a = np.array(off).reshape(n, n) / n
    np.fill_diagonal(a, draw(st.lists(st.floats(0.5, 2.0), min_size=n, max_size=n)))
    return a


@settings(max_examples=60, deadline=None)
@given(valid_alpha(), st.integers(0, 2**32 - 1))
def test_round_trips(alpha, seed):
    m = build_interaction_matrix(alpha)
    n = m.players
    eye = np.eye(n)
    assert np.max(np.abs(m.alpha @ m.beta - eye)) < 1e-10
    rng = np.random.default_rng(seed)
    Z = np.exp(rng.uniform(-3, 3, size=n))
    np.testing.assert_allclose(cole_hopf_forward(cole_hopf_inverse(Z, m), m), Z, rtol=1e-10)
    J = rng.normal(size=n)
    np.testing.assert_allclose(cole_hopf_inverse(cole_hopf_forward(J, m), m), J, rtol=1e-10, atol=1e-10)


def test_mixed_running_cost_examples():
    assert np.all(mixed_running_cost(zero_cost_spec(), 0, 0.5, np.array([[0.3], [2.0]])) == 0.0)
    spec0 = moving_wells_spec(0.0)
    x = np.zeros(1)
    assert spec0.running_cost(0, 1.0, x) == pytest.approx(0.5)
    assert mixed_running_cost(spec0, 0, 1.0, x) == pytest.approx(0.5)
    spec6 = moving_wells_spec(0.6)
    assert mixed_running_cost(spec6, 0, 1.0, x) == pytest.approx(0.3125, abs=1e-12)
    assert mixed_terminal_cost(spec6, 1, x) == pytest.approx(0.3125, abs=1e-12)


def test_identity_alpha_uses_own_cost_only():
    spec = moving_wells_spec(0.0)
    X = np.linspace(-2, 2, 9)[:, None]
    for i in range(2):
        np.testing.assert_array_equal(mixed_running_cost(spec, i, 0.3, X), spec.running_cost(i, 0.3, X))


def test_quadratic_well_is_nonnegative_and_zero_at_centre():
    well = quadratic_well(2.0, [1.5])
    spec = moving_wells_spec(0.0)
    cost = spec.costs[1]
    assert cost.running_value(0.4, np.array([0.4]), 1.0) == 0.0
    X = np.linspace(-5, 5, 101)[:, None]
    assert np.all(cost.running_value(0.7, X, 1.0) >= 0)
    assert well.center.at(1.0, 1.0)[0] == 1.5


def test_wells_follow_the_formulas():
    # player 1 heads to -a, player 2 to +a
    spec = moving_wells_spec(0.0, a=2.0)
    assert spec.costs[0].running.center.at(1.0, 1.0)[0] == -2.0
    assert spec.costs[1].terminal.center.at(1.0, 1.0)[0] == 2.0
    assert spec.costs[0].running.center.at(0.25, 1.0)[0] == -0.5


def test_spec_validation():
    spec = moving_wells_spec(0.0)
    assert spec.n_steps == 200
    with pytest.raises(ValueError):
        moving_wells_spec(0.0, dt=0.003)
    with pytest.raises(ValueError):
        moving_wells_spec(0.0, dt=2.0)
    with pytest.raises(ValueError):
        GameSpec(3, spec.dynamics, spec.costs, spec.nominal_controls, spec.interaction, 1.0, 0.1, np.zeros(1))
    with pytest.raises(ValueError):
        GameSpec(2, spec.dynamics, spec.costs, (np.zeros(2), np.zeros(2)), spec.interaction, 1.0, 0.1, np.zeros(1))
    with pytest.raises(OffGridTime):
        spec.step_index(0.0025)
    assert spec.step_index(0.5) == 100


def test_dynamics_families():
    lin = DynamicsModel("linear", [[0.5]], A=[[-1.0]], b=[0.2])
    np.testing.assert_allclose(lin.drift(np.array([[1.0], [3.0]])), [[-0.8], [-2.8]])
    np.testing.assert_allclose(lin.transition_matrix(0.1), [[0.9]])
    const = DynamicsModel("constant", [[1.0]], b=[0.3])
    np.testing.assert_allclose(const.drift(np.zeros((2, 1))), 0.3)
    with pytest.raises(ValueError):
        DynamicsModel("cubic", [[1.0]])
    with pytest.raises(ValueError):
        DynamicsModel("linear", [[1.0]], A=[[1.0, 0.0]], b=[0.0])
    with pytest.raises(ValueError):
        DynamicsModel.brownian(1.0, dim=2).sigma


def test_json_round_trip(tmp_path):
    spec = moving_wells_spec(0.6, asymmetric=True)
    path = tmp_path / "spec.json"
    spec.to_json(path)
    back = spec_from_json(path)
    assert spec_to_dict(back) == spec_to_dict(spec)
    assert spec_to_dict(spec_from_json(spec.to_json())) == spec_to_dict(spec)
    np.testing.assert_array_equal(back.interaction.beta, spec.interaction.beta)


def test_json_rejects_unknown_fields_and_lists_every_problem():
    doc = spec_to_dict(moving_wells_spec(0.0))
    doc["colour"] = "blue"
    doc["dt"] = -1
    doc["costs"][0]["running"]["q"] = -2
    with pytest.raises(ConfigError) as err:
        spec_from_dict(doc)
    text = "\n".join(err.value.problems)
    assert "colour" in text
    assert "$.dt" in text
    assert "$.costs[0].running" in text


def test_json_semantic_errors():
    doc = spec_to_dict(moving_wells_spec(0.0))
    doc["alpha"] = [[1, 1], [1, 1]]
    with pytest.raises(ConfigError, match="alpha"):
        spec_from_dict(doc)
    doc = json.loads(json.dumps(spec_to_dict(moving_wells_spec(0.0))))
    doc["initial_state"] = [0.0, 1.0]
    with pytest.raises(ConfigError):
        spec_from_dict(doc)


def test_cost_scaling_and_offset():
    spec = moving_wells_spec(0.0)
    c = spec.costs[0]
    x = np.array([[0.7]])
    assert c.scaled(3.0).running_value(0.2, x, 1.0) == pytest.approx(3 * c.running_value(0.2, x, 1.0))
    shifted = replace(c, terminal=replace(c.terminal, offset=2.5))
    assert shifted.terminal_value(x, 1.0) == pytest.approx(c.terminal_value(x, 1.0) + 2.5)
    spec2 = spec.with_costs([shifted, spec.costs[1]])
    assert spec_to_dict(spec_from_dict(spec_to_dict(spec2)))["costs"][0]["terminal"]["offset"] == 2.5
