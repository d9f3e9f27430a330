from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import trapezoid

from lsdg import (
    BandwidthNonPositive,
    MissingControls,
    PlayerCountMismatch,
    TrajectoryBatch,
    WeightedEnsemble,
    compare_perspectives,
    constant_policy,
    cost_equivalence_check,
    equilibrium_policies,
    expectation_distance,
    linear_policy,
    log_rn_self,
    mean_curve,
    moving_wells_spec,
    rollout_controlled,
    rollout_reference,
    tilt_weights,
    weighted_density,
)
from lsdg.measure_recovery import controls_along, normalized_log_weights

from conftest import zero_cost_spec


def test_zero_cost_weights_are_uniform():
    spec = zero_cost_spec()
    batch = rollout_reference(spec, 0, 0.0, [0.0], 1000, seed=1)
    ens = tilt_weights(batch, spec, 0)
    np.testing.assert_allclose(ens.weights, 1e-3, rtol=1e-12)
    assert ens.ess == pytest.approx(1000)


def test_hand_normalized_weights():
    _, w, ess = normalized_log_weights(-np.array([0.0, np.log(3.0)]))
    np.testing.assert_allclose(w, [0.75, 0.25], rtol=1e-14)
    assert ess == pytest.approx(1 / (0.75**2 + 0.25**2))


def test_weights_normalized_and_read_only(wells):
    batch = rollout_reference(wells, 0, 0.0, [0.0], 5000, seed=2)
    ens = tilt_weights(batch, wells, 0)
    assert abs(ens.weights.sum() - 1) < 1e-12
    assert 1 <= ens.ess <= ens.M
    with pytest.raises(ValueError):
        ens.weights[0] = 0.0


def test_repulsive_tilted_means_have_opposite_signs(wells):
    means = []
    for i in range(2):
        batch = rollout_reference(wells, i, 0.0, [0.0], 20_000, seed=3 + i)
        ens = tilt_weights(batch, wells, i)
        means.append(np.dot(ens.weights, batch.terminal_states[:, 0]))
    assert means[0] < 0 < means[1]


def test_terminal_offset_leaves_normalized_weights_unchanged(wells):
    batch = rollout_reference(wells, 0, 0.0, [0.0], 5000, seed=4)
    shifted = wells.with_costs([replace(c, terminal=replace(c.terminal, offset=3.7)) for c in wells.costs])
    a = tilt_weights(batch, wells, 0).weights
    b = tilt_weights(batch, shifted, 0).weights
    assert np.max(np.abs(a - b)) <= 1e-12


def test_kde_recovers_brownian_marginal():
    spec = zero_cost_spec(players=1, dt=0.02)
    batch = rollout_reference(spec, 0, 0.0, [0.0], 40_000, seed=5, store_noise=False)
    ens = tilt_weights(batch, spec, 0)
    t = 0.5
    grid = np.linspace(-5, 5, 1001)
    curve = weighted_density(ens, t, grid)
    assert abs(curve.integral() - 1) < 0.01
    mass = curve.integral()
    mean = trapezoid(grid * curve.density, grid) / mass
    var = trapezoid((grid - mean) ** 2 * curve.density, grid) / mass
    se = np.sqrt(t / batch.M)
    assert abs(mean) <= 4 * se
    # the kernel adds h^2 to the variance of the sample
    assert abs((var - curve.bandwidth**2) / t - 1) < 0.05
    assert np.all(curve.density >= 0)


def test_single_path_is_one_kernel():
    spec = zero_cost_spec(players=1, dt=0.25)
    batch = rollout_reference(spec, 0, 0.0, [0.3], 1, seed=6)
    ens = WeightedEnsemble(batch, np.ones(1), np.zeros(1), 0, 1.0)
    grid = np.linspace(-4, 4, 81)
    curve = weighted_density(ens, 0.5, grid, bandwidth=0.4)
    x = batch.states[0, 2, 0]
    expected = np.exp(-0.5 * ((grid - x) / 0.4) ** 2) / (0.4 * np.sqrt(2 * np.pi))
    np.testing.assert_allclose(curve.density, expected, rtol=1e-12, atol=1e-300)


def test_binned_kde_matches_exact(wells):
    batch = rollout_reference(wells, 1, 0.0, [0.0], 20_000, seed=7, store_noise=False)
    ens = tilt_weights(batch, wells, 1)
    grid = np.linspace(-6, 6, 601)
    exact = weighted_density(ens, 1.0, grid, method="exact")
    binned = weighted_density(ens, 1.0, grid, method="binned")
    assert np.max(np.abs(exact.density - binned.density)) < 1e-3 * exact.density.max()
    hist = weighted_density(ens, 1.0, np.linspace(-6, 6, 61), method="histogram")
    assert np.all(hist.density >= 0)


def test_bandwidth_must_be_positive(wells):
    batch = rollout_reference(wells, 0, 0.0, [0.0], 100, seed=8)
    ens = tilt_weights(batch, wells, 0)
    for h in (0.0, -0.1):
        with pytest.raises(BandwidthNonPositive):
            weighted_density(ens, 0.5, np.linspace(-1, 1, 11), bandwidth=h)
    with pytest.raises(BandwidthNonPositive):
        weighted_density(ens, 0.0, np.linspace(-1, 1, 11))


def test_log_rn_self_on_reference_is_zero(wells):
    batch = rollout_reference(wells, 0, 0.0, [0.0], 200, seed=9)
    np.testing.assert_array_equal(log_rn_self(batch, wells.nominal_controls[0]), 0.0)


def test_log_rn_self_constant_offset():
    spec = zero_cost_spec(players=1, dt=0.02)
    c = 0.8
    batch = rollout_controlled(spec, 0, constant_policy([c]), 0.0, [0.0], 50_000, seed=10)
    v = log_rn_self(batch, [0.0])
    assert abs(v.mean() - 0.5 * c * c * spec.horizon) <= 4 * v.std() / np.sqrt(v.size)


def test_log_rn_self_needs_controls():
    spec = zero_cost_spec(players=1, dt=0.1)
    batch = rollout_reference(spec, 0, 0.0, [0.0], 5, seed=0)
    bare = TrajectoryBatch(batch.states, batch.noises, None, 0.0, batch.dt, 0)
    with pytest.raises(MissingControls):
        log_rn_self(bare, [0.0])


def test_equivalence_with_nominal_policies(wells):
    pols = [constant_policy(u) for u in wells.nominal_controls]
    for r in cost_equivalence_check(wells, pols, 2000, seed=11):
        assert r.difference == pytest.approx(0.0, abs=1e-12)


def test_equivalence_single_player_any_policy():
    spec = replace(zero_cost_spec(players=1, dt=0.02), costs=moving_wells_spec(0.0).costs[:1])
    (r,) = cost_equivalence_check(spec, [linear_policy([[-0.7]], [0.3])], 20_000, seed=12)
    assert abs(r.difference) <= 4 * r.se_combined


def test_equivalence_repulsive_with_pi_policies(wells):
    own = equilibrium_policies(wells, 2000, seed=13, interp_nodes=None)
    cross = equilibrium_policies(wells, 2000, seed=13, interp_nodes=None, ess_floor=1.0)
    for r in cost_equivalence_check(wells, own, 300, seed=14, cross_policies=cross):
        assert abs(r.difference) <= 4 * r.se_combined


def test_controls_along_shape(wells):
    batch = rollout_reference(wells, 0, 0.0, [0.0], 7, seed=15)
    u = controls_along(linear_policy([[2.0]]), batch)
    assert u.shape == (7, wells.n_steps, 1)
    np.testing.assert_allclose(u, 2.0 * batch.states[:, :-1, :])


def test_identical_ensembles_have_zero_distance(wells):
    batch = rollout_reference(wells, 0, 0.0, [0.0], 500, seed=16)
    ens = tilt_weights(batch, wells, 0)
    d = expectation_distance([ens, ens])
    np.testing.assert_array_equal(d.distance, 0.0)
    with pytest.raises(PlayerCountMismatch):
        expectation_distance([ens])
    with pytest.raises(PlayerCountMismatch):
        expectation_distance([ens, ens, ens])


def test_distance_to_csv(tmp_path, wells):
    a = rollout_reference(wells, 0, 0.0, [0.0], 300, seed=17)
    b = rollout_controlled(wells, 1, constant_policy([0.5]), 0.0, [0.0], 300, seed=18)
    d = expectation_distance([tilt_weights(a, wells, 0), b])
    assert np.all(d.std_error >= 0)
    d.to_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "t,distance" and len(lines) == wells.n_steps + 2


def test_mean_curve_and_perspectives_on_zero_cost():
    spec = zero_cost_spec(players=1, dt=0.05)
    ref = rollout_reference(spec, 0, 0.0, [0.0], 4000, seed=19)
    ctl = rollout_controlled(spec, 0, constant_policy([0.0]), 0.0, [0.0], 4000, seed=20)
    comp = compare_perspectives(tilt_weights(ref, spec, 0), ctl)
    assert comp.within(0.0)
    mc = mean_curve(ref)
    assert mc.std_error[0, 0] == 0.0
    assert mc.std_error[-1, 0] == pytest.approx(ref.terminal_states.std() / np.sqrt(4000), rel=1e-10)
