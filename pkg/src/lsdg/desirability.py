"""Interaction-adjusted path costs and Monte Carlo desirability estimates."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateWeights
from .game_model import GameSpec
from .sde_engine import STREAM_POINTS, TrajectoryBatch, derive_seed, iter_reference_blocks

DEFAULT_ESS_FLOOR = 10.0


@dataclass(frozen=True)
class PathCostVector:
    values: np.ndarray
    player: int
    quadrature: str


@dataclass(frozen=True)
class DesirabilityEstimate:
    value: float
    std_error: float
    ess: float
    M: int
    log_value: float
    step_error: float | None = None


def _running_weights(n_steps: int, dt: float, quadrature: str) -> np.ndarray:
    """Quadrature weights over the K+1 grid times for the running-cost integral."""
    w = np.full(n_steps + 1, dt)
    if quadrature == "left":
        w[-1] = 0.0
    elif quadrature == "trapezoid":
        w[0] *= 0.5
        w[-1] *= 0.5
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}; use 'left' or 'trapezoid'")
    return w


def player_path_costs(batch: TrajectoryBatch, spec: GameSpec, j: int, quadrature: str = "left") -> np.ndarray:
    """Player j's own ``int C^j dt + Psi_j(x_T)`` per path (no beta mixing)."""
    times = batch.times
    w = _running_weights(batch.n_steps, batch.dt, quadrature)
    running = spec.running_cost(j, times, batch.states)  # (M, K+1)
    return (running * w).sum(axis=1) + spec.terminal_cost(j, batch.states[:, -1, :])


def path_cost(batch: TrajectoryBatch, spec: GameSpec, i: int, quadrature: str = "left") -> PathCostVector:
    """``S = sum_j beta_ij [sum_k C^j(t_k, x_k) dt + Psi_j(x_K)]`` per path.

    Players with ``beta_ij == 0`` are skipped outright, so their costs cannot
    leak into S even through rounding.
    """
    beta = spec.interaction.beta
    S = np.zeros(batch.M)
    for j in range(spec.players):
        if beta[i, j] != 0.0:
            S = S + beta[i, j] * player_path_costs(batch, spec, j, quadrature)
    return PathCostVector(S, i, quadrature)


def log_weights_summary(neg_S: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Return (shift, exp(neg_S - shift), ess) with max-subtraction."""
    shift = float(np.max(neg_S))
    w = np.exp(neg_S - shift)
    sw = w.sum()
    ess = float(sw * sw / (w * w).sum())
    return shift, w, ess


def _estimate_from_costs(S: np.ndarray, ess_floor: float, context: str) -> DesirabilityEstimate:
    M = S.size
    shift, w, ess = log_weights_summary(-S)
    if ess < ess_floor:
        raise DegenerateWeights(ess, ess_floor, context)
    log_value = shift + np.log(w.sum()) - np.log(M)
    value = float(np.exp(log_value))
    std = float(np.exp(shift) * w.std()) if M > 1 else 0.0
    return DesirabilityEstimate(value, std / np.sqrt(M), ess, M, float(log_value))


def estimate_Z(batch: TrajectoryBatch, spec: GameSpec, i: int, *, ess_floor: float = DEFAULT_ESS_FLOOR,
               quadrature: str = "left") -> DesirabilityEstimate:
    """Feynman-Kac estimate of ``Z_i(t0, x0)`` from a reference batch started at ``(t0, x0)``."""
    S = path_cost(batch, spec, i, quadrature).values
    return _estimate_from_costs(S, ess_floor, f"player {i}, t={batch.t0:g}")


def _coarsened(batch: TrajectoryBatch) -> TrajectoryBatch:
    """The same paths seen on every other grid time (step ``2 dt``)."""
    if batch.n_steps % 2:
        raise ValueError(f"step doubling needs an even number of steps, got {batch.n_steps}")
    return replace(batch, states=batch.states[:, ::2], noises=None, controls=None, dt=2 * batch.dt)


def streamed_path_costs(spec: GameSpec, i: int, t: float, x, M: int, seed: int, *,
                        quadrature: str = "left", keep_first_noise: bool = False, coarse: bool = False):
    """Path costs of ``M`` reference paths from ``(t, x)`` without holding the paths.

    Same paths as ``rollout_reference(spec, i, t, x, M, seed)``.  Returns a
    tuple whenever an extra is requested: ``keep_first_noise`` adds the
    (M, m) first Wiener increments, ``coarse`` adds the costs of the same
    paths sampled with step ``2 dt``.
    """
    costs, first, coarse_costs = [], [], []
    for block in iter_reference_blocks(spec, i, t, x, M, seed):
        costs.append(path_cost(block, spec, i, quadrature).values)
        if keep_first_noise:
            first.append(block.noises[:, 0, :])
        if coarse:
            coarse_costs.append(path_cost(_coarsened(block), spec, i, quadrature).values)
    S = np.concatenate(costs)
    if not (keep_first_noise or coarse):
        return S
    out = (S,)
    if keep_first_noise:
        out += (np.concatenate(first, axis=0),)
    if coarse:
        out += (np.concatenate(coarse_costs),)
    return out


def estimate_Z_at(spec: GameSpec, i: int, t: float, x, M: int, seed: int, *,
                  ess_floor: float = DEFAULT_ESS_FLOOR, quadrature: str = "left",
                  step_doubling: bool = False) -> DesirabilityEstimate:
    """Streaming equivalent of ``estimate_Z(rollout_reference(...))``.

    With ``step_doubling`` the estimate also carries ``step_error``, the
    change in the estimate when the cost quadrature uses every other grid
    time.  For a first-order rule this approximates the quadrature bias of
    the returned value.
    """
    context = f"player {i}, t={t:g}, x={np.ravel(x).tolist()}"
    if not step_doubling:
        S = streamed_path_costs(spec, i, t, x, M, seed, quadrature=quadrature)
        return _estimate_from_costs(S, ess_floor, context)
    S, S2 = streamed_path_costs(spec, i, t, x, M, seed, quadrature=quadrature, coarse=True)
    est = _estimate_from_costs(S, ess_floor, context)
    shift = float(np.max(-S2))
    coarse_value = float(np.exp(shift + np.log(np.mean(np.exp(-S2 - shift)))))
    return replace(est, step_error=abs(coarse_value - est.value))


def point_seed(seed: int, index: int) -> int:
    return derive_seed(seed, STREAM_POINTS, index)


def estimate_Z_field(spec: GameSpec, i: int, t: float, xs, M: int, seed: int, *,
                     ess_floor: float = DEFAULT_ESS_FLOOR, quadrature: str = "left",
                     step_doubling: bool = False) -> list[DesirabilityEstimate]:
    """Independent estimates at each query state; point k uses ``point_seed(seed, k)``."""
    out = []
    for k, x in enumerate(xs):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out.append(estimate_Z_at(spec, i, t, x, M, point_seed(seed, k), ess_floor=ess_floor, quadrature=quadrature,
                                 step_doubling=step_doubling))
    return out
