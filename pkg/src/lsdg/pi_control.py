"""Path-integral feedback control and closed-loop equilibrium rollouts.

The control correction at ``(t, x)`` is the exp(-S)-weighted average of the
first reference noise increment divided by the step ``dt``.

Two policy flavours are offered:

* per-query (default of ``make_pi_policy``): every ``(t, x)`` draws fresh
  reference paths seeded from ``(seed, t-index, hash of x)``;
* shared-noise: all queries at one time index reuse one reference sample.
  For every built-in model the reference path from ``x`` is ``Phi_k x + xi_k``
  and costs are quadratic, so ``S_p(x) = C_p + B_p . x + (x-quadratic common to
  all paths)``.  The common part cancels in the normalised weights, which makes
  evaluating thousands of query states per step cheap.  Closed-loop rollouts
  use this flavour.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from .desirability import DEFAULT_ESS_FLOOR, _running_weights, log_weights_summary, path_cost, streamed_path_costs
from .errors import DegenerateWeights, HorizonExhausted
from .game_model import GameSpec
from .sde_engine import (
    STREAM_PLAYER,
    STREAM_POLICY,
    FeedbackPolicy,
    TrajectoryBatch,
    derive_seed,
    iter_reference_blocks,
    rollout_controlled,
    state_hash,
)

_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class ControlEstimate:
    value: np.ndarray
    std_error: np.ndarray
    ess: float
    M: int


def _check_time(spec: GameSpec, t: float) -> int:
    if t >= spec.horizon - 1e-12 * max(1.0, spec.horizon):
        raise HorizonExhausted(f"no control at t={t!r} >= horizon {spec.horizon!r}")
    return spec.step_index(t)


def _weighted_noise_mean(w: np.ndarray, dw0: np.ndarray, dt: float):
    W = w.sum()
    mean = (w[:, None] * dw0).sum(axis=0) / W
    var = ((w[:, None] * (dw0 - mean)) ** 2).sum(axis=0) / (W * W)
    return mean / dt, np.sqrt(var) / dt


def control_estimate(spec: GameSpec, i: int, t: float, x, M: int, seed: int, *,
                     ess_floor: float = DEFAULT_ESS_FLOOR, quadrature: str = "left") -> ControlEstimate:
    """One-step path-integral control estimate for player ``i`` at ``(t, x)``.

    ``u = u_bar + (1/dt) sum_p w_p dw_p / sum_p w_p`` with ``w_p = exp(-S_p)``
    over ``M`` fresh reference paths.  The standard error is the delta-method
    error of the self-normalised mean.
    """
    _check_time(spec, t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    S, dw0 = streamed_path_costs(spec, i, t, x, M, seed, quadrature=quadrature, keep_first_noise=True)
    _, w, ess = log_weights_summary(-S)
    if ess < ess_floor:
        raise DegenerateWeights(ess, ess_floor, f"control query player {i}, t={t:g}, x={x.tolist()}")
    corr, se = _weighted_noise_mean(w, dw0, spec.dt)
    return ControlEstimate(spec.nominal_controls[i] + corr, se, ess, M)


class SharedNoiseController:
    """Path-integral controls for many query states sharing one sample per time index.

    Step ``k`` uses reference noise seeded by ``derive_seed(seed, STREAM_POLICY, k)``,
    so ``evaluate(t_k, X)[r]`` equals ``control_estimate(spec, i, t_k, X[r], M,
    derive_seed(seed, STREAM_POLICY, k))`` up to rounding.

    For 1-D states and many queries, ``interp_nodes`` switches to evaluating
    the (analytic) control curve exactly at Chebyshev nodes spanning the
    queries and interpolating.  A handful of queries are re-evaluated exactly
    every step; if the interpolant misses them by more than ``interp_tol`` the
    step falls back to exact evaluation.
    """

    def __init__(self, spec: GameSpec, i: int, M: int, seed: int, *, ess_floor: float = DEFAULT_ESS_FLOOR,
                 quadrature: str = "left", interp_nodes: int | None = None, interp_tol: float = 1e-6,
                 cache_size: int = 4):
        if M < 1:
            raise ValueError("need at least one path per query")
        self.spec, self.i, self.M, self.seed = spec, i, M, int(seed)
        self.ess_floor, self.quadrature = ess_floor, quadrature
        self.interp_nodes, self.interp_tol = interp_nodes, interp_tol
        self._cache: OrderedDict[int, tuple] = OrderedDict()
        self._cache_size = cache_size
        self.interp_fallbacks = 0

    def step_seed(self, k: int) -> int:
        return derive_seed(self.seed, STREAM_POLICY, k)

    def _step_data(self, k: int):
        if k in self._cache:
            self._cache.move_to_end(k)
            return self._cache[k]
        spec, i = self.spec, self.i
        n = spec.state_dim
        K = spec.n_steps - k
        t = k * spec.dt
        beta = spec.interaction.beta
        phi1 = spec.dynamics.transition_matrix(spec.dt)
        identity_phi = np.array_equal(phi1, np.eye(n))
        if not identity_phi:
            phis = np.empty((K + 1, n, n))
            phis[0] = np.eye(n)
            for s in range(K):
                phis[s + 1] = phi1 @ phis[s]
        run_w = _running_weights(K, spec.dt, self.quadrature)
        times = t + np.arange(K + 1) * spec.dt
        C_parts, B_parts, dw_parts = [], [], []
        for block in iter_reference_blocks(spec, i, t, np.zeros(n), self.M, self.step_seed(k)):
            C_parts.append(path_cost(block, spec, i, self.quadrature).values)
            dw_parts.append(block.noises[:, 0, :])
            resid = np.zeros(block.states.shape)
            for j in range(spec.players):
                if beta[i, j] == 0.0:
                    continue
                cost = spec.costs[j]
                if cost.running.kind == "quadratic_well":
                    centers = cost.running.center.at(times, spec.horizon)
                    coef = beta[i, j] * cost.running.q * run_w
                    resid += coef[None, :, None] * (block.states - centers[None])
                if cost.terminal.kind == "quadratic":
                    center_T = cost.terminal.center.at(spec.horizon, spec.horizon)
                    resid[:, -1, :] += beta[i, j] * cost.terminal.q_T * (block.states[:, -1, :] - center_T)
            if identity_phi:
                B_parts.append(resid.sum(axis=1))
            else:
                B_parts.append(np.einsum("kab,pka->pb", phis, resid))
        data = (np.concatenate(C_parts), np.concatenate(B_parts, axis=0), np.concatenate(dw_parts, axis=0))
        self._cache[k] = data
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return data

    def _exact(self, k: int, X: np.ndarray):
        C, B, dw0 = self._step_data(k)
        dt = self.spec.dt
        Q = X.shape[0]
        m = dw0.shape[1]
        corr = np.empty((Q, m))
        se = np.empty((Q, m))
        ess = np.empty(Q)
        rows = max(1, _CHUNK_ELEMS // max(1, self.M))
        for lo in range(0, Q, rows):
            hi = min(Q, lo + rows)
            logits = -(C[None, :] + X[lo:hi] @ B.T)
            logits -= logits.max(axis=1, keepdims=True)
            w = np.exp(logits)
            W = w.sum(axis=1)
            ess[lo:hi] = W * W / (w * w).sum(axis=1)
            mean = (w @ dw0) / W[:, None]
            second = (w * w) @ (dw0 * dw0) - 2 * mean * ((w * w) @ dw0) + mean**2 * (w * w).sum(axis=1)[:, None]
            corr[lo:hi] = mean / dt
            se[lo:hi] = np.sqrt(np.maximum(second, 0.0)) / W[:, None] / dt
        return corr, se, ess

    def _raise_if_degenerate(self, ess: np.ndarray, t: float):
        worst = float(np.min(ess))
        if worst < self.ess_floor:
            raise DegenerateWeights(worst, self.ess_floor, f"shared-noise control player {self.i}, t={t:g}")

    def evaluate(self, t: float, X) -> np.ndarray:
        return self.estimate(t, X)[0]

    def estimate(self, t: float, X):
        """Return (controls (Q, m), std errors (Q, m), ess (Q,)); errors are nan when interpolated."""
        k = _check_time(self.spec, t)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ubar = self.spec.nominal_controls[self.i]
        nodes = self.interp_nodes
        if nodes and X.shape[1] == 1 and X.shape[0] > 2 * nodes:
            out = self._interpolated(k, X, nodes)
            if out is not None:
                corr, ess = out
                self._raise_if_degenerate(ess, t)
                return ubar + corr, np.full_like(corr, np.nan), np.full(X.shape[0], np.nan)
            self.interp_fallbacks += 1
        corr, se, ess = self._exact(k, X)
        self._raise_if_degenerate(ess, t)
        return ubar + corr, se, ess

    def _interpolated(self, k: int, X: np.ndarray, nodes: int):
        x = X[:, 0]
        lo, hi = float(x.min()), float(x.max())
        if hi - lo < 1e-12:
            return None
        pad = 1e-9 * (hi - lo)
        j = np.arange(nodes)
        theta = np.pi * (2 * j + 1) / (2 * nodes)
        cheb = 0.5 * (lo + hi) + 0.5 * (hi - lo + 2 * pad) * np.cos(theta)
        # closed-form barycentric weights for these nodes; scipy would otherwise
        # derive them with a random node permutation
        bary_w = (-1.0) ** j * np.sin(theta)
        corr_n, _, ess_n = self._exact(k, cheb[:, None])
        probes = np.quantile(x, [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0])
        corr_p, _, ess_p = self._exact(k, probes[:, None])
        interp = BarycentricInterpolator(cheb, corr_n, axis=0, wi=bary_w)
        approx_p = interp(probes)
        scale = 1.0 + np.abs(corr_p)
        if np.max(np.abs(approx_p - corr_p) / scale) > self.interp_tol:
            return None
        corr = interp(x)
        return corr, np.concatenate([ess_n, ess_p])


def make_pi_policy(spec: GameSpec, i: int, M: int, seed: int, *, shared_noise: bool = False,
                   ess_floor: float = DEFAULT_ESS_FLOOR, quadrature: str = "left",
                   interp_nodes: int | None = None) -> FeedbackPolicy:
    """Wrap the path-integral estimator as a closed-loop policy for player ``i``.

    Per-query mode seeds each evaluation from ``(seed, t-index, quantised x)``;
    ``shared_noise`` uses a ``SharedNoiseController`` instead.
    """
    if M < 1:
        raise ValueError("need at least one path per query")
    desc = f"path-integral policy player={i} M={M} seed={int(seed)} shared_noise={shared_noise}"
    if shared_noise:
        ctrl = SharedNoiseController(spec, i, M, seed, ess_floor=ess_floor, quadrature=quadrature,
                                     interp_nodes=interp_nodes)
        return FeedbackPolicy(lambda t, x: ctrl.evaluate(t, np.atleast_2d(x))[0], desc, ctrl.evaluate)

    def evaluator(t, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k = spec.step_index(t)
        s = derive_seed(seed, STREAM_POLICY, k, state_hash(x))
        return control_estimate(spec, i, t, x, M, s, ess_floor=ess_floor, quadrature=quadrature).value

    return FeedbackPolicy(evaluator, desc)


def nash_closed_loop(spec: GameSpec, M_policy: int, M_ensemble: int, seed: int, *,
                     ess_floor: float = DEFAULT_ESS_FLOOR, interp_nodes: int | None = 129,
                     quadrature: str = "left") -> list[TrajectoryBatch]:
    """Closed-loop equilibrium ensembles from the initial state, one batch per player.

    The linearised problem is decoupled, so each player is rolled out under
    its own path-integral policy independently.
    """
    policies = equilibrium_policies(spec, M_policy, seed, ess_floor=ess_floor, interp_nodes=interp_nodes,
                                    quadrature=quadrature)
    return [rollout_controlled(spec, i, policy, 0.0, spec.initial_state, M_ensemble, derive_seed(seed, STREAM_PLAYER, i))
            for i, policy in enumerate(policies)]


def equilibrium_policies(spec: GameSpec, M_policy: int, seed: int, *, ess_floor: float = DEFAULT_ESS_FLOOR,
                         interp_nodes: int | None = 129, quadrature: str = "left") -> list[FeedbackPolicy]:
    """Shared-noise path-integral policy of every player; player ``i`` is seeded by ``derive_seed(seed, STREAM_POLICY, i)``."""
    return [make_pi_policy(spec, i, M_policy, derive_seed(seed, STREAM_POLICY, i), shared_noise=True,
                           ess_floor=ess_floor, quadrature=quadrature, interp_nodes=interp_nodes)
            for i in range(spec.players)]


def foc_residual(spec: GameSpec, controls, grad_J) -> np.ndarray:
    """Stacked first-order condition ``sum_j alpha_ij (u^j - u_bar^j) + g^T grad J^i`` per player.

    ``controls`` is (N, m) and ``grad_J`` is (N, n); returns (N, m).
    """
    controls = np.asarray(controls, dtype=float)
    grad_J = np.asarray(grad_J, dtype=float)
    dev = controls - np.stack(spec.nominal_controls)
    return spec.interaction.alpha @ dev + grad_J @ spec.dynamics.g
