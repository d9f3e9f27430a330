"""Exponentially tilted ensembles, Girsanov log-likelihoods and cost bookkeeping.

A reference batch reweighted by ``exp(-S)`` is a weighted sample of the
equilibrium path measure.  This module turns such ensembles into marginal
densities and mean curves, and checks the measure-form and control-form
costs against each other on controlled rollouts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from .desirability import DEFAULT_ESS_FLOOR, path_cost, player_path_costs
from .errors import BandwidthNonPositive, DegenerateWeights, MissingControls, PlayerCountMismatch
from .game_model import GameSpec
from .sde_engine import STREAM_PLAYER, FeedbackPolicy, TrajectoryBatch, derive_seed, rollout_controlled

_TIME_CHUNK = 16


@dataclass(frozen=True)
class WeightedEnsemble:
    """Reference paths with normalized tilt weights."""

    batch: TrajectoryBatch
    weights: np.ndarray
    log_weights: np.ndarray
    player: int
    ess: float

    @property
    def M(self) -> int:
        return self.batch.M


def normalized_log_weights(neg_S: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Normalize ``exp(neg_S)`` in log space; returns (log_w, w, ess)."""
    neg_S = np.asarray(neg_S, dtype=float)
    log_w = neg_S - logsumexp(neg_S)
    w = np.exp(log_w)
    w /= w.sum()
    ess = float(1.0 / np.dot(w, w))
    return log_w, w, min(max(ess, 1.0), float(w.size))


def tilt_weights(batch: TrajectoryBatch, spec: GameSpec, i: int, *, ess_floor: float = DEFAULT_ESS_FLOOR,
                 quadrature: str = "left") -> WeightedEnsemble:
    """Reweight a reference batch of player ``i`` by ``exp(-S_i)``."""
    S = path_cost(batch, spec, i, quadrature).values
    log_w, w, ess = normalized_log_weights(-S)
    if ess < ess_floor:
        raise DegenerateWeights(ess, ess_floor, f"tilt of player {i}")
    log_w.setflags(write=False)
    w.setflags(write=False)
    return WeightedEnsemble(batch, w, log_w, i, ess)


def _marginal(source, t: float) -> tuple[np.ndarray, np.ndarray, float]:
    """(x_t samples (M, n), weights summing to 1, effective count) for either ensemble kind."""
    batch = source.batch if isinstance(source, WeightedEnsemble) else source
    k = _time_index(batch, t)
    X = batch.states[:, k, :]
    if isinstance(source, WeightedEnsemble):
        return X, source.weights, source.ess
    return X, np.full(batch.M, 1.0 / batch.M), float(batch.M)


def _time_index(batch: TrajectoryBatch, t: float) -> int:
    k = int(round((t - batch.t0) / batch.dt))
    if k < 0 or k > batch.n_steps or abs(batch.t0 + k * batch.dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t!r} is not on the ensemble grid")
    return k


# --------------------------------------------------------------------------
# densities


@dataclass(frozen=True)
class DensityCurve:
    t: float
    x: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(trapezoid(self.density, self.x))


def silverman_bandwidth(X: np.ndarray, weights: np.ndarray, ess: float) -> float:
    """``1.06 * sigma_w * ess^(-1/5)`` on the first state coordinate."""
    x = X[:, 0]
    mean = np.dot(weights, x)
    sd = float(np.sqrt(max(np.dot(weights, (x - mean) ** 2), 0.0)))
    return 1.06 * sd * max(ess, 1.0) ** (-0.2)


_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _kde_exact(x: np.ndarray, w: np.ndarray, grid: np.ndarray, h: float) -> np.ndarray:
    out = np.empty(grid.size)
    chunk = max(1, 2_000_000 // max(x.size, 1))
    for lo in range(0, grid.size, chunk):
        z = (grid[lo:lo + chunk, None] - x[None, :]) / h
        out[lo:lo + chunk] = np.exp(-0.5 * z * z) @ w * (_INV_SQRT_2PI / h)
    return out


def _kde_binned(x: np.ndarray, w: np.ndarray, grid: np.ndarray, h: float, resolution: int = 16) -> np.ndarray:
    """Linear binning on an internal grid of spacing ``h / resolution`` and a discrete Gaussian convolution.

    The smoothed curve is interpolated linearly onto ``grid``, which need
    not be uniform.  Samples more than 5h outside ``grid`` are dropped.
    """
    dx = h / resolution
    pad = 5 * resolution + 1
    origin = grid[0] - pad * dx
    size = int(np.ceil((grid[-1] - grid[0]) / dx)) + 2 * pad + 2
    pos = (x - origin) / dx
    inside = (pos >= 0) & (pos < size - 1)
    lo = np.floor(pos[inside]).astype(np.int64)
    frac = pos[inside] - lo
    counts = (np.bincount(lo, w[inside] * (1 - frac), minlength=size)
              + np.bincount(lo + 1, w[inside] * frac, minlength=size))[:size]
    offsets = np.arange(-pad, pad + 1) / resolution
    kernel = np.exp(-0.5 * offsets**2) * (_INV_SQRT_2PI / h)
    smooth = np.convolve(counts, kernel, mode="same")
    return np.interp(grid, origin + dx * np.arange(size), smooth)


def _histogram(x: np.ndarray, w: np.ndarray, grid: np.ndarray) -> np.ndarray:
    mids = 0.5 * (grid[1:] + grid[:-1])
    edges = np.concatenate([[grid[0] - (mids[0] - grid[0])], mids, [grid[-1] + (grid[-1] - mids[-1])]])
    mass, _ = np.histogram(x, bins=edges, weights=w)
    return mass / np.diff(edges)


def weighted_density(ensemble, t: float, grid, bandwidth: float | str | None = "auto", *,
                     method: str = "auto") -> DensityCurve:
    """Weighted Gaussian KDE of the time-``t`` marginal on ``grid`` (1-D states).

    ``ensemble`` is a ``WeightedEnsemble`` or an unweighted ``TrajectoryBatch``.
    ``method`` is ``"exact"``, ``"binned"``, ``"histogram"`` or ``"auto"``,
    which bins when the sample times grid size is large.
    """
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least two points")
    X, w, ess = _marginal(ensemble, t)
    if X.shape[1] != 1:
        raise ValueError("weighted_density handles 1-D states only")
    if bandwidth is None or bandwidth == "auto":
        h = silverman_bandwidth(X, w, ess)
        if h <= 0:
            raise BandwidthNonPositive("automatic bandwidth collapsed to zero (all samples coincide)")
    else:
        h = float(bandwidth)
        if not h > 0:
            raise BandwidthNonPositive(f"bandwidth must be > 0, got {bandwidth!r}")
    x = X[:, 0]
    if method == "histogram":
        return DensityCurve(float(t), grid, _histogram(x, w, grid), h)
    if method == "auto":
        method = "binned" if x.size * grid.size > 5_000_000 else "exact"
    if method == "binned":
        dens = _kde_binned(x, w, grid, h)
    elif method == "exact":
        dens = _kde_exact(x, w, grid, h)
    else:
        raise ValueError(f"unknown density method {method!r}")
    return DensityCurve(float(t), grid, np.maximum(dens, 0.0), h)


def densities_to_csv(curves: Sequence[tuple[int, DensityCurve]], path) -> None:
    """Rows ``(player, t, x, density)``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["player", "t", "x", "density"])
        for player, c in curves:
            for x, d in zip(c.x, c.density):
                out.writerow([player, repr(c.t), repr(float(x)), repr(float(d))])


# --------------------------------------------------------------------------
# means with standard errors


@dataclass(frozen=True)
class MeanCurve:
    """Per-time mean of the state and its Monte Carlo standard error (n = 1 uses column 0)."""

    t: np.ndarray
    mean: np.ndarray  # (K+1, n)
    std_error: np.ndarray  # (K+1, n)


def _weights_of(source) -> tuple[TrajectoryBatch, np.ndarray]:
    if isinstance(source, WeightedEnsemble):
        return source.batch, source.weights
    return source, np.full(source.M, 1.0 / source.M)


def mean_curve(source) -> MeanCurve:
    """Weighted (tilted) or plain (controlled) mean of x_t at every grid time.

    The standard error is the delta-method one for a self-normalized mean,
    ``sqrt(sum_p w_p^2 (x_p - mean)^2)``, which reduces to the usual
    ``sd / sqrt(M)`` for uniform weights.
    """
    batch, w = _weights_of(source)
    K1, n = batch.states.shape[1], batch.states.shape[2]
    mean = np.empty((K1, n))
    se = np.empty((K1, n))
    w2 = w * w
    for lo in range(0, K1, _TIME_CHUNK):
        X = batch.states[:, lo:lo + _TIME_CHUNK, :]
        m = np.einsum("p,pkd->kd", w, X)
        mean[lo:lo + _TIME_CHUNK] = m
        se[lo:lo + _TIME_CHUNK] = np.sqrt(np.einsum("p,pkd->kd", w2, (X - m) ** 2))
    return MeanCurve(batch.times, mean, se)


@dataclass(frozen=True)
class DistanceCurve:
    t: np.ndarray
    distance: np.ndarray
    std_error: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["t", "distance"])
            for t, d in zip(self.t, self.distance):
                out.writerow([repr(float(t)), repr(float(d))])


def _shared_batch(a, b) -> bool:
    ba = a.batch if isinstance(a, WeightedEnsemble) else a
    bb = b.batch if isinstance(b, WeightedEnsemble) else b
    return ba.states is bb.states


def expectation_distance(ensembles) -> DistanceCurve:
    """``D(t) = |E_1[x_t] - E_2[x_t]|`` with a delta-method standard error.

    Each entry may be a ``WeightedEnsemble`` (weighted mean) or a
    ``TrajectoryBatch`` (plain mean).  When both are tiltings of the same
    batch the per-path influence terms are paired; otherwise the two means
    are treated as independent.
    """
    ensembles = list(ensembles)
    if len(ensembles) != 2:
        raise PlayerCountMismatch(f"expectation distance needs exactly 2 ensembles, got {len(ensembles)}")
    a, b = ensembles
    ca, cb = mean_curve(a), mean_curve(b)
    if ca.t.shape != cb.t.shape or np.max(np.abs(ca.t - cb.t)) > 1e-12:
        raise ValueError("ensembles are not on a common time grid")
    diff = ca.mean - cb.mean
    dist = np.sqrt((diff * diff).sum(axis=1))
    unit = np.divide(diff, dist[:, None], out=np.zeros_like(diff), where=dist[:, None] > 0)
    if _shared_batch(a, b):
        se = _paired_se(a, b, ca, cb, unit)
    else:
        se = np.sqrt(((unit * ca.std_error) ** 2).sum(1) + ((unit * cb.std_error) ** 2).sum(1))
    return DistanceCurve(ca.t, dist, se)


def _paired_se(a, b, ca: MeanCurve, cb: MeanCurve, unit: np.ndarray) -> np.ndarray:
    batch, wa = _weights_of(a)
    _, wb = _weights_of(b)
    K1 = batch.states.shape[1]
    se = np.empty(K1)
    for lo in range(0, K1, _TIME_CHUNK):
        X = batch.states[:, lo:lo + _TIME_CHUNK, :]
        u = unit[lo:lo + _TIME_CHUNK]
        ia = wa[:, None] * ((X - ca.mean[lo:lo + _TIME_CHUNK]) * u).sum(-1)
        ib = wb[:, None] * ((X - cb.mean[lo:lo + _TIME_CHUNK]) * u).sum(-1)
        se[lo:lo + _TIME_CHUNK] = np.sqrt(((ia - ib) ** 2).sum(0))
    return se


@dataclass(frozen=True)
class PerspectiveComparison:
    """Tilted-reference mean vs closed-loop mean for one player."""

    player: int
    t: np.ndarray
    mean_tilted: np.ndarray
    mean_controlled: np.ndarray
    se_combined: np.ndarray

    @property
    def abs_diff(self) -> np.ndarray:
        return np.abs(self.mean_tilted - self.mean_controlled)

    def within(self, abs_tol: float, n_se: float = 4.0) -> bool:
        return bool(np.all(self.abs_diff <= np.maximum(abs_tol, n_se * self.se_combined)))


def compare_perspectives(tilted: WeightedEnsemble, controlled: TrajectoryBatch) -> PerspectiveComparison:
    """First-coordinate mean curves of both estimates of the equilibrium measure."""
    ct, cc = mean_curve(tilted), mean_curve(controlled)
    if ct.t.shape != cc.t.shape or np.max(np.abs(ct.t - cc.t)) > 1e-12:
        raise ValueError("ensembles are not on a common time grid")
    se = np.sqrt(ct.std_error[:, 0] ** 2 + cc.std_error[:, 0] ** 2)
    return PerspectiveComparison(tilted.player, ct.t, ct.mean[:, 0], cc.mean[:, 0], se)


# --------------------------------------------------------------------------
# Girsanov terms and the cost equivalence


def log_rn_self(batch: TrajectoryBatch, nominal) -> np.ndarray:
    """Per path ``sum_k (u_k - u_bar)^T dw_k + 1/2 sum_k |u_k - u_bar|^2 dt``."""
    if batch.controls is None or batch.noises is None:
        raise MissingControls("log-likelihood ratio needs recorded controls and noises")
    delta = batch.controls - np.asarray(nominal, dtype=float)
    return (delta * batch.noises).sum(axis=(1, 2)) + 0.5 * (delta * delta).sum(axis=(1, 2)) * batch.dt


def controls_along(policy: FeedbackPolicy, batch: TrajectoryBatch) -> np.ndarray:
    """Evaluate ``policy`` at every (t_k, x_k) of ``batch`` for k < K; shape (M, K, m)."""
    times = batch.times
    cols = [np.atleast_2d(policy.evaluate_many(times[k], batch.states[:, k, :])) for k in range(batch.n_steps)]
    return np.stack(cols, axis=1)


@dataclass(frozen=True)
class EquivalenceResult:
    player: int
    J_measure: float
    se_measure: float
    J_control: float
    se_control: float
    se_paired: float
    M: int

    @property
    def difference(self) -> float:
        return self.J_measure - self.J_control

    @property
    def se_combined(self) -> float:
        return float(np.hypot(self.se_measure, self.se_control))


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0


def cost_equivalence_check(spec: GameSpec, policies: Sequence[FeedbackPolicy], M: int, seed: int, *,
                           quadrature: str = "left", cross_form: str = "integral",
                           cross_policies: Sequence[FeedbackPolicy] | None = None) -> list[EquivalenceResult]:
    """Both cost representations on the same controlled paths of each player.

    Player ``i`` is rolled out under ``policies[i]`` with seed
    ``derive_seed(seed, STREAM_PLAYER, i)``.  The measure form adds the
    trajectory cost, ``alpha_ii`` times the sampled self log-likelihood and
    ``alpha_ij`` times the cross log-likelihood of every other player; the
    control form integrates the explicit quadratic control costs.
    ``cross_form="stochastic"`` keeps the Ito integral in the cross terms
    instead of its deterministic compensator.  ``cross_policies`` (default:
    ``policies``) are the versions of the other players' policies evaluated
    along player ``i``'s paths, e.g. estimators with a lower ESS floor since
    those states can lie far from where player ``j`` itself goes.
    """
    if len(policies) != spec.players:
        raise PlayerCountMismatch(f"need {spec.players} policies, got {len(policies)}")
    if cross_form not in ("integral", "stochastic"):
        raise ValueError(f"unknown cross_form {cross_form!r}")
    cross_policies = policies if cross_policies is None else cross_policies
    if len(cross_policies) != spec.players:
        raise PlayerCountMismatch(f"need {spec.players} cross policies, got {len(cross_policies)}")
    alpha = spec.interaction.alpha
    dt = spec.dt
    results = []
    for i in range(spec.players):
        batch = rollout_controlled(spec, i, policies[i], 0.0, spec.initial_state, M, derive_seed(seed, STREAM_PLAYER, i))
        u_i = batch.controls
        ubar_i = spec.nominal_controls[i]
        traj = player_path_costs(batch, spec, i, quadrature)
        measure = traj + alpha[i, i] * log_rn_self(batch, ubar_i)
        d_i = u_i - ubar_i
        control = traj + 0.5 * alpha[i, i] * (d_i * d_i).sum(axis=(1, 2)) * dt
        for j in range(spec.players):
            if j == i or alpha[i, j] == 0.0:
                continue
            ubar_j = spec.nominal_controls[j]
            u_j = controls_along(cross_policies[j], batch)
            d_j = u_j - ubar_j
            if cross_form == "integral":
                cross = 0.5 * (d_j * (2 * u_i - u_j - ubar_j)).sum(axis=(1, 2)) * dt
            else:
                cross = ((d_j * (u_i - ubar_j)).sum(axis=(1, 2)) * dt + (d_j * batch.noises).sum(axis=(1, 2))
                         - 0.5 * (d_j * d_j).sum(axis=(1, 2)) * dt)
            measure = measure + alpha[i, j] * cross
            explicit = 0.5 * ((ubar_j * ubar_j).sum() - (u_j * u_j).sum(-1)) + (d_j * u_i).sum(-1)
            control = control + alpha[i, j] * explicit.sum(axis=1) * dt
        jm, sm = _mean_se(measure)
        jc, sc = _mean_se(control)
        _, sp = _mean_se(measure - control)
        results.append(EquivalenceResult(i, jm, sm, jc, sc, sp, M))
    return results
