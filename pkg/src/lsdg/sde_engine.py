"""Seedable Euler-Maruyama rollouts that keep their driving noise.

Noise comes from Philox (a counter-based generator).  Paths are grouped into
fixed blocks of ``BLOCK_PATHS``; block ``b`` of stream ``s`` under seed ``seed``
gets its own generator keyed by ``(seed, s, b)``.  A path's noise is therefore
a function of ``(seed, path index, number of steps, input dim)`` only: it does
not depend on ``M``, on how blocks are scheduled, or on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .errors import HorizonExhausted, NonFiniteControl, NonFiniteState
from .game_model import GameSpec, apply_matrix

BLOCK_PATHS = 4096

# stream tags keep independent uses of one user seed apart
STREAM_PATHS = 0
STREAM_POLICY = 1
STREAM_POINTS = 2
STREAM_PLAYER = 3


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed of ``seed`` for the integer path ``keys``."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) & (2**64 - 1) for k in keys))
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])


def state_hash(x, quantum: float = 1e-9) -> int:
    """64-bit hash of a state quantised to ``quantum``."""
    q = np.round(np.asarray(x, dtype=float) / quantum).astype(np.int64)
    digest = hashlib.blake2b(q.tobytes(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(stream, block))
    return np.random.Generator(np.random.Philox(ss))


def noise_block(seed: int, block: int, rows: int, n_steps: int, dim: int, dt: float, stream: int = STREAM_PATHS) -> np.ndarray:
    """Wiener increments for ``rows`` paths of block ``block``, shape (rows, K, m)."""
    gen = _block_generator(seed, stream, block)
    return gen.standard_normal((rows, n_steps, dim)) * np.sqrt(dt)


def draw_noise(seed: int, M: int, n_steps: int, dim: int, dt: float, stream: int = STREAM_PATHS, workers: int = 1) -> np.ndarray:
    spans = _block_spans(M)
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda s: noise_block(seed, s[0], s[2] - s[1], n_steps, dim, dt, stream), spans))
    else:
        parts = [noise_block(seed, b, hi - lo, n_steps, dim, dt, stream) for b, lo, hi in spans]
    if not parts:
        return np.zeros((0, n_steps, dim))
    return np.concatenate(parts, axis=0)


def _block_spans(M: int):
    return [(b, lo, min(lo + BLOCK_PATHS, M)) for b, lo in enumerate(range(0, M, BLOCK_PATHS))]


@dataclass(frozen=True)
class TrajectoryBatch:
    """M sampled paths on a fixed grid.

    ``states`` is (M, K+1, n), ``noises`` (M, K, m) Wiener increments and
    ``controls`` (M, K, m) the control applied on each step (``None`` when not
    recorded).  Reference rollouts carry the nominal control as a zero-stride
    broadcast view, so recording it is free.
    """

    states: np.ndarray
    noises: np.ndarray | None
    controls: np.ndarray | None
    t0: float
    dt: float
    seed: int
    player: int | None = None

    @property
    def M(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    @property
    def end_time(self) -> float:
        return self.t0 + self.n_steps * self.dt

    @property
    def terminal_states(self) -> np.ndarray:
        return self.states[:, -1, :]

    def to_csv(self, path) -> None:
        """Columns ``path, step, t, x_1..x_n[, u_1..u_m]``; controls are blank on the last step."""
        n = self.states.shape[2]
        has_u = self.controls is not None
        m = self.controls.shape[2] if has_u else 0
        header = ["path", "step", "t"] + [f"x_{d + 1}" for d in range(n)]
        if has_u:
            header += [f"u_{d + 1}" for d in range(m)]
        times = self.times
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for p in range(self.M):
                for k in range(self.n_steps + 1):
                    row = [p, k, repr(float(times[k]))] + [repr(float(v)) for v in self.states[p, k]]
                    if has_u:
                        row += [repr(float(v)) for v in self.controls[p, k]] if k < self.n_steps else [""] * m
                    w.writerow(row)

    def save_npz(self, path) -> None:
        arrays = {"states": self.states, "t0": self.t0, "dt": self.dt, "seed": np.uint64(self.seed),
                  "player": -1 if self.player is None else self.player}
        if self.noises is not None:
            arrays["noises"] = self.noises
        if self.controls is not None:
            arrays["controls"] = np.ascontiguousarray(self.controls)
        np.savez(path, **arrays)

    @classmethod
    def load_npz(cls, path) -> "TrajectoryBatch":
        with np.load(path) as f:
            player = int(f["player"])
            return cls(
                states=f["states"],
                noises=f["noises"] if "noises" in f else None,
                controls=f["controls"] if "controls" in f else None,
                t0=float(f["t0"]),
                dt=float(f["dt"]),
                seed=int(f["seed"]),
                player=None if player < 0 else player,
            )


@dataclass(frozen=True)
class FeedbackPolicy:
    """State feedback ``u(t, x)``.

    ``batch_evaluator`` is an optional vectorised form taking (t, X[B, n]) and
    returning (B, m); when absent ``evaluate_many`` loops over rows.
    """

    evaluator: Callable[[float, np.ndarray], np.ndarray]
    descriptor: str
    batch_evaluator: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __call__(self, t: float, x) -> np.ndarray:
        return np.asarray(self.evaluator(t, np.asarray(x, dtype=float)), dtype=float)

    def evaluate_many(self, t: float, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.batch_evaluator is not None:
            return np.asarray(self.batch_evaluator(t, X), dtype=float)
        return np.stack([np.atleast_1d(self.evaluator(t, x)) for x in X])


def constant_policy(u, descriptor: str | None = None) -> FeedbackPolicy:
    u = np.atleast_1d(np.asarray(u, dtype=float)).copy()
    u.setflags(write=False)
    return FeedbackPolicy(
        lambda t, x: u,
        descriptor or f"constant {u.tolist()}",
        lambda t, X: np.broadcast_to(u, (len(X), u.size)),
    )


def linear_policy(gain, offset=0.0, descriptor: str | None = None) -> FeedbackPolicy:
    """``u(t, x) = gain @ x + offset`` (gain is m x n)."""
    gain = np.atleast_2d(np.asarray(gain, dtype=float))
    offset = np.broadcast_to(np.asarray(offset, dtype=float), (gain.shape[0],)).copy()
    return FeedbackPolicy(
        lambda t, x: gain @ x + offset,
        descriptor or f"linear gain {gain.tolist()} offset {offset.tolist()}",
        lambda t, X: apply_matrix(gain, X) + offset,
    )


def _check_start(spec: GameSpec, t0: float, x0) -> tuple[int, np.ndarray]:
    k0 = spec.step_index(t0)
    if k0 >= spec.n_steps:
        raise HorizonExhausted(f"start time {t0!r} leaves no steps before horizon {spec.horizon!r}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (spec.state_dim,):
        raise ValueError(f"start state must have shape ({spec.state_dim},), got {x0.shape}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("start state must be finite")
    return k0, x0


def _euler_block(spec: GameSpec, x0: np.ndarray, dw: np.ndarray, control, t0: float, k0: int,
                 record_controls: bool) -> tuple[np.ndarray, np.ndarray | None]:
    """Shared integrator for reference and controlled rollouts.

    ``control(k, t, X)`` returns the (B, m) control on step k.  Using one code
    path keeps a controlled rollout with ``u == u_bar`` bitwise equal to the
    reference rollout for the same noise.
    """
    dyn = spec.dynamics
    B, K, m = dw.shape
    n = spec.state_dim
    dt = spec.dt
    states = np.empty((B, K + 1, n))
    states[:, 0, :] = x0
    controls = np.empty((B, K, m)) if record_controls else None
    x = states[:, 0, :].copy()
    with np.errstate(over="ignore", invalid="ignore"):  # blow-ups are reported below
        for k in range(K):
            t = (k0 + k) * dt
            u = control(k, t, x)
            if record_controls:
                controls[:, k, :] = u
            x = x + (dyn.drift(x) + apply_matrix(dyn.g, u)) * dt + apply_matrix(dyn.g, dw[:, k, :])
            states[:, k + 1, :] = x
    if not np.all(np.isfinite(states)):
        raise NonFiniteState("a path coordinate became NaN/Inf; dynamics unstable or dt too large")
    return states, controls


def rollout_reference(
    spec: GameSpec,
    player: int,
    t0: float,
    x0,
    M: int,
    seed: int,
    *,
    store_noise: bool = True,
    workers: int = 1,
) -> TrajectoryBatch:
    """Euler-Maruyama paths of ``dx = (f + g u_bar) dt + g dw`` from ``(t0, x0)`` to the horizon."""
    if M < 1:
        raise ValueError("need at least one path")
    k0, x0 = _check_start(spec, t0, x0)
    K = spec.n_steps - k0
    m = spec.input_dim
    ubar = spec.nominal_controls[player]
    spans = _block_spans(M)

    def run(span):
        b, lo, hi = span
        dw = noise_block(seed, b, hi - lo, K, m, spec.dt)
        st, _ = _euler_block(spec, x0, dw, lambda k, t, X: np.broadcast_to(ubar, (len(X), m)), t0, k0, False)
        return st, (dw if store_noise else None)

    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, spans))
    else:
        parts = [run(s) for s in spans]
    states = np.concatenate([p[0] for p in parts], axis=0)
    noises = np.concatenate([p[1] for p in parts], axis=0) if store_noise else None
    controls = np.broadcast_to(ubar, (M, K, m))
    return TrajectoryBatch(states, noises, controls, float(t0), spec.dt, int(seed), player)


def iter_reference_blocks(spec: GameSpec, player: int, t0: float, x0, M: int, seed: int) -> Iterator[TrajectoryBatch]:
    """Streaming form of ``rollout_reference``: yields the same paths block by block.

    Lets large-M reductions run without holding all paths in memory.
    """
    if M < 1:
        raise ValueError("need at least one path")
    k0, x0 = _check_start(spec, t0, x0)
    K = spec.n_steps - k0
    m = spec.input_dim
    ubar = spec.nominal_controls[player]
    for b, lo, hi in _block_spans(M):
        dw = noise_block(seed, b, hi - lo, K, m, spec.dt)
        st, _ = _euler_block(spec, x0, dw, lambda k, t, X: np.broadcast_to(ubar, (len(X), m)), t0, k0, False)
        yield TrajectoryBatch(st, dw, np.broadcast_to(ubar, (hi - lo, K, m)), float(t0), spec.dt, int(seed), player)


def rollout_controlled(
    spec: GameSpec,
    player: int,
    policy: FeedbackPolicy,
    t0: float,
    x0,
    M: int,
    seed: int,
    *,
    store_noise: bool = True,
    zero_noise: bool = False,
    workers: int = 1,
) -> TrajectoryBatch:
    """Paths of ``dx = (f + g u(t, x)) dt + g dw`` under ``policy``; applied controls are recorded.

    ``zero_noise`` replaces every increment by 0 (testing hook for the
    deterministic ODE limit).  All paths advance together so a vectorised
    policy is queried once per step.
    """
    if M < 1:
        raise ValueError("need at least one path")
    k0, x0 = _check_start(spec, t0, x0)
    K = spec.n_steps - k0
    m = spec.input_dim
    if zero_noise:
        dw = np.zeros((M, K, m))
    else:
        dw = draw_noise(seed, M, K, m, spec.dt, workers=workers)

    def control(k, t, X):
        u = policy.evaluate_many(t, X)
        u = np.broadcast_to(u, (len(X), m))
        if not np.all(np.isfinite(u)):
            raise NonFiniteControl(f"policy {policy.descriptor!r} returned NaN/Inf at t={t!r}")
        return u

    states, controls = _euler_block(spec, x0, dw, control, t0, k0, True)
    return TrajectoryBatch(states, dw if store_noise else None, controls, float(t0), spec.dt, int(seed), player)
