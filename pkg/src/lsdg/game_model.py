"""Game definition: dynamics, per-player costs, interaction matrix, Cole-Hopf maps.

Everything here is immutable after construction.  Array fields are stored as
read-only numpy arrays so a ``GameSpec`` can be shared freely between workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from .errors import (
    ConfigError,
    NonPositiveDesirability,
    NonPositiveDiagonal,
    OffGridTime,
    Overflow,
    SingularMatrix,
)

DEFAULT_COND_BOUND = 1e8
DEFAULT_MAX_EXPONENT = 700.0


def _frozen(a, ndim=None, name="array"):
    arr = np.array(a, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimension(s), got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------
# interaction matrix


@dataclass(frozen=True)
class InteractionMatrix:
    alpha: np.ndarray
    beta: np.ndarray
    condition_number: float

    @property
    def players(self) -> int:
        return self.alpha.shape[0]


def build_interaction_matrix(entries, cond_bound: float = DEFAULT_COND_BOUND) -> InteractionMatrix:
    """Validate ``entries`` as an interaction matrix and precompute its inverse.

    Raises ``NonPositiveDiagonal`` if any diagonal weight is <= 0 and
    ``SingularMatrix`` if the matrix is singular or its 2-norm condition
    number exceeds ``cond_bound``.
    """
    alpha = np.array(entries, dtype=float)
    if alpha.ndim != 2 or alpha.shape[0] != alpha.shape[1]:
        raise ValueError(f"interaction matrix must be square, got shape {alpha.shape}")
    if not np.all(np.isfinite(alpha)):
        raise ValueError("interaction matrix has non-finite entries")
    diag = np.diag(alpha)
    if np.any(diag <= 0):
        bad = [int(k) for k in np.flatnonzero(diag <= 0)]
        raise NonPositiveDiagonal(f"alpha_ii must be > 0; offending indices {bad}")
    cond = float(np.linalg.cond(alpha))
    if not np.isfinite(cond) or cond > cond_bound:
        raise SingularMatrix(f"interaction matrix condition number {cond:.3g} exceeds bound {cond_bound:.3g}")
    n = alpha.shape[0]
    try:
        beta = np.linalg.solve(alpha, np.eye(n))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - caught by cond above
        raise SingularMatrix(str(exc)) from exc
    eye = np.eye(n)
    if np.max(np.abs(alpha @ beta - eye)) > 1e-10 or np.max(np.abs(beta @ alpha - eye)) > 1e-10:
        raise SingularMatrix("alpha @ beta deviates from identity by more than 1e-10")
    return InteractionMatrix(_frozen(alpha), _frozen(beta), cond)


def symmetric_alpha(gamma: float) -> np.ndarray:
    return np.array([[1.0, gamma], [gamma, 1.0]])


def asymmetric_alpha(gamma: float) -> np.ndarray:
    return np.array([[1.0, -gamma], [gamma, 1.0]])


def cole_hopf_forward(J, interaction: InteractionMatrix, max_exponent: float = DEFAULT_MAX_EXPONENT) -> np.ndarray:
    """Map stacked values ``J`` (leading axis = player) to desirabilities.

    ``Z_i = exp(-sum_j beta_ij J_j)``.  Trailing axes are carried along so a
    whole grid of values can be transformed at once.
    """
    J = np.asarray(J, dtype=float)
    if not np.all(np.isfinite(J)):
        raise ValueError("value vector must be finite")
    exponent = -np.tensordot(interaction.beta, J, axes=(1, 0))
    worst = float(np.max(np.abs(exponent))) if exponent.size else 0.0
    if worst > max_exponent:
        raise Overflow(f"Cole-Hopf exponent magnitude {worst:.3g} exceeds {max_exponent:.3g}")
    return np.exp(exponent)


def cole_hopf_inverse(Z, interaction: InteractionMatrix) -> np.ndarray:
    """Inverse map ``J_i = -sum_j alpha_ij log Z_j``."""
    Z = np.asarray(Z, dtype=float)
    if np.any(~(Z > 0)):
        raise NonPositiveDesirability("desirability values must be strictly positive")
    return -np.tensordot(interaction.alpha, np.log(Z), axes=(1, 0))


# --------------------------------------------------------------------------
# dynamics


@dataclass(frozen=True)
class DynamicsModel:
    """Drift ``f(x)`` from a built-in family and constant diffusion ``g``.

    drift_kind is one of ``"zero"``, ``"constant"`` (f = b) or ``"linear"``
    (f = A x + b).  ``g`` is always stored as an n x m matrix; the
    ``diffusion_kind`` tag only remembers how it was specified.
    """

    drift_kind: str
    g: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    diffusion_kind: str = "matrix"

    def __post_init__(self):
        g = _frozen(self.g, 2, "g")
        object.__setattr__(self, "g", g)
        n = g.shape[0]
        if self.drift_kind not in ("zero", "constant", "linear"):
            raise ValueError(f"unknown drift family {self.drift_kind!r}")
        if self.diffusion_kind not in ("scalar", "matrix"):
            raise ValueError(f"unknown diffusion family {self.diffusion_kind!r}")
        A, b = self.A, self.b
        if self.drift_kind == "zero":
            A, b = None, None
        if self.drift_kind in ("constant", "linear"):
            b = _frozen(np.zeros(n) if b is None else b, 1, "b")
            if b.shape != (n,):
                raise ValueError(f"drift offset b must have shape ({n},), got {b.shape}")
        if self.drift_kind == "linear":
            A = _frozen(A, 2, "A")
            if A.shape != (n, n):
                raise ValueError(f"drift matrix A must have shape ({n}, {n}), got {A.shape}")
        else:
            A = None
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def brownian(cls, sigma: float, dim: int = 1) -> "DynamicsModel":
        return cls("zero", float(sigma) * np.eye(dim), diffusion_kind="scalar")

    @property
    def state_dim(self) -> int:
        return self.g.shape[0]

    @property
    def input_dim(self) -> int:
        return self.g.shape[1]

    @property
    def sigma(self) -> float:
        """Scalar diffusion coefficient; only defined for 1-D state and input."""
        if self.g.shape != (1, 1):
            raise ValueError("scalar sigma only defined for n = m = 1")
        return float(self.g[0, 0])

    def drift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.drift_kind == "zero":
            return np.zeros_like(x)
        out = np.broadcast_to(self.b, x.shape)
        if self.drift_kind == "linear":
            out = (x[..., None, :] * self.A).sum(-1) + out
        return np.array(out)

    def transition_matrix(self, dt: float) -> np.ndarray:
        """One Euler step maps x to ``Phi x + (const)``; returns Phi."""
        n = self.state_dim
        if self.drift_kind == "linear":
            return np.eye(n) + self.A * dt
        return np.eye(n)


def apply_matrix(mat: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise ``mat @ v`` over leading axes of ``v``.

    Written as an explicit reduction so each row is computed identically no
    matter how many rows are stacked (BLAS kernels can differ by batch size).
    """
    return (v[..., None, :] * mat).sum(-1)


# --------------------------------------------------------------------------
# costs


@dataclass(frozen=True)
class CenterPath:
    kind: str  # "constant" or "linear"
    c: np.ndarray

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"unknown center path {self.kind!r}")
        object.__setattr__(self, "c", _frozen(self.c, 1, "center"))

    def at(self, t, horizon: float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.broadcast_to(self.c, t.shape + self.c.shape).copy()
        return (t / horizon)[..., None] * self.c


@dataclass(frozen=True)
class RunningCost:
    kind: str = "zero"  # "zero" or "quadratic_well"
    q: float = 0.0
    center: CenterPath | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "quadratic_well"):
            raise ValueError(f"unknown running cost {self.kind!r}")
        if self.kind == "quadratic_well":
            if not (self.q >= 0) or self.center is None:
                raise ValueError("quadratic_well needs q >= 0 and a center path")


@dataclass(frozen=True)
class TerminalCost:
    kind: str = "zero"  # "zero" or "quadratic"
    q_T: float = 0.0
    center: CenterPath | None = None
    offset: float = 0.0  # constant added to the quadratic

    def __post_init__(self):
        if self.kind not in ("zero", "quadratic"):
            raise ValueError(f"unknown terminal cost {self.kind!r}")
        if self.kind == "quadratic":
            if not (self.q_T >= 0) or self.center is None:
                raise ValueError("quadratic terminal cost needs q_T >= 0 and a center path")


@dataclass(frozen=True)
class CostModel:
    running: RunningCost = field(default_factory=RunningCost)
    terminal: TerminalCost = field(default_factory=TerminalCost)

    def running_value(self, t, x, horizon: float) -> np.ndarray:
        """``(q/2) |x - m(t)|^2``; ``t`` broadcasts against the leading axes of ``x``."""
        x = np.asarray(x, dtype=float)
        if self.running.kind == "zero":
            return np.zeros(x.shape[:-1])
        d = x - self.running.center.at(t, horizon)
        return 0.5 * self.running.q * (d * d).sum(-1)

    def terminal_value(self, x, horizon: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.terminal.kind == "zero":
            return np.zeros(x.shape[:-1])
        d = x - self.terminal.center.at(horizon, horizon)
        return 0.5 * self.terminal.q_T * (d * d).sum(-1) + self.terminal.offset

    def scaled(self, lam: float) -> "CostModel":
        return CostModel(
            replace(self.running, q=self.running.q * lam),
            replace(self.terminal, q_T=self.terminal.q_T * lam, offset=self.terminal.offset * lam),
        )

    @property
    def is_zero(self) -> bool:
        return self.running.kind == "zero" and self.terminal.kind == "zero"


def quadratic_well(q: float, c, kind: str = "linear") -> RunningCost:
    return RunningCost("quadratic_well", float(q), CenterPath(kind, np.atleast_1d(c)))


def quadratic_terminal(q_T: float, c, kind: str = "linear") -> TerminalCost:
    return TerminalCost("quadratic", float(q_T), CenterPath(kind, np.atleast_1d(c)))


# --------------------------------------------------------------------------
# game spec


@dataclass(frozen=True)
class GameSpec:
    players: int
    dynamics: DynamicsModel
    costs: tuple
    nominal_controls: tuple
    interaction: InteractionMatrix
    horizon: float
    dt: float
    initial_state: np.ndarray

    def __post_init__(self):
        n, m = self.dynamics.state_dim, self.dynamics.input_dim
        object.__setattr__(self, "costs", tuple(self.costs))
        noms = tuple(_frozen(u, 1, "nominal control") for u in self.nominal_controls)
        object.__setattr__(self, "nominal_controls", noms)
        x0 = _frozen(self.initial_state, 1, "initial_state")
        object.__setattr__(self, "initial_state", x0)
        if self.players < 1:
            raise ValueError("need at least one player")
        if self.interaction.players != self.players:
            raise ValueError(f"interaction is {self.interaction.players}x{self.interaction.players}, expected {self.players}")
        if len(self.costs) != self.players or len(noms) != self.players:
            raise ValueError("costs and nominal_controls must have one entry per player")
        for u in noms:
            if u.shape != (m,):
                raise ValueError(f"nominal control must have shape ({m},), got {u.shape}")
        if x0.shape != (n,):
            raise ValueError(f"initial_state must have shape ({n},), got {x0.shape}")
        for c in self.costs:
            for part in (c.running, c.terminal):
                if part.center is not None and part.center.c.shape != (n,):
                    raise ValueError("cost center dimension does not match state dimension")
        if not (self.horizon > 0):
            raise ValueError("horizon must be positive")
        if not (0 < self.dt <= self.horizon):
            raise ValueError("dt must satisfy 0 < dt <= horizon")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"horizon/dt = {steps!r} is not an integer number of steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def state_dim(self) -> int:
        return self.dynamics.state_dim

    @property
    def input_dim(self) -> int:
        return self.dynamics.input_dim

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def step_index(self, t: float) -> int:
        """Grid index of time ``t``; raises ``OffGridTime`` if ``t`` is not on the grid."""
        k = t / self.dt
        kr = round(k)
        if abs(k - kr) > 1e-7 or kr < 0 or kr > self.n_steps:
            raise OffGridTime(f"time {t!r} is not on the grid of step {self.dt!r} over [0, {self.horizon!r}]")
        return int(kr)

    def with_alpha(self, alpha, cond_bound: float = DEFAULT_COND_BOUND) -> "GameSpec":
        return replace(self, interaction=build_interaction_matrix(alpha, cond_bound))

    def with_costs(self, costs: Sequence[CostModel]) -> "GameSpec":
        return replace(self, costs=tuple(costs))

    def running_cost(self, j: int, t, x) -> np.ndarray:
        return self.costs[j].running_value(t, x, self.horizon)

    def terminal_cost(self, j: int, x) -> np.ndarray:
        return self.costs[j].terminal_value(x, self.horizon)

    def to_dict(self) -> dict:
        return spec_to_dict(self)

    def to_json(self, path=None, indent: int = 2) -> str:
        text = json.dumps(self.to_dict(), indent=indent)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def mixed_running_cost(spec: GameSpec, i: int, t, x) -> np.ndarray:
    """``sum_j beta_ij C_t^j(x)``; may be negative when off-diagonal beta is negative."""
    beta = spec.interaction.beta
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[:-1])
    for j in range(spec.players):
        if beta[i, j] != 0.0:
            total = total + beta[i, j] * spec.running_cost(j, t, x)
    return total


def mixed_terminal_cost(spec: GameSpec, i: int, x) -> np.ndarray:
    beta = spec.interaction.beta
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[:-1])
    for j in range(spec.players):
        if beta[i, j] != 0.0:
            total = total + beta[i, j] * spec.terminal_cost(j, x)
    return total


def moving_wells_spec(
    gamma: float = 0.0,
    *,
    asymmetric: bool = False,
    sigma: float = 1.0,
    q: float = 1.0,
    q_T: float = 1.0,
    a: float = 1.0,
    horizon: float = 1.0,
    dt: float = 0.005,
    x0: float = 0.0,
) -> GameSpec:
    """Two players on the real line, driftless reference ``dx = sigma dw``.

    Player 1's well centre moves from 0 to ``-a`` and player 2's from 0 to
    ``+a``, both linearly in time.  ``gamma`` sets the off-diagonal coupling;
    ``asymmetric`` flips the sign of the (1, 2) entry.
    """
    alpha = asymmetric_alpha(gamma) if asymmetric else symmetric_alpha(gamma)
    costs = tuple(
        CostModel(quadratic_well(q, [c]), quadratic_terminal(q_T, [c]))
        for c in (-a, a)
    )
    return GameSpec(
        players=2,
        dynamics=DynamicsModel.brownian(sigma),
        costs=costs,
        nominal_controls=(np.zeros(1), np.zeros(1)),
        interaction=build_interaction_matrix(alpha),
        horizon=horizon,
        dt=dt,
        initial_state=np.array([x0]),
    )


def gaussian_benchmark_spec(sigma: float = 1.0, horizon: float = 0.25, dt: float = 0.0125) -> GameSpec:
    """Single player, no running cost, terminal cost ``x^2``.

    ``Z(0, x) = exp(-x^2 / (1 + 2 sigma^2 T)) / sqrt(1 + 2 sigma^2 T)``.
    """
    cost = CostModel(RunningCost(), quadratic_terminal(2.0, [0.0], kind="constant"))
    return GameSpec(
        players=1,
        dynamics=DynamicsModel.brownian(sigma),
        costs=(cost,),
        nominal_controls=(np.zeros(1),),
        interaction=build_interaction_matrix([[1.0]]),
        horizon=horizon,
        dt=dt,
        initial_state=np.zeros(1),
    )


def gaussian_benchmark_z(x, sigma: float = 1.0, horizon: float = 0.25):
    s = 1.0 + 2.0 * sigma**2 * horizon
    return np.exp(-np.asarray(x, dtype=float) ** 2 / s) / np.sqrt(s)


# --------------------------------------------------------------------------
# JSON round trip

_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}
_CENTER = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type", "c"],
    "properties": {"type": {"enum": ["constant", "linear"]}, "c": _VEC},
}

GAME_SPEC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["players", "horizon", "dt", "initial_state", "dynamics", "costs", "nominal_controls", "alpha"],
    "properties": {
        "players": {"type": "integer", "minimum": 1},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "initial_state": _VEC,
        "dynamics": {
            "type": "object",
            "additionalProperties": False,
            "required": ["drift", "diffusion"],
            "properties": {
                "drift": {
                    "oneOf": [
                        {"type": "object", "additionalProperties": False, "required": ["type"],
                         "properties": {"type": {"const": "zero"}}},
                        {"type": "object", "additionalProperties": False, "required": ["type", "b"],
                         "properties": {"type": {"const": "constant"}, "b": _VEC}},
                        {"type": "object", "additionalProperties": False, "required": ["type", "A", "b"],
                         "properties": {"type": {"const": "linear"}, "A": _MAT, "b": _VEC}},
                    ]
                },
                "diffusion": {
                    "oneOf": [
                        {"type": "object", "additionalProperties": False, "required": ["type", "sigma"],
                         "properties": {"type": {"const": "scalar"}, "sigma": {"type": "number"}}},
                        {"type": "object", "additionalProperties": False, "required": ["type", "g"],
                         "properties": {"type": {"const": "matrix"}, "g": _MAT}},
                    ]
                },
            },
        },
        "costs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["running", "terminal"],
                "properties": {
                    "running": {
                        "oneOf": [
                            {"type": "object", "additionalProperties": False, "required": ["type"],
                             "properties": {"type": {"const": "zero"}}},
                            {"type": "object", "additionalProperties": False, "required": ["type", "q", "center"],
                             "properties": {"type": {"const": "quadratic_well"},
                                            "q": {"type": "number", "minimum": 0}, "center": _CENTER}},
                        ]
                    },
                    "terminal": {
                        "oneOf": [
                            {"type": "object", "additionalProperties": False, "required": ["type"],
                             "properties": {"type": {"const": "zero"}}},
                            {"type": "object", "additionalProperties": False, "required": ["type", "q_T", "center"],
                             "properties": {"type": {"const": "quadratic"},
                                            "q_T": {"type": "number", "minimum": 0}, "center": _CENTER,
                                            "offset": {"type": "number"}}},
                        ]
                    },
                },
            },
        },
        "nominal_controls": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {"type": "object", "additionalProperties": False, "required": ["type"],
                     "properties": {"type": {"const": "zero"}}},
                    {"type": "object", "additionalProperties": False, "required": ["type", "value"],
                     "properties": {"type": {"const": "constant"}, "value": _VEC}},
                ]
            },
        },
        "alpha": _MAT,
    },
}


def schema_problems(doc, schema) -> list[str]:
    """Every schema violation as ``"<json path>: <message>"``, in a stable order."""
    validator = jsonschema.Draft202012Validator(schema)
    problems = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message)):
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
        problems.append(f"{path}: {err.message}")
    return problems


def _center_to_dict(center: CenterPath) -> dict:
    return {"type": center.kind, "c": center.c.tolist()}


def spec_to_dict(spec: GameSpec) -> dict:
    dyn = spec.dynamics
    if dyn.drift_kind == "zero":
        drift = {"type": "zero"}
    elif dyn.drift_kind == "constant":
        drift = {"type": "constant", "b": dyn.b.tolist()}
    else:
        drift = {"type": "linear", "A": dyn.A.tolist(), "b": dyn.b.tolist()}
    if dyn.diffusion_kind == "scalar":
        diffusion = {"type": "scalar", "sigma": float(dyn.g[0, 0])}
    else:
        diffusion = {"type": "matrix", "g": dyn.g.tolist()}
    costs = []
    for c in spec.costs:
        if c.running.kind == "zero":
            running = {"type": "zero"}
        else:
            running = {"type": "quadratic_well", "q": c.running.q, "center": _center_to_dict(c.running.center)}
        if c.terminal.kind == "zero":
            terminal = {"type": "zero"}
        else:
            terminal = {"type": "quadratic", "q_T": c.terminal.q_T, "center": _center_to_dict(c.terminal.center)}
            if c.terminal.offset:
                terminal["offset"] = c.terminal.offset
        costs.append({"running": running, "terminal": terminal})
    noms = [
        {"type": "zero"} if not np.any(u) else {"type": "constant", "value": u.tolist()}
        for u in spec.nominal_controls
    ]
    return {
        "players": spec.players,
        "horizon": spec.horizon,
        "dt": spec.dt,
        "initial_state": spec.initial_state.tolist(),
        "dynamics": {"drift": drift, "diffusion": diffusion},
        "costs": costs,
        "nominal_controls": noms,
        "alpha": spec.interaction.alpha.tolist(),
    }


def spec_from_dict(doc: dict, cond_bound: float = DEFAULT_COND_BOUND) -> GameSpec:
    """Build a ``GameSpec`` from its JSON document; raises ``ConfigError`` listing every problem."""
    problems = schema_problems(doc, GAME_SPEC_SCHEMA)
    if problems:
        raise ConfigError(problems)
    n = len(doc["initial_state"])
    dyn_doc = doc["dynamics"]
    diff = dyn_doc["diffusion"]
    if diff["type"] == "scalar":
        g = float(diff["sigma"]) * np.eye(n)
    else:
        g = np.array(diff["g"], dtype=float)
    drift = dyn_doc["drift"]
    try:
        dynamics = DynamicsModel(
            drift["type"], g, A=drift.get("A"), b=drift.get("b"), diffusion_kind=diff["type"]
        )
        costs = []
        for c in doc["costs"]:
            r, t = c["running"], c["terminal"]
            running = RunningCost() if r["type"] == "zero" else RunningCost(
                "quadratic_well", float(r["q"]), CenterPath(r["center"]["type"], r["center"]["c"]))
            terminal = TerminalCost() if t["type"] == "zero" else TerminalCost(
                "quadratic", float(t["q_T"]), CenterPath(t["center"]["type"], t["center"]["c"]),
                float(t.get("offset", 0.0)))
            costs.append(CostModel(running, terminal))
        m = g.shape[1] if g.ndim == 2 else 0
        noms = [np.zeros(m) if u["type"] == "zero" else np.array(u["value"], dtype=float)
                for u in doc["nominal_controls"]]
        interaction = build_interaction_matrix(doc["alpha"], cond_bound)
        return GameSpec(
            players=int(doc["players"]),
            dynamics=dynamics,
            costs=tuple(costs),
            nominal_controls=tuple(noms),
            interaction=interaction,
            horizon=float(doc["horizon"]),
            dt=float(doc["dt"]),
            initial_state=np.array(doc["initial_state"], dtype=float),
        )
    except (SingularMatrix, NonPositiveDiagonal) as exc:
        raise ConfigError([f"$.alpha: {exc}"]) from exc
    except ValueError as exc:
        raise ConfigError([f"$: {exc}"]) from exc


def spec_from_json(source) -> GameSpec:
    """Load from a path or a JSON string."""
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        text = Path(source).read_text()
    return spec_from_dict(json.loads(text))
