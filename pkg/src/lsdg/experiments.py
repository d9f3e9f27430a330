"""Configuration loading and the two-player moving-wells experiment suite.

``run_experiment`` writes every artifact into a staging directory and only
moves it into place when the whole run has succeeded, so a failed run leaves
no partial output behind.  All floats are written with ``repr`` and every
random draw is keyed from the configured seed, so a rerun with the same
configuration reproduces the files byte for byte.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .desirability import DEFAULT_ESS_FLOOR, estimate_Z
from .errors import ConfigError
from .game_model import (
    GAME_SPEC_SCHEMA,
    GameSpec,
    asymmetric_alpha,
    schema_problems,
    spec_from_dict,
    symmetric_alpha,
)
from .measure_recovery import (
    WeightedEnsemble,
    compare_perspectives,
    expectation_distance,
    mean_curve,
    tilt_weights,
    weighted_density,
)
from .oracles import default_grid, hjb_residual, riccati_desirability_reference, solve_linear_pde_fd
from .pi_control import nash_closed_loop
from .sde_engine import STREAM_PATHS, TrajectoryBatch, derive_seed, rollout_reference

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_CONFIG = DATA_DIR / "default_experiment.json"

_spec_schema = {k: v for k, v in GAME_SPEC_SCHEMA.items() if k != "$schema"}

EXPERIMENT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["spec", "gammas", "sampling", "outputs"],
    "properties": {
        "description": {"type": "string"},
        "spec": _spec_schema,
        "gammas": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
        },
        "asymmetric": {"type": "boolean"},
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "required": ["M_reference", "M_policy", "M_ensemble", "seed"],
            "properties": {
                "M_reference": {"type": "integer", "minimum": 1},
                "M_policy": {"type": "integer", "minimum": 1},
                "M_ensemble": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "ess_floor": {"type": "number", "minimum": 1},
                "interp_nodes": {"type": ["integer", "null"], "minimum": 3},
                "quadrature": {"enum": ["left", "trapezoid"]},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "required": ["directory"],
            "properties": {
                "directory": {"type": "string", "minLength": 1},
                "kde_bandwidth": {"oneOf": [{"const": "auto"}, {"type": "number", "exclusiveMinimum": 0}]},
                "query_grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["x_min", "x_max", "points"],
                    "properties": {
                        "x_min": {"type": "number"},
                        "x_max": {"type": "number"},
                        "points": {"type": "integer", "minimum": 2},
                    },
                },
                "density_times": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
                "fd_grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["nx", "nt"],
                    "properties": {"nx": {"type": "integer", "minimum": 3}, "nt": {"type": "integer", "minimum": 1}},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class Sampling:
    M_reference: int
    M_policy: int
    M_ensemble: int
    seed: int
    ess_floor: float = DEFAULT_ESS_FLOOR
    interp_nodes: int | None = 129
    quadrature: str = "left"


@dataclass(frozen=True)
class Outputs:
    directory: str
    kde_bandwidth: float | str = "auto"
    query_grid: tuple[float, float, int] = (-6.0, 6.0, 241)
    density_times: tuple[float, ...] | None = None
    fd_grid: tuple[int, int] = (801, 800)


@dataclass(frozen=True)
class ExperimentConfig:
    spec: GameSpec
    gammas: tuple[float, ...]
    sampling: Sampling
    outputs: Outputs
    asymmetric: bool = False
    document: dict = field(default_factory=dict, compare=False, repr=False)

    def alpha_for(self, gamma: float) -> np.ndarray:
        """Two-player alpha for ``gamma``; a single-player game keeps its own alpha."""
        if self.spec.players == 1:
            return np.array(self.spec.interaction.alpha)
        if self.spec.players != 2:
            raise ConfigError(["$.spec.players: the gamma sweep needs exactly 2 players"])
        return asymmetric_alpha(gamma) if self.asymmetric else symmetric_alpha(gamma)

    def spec_for(self, gamma: float) -> GameSpec:
        return self.spec.with_alpha(self.alpha_for(gamma))

    @property
    def query_grid(self) -> np.ndarray:
        lo, hi, n = self.outputs.query_grid
        return np.linspace(lo, hi, n)

    def density_times(self) -> list[float]:
        """Configured density times snapped to the simulation grid (default: every tenth of the horizon)."""
        spec = self.spec
        times = self.outputs.density_times
        if times is None:
            times = [spec.horizon * k / 10 for k in range(1, 11)]
        return [float(spec.times[spec.step_index(t)]) for t in times]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.document)

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.document).encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        """New config with top-level, ``sampling.*`` or ``outputs.*`` keys overridden (dotted names)."""
        doc = self.to_dict()
        for key, value in changes.items():
            target = doc
            parts = key.split(".")
            for p in parts[:-1]:
                target = target.setdefault(p, {})
            target[parts[-1]] = value
        return config_from_dict(doc)


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Validate and build; ``ConfigError.problems`` lists every schema violation."""
    problems = schema_problems(doc, EXPERIMENT_SCHEMA)
    if problems:
        raise ConfigError(problems)
    try:
        spec = spec_from_dict(doc["spec"])
    except ConfigError as exc:
        raise ConfigError([p.replace("$", "$.spec", 1) for p in exc.problems]) from exc
    s = doc["sampling"]
    sampling = Sampling(
        int(s["M_reference"]), int(s["M_policy"]), int(s["M_ensemble"]), int(s["seed"]),
        float(s.get("ess_floor", DEFAULT_ESS_FLOOR)), s.get("interp_nodes", 129), s.get("quadrature", "left"),
    )
    o = doc["outputs"]
    qg = o.get("query_grid", {"x_min": -6.0, "x_max": 6.0, "points": 241})
    if not qg["x_min"] < qg["x_max"]:
        raise ConfigError(["$.outputs.query_grid: x_min must be below x_max"])
    fd = o.get("fd_grid", {"nx": 801, "nt": 800})
    outputs = Outputs(
        o["directory"], o.get("kde_bandwidth", "auto"), (float(qg["x_min"]), float(qg["x_max"]), int(qg["points"])),
        tuple(o["density_times"]) if "density_times" in o else None, (int(fd["nx"]), int(fd["nt"])),
    )
    config = ExperimentConfig(spec, tuple(float(g) for g in doc["gammas"]), sampling, outputs,
                              bool(doc.get("asymmetric", False)), copy.deepcopy(doc))
    try:
        config.density_times()
    except ValueError as exc:
        raise ConfigError([f"$.outputs.density_times: {exc}"]) from exc
    return config


def load_config(source) -> ExperimentConfig:
    """Experiment config from a path or JSON text.  A bare game document is wrapped with default settings."""
    text = str(source)
    if not text.lstrip().startswith("{"):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigError([f"$: cannot read {source}: {exc.strerror}"]) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"$: invalid JSON ({exc})"]) from exc
    if isinstance(doc, dict) and "spec" not in doc and "players" in doc:
        wrapped = json.loads(DEFAULT_CONFIG.read_text())
        wrapped["spec"] = doc
        doc = wrapped
    return config_from_dict(doc)


def default_config() -> ExperimentConfig:
    return load_config(DEFAULT_CONFIG)


# --------------------------------------------------------------------------
# running


@dataclass
class RegimeResult:
    gamma: float
    spec: GameSpec
    tilted: list[WeightedEnsemble]
    controlled: list[TrajectoryBatch]


def reference_batches(config: ExperimentConfig) -> list[TrajectoryBatch]:
    """One reference batch per player; the reference law does not depend on alpha so they are shared by all regimes."""
    spec = config.spec
    s = config.sampling
    return [
        rollout_reference(spec, i, 0.0, spec.initial_state, s.M_reference, derive_seed(s.seed, STREAM_PATHS, i),
                          store_noise=False)
        for i in range(spec.players)
    ]


def run_regime(config: ExperimentConfig, gamma: float, references: list[TrajectoryBatch]) -> RegimeResult:
    s = config.sampling
    spec = config.spec_for(gamma)
    tilted = [tilt_weights(b, spec, i, ess_floor=s.ess_floor, quadrature=s.quadrature) for i, b in enumerate(references)]
    controlled = nash_closed_loop(spec, s.M_policy, s.M_ensemble, s.seed, ess_floor=s.ess_floor,
                                  interp_nodes=s.interp_nodes, quadrature=s.quadrature)
    return RegimeResult(gamma, spec, tilted, controlled)


def _r(v) -> str:
    return repr(float(v))


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        out.writerows(rows)


def _density_rows(config: ExperimentConfig, results: list[RegimeResult], source: str, times):
    grid = config.query_grid
    bw = config.outputs.kde_bandwidth
    for res in results:
        ensembles = res.tilted if source == "tilted" else res.controlled
        for i, ens in enumerate(ensembles):
            for t in times:
                curve = weighted_density(ens, t, grid, bw)
                for x, d in zip(curve.x, curve.density):
                    yield [_r(res.gamma), i, _r(t), _r(x), _r(d)]


def _regime_validation(config: ExperimentConfig, res: RegimeResult) -> dict:
    spec = res.spec
    s = config.sampling
    report = {"gamma": res.gamma, "alpha": spec.interaction.alpha.tolist(), "players": []}
    one_d = spec.state_dim == 1 and spec.input_dim == 1
    fields = []
    comparisons = [compare_perspectives(t, c) for t, c in zip(res.tilted, res.controlled)]
    a_scale = max((float(np.max(np.abs(c.terminal.center.c))) for c in spec.costs if c.terminal.center is not None),
                  default=1.0)
    for i in range(spec.players):
        entry = {"player": i, "ess": res.tilted[i].ess}
        z = estimate_Z(res.tilted[i].batch, spec, i, ess_floor=s.ess_floor, quadrature=s.quadrature)
        entry.update(Z0_mc=z.value, Z0_mc_se=z.std_error)
        cmp = comparisons[i]
        tol = np.maximum(0.05 * a_scale, 4 * cmp.se_combined)
        entry.update(
            terminal_mean_tilted=float(cmp.mean_tilted[-1]),
            terminal_mean_controlled=float(cmp.mean_controlled[-1]),
            max_abs_mean_gap=float(cmp.abs_diff.max()),
            max_gap_over_tolerance=float((cmp.abs_diff / tol).max()),
        )
        if one_d:
            nx, nt = config.outputs.fd_grid
            field_i = solve_linear_pde_fd(spec, i, default_grid(spec, nx, nt), probe_points=spec.initial_state)
            fields.append(field_i)
            z_fd = float(field_i.value(0.0, spec.initial_state)[0])
            entry.update(Z0_fd=z_fd, Z0_rel_err=abs(z.value - z_fd) / z_fd)
            ric = riccati_desirability_reference(spec, i)
            mean_ref = ric.mean_path(float(spec.initial_state[0]), cmp.t)
            entry.update(
                Z0_riccati=float(np.exp(-ric.value(0.0, spec.initial_state[0]))),
                max_abs_dev_tilted_vs_riccati_mean=float(np.max(np.abs(cmp.mean_tilted - mean_ref))),
                max_abs_dev_controlled_vs_riccati_mean=float(np.max(np.abs(cmp.mean_controlled - mean_ref))),
            )
        report["players"].append(entry)
    if one_d and fields:
        report["hjb_max_scaled"] = [r.max_scaled for r in hjb_residual(spec, fields)]
    if spec.players == 2:
        dist = expectation_distance(res.tilted)
        dist_c = expectation_distance(res.controlled)
        report.update(terminal_distance=float(dist.distance[-1]), terminal_distance_se=float(dist.std_error[-1]),
                      terminal_distance_controlled=float(dist_c.distance[-1]),
                      terminal_distance_controlled_se=float(dist_c.std_error[-1]))
        sym = symmetry_statistic(res.tilted)
        report.update(symmetry_max_over_se=float(np.max(sym[0] / np.maximum(sym[1], 1e-300))))
        if one_d:
            t = dist.t
            m = [riccati_desirability_reference(spec, i).mean_path(float(spec.initial_state[0]), t) for i in range(2)]
            report["terminal_distance_riccati"] = float(abs(m[0][-1] - m[1][-1]))
    return report


def symmetry_statistic(ensembles) -> tuple[np.ndarray, np.ndarray]:
    """``|E_1[x_t] + E_2[x_t]|`` (first coordinate) and its standard error, per grid time.

    Zero in expectation when the two players' mean paths are mirror images.
    """
    c1, c2 = mean_curve(ensembles[0]), mean_curve(ensembles[1])
    return np.abs(c1.mean[:, 0] + c2.mean[:, 0]), np.hypot(c1.std_error[:, 0], c2.std_error[:, 0])


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Run every gamma regime and write the artifact set; returns the manifest.

    Files: ``densities.csv`` and ``densities_controlled.csv`` (gamma, player,
    t, x, density), ``terminal_densities.csv`` (same columns, t = T),
    ``distances.csv`` and ``distances_controlled.csv`` (gamma, t, distance),
    ``consistency.csv`` (gamma, player, t, mean_tilted, mean_controlled,
    se_combined), ``validation.json`` and ``manifest.json``.
    """
    out = Path(out_dir if out_dir is not None else config.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        references = reference_batches(config)
        results = []
        for gamma in config.gammas:
            log.info("regime gamma=%s", gamma)
            results.append(run_regime(config, gamma, references))
        times = config.density_times()
        header = ["gamma", "player", "t", "x", "density"]
        _write_rows(staging / "densities.csv", header, _density_rows(config, results, "tilted", times))
        _write_rows(staging / "densities_controlled.csv", header, _density_rows(config, results, "controlled", times))
        _write_rows(staging / "terminal_densities.csv", header,
                    _density_rows(config, results, "tilted", [config.spec.horizon]))
        if config.spec.players == 2:
            for name, attr in (("distances.csv", "tilted"), ("distances_controlled.csv", "controlled")):
                rows = []
                for res in results:
                    d = expectation_distance(getattr(res, attr))
                    rows += [[_r(res.gamma), _r(t), _r(v)] for t, v in zip(d.t, d.distance)]
                _write_rows(staging / name, ["gamma", "t", "distance"], rows)
        rows = []
        for res in results:
            for i, (tl, ct) in enumerate(zip(res.tilted, res.controlled)):
                c = compare_perspectives(tl, ct)
                rows += [[_r(res.gamma), i, _r(t), _r(a), _r(b), _r(e)]
                         for t, a, b, e in zip(c.t, c.mean_tilted, c.mean_controlled, c.se_combined)]
        _write_rows(staging / "consistency.csv",
                    ["gamma", "player", "t", "mean_tilted", "mean_controlled", "se_combined"], rows)
        validation = {
            "asymmetric": config.asymmetric,
            "seed": config.sampling.seed,
            "regimes": [_regime_validation(config, res) for res in results],
        }
        _json_dump(validation, staging / "validation.json")
        _json_dump(config.to_dict(), staging / "config.json")
        files = sorted(p.name for p in staging.iterdir())
        manifest = {
            "files": [{"path": name, "sha256": _sha256(staging / name)} for name in files],
            "config_hash": config.config_hash(),
            "seed": config.sampling.seed,
        }
        _json_dump(manifest, staging / "manifest.json")
        for name in files + ["manifest.json"]:
            (staging / name).replace(out / name)
        return manifest
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def verify_manifest(out_dir) -> list[str]:
    """Problems found when checking a manifest against the files next to it (empty when intact)."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    problems = []
    for entry in manifest["files"]:
        p = out / entry["path"]
        if not p.exists():
            problems.append(f"{entry['path']}: missing")
        elif _sha256(p) != entry["sha256"]:
            problems.append(f"{entry['path']}: checksum mismatch")
    return problems
