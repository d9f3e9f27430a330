"""Command-line entry point.

Exit codes: 0 on success, 1 for usage or configuration errors, 2 for runtime
or numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .desirability import estimate_Z_field, point_seed
from .errors import ConfigError, GameError
from .experiments import DEFAULT_CONFIG, load_config, run_experiment
from .measure_recovery import cost_equivalence_check, densities_to_csv, expectation_distance, mean_curve, tilt_weights, weighted_density
from .oracles import default_grid, hjb_residual, riccati_desirability_reference, solve_linear_pde_fd
from .pi_control import control_estimate, equilibrium_policies
from .sde_engine import STREAM_PATHS, derive_seed, rollout_reference

SCHEMA_HELP = f"""\
Config files are JSON with top-level keys:
  spec      game definition (players, horizon, dt, initial_state, dynamics,
            costs, nominal_controls, alpha)
  gammas    list of interaction strengths in (-1, 1)
  asymmetric  optional bool; alpha = [[1, -g], [g, 1]] instead of [[1, g], [g, 1]]
  sampling  {{M_reference, M_policy, M_ensemble, seed[, ess_floor, interp_nodes, quadrature]}}
  outputs   {{directory[, kde_bandwidth, query_grid, density_times, fd_grid]}}
A bare game definition is accepted too and gets default sampling/outputs.
Shipped example: {DEFAULT_CONFIG}
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("path count must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="experiment or game JSON")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS, help="override the configured seed")
    common.add_argument("--paths", type=_positive, default=argparse.SUPPRESS, help="Monte Carlo path count")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="only print results")

    parser = _Parser(prog="lsdg", description="Linearly solvable stochastic differential games.",
                     epilog=SCHEMA_HELP, formatter_class=argparse.RawDescriptionHelpFormatter, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, parents=[common], description=help_text)

    p = add("validate", "check a config file against the schema")
    p.add_argument("path", type=Path, nargs="?", help="config to check (default: --config)")

    def point_args(p, x_many=False):
        p.add_argument("--player", type=int, default=0)
        p.add_argument("--gamma", type=float, default=None, help="use the sweep alpha for this gamma")
        p.add_argument("--t", type=float, default=0.0)
        p.add_argument("--x", type=_floats, default=None, help="state(s); comma-separated" if x_many else "state vector")

    p = add("sample", "reference rollouts to CSV")
    point_args(p)
    p = add("desirability", "Monte Carlo Z at query points (1-D: one state per value of --x)")
    point_args(p, x_many=True)
    p = add("control", "one path-integral control query")
    point_args(p)
    p = add("reweight", "tilted reference ensemble statistics")
    p.add_argument("--gamma", type=float, default=None)
    p = add("oracle", "finite-difference and Riccati solves with a comparison report")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--nx", type=int, default=None)
    p.add_argument("--nt", type=int, default=None)
    add("experiment", "run the full gamma sweep and write artifacts")
    p = add("equivalence", "compare measure-form and control-form costs")
    p.add_argument("--gamma", type=float, default=None)
    return parser


def _spec(config, gamma):
    return config.spec if gamma is None else config.spec_for(gamma)


def _state(spec, x):
    if x is None:
        return np.array(spec.initial_state)
    x = np.asarray(x, dtype=float)
    if x.size != spec.state_dim:
        raise ConfigError([f"--x: expected {spec.state_dim} value(s), got {x.size}"])
    return x


def _emit(obj, out_dir: Path | None, name: str) -> None:
    text = json.dumps(obj, indent=2)
    print(text)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / name).write_text(text + "\n")


def _seed(args, config):
    return getattr(args, "seed", config.sampling.seed)


def cmd_validate(args) -> int:
    path = args.path or getattr(args, "config", None) or DEFAULT_CONFIG
    load_config(path)
    print(f"{path}: valid")
    return 0


def cmd_sample(args, config) -> int:
    spec = _spec(config, args.gamma)
    M = getattr(args, "paths", 100)
    batch = rollout_reference(spec, args.player, args.t, _state(spec, args.x), M,
                              derive_seed(_seed(args, config), STREAM_PATHS, args.player))
    out = getattr(args, "out", Path("."))
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trajectories.csv"
    batch.to_csv(path)
    print(f"wrote {M} paths x {batch.n_steps + 1} steps to {path}")
    return 0


def cmd_desirability(args, config) -> int:
    spec = _spec(config, args.gamma)
    M = getattr(args, "paths", config.sampling.M_reference)
    if args.x is None:
        xs = [np.array(spec.initial_state)]
    elif spec.state_dim == 1:
        xs = [np.array([v]) for v in args.x]
    else:
        xs = [_state(spec, args.x)]
    seed = _seed(args, config)
    ests = estimate_Z_field(spec, args.player, args.t, xs, M, seed, ess_floor=config.sampling.ess_floor,
                            quadrature=config.sampling.quadrature)
    rows = [{"x": x.tolist(), "Z": e.value, "std_error": e.std_error, "ess": e.ess, "seed": point_seed(seed, k)}
            for k, (x, e) in enumerate(zip(xs, ests))]
    _emit({"player": args.player, "t": args.t, "M": M, "points": rows}, getattr(args, "out", None), "desirability.json")
    return 0


def cmd_control(args, config) -> int:
    spec = _spec(config, args.gamma)
    M = getattr(args, "paths", config.sampling.M_policy)
    x = _state(spec, args.x)
    est = control_estimate(spec, args.player, args.t, x, M, _seed(args, config), ess_floor=config.sampling.ess_floor,
                           quadrature=config.sampling.quadrature)
    _emit({"player": args.player, "t": args.t, "x": x.tolist(), "control": est.value.tolist(),
           "std_error": est.std_error.tolist(), "nominal": spec.nominal_controls[args.player].tolist(),
           "ess": est.ess, "M": M}, getattr(args, "out", None), "control.json")
    return 0


def cmd_reweight(args, config) -> int:
    spec = _spec(config, args.gamma)
    M = getattr(args, "paths", config.sampling.M_reference)
    seed = _seed(args, config)
    out = getattr(args, "out", None)
    report, ensembles, curves = {"M": M, "players": []}, [], []
    for i in range(spec.players):
        batch = rollout_reference(spec, i, 0.0, spec.initial_state, M, derive_seed(seed, STREAM_PATHS, i),
                                  store_noise=False)
        ens = tilt_weights(batch, spec, i, ess_floor=config.sampling.ess_floor, quadrature=config.sampling.quadrature)
        ensembles.append(ens)
        mc = mean_curve(ens)
        report["players"].append({"player": i, "ess": ens.ess, "terminal_mean": mc.mean[-1].tolist(),
                                  "terminal_mean_se": mc.std_error[-1].tolist()})
        if spec.state_dim == 1:
            curves.append((i, weighted_density(ens, spec.horizon, config.query_grid, config.outputs.kde_bandwidth)))
    if spec.players == 2:
        d = expectation_distance(ensembles)
        report.update(terminal_distance=float(d.distance[-1]), terminal_distance_se=float(d.std_error[-1]))
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            d.to_csv(out / "distance.csv")
    if out is not None and curves:
        out.mkdir(parents=True, exist_ok=True)
        densities_to_csv(curves, out / "terminal_density.csv")
    _emit(report, out, "reweight.json")
    return 0


def cmd_oracle(args, config) -> int:
    spec = _spec(config, args.gamma)
    nx, nt = config.outputs.fd_grid
    grid = default_grid(spec, args.nx or nx, args.nt or nt)
    x0 = spec.initial_state
    report = {"grid": {"x_min": grid.x_min, "x_max": grid.x_max, "nx": grid.nx, "nt": grid.nt}, "players": []}
    fields = []
    for i in range(spec.players):
        field = solve_linear_pde_fd(spec, i, grid, probe_points=x0)
        fields.append(field)
        z_fd = float(field.value(0.0, x0)[0])
        z_ref = float(np.exp(-riccati_desirability_reference(spec, i).value(0.0, x0[0])))
        report["players"].append({"player": i, "x0": float(x0[0]), "Z_fd": z_fd, "Z_riccati": z_ref,
                                  "rel_err": abs(z_fd - z_ref) / z_ref})
    report["hjb_max_scaled"] = [r.max_scaled for r in hjb_residual(spec, fields)]
    _emit(report, getattr(args, "out", None), "oracle.json")
    return 0


def cmd_experiment(args, config) -> int:
    if hasattr(args, "seed"):
        config = config.replace(**{"sampling.seed": args.seed})
    if hasattr(args, "paths"):
        config = config.replace(**{"sampling.M_reference": args.paths})
    out = getattr(args, "out", None)
    manifest = run_experiment(config, out)
    target = out if out is not None else Path(config.outputs.directory)
    print(f"wrote {len(manifest['files'])} files to {target} (config {manifest['config_hash'][:12]})")
    return 0


def cmd_equivalence(args, config) -> int:
    spec = _spec(config, args.gamma)
    s = config.sampling
    M = getattr(args, "paths", s.M_ensemble)
    seed = _seed(args, config)
    own = equilibrium_policies(spec, s.M_policy, seed, ess_floor=s.ess_floor, interp_nodes=s.interp_nodes,
                               quadrature=s.quadrature)
    cross = equilibrium_policies(spec, s.M_policy, seed, ess_floor=1.0, interp_nodes=s.interp_nodes,
                                 quadrature=s.quadrature)
    results = cost_equivalence_check(spec, own, M, seed, quadrature=s.quadrature, cross_policies=cross)
    rows = [{"player": r.player, "J_measure": r.J_measure, "se_measure": r.se_measure, "J_control": r.J_control,
             "se_control": r.se_control, "difference": r.difference, "se_combined": r.se_combined,
             "se_paired": r.se_paired} for r in results]
    _emit({"M": M, "players": rows}, getattr(args, "out", None), "equivalence.json")
    return 0


COMMANDS = {
    "sample": cmd_sample,
    "desirability": cmd_desirability,
    "control": cmd_control,
    "reweight": cmd_reweight,
    "oracle": cmd_oracle,
    "experiment": cmd_experiment,
    "equivalence": cmd_equivalence,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        print(parser.format_usage() + "\n" + SCHEMA_HELP, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args)
        config = load_config(getattr(args, "config", DEFAULT_CONFIG))
        return COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  {problem}", file=sys.stderr)
        print("\n" + SCHEMA_HELP, file=sys.stderr)
        return 1
    except (GameError, ArithmeticError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
