"""Command-line front end: chain simulation/validation, solving, convergence.

Subcommands
-----------
* ``chain simulate`` writes one exact chain path as CSV.
* ``chain validate`` runs the statistical chain checks (exit 1 on failure).
* ``solve`` runs one coupled sample of the configured schemes and writes
  chain, Brownian, and per-scheme solution CSVs on the uniform grid.
* ``converge`` runs the strong-error experiment and writes errors.csv,
  fit.csv, and a plain-text summary.

All outputs are pure functions of (config, seed); files are written via a
temp file and an atomic rename, so reruns never leave partial results.
Exit codes: 0 success, 1 statistical-check failure, 2 configuration error,
3 runtime budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ._timeutil import match_indices, time_tolerance
from .brownian import aggregate_increments, generate_increments, merge_grids, uniform_grid
from .ctmc import generator_from_json, simulate_exact_path, skeleton_from_path
from .errors import ConfigError, JumpBudgetError, SwitchSdeError
from .harness import (
    REFERENCE_CLOSED_FORM,
    config_from_dict,
    derive_stream,
    run_strong_error,
    summary_text,
    validate_chain_statistics,
)
from .model import model_from_config
from .solvers import (
    CLASSICAL,
    JUMP_ADAPTED,
    build_refined_grid,
    em_classical,
    em_jump_adapted,
    exact_linear_solution,
)

EXIT_OK = 0
EXIT_STAT_FAIL = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3

SCHEMA_VERSION = 1

DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "horizon": 1.0,
    "generator": {"states": 2, "rates": [[-1.0, 1.0], [2.0, -2.0]]},
    "initial_regime": 1,
    "model": {"model": "linear", "a": [1.0, 2.0], "b": [2.0, 1.0], "z0": 1.0},
    "deltas": [2.0**-k for k in range(4, 10)],
    "p": [2],
    "samples": 1000,
    "schemes": [JUMP_ADAPTED, CLASSICAL],
    "step": 2.0**-4,
}


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


class _Writer:
    """Collects CSV text and flushes it atomically."""

    def __init__(self):
        self.chunks = []

    def write(self, s: str) -> None:
        self.chunks.append(s)

    def text(self) -> str:
        return "".join(self.chunks)


def _emit(path: str, render) -> None:
    w = _Writer()
    render(w)
    _atomic_write(path, w.text())


def _load_config(args) -> dict:
    cfg = dict(DEFAULT_CONFIG)
    if args.config:
        with open(args.config) as fh:
            user = json.load(fh)
        version = user.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version}")
        cfg.update(user)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "smoke", False):
        cfg["samples"] = min(int(cfg.get("samples", 1000)), 32)
        cfg["deltas"] = sorted(cfg["deltas"], reverse=True)[:3]
    return cfg


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_chain_simulate(args) -> int:
    cfg = _load_config(args)
    gen = generator_from_json(cfg["generator"])
    horizon = float(cfg["horizon"])
    rng = derive_stream(int(cfg["seed"]), 0)
    path = simulate_exact_path(
        gen, int(cfg.get("initial_regime", 1)), horizon, rng,
        max_switches=int(cfg.get("jump_budget", 10**6)),
    )
    out = _out_dir(args)
    target = os.path.join(out, "chain.csv")
    _emit(target, path.to_csv)
    print(target)
    return EXIT_OK


def cmd_chain_validate(args) -> int:
    cfg = _load_config(args)
    gen = generator_from_json(cfg["generator"])
    report = validate_chain_statistics(
        gen,
        step=float(cfg.get("step", 0.1)),
        samples=int(cfg.get("samples", 10**5)),
        seed=int(cfg["seed"]),
    )
    out = _out_dir(args)
    target = os.path.join(out, "chain_validation.csv")
    _emit(target, report.write_csv)
    failed = [c.name for c in report.checks if not c.passed]
    print(f"{len(report.checks)} checks, {len(failed)} failed")
    for name in failed:
        print(f"FAIL {name}")
    print(target)
    return EXIT_OK if report.passed else EXIT_STAT_FAIL


def _uniform_view(solution, points, horizon):
    idx = match_indices(solution.times, points, time_tolerance(horizon))
    if np.any(idx < 0):
        raise ConfigError("solution does not cover the uniform grid")
    return points, solution.values[idx]


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    gen = generator_from_json(cfg["generator"])
    model = model_from_config(cfg["model"], initial_regime=int(cfg.get("initial_regime", 1)))
    horizon = float(cfg["horizon"])
    step = float(cfg.get("step", 2.0**-4))
    if not 0.0 < step <= horizon:
        raise ConfigError(f"step must lie in (0, T], got {step}")
    schemes = list(cfg.get("schemes", [JUMP_ADAPTED, CLASSICAL]))
    reference = cfg.get("reference", REFERENCE_CLOSED_FORM if model.has_closed_form() else "none")
    if reference == REFERENCE_CLOSED_FORM and not model.has_closed_form():
        raise ConfigError("closed-form reference requested for a model without one")

    rng = derive_stream(int(cfg["seed"]), 0)
    chain = simulate_exact_path(gen, model.initial_regime, horizon, rng)
    from .brownian import make_grid

    ugrid = uniform_grid(horizon, step)
    union = merge_grids(ugrid, make_grid(np.append(chain.switch_times, horizon)))
    bm = generate_increments(union, model.noise_dim, rng)

    out = _out_dir(args)
    written = []

    target = os.path.join(out, "chain.csv")
    _emit(target, chain.to_csv)
    written.append(target)
    target = os.path.join(out, "brownian.csv")
    _emit(target, bm.to_csv)
    written.append(target)

    def write_solution(name, times, values):
        def render(fh):
            header = ",".join(["time"] + [f"z_{j + 1}" for j in range(values.shape[1])])
            fh.write(header + "\n")
            for t, row in zip(times, values):
                cells = ",".join(f"{v:.17g}" for v in row)
                fh.write(f"{t:.17g},{cells}\n")

        target = os.path.join(out, name)
        _emit(target, render)
        written.append(target)

    for scheme in schemes:
        if scheme == JUMP_ADAPTED:
            sol = em_jump_adapted(model, build_refined_grid(chain, step, horizon), bm)
        elif scheme == CLASSICAL:
            skel = skeleton_from_path(chain, step)
            sol = em_classical(model, skel, step, aggregate_increments(bm, ugrid))
        else:
            raise ConfigError(f"unknown scheme {scheme!r}")
        times, values = _uniform_view(sol, ugrid.points, horizon)
        write_solution(f"solution_{scheme.replace('-', '_')}.csv", times, values)

    if reference == REFERENCE_CLOSED_FORM:
        ref = exact_linear_solution(model, chain, bm)
        times, values = _uniform_view(ref, ugrid.points, horizon)
        write_solution("solution_reference.csv", times, values)

    for t in written:
        print(t)
    return EXIT_OK


def cmd_converge(args) -> int:
    cfg = _load_config(args)
    config = config_from_dict(cfg)
    report = run_strong_error(config, threads=max(1, args.threads))
    out = _out_dir(args)
    _emit(os.path.join(out, "errors.csv"), report.write_errors_csv)
    _emit(os.path.join(out, "fit.csv"), report.write_fit_csv)
    text = summary_text(report)
    _atomic_write(os.path.join(out, "summary.txt"), text)
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchsde",
        description="Euler-Maruyama schemes for regime-switching SDEs",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", default=None, help="output directory (default .)")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--smoke", action="store_true",
                        help="shrink samples and ladder for a quick run")

    sub = parser.add_subparsers(dest="command", required=True)

    chain = sub.add_parser("chain", help="chain path commands")
    chain_sub = chain.add_subparsers(dest="chain_command", required=True)
    sim = chain_sub.add_parser("simulate", parents=[common], help="write one exact path")
    sim.set_defaults(func=cmd_chain_simulate)
    val = chain_sub.add_parser("validate", parents=[common], help="statistical chain checks")
    val.set_defaults(func=cmd_chain_validate)

    solve = sub.add_parser("solve", parents=[common], help="one coupled sample")
    solve.set_defaults(func=cmd_solve)

    conv = sub.add_parser("converge", parents=[common], help="strong-error experiment")
    conv.set_defaults(func=cmd_converge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except JumpBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SwitchSdeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def app() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    app()
