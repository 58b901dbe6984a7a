# main.py

import sys
import logging
import argparse
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ValidationError

from config_helpers import (
    ExperimentConfig,
    PathConfig,
    PhiConfig,
    SolveConfig,
    aligned_window,
    build_phi,
    config_hash,
    load_config,
    load_settings,
    save_config,
)
from errors import OscillabError, ParameterRangeError
from experiments.limit_lab import run_convergence
from generators.hermite_process import HermiteProcessConfig, simulate_Z
from generators.lrd_gauss import simulate_path, simulate_paths, validate_kernel
from integrators.hermite_core import coefficient_sampler
from integrators.homogenize1d import ProblemSpec, decompose, path_request, residual_check, solve_random
from services.file_manager import RunManifest, write_csv, write_json, write_manifest, write_tables

logger = logging.getLogger("oscillab")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

EXPERIMENT_MODES = {
    "oscillatory": "oscillatory",
    "corrector": "corrector",
    "covariance": "covariance",
    "taqqu": "taqqu_fdd",
}


class OscillabParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _start(args, config: BaseModel, seed_base: int) -> RunManifest:
    manifest = RunManifest(command=args.command, config_hash=config_hash(config), seed_base=seed_base)
    manifest.record(save_config(config, args.out_dir / "config.json"))
    return manifest


# -------------------------------------------------------------------------
# Subcommands
# -------------------------------------------------------------------------

def cmd_simulate_path(args, settings) -> int:
    config = load_config(
        args.config, PathConfig,
        {"m": args.m, "h0": args.h0, "delta": args.delta, "n": args.n, "seed": args.seed, "paths": args.paths},
    )
    manifest = _start(args, config, config.seed)
    spec = config.spec()
    window = config.resolved_window()
    paths = simulate_paths(
        spec, config.n, config.delta, window, config.seeds(),
        tolerance=config.window_tolerance, scheme=config.scheme,
    )
    if len(paths) == 1:
        columns = paths[0].columns()
    else:
        columns = {"x": paths[0].grid, **{f"g_{i}": p.values for i, p in enumerate(paths)}}
    manifest.record(write_csv(columns, args.out_dir / "path.csv"))
    manifest.record(write_json(validate_kernel(spec), args.out_dir / "kernel.json"))
    write_manifest(manifest, args.out_dir)
    logger.info(
        "simulated %d path(s) of %d samples, window %.6g, truncated mass %.3g",
        len(paths), paths[0].n, window, paths[0].truncated_mass,
    )
    return EXIT_OK


def cmd_build_phi(args, settings) -> int:
    config = load_config(args.config, PhiConfig, {"method": args.method, "m": args.m, "a_star": args.a_star})
    manifest = _start(args, config, 0)
    phi = build_phi(config)
    phi.check_invariants()
    manifest.record(write_csv(phi.expansion.columns(), args.out_dir / "expansion.csv"))
    x = np.linspace(-6.0, 6.0, 1201)
    table = {"x": x, "phi": phi(x)}
    if phi.sup_norm_bound is not None and phi.sup_norm_bound < 1.0 / config.a_star:
        table["a"] = coefficient_sampler(phi, config.a_star).a(x)
    manifest.record(write_csv(table, args.out_dir / "phi_table.csv"))
    write_manifest(manifest, args.out_dir)
    logger.info("built %s with Hermite rank %s", phi.name, phi.rank)
    return EXIT_OK


def cmd_solve(args, settings) -> int:
    config = load_config(
        args.config,
        SolveConfig,
        {
            "epsilon": args.epsilon, "b": args.b, "f": args.f, "m": args.m, "h0": args.h0,
            "seed": args.seed, "a_star": args.a_star, "grid": args.grid, "phi_method": args.phi_method,
        },
    )
    manifest = _start(args, config, config.seed)
    sampler = coefficient_sampler(build_phi(config.phi_config()), config.a_star)
    spec = ProblemSpec(source=config.source(), b=config.b, epsilon=config.epsilon, coeff=sampler, quad_grid=config.grid)
    path = None
    if not sampler.is_deterministic:
        delta, n = path_request(spec)
        kernel = config.spec()
        window = aligned_window(kernel, delta, config.window_tolerance)
        path = simulate_path(kernel, n, delta, window, config.seed, tolerance=config.window_tolerance)
    pair = solve_random(spec, path)
    dec = decompose(spec, path, pair)
    manifest.record(write_csv(pair.columns(dec.U_eps), args.out_dir / "solution.csv"))
    write_manifest(manifest, args.out_dir)
    logger.info("c_eps=%.10g c*=%.10g a*=%.10g", pair.c_eps, pair.c_star, pair.a_star)
    logger.info("max flux residual %.3e", residual_check(pair, spec, path))
    return EXIT_OK


def cmd_hermite_path(args, settings) -> int:
    config = load_config(
        args.config, HermiteProcessConfig,
        {"m": args.m, "h0": args.h0, "t_max": args.t_max, "n_grid": args.n_grid, "method": args.method, "seed": args.seed},
    )
    manifest = _start(args, config, config.seed)
    path = simulate_Z(config)
    manifest.record(write_csv(path.columns(), args.out_dir / "hermite_path.csv"))
    write_manifest(manifest, args.out_dir)
    return EXIT_OK


def _ensemble_columns(name: str, values: np.ndarray, labels: List[str]) -> Dict[str, np.ndarray]:
    if values.ndim == 1:
        return {"replica": np.arange(len(values)), name: values}
    cols = {"replica": np.arange(len(values))}
    for k in range(values.shape[1]):
        cols[labels[k] if k < len(labels) else f"{name}_{k}"] = values[:, k]
    return cols


def cmd_experiment(args, settings) -> int:
    overrides = {"mode": EXPERIMENT_MODES[args.command], "replicas": args.replicas, "seed_base": args.seed_base}
    config = load_config(args.config, ExperimentConfig, overrides)
    manifest = _start(args, config, config.seed_base)
    report = run_convergence(config, threads=settings.threads)
    manifest.record(write_json(report, args.out_dir / "report.json"))
    write_tables(report.tables(), args.out_dir, manifest)

    if config.mode == "corrector":
        labels = [f"U({p:g})" for p in config.probes]
    elif config.mode == "taqqu_fdd":
        labels = ["Y(0.5)", "Y(1)"]
    else:
        labels = []
    for key, values in report.ensembles.items():
        manifest.record(write_csv(_ensemble_columns("sample", values, labels), args.out_dir / f"samples_{key}.csv"))

    write_manifest(manifest, args.out_dir)
    failing = [c.epsilon for c in report.cells if c.energy is not None and not c.energy.passed]
    if failing:
        logger.warning("energy test rejected at epsilon %s", failing)
    return EXIT_OK


# -------------------------------------------------------------------------
# Parser
# -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = OscillabParser(
        prog="oscillab",
        description="Simulate long-memory oscillatory integrals and random 1D elliptic correctors.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration file.")
    common.add_argument("--out-dir", type=Path, help="Directory for outputs (default: output/<subcommand>).")
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")

    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True

    p = sub.add_parser("simulate-path", parents=[common], help="Simulate a long-memory Gaussian path; writes (x, g).")
    p.add_argument("--m", type=int)
    p.add_argument("--h0", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int, help="Number of independent paths (default: 1).")
    p.set_defaults(handler=cmd_simulate_path)

    p = sub.add_parser("build-phi", parents=[common], help="Construct a Hermite-rank function; writes (q, V_q).")
    p.add_argument("--method", choices=["pure_hermite", "rank2_bounded", "inductive_bounded", "ou_vandermonde", "constant"])
    p.add_argument("--m", type=int)
    p.add_argument("--a-star", dest="a_star", type=float)
    p.set_defaults(handler=cmd_build_phi)

    p = sub.add_parser("solve", parents=[common], help="Solve one random problem; writes x, u_eps, u_bar, corrector, U_eps.")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--f", choices=["const", "linear", "sin"])
    p.add_argument("--m", type=int)
    p.add_argument("--h0", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--a-star", dest="a_star", type=float)
    p.add_argument("--grid", type=int, help="Number of cells (default: ceil(20/epsilon)).")
    p.add_argument("--phi-method", dest="phi_method", choices=["rank2_bounded", "inductive_bounded", "ou_vandermonde", "constant"])
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("hermite-path", parents=[common], help="Simulate a Hermite process path; writes (t, Z).")
    p.add_argument("--m", type=int)
    p.add_argument("--h0", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--n-grid", dest="n_grid", type=int)
    p.add_argument("--method", choices=["kernel", "circulant"], help="circulant draws exact fBm (m = 1 only).")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_hermite_path)

    for name, text in (
        ("oscillatory", "Convergence of oscillatory integrals in law."),
        ("corrector", "Convergence of rescaled correctors at probe points."),
        ("covariance", "Covariance decay of Φ(g) against its asymptote."),
        ("taqqu", "Taqqu normalisation and finite-dimensional laws."),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--replicas", type=int)
        p.add_argument("--seed-base", dest="seed_base", type=int)
        p.set_defaults(handler=cmd_experiment)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point:
      1) Parse the subcommand and load its configuration
      2) Run it, writing outputs and manifest.json into --out-dir
      3) Map failures to exit codes (1 usage, 2 invalid input, 3 runtime)
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = load_settings()
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    if args.out_dir is None:
        args.out_dir = Path("output") / args.command

    try:
        return args.handler(args, settings)
    except (ValidationError, ParameterRangeError) as exc:
        logger.error("invalid configuration: %s", exc)
        return EXIT_VALIDATION
    except OscillabError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_RUNTIME
    except ValueError as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
