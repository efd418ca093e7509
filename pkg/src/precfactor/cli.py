"""Command-line front end: simulate, fit, select-graph, metrics, validate.

Configuration may come from a JSON file (--config); command-line flags win
over file values. Every fit emits a manifest JSON sufficient to reproduce
the run. Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
failure, 5 validation failure.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import graphsel, sampler, synthbench
from .errors import (
    ConfigError,
    DataError,
    NumericalError,
    ParameterError,
    PrecFactorError,
    ValidationError,
)
from .model import Hyperparams, partial_correlation, select_q

EXIT_CODES = {
    ConfigError: 2,
    DataError: 3,
    ParameterError: 4,
    NumericalError: 4,
    ValidationError: 5,
}

_VERSION = "0.1.0"


@dataclass
class RunConfig:
    """Canonical fit configuration; round-trips through JSON unchanged."""

    input: str = ""
    output_dir: str = "."
    iterations: int = 5500
    burn_in: int = 1250
    thin: int = 5
    seed: int = 0
    n_chains: int = 1
    q: int | None = None
    a: float = 0.5
    b: float = 2.0
    a_delta: float = 0.1
    b_delta: float = 0.1
    a_alpha: float = 0.1
    b_alpha: float = 0.1
    beta: float = 0.9
    eps_low: float = 0.01
    eps_high: float = 0.5
    eps_points: int = 50
    center: bool = True

    @classmethod
    def from_sources(cls, args: argparse.Namespace) -> "RunConfig":
        cfg = cls()
        if getattr(args, "config", None):
            try:
                with open(args.config) as fh:
                    file_values = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
            unknown = set(file_values) - set(asdict(cfg))
            if unknown:
                raise ConfigError(f"unknown config keys {sorted(unknown)} in {args.config}")
            for key, value in file_values.items():
                setattr(cfg, key, value)
        for key in asdict(cfg):
            cli_value = getattr(args, key, None)
            if cli_value is not None:
                setattr(cfg, key, cli_value)
        return cfg

    def epsilon_grid(self) -> np.ndarray:
        return graphsel.default_epsilon_grid(self.eps_points, self.eps_low, self.eps_high)


def read_data_csv(path: str) -> np.ndarray:
    """Rectangular numeric CSV, rows = observations; header auto-detected."""
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    start = 0
    try:
        [float(x) for x in lines[0].split(",")]
    except ValueError:
        start = 1  # header row
    width = len(lines[start].split(","))
    rows = []
    for lineno, ln in enumerate(lines[start:], start=start + 1):
        cells = ln.split(",")
        if len(cells) != width:
            raise DataError(f"{path}: row {lineno} has {len(cells)} columns, expected {width}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise DataError(f"{path}: row {lineno}: {exc}") from exc
    data = np.array(rows)
    if not np.all(np.isfinite(data)):
        bad = np.argwhere(~np.isfinite(data))[0]
        raise DataError(f"{path}: non-finite value at row {bad[0] + start + 1}, column {bad[1] + 1}")
    if data.shape[0] < 2:
        raise DataError(f"{path}: need at least 2 observations, got {data.shape[0]}")
    return data


def write_matrix_csv(path: str, mat: np.ndarray):
    np.savetxt(path, mat, delimiter=",", fmt="%.17g")


def cmd_fit(cfg: RunConfig) -> int:
    Y = read_data_csv(cfg.input)
    if cfg.center:
        Y = Y - Y.mean(axis=0)
    n, d = Y.shape
    q = cfg.q if cfg.q is not None else select_q(Y)
    hyper = Hyperparams(
        q=q, a=cfg.a, b=cfg.b, a_delta=cfg.a_delta, b_delta=cfg.b_delta,
        a_alpha=cfg.a_alpha, b_alpha=cfg.b_alpha,
    )
    chain = sampler.ChainConfig(
        iterations=cfg.iterations, burn_in=cfg.burn_in, thin=cfg.thin,
        seed=cfg.seed, n_chains=cfg.n_chains,
    )
    os.makedirs(cfg.output_dir, exist_ok=True)
    store_path = os.path.join(cfg.output_dir, "draws")
    t0 = time.perf_counter()
    result = sampler.run_chain(Y, hyper, chain, epsilon_grid=cfg.epsilon_grid(), store_path=store_path)
    elapsed = time.perf_counter() - t0
    result.accumulator.save(os.path.join(cfg.output_dir, "accumulator.npz"))
    write_matrix_csv(os.path.join(cfg.output_dir, "mean_precision.csv"), result.accumulator.mean_precision)
    write_matrix_csv(
        os.path.join(cfg.output_dir, "mean_partial_correlation.csv"),
        result.accumulator.mean_partial_corr,
    )
    manifest = {
        "version": _VERSION,
        "config": asdict(cfg),
        "n": n,
        "d": d,
        "q": q,
        "retained_draws": result.n_retained,
        "factorizations": result.n_factorizations,
        "runtime_seconds": elapsed,
        "outputs": [
            "draws.bin", "draws.json", "accumulator.npz",
            "mean_precision.csv", "mean_partial_correlation.csv",
        ],
    }
    with open(os.path.join(cfg.output_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"fit: n={n} d={d} q={q} retained={result.n_retained} seconds={elapsed:.1f}")
    return 0


def cmd_select_graph(args) -> int:
    acc_path = os.path.join(args.store_dir, "accumulator.npz")
    post = graphsel.EdgePosterior.load(acc_path)
    est = graphsel.select_graph(post, beta=args.beta)
    out = args.output_dir or args.store_dir
    os.makedirs(out, exist_ok=True)
    graphsel.write_edge_list_csv(os.path.join(out, "edges.csv"), est, post)
    graphsel.write_adjacency_csv(os.path.join(out, "adjacency.csv"), est)
    graphsel.write_fdr_curve_csv(os.path.join(out, "fdr_curve.csv"), post, args.beta)
    print(
        f"select-graph: epsilon={est.chosen_epsilon:.4f} attained_fdr={est.attained_fdr:.4f} "
        f"edges={int(np.triu(est.adjacency, 1).sum())}"
        + (" (epsilon grid saturated)" if est.epsilon_saturated else "")
    )
    return 0


def cmd_simulate(args) -> int:
    spec = synthbench.TruthSpec(kind=args.kind, d=args.d)
    rng = np.random.default_rng(args.seed)
    omega, _ = synthbench.gen_truth(spec, rng)
    data = synthbench.sample_data(omega, args.n, rng)
    os.makedirs(args.output_dir, exist_ok=True)
    data_path = os.path.join(args.output_dir, f"{args.kind.lower()}_d{args.d}_n{args.n}_data.csv")
    truth_path = os.path.join(args.output_dir, f"{args.kind.lower()}_d{args.d}_truth.csv")
    write_matrix_csv(data_path, data)
    write_matrix_csv(truth_path, omega)
    print(f"simulate: wrote {data_path} and {truth_path}")
    return 0


def cmd_metrics(args) -> int:
    truth = np.loadtxt(args.truth, delimiter=",")
    adjacency = np.loadtxt(os.path.join(args.estimate_dir, "adjacency.csv"), delimiter=",").astype(bool)
    est_pc = np.loadtxt(os.path.join(args.estimate_dir, "mean_partial_correlation.csv"), delimiter=",")
    report = synthbench.evaluate(adjacency, est_pc, truth)
    print(
        f"metrics: frobenius={report.frobenius:.4f} "
        f"sensitivity={report.sensitivity:.4f} specificity={report.specificity:.4f}"
    )
    if args.results_csv:
        report.kind = args.kind or ""
        report.n = args.n or 0
        report.replication = args.rep
        synthbench.append_eval_report(args.results_csv, report)
    return 0


def cmd_validate(args) -> int:
    hyper = sampler.geweke_hyper(args.q)
    report = sampler.validate_geweke(hyper, d=args.d, n=args.n, n_rounds=args.rounds, seed=args.seed)
    for name, z in sorted(report.z_scores.items()):
        print(f"validate: {name} z={z:+.3f}")
    if not report.passed():
        raise ValidationError(f"Geweke validation failed: max |z| = {report.max_abs_z:.2f} >= 4")
    print(f"validate: PASS (max |z| = {report.max_abs_z:.2f} over {report.n_rounds} rounds)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="precfactor", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="run the Gibbs chain on a CSV data file")
    fit.add_argument("input", help="CSV with rows = observations, columns = variables")
    fit.add_argument("--config", help="JSON config file; flags override it")
    fit.add_argument("--output-dir", dest="output_dir")
    fit.add_argument("--iterations", type=int)
    fit.add_argument("--burn-in", dest="burn_in", type=int)
    fit.add_argument("--thin", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--n-chains", dest="n_chains", type=int)
    fit.add_argument("--q", type=int, help="latent rank override (default: data-driven)")
    fit.add_argument("--a", type=float)
    fit.add_argument("--b", type=float)
    fit.add_argument("--beta", type=float)
    fit.add_argument("--eps-low", dest="eps_low", type=float)
    fit.add_argument("--eps-high", dest="eps_high", type=float)
    fit.add_argument("--eps-points", dest="eps_points", type=int)
    fit.add_argument("--no-center", dest="center", action="store_false", default=None)

    sel = sub.add_parser("select-graph", help="FDR-controlled graph selection from a fit")
    sel.add_argument("store_dir", help="directory containing accumulator.npz")
    sel.add_argument("--beta", type=float, default=0.9)
    sel.add_argument("--output-dir", dest="output_dir")

    sim = sub.add_parser("simulate", help="generate synthetic truth and data")
    sim.add_argument("kind", choices=["AR2", "Banded", "RSM"])
    sim.add_argument("--d", type=int, required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--output-dir", dest="output_dir", default=".")

    met = sub.add_parser("metrics", help="score an estimate against a truth matrix")
    met.add_argument("truth", help="truth precision matrix CSV")
    met.add_argument("estimate_dir", help="directory with adjacency.csv and mean_partial_correlation.csv")
    met.add_argument("--results-csv", dest="results_csv")
    met.add_argument("--kind")
    met.add_argument("--n", type=int)
    met.add_argument("--rep", type=int, default=0)

    val = sub.add_parser("validate", help="Geweke joint-distribution sampler check")
    val.add_argument("--d", type=int, default=3)
    val.add_argument("--q", type=int, default=2)
    val.add_argument("--n", type=int, default=5)
    val.add_argument("--rounds", type=int, default=100_000)
    val.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fit":
            return cmd_fit(RunConfig.from_sources(args))
        if args.command == "select-graph":
            return cmd_select_graph(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "metrics":
            return cmd_metrics(args)
        if args.command == "validate":
            return cmd_validate(args)
        raise ConfigError(f"unknown command {args.command}")
    except PrecFactorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for klass, code in EXIT_CODES.items():
            if isinstance(exc, klass):
                return code
        return 1


if __name__ == "__main__":
    sys.exit(main())
