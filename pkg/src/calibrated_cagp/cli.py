"""Command-line runner for the desk-scale experiments.

Usage::

    calibrated-cagp synthetic-convergence --out results/ [--config run.cfg]
    calibrated-cagp sbc --out results/ --seed 0
    calibrated-cagp regress --config regress.cfg --out results/
    calibrated-cagp timings --out results/ --set varied=m

Config files are flat ``key = value`` text (``#`` starts a comment, lists
are comma separated). Command-line flags, including ``--set key=value``,
override config keys. Every command writes ``manifest.json`` next to its
results. Exit codes: 0 success, 2 configuration or input error, 3 runtime
failure.
"""

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .cagp import GPPrior, cagp_posterior
from .calibration import heldout_zscores, histogram_counts, ks_uniform_test, synthetic_sbc
from .errors import CAGPError, ConfigError, DuplicateRows, MissingColumn, ParseError
from .experiments import (
    convergence_sweep,
    grid_search_lengthscale,
    load_csv_dataset,
    synthetic_problem,
    timing_sweep,
)
from .kernels import FAMILIES, KernelSpec
from .pls import SolverChoice

logger = logging.getLogger("calibrated_cagp")

EXPERIMENTS = {
    "synthetic-convergence": "synthetic_convergence",
    "sbc": "sbc",
    "regress": "regress_csv",
    "timings": "timing_sweep",
}


def _floats(s):
    return [float(x) for x in s.split(",") if x.strip()]


def _ints(s):
    return [int(x) for x in s.split(",") if x.strip()]


def _strs(s):
    return [x.strip() for x in s.split(",") if x.strip()]


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


COMMON = {"out": (str, None), "seed": (int, 0), "threads": (int, 1)}

# key -> (parser, default) per experiment
SCHEMAS = {
    "synthetic_convergence": {
        "lengthscales": (_floats, [0.1, 0.2, 0.4]),
        "families": (_strs, ["matern_three_half"]),
        "solvers": (_strs, ["gs", "cg", "rand"]),
        "m_values": (_ints, [0, 1, 2, 3, 4, 5, 10, 20, 30, 40, 50]),
        "repeats": (int, 50),
        "n_train": (int, 400),
        "grid_size": (int, 21),
        "noise_std": (float, 0.1),
    },
    "sbc": {
        "lengthscale": (float, 0.2),
        "family": (str, "matern_three_half"),
        "solvers": (_strs, ["gs", "cg", "rand"]),
        "iterations": (int, 5),
        "n_sim": (int, 1000),
        "n_train": (int, 400),
        "grid_size": (int, 21),
        "noise_std": (float, 0.1),
    },
    "regress_csv": {
        "dataset": (str, None),
        "target": (str, None),
        "standardize": (_bool, True),
        "train_fraction": (float, 0.8),
        "family": (str, "matern_three_half"),
        "lengthscale": (float, 1.0),
        "amplitude": (float, 1.0),
        "noise_variance": (float, 0.1),
        "mean": (str, "zero"),
        "mean_value": (float, 0.0),
        "grid_search": (_bool, False),
        "lengthscale_grid": (_floats, [0.1, 0.2, 0.5, 1.0, 2.0, 5.0]),
        "solvers": (_strs, ["gs", "cg"]),
        "m_values": (_ints, [0, 1, 2, 3, 5, 10, 20, 50]),
        "repeats": (int, 1),
    },
    "timing_sweep": {
        "solvers": (_strs, ["gs", "cg"]),
        "varied": (_strs, ["m", "d", "d_test"]),
        "m": (int, 40),
        "d": (int, 2000),
        "d_test": (int, 25),
        "m_values": (_ints, [10, 20, 40, 80]),
        "d_values": (_ints, [250, 500, 1000, 2000]),
        "d_test_values": (_ints, [1, 5, 25, 100]),
        "lengthscale": (float, 0.2),
        "repeats": (int, 3),
    },
}


def read_config_file(path):
    """Parse flat ``key = value`` lines into a dict of raw strings."""
    raw = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key.replace("-", "_")] = value
    return raw


def build_config(experiment, raw):
    """Typed config for ``experiment`` from raw string values plus defaults."""
    schema = {**COMMON, **SCHEMAS[experiment]}
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {experiment}: {', '.join(unknown)}")
    cfg = {"experiment": experiment}
    for key, (parse, default) in schema.items():
        if key in raw:
            try:
                cfg[key] = parse(raw[key]) if isinstance(raw[key], str) else raw[key]
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        else:
            cfg[key] = default
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if cfg["out"] is None:
        raise ConfigError("an output directory is required (--out or 'out =')")
    if not Path(cfg["out"]).is_dir():
        raise ConfigError(f"output directory {cfg['out']} does not exist")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be at least 1")
    try:
        for s in cfg.get("solvers", []):
            SolverChoice(s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for fam in cfg.get("families", []) + [cfg.get("family")] * ("family" in cfg):
        if fam not in FAMILIES:
            raise ConfigError(f"unknown kernel family {fam!r}")
    m_values = cfg.get("m_values", [])
    if any(b <= a for a, b in zip(m_values, m_values[1:])) or any(m < 0 for m in m_values):
        raise ConfigError("m_values must be nonnegative and strictly increasing")
    for key in ("lengthscale", "amplitude", "noise_variance", "noise_std"):
        if key in cfg and not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive")
    if any(ell <= 0 for ell in cfg.get("lengthscales", []) + cfg.get("lengthscale_grid", [])):
        raise ConfigError("length-scales must be positive")
    if cfg.get("mean", "zero") not in ("zero", "constant", "data_average"):
        raise ConfigError("mean must be 'zero', 'constant' or 'data_average'")
    if cfg["experiment"] == "regress_csv":
        for key in ("dataset", "target"):
            if not cfg[key]:
                raise ConfigError(f"regress needs '{key}'")
        if not Path(cfg["dataset"]).is_file():
            raise ConfigError(f"dataset {cfg['dataset']} does not exist")
    if cfg["experiment"] == "timing_sweep":
        for v in cfg["varied"]:
            if v not in ("m", "d", "d_test"):
                raise ConfigError(f"cannot vary {v!r}")
    if cfg["experiment"] == "sbc" and cfg["n_sim"] < 1:
        raise ConfigError("n_sim must be at least 1")


def _fmt(x):
    return repr(float(x))


def write_metric_csv(path, series):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solver", "m", "rmse", "nll"])
        for s in series:
            for label, m, r, n in s.rows():
                w.writerow([label, m, _fmt(r), _fmt(n)])


def _short(kind):
    return {"gauss_seidel": "gs", "conjugate_gradient": "cg", "random_directions": "rand"}.get(kind, kind)


def cmd_synthetic_convergence(cfg):
    settings = [(fam, ell) for fam in cfg["families"] for ell in cfg["lengthscales"]]
    all_series = []
    for fam, ell in settings:
        problem = synthetic_problem(ell, fam, cfg["seed"], cfg["n_train"], cfg["grid_size"], cfg["noise_std"])
        series = convergence_sweep(
            problem, cfg["solvers"], cfg["m_values"], cfg["repeats"], cfg["seed"], cfg["threads"]
        )
        if len(settings) > 1:
            for s in series:
                s.solver = f"{s.solver}/{fam}/l={ell:g}"
        all_series.extend(series)
    out = Path(cfg["out"]) / "rmse_nll.csv"
    write_metric_csv(out, all_series)
    return [out], {}


def cmd_sbc(cfg):
    outputs, summary = [], []
    for name in cfg["solvers"]:
        solver = SolverChoice(name, cfg["iterations"])
        report = synthetic_sbc(
            solver,
            cfg["seed"],
            cfg["lengthscale"],
            cfg["family"],
            cfg["n_sim"],
            cfg["n_train"],
            cfg["grid_size"],
            cfg["noise_std"],
            cfg["threads"],
        )
        path = Path(cfg["out"]) / f"sbc_{_short(solver.kind)}.json"
        path.write_text(report.to_json(indent=1) + "\n")
        outputs.append(path)
        summary.append((solver.label, solver.iterations, cfg["n_sim"], report.ks_statistic, report.p_value))
    path = Path(cfg["out"]) / "sbc_summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solver", "m", "n_sim", "ks_statistic", "p_value"])
        for label, m, n, stat, p in summary:
            w.writerow([label, m, n, _fmt(stat), _fmt(p)])
    outputs.append(path)
    return outputs, {"p_values": {s[0]: s[4] for s in summary}}


def cmd_regress_csv(cfg):
    kernel = KernelSpec(cfg["family"], cfg["lengthscale"], cfg["amplitude"])
    prior = GPPrior(kernel, cfg["noise_variance"], cfg["mean"], cfg["mean_value"])
    problem = load_csv_dataset(
        cfg["dataset"], cfg["target"], cfg["standardize"], cfg["train_fraction"], cfg["seed"], prior
    )
    if problem.test_truth is None:
        raise ConfigError("train_fraction leaves no held-out rows")
    extra = {"n_train": len(problem.train_X), "n_test": len(problem.test_X)}
    if cfg["grid_search"]:
        best, values = grid_search_lengthscale(
            problem.prior, problem.train_X, problem.train_y, cfg["lengthscale_grid"]
        )
        problem.prior = problem.prior.with_kernel(kernel.with_lengthscale(best))
        extra["chosen_lengthscale"] = best
        extra["lml_values"] = dict(zip(map(str, cfg["lengthscale_grid"]), map(float, values)))
    series = convergence_sweep(
        problem, cfg["solvers"], cfg["m_values"], cfg["repeats"], cfg["seed"], cfg["threads"]
    )
    out = Path(cfg["out"]) / "rmse_nll.csv"
    write_metric_csv(out, series)

    m_last = cfg["m_values"][-1]
    zpath = Path(cfg["out"]) / "heldout_zscores.csv"
    with open(zpath, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solver", "m", "ks_statistic", "p_value"] + [f"bin_{i:02d}" for i in range(20)])
        for name in cfg["solvers"]:
            solver = SolverChoice(name, min(m_last, len(problem.train_X)), cfg["seed"])
            post = cagp_posterior(problem.prior, problem.train_X, problem.train_y, problem.test_X, solver)
            # held-out targets are noisy: compare against the predictive variance
            post.covariance = post.covariance + problem.prior.noise_variance * np.eye(len(post.mean))
            t = heldout_zscores(post, problem.test_truth)
            stat, p = ks_uniform_test(t)
            w.writerow([solver.label, solver.iterations, _fmt(stat), _fmt(p)] + list(histogram_counts(t)))
    return [out, zpath], extra


def cmd_timing_sweep(cfg):
    rows = []
    for varied in cfg["varied"]:
        rows += timing_sweep(
            cfg["solvers"],
            varied,
            cfg[f"{varied}_values"],
            d=cfg["d"],
            d_test=cfg["d_test"],
            m=cfg["m"],
            lengthscale=cfg["lengthscale"],
            repeats=cfg["repeats"],
            seed=cfg["seed"],
        )
    out = Path(cfg["out"]) / "timings.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solver", "varied_param", "value", "seconds"])
        for label, varied, value, sec in rows:
            w.writerow([label, varied, value, _fmt(sec)])
    return [out], {}


COMMANDS = {
    "synthetic_convergence": cmd_synthetic_convergence,
    "sbc": cmd_sbc,
    "regress_csv": cmd_regress_csv,
    "timing_sweep": cmd_timing_sweep,
}


def write_manifest(cfg, outputs, extra, wall_time):
    manifest = {
        "experiment": cfg["experiment"],
        "config": cfg,
        "seed": cfg["seed"],
        "library_version": __version__,
        "numpy_version": np.__version__,
        "wall_time_seconds": wall_time,
        "outputs": [Path(p).name for p in outputs],
        **extra,
    }
    path = Path(cfg["out"]) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def make_parser():
    parser = argparse.ArgumentParser(prog="calibrated-cagp", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--seed", type=int, metavar="N")
        p.add_argument("--threads", type=int, metavar="N")
        p.add_argument(
            "--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key"
        )
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    experiment = EXPERIMENTS[args.command]
    try:
        raw = read_config_file(args.config) if args.config else {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            raw[key.strip().replace("-", "_")] = value.strip()
        for key in ("out", "seed", "threads"):
            if getattr(args, key) is not None:
                raw[key] = str(getattr(args, key))
        cfg = build_config(experiment, raw)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    start = time.perf_counter()
    try:
        outputs, extra = COMMANDS[experiment](cfg)
    except (ConfigError, MissingColumn, ParseError, DuplicateRows) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CAGPError, np.linalg.LinAlgError, ValueError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    write_manifest(cfg, outputs, extra, time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    sys.exit(main())
