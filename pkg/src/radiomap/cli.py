"""Command-line entry point.

Every subcommand reads an INI config (``--config``) and is a pure function
of that file, ``--seed`` and its input files. Relative paths in a config
are resolved against the config file's directory.

    radiomap generate --config synth.ini --seed 7 --out data/
    radiomap quantize --config quantize.ini --out grids/
    radiomap train    --estimator kriging --config run.ini --out params.ini
    radiomap train    --estimator frade --config run.ini --out frade.rmew
    radiomap evaluate --config run.ini --seed 3 --out results/ --threads 4
    radiomap report   results/a.csv results/b.csv --out summary/
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io as _io
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import io
from .core import CombiningMode, GridSpec, quantize
from .estimators import (
    FradeEstimator,
    KnnEstimator,
    KrigingEstimator,
    KrrEstimator,
    NetworkEstimator,
    NetworkWeights,
)
from .evaluation import MetricKind, REPORT_HEADER, hover_set, run_sweep, write_report_csv
from .synth import PropagationConfig, synthetic_set
from .training import (
    AdamConfig,
    SearchGrid,
    draw_instances,
    draw_splits,
    make_training_examples,
    train_knn,
    train_kriging,
    train_krr,
    train_network,
    uniform_n_obs,
)

ESTIMATORS = ("knn", "kriging", "krr", "cnn", "frade")


class CliError(Exception):
    pass


# ---------------------------------------------------------------- config


class RunConfig:
    """Thin accessor over the parsed INI file."""

    def __init__(self, path):
        if path is None:
            raise CliError("--config is required")
        self.path = Path(path)
        if not self.path.is_file():
            raise CliError(f"config file {self.path} not found")
        self.parser = configparser.ConfigParser()
        self.parser.read(self.path, encoding="utf-8")
        self.base = self.path.parent

    def section(self, name):
        if name not in self.parser:
            raise CliError(f"{self.path}: missing [{name}] section")
        return self.parser[name]

    def get(self, section, key, fallback=None):
        if section not in self.parser or key not in self.parser[section]:
            if fallback is None:
                raise CliError(f"{self.path}: missing '{key}' in [{section}]")
            return fallback
        return self.parser[section][key]

    def has(self, section, key):
        return section in self.parser and key in self.parser[section]

    def path_of(self, value) -> Path:
        p = Path(value.strip())
        return p if p.is_absolute() else self.base / p

    def paths(self, section, key, must_exist=True) -> list[Path]:
        out = [self.path_of(v) for v in self.get(section, key).split(",") if v.strip()]
        if not out:
            raise CliError(f"{self.path}: '{key}' in [{section}] lists no files")
        if must_exist:
            for p in out:
                if not p.exists():
                    raise CliError(f"file {p} not found")
        return out

    def seed(self, override):
        if override is not None:
            return int(override)
        return int(self.get("run", "seed", "0"))


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _patch(cfg: RunConfig):
    side = float(cfg.get("patch", "side_m"))
    spacing = float(cfg.get("patch", "grid_spacing_m"))
    ratio = side / spacing
    if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
        raise CliError("patch side_m must be a positive integer multiple of grid_spacing_m")
    return side, spacing


def _threads(arg):
    if arg is not None:
        n = int(arg)
    else:
        n = int(os.environ.get("RME_THREADS", "1") or 1)
    if n < 1:
        raise CliError("--threads must be >= 1")
    return n


def propagation_config(cfg: RunConfig, seed: int) -> PropagationConfig:
    sec = cfg.section("propagation")
    kwargs = {}
    for f in fields(PropagationConfig):
        if f.name == "seed" or f.name not in sec:
            continue
        raw = sec[f.name]
        if f.name == "tx_location":
            kwargs[f.name] = tuple(_floats(raw))
        elif f.name == "fading_enabled":
            kwargs[f.name] = sec.getboolean(f.name)
        else:
            kwargs[f.name] = float(raw)
    unknown = set(sec) - {f.name for f in fields(PropagationConfig)}
    if unknown:
        raise CliError(f"unknown [propagation] keys: {', '.join(sorted(unknown))}")
    return PropagationConfig(seed=seed, **kwargs)


def search_grid(cfg: RunConfig) -> SearchGrid:
    grid = SearchGrid()
    if "search" not in cfg.parser:
        return grid
    sec = cfg.parser["search"]
    for key in ("kriging_var", "kriging_halfdist", "kriging_noise", "krr_reg", "krr_widths"):
        if key in sec:
            setattr(grid, key, _floats(sec[key]))
    if "knn_k" in sec:
        grid.knn_k = _ints(sec["knn_k"])
    if "krr_kernels" in sec:
        grid.krr_kernels = [v.strip() for v in sec["krr_kernels"].split(",") if v.strip()]
    grid.__post_init__()
    return grid


def _load_sets(cfg, key):
    return [io.read_dataset(p) for p in cfg.paths("data", key)]


def _traditional_params(path) -> tuple:
    params = io.read_params(path)
    missing = [k for k in ("knn", "kriging", "krr") if k not in params]
    if missing:
        raise CliError(f"{path} lacks trained parameters for {', '.join(missing)}")
    return params["knn"], params["kriging"], params["krr"]


def build_estimator(cfg: RunConfig):
    """Estimator named in ``[estimator]`` with its trained parameters."""
    name = cfg.get("estimator", "name")
    if name not in ESTIMATORS:
        raise CliError(f"unknown estimator {name!r}")
    if name in ("knn", "kriging", "krr"):
        params = io.read_params(cfg.path_of(cfg.get("estimator", "params")))
        if name not in params:
            raise CliError(f"params file has no [{name}] section")
        return {"knn": KnnEstimator, "kriging": KrigingEstimator, "krr": KrrEstimator}[name](params[name])
    wpath = cfg.path_of(cfg.get("estimator", "weights"))
    if not wpath.exists():
        raise CliError(f"weights file {wpath} not found")
    weights = NetworkWeights.from_bytes(wpath.read_bytes())
    if name == "cnn":
        return NetworkEstimator(weights)
    return FradeEstimator(weights, *_traditional_params(cfg.path_of(cfg.get("estimator", "params"))))


# ---------------------------------------------------------------- commands


def _out_dir(arg) -> Path:
    if arg is None:
        raise CliError("--out is required")
    out = Path(arg)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> list[Path]:
    cfg = RunConfig(args.config)
    seed = cfg.seed(args.seed)
    out = _out_dir(args.out)
    gen = cfg.section("generate")
    region = (float(gen["region_x_m"]), float(gen["region_y_m"]))
    spacing = float(gen["grid_spacing_m"])
    n_sets = int(gen.get("n_sets", "1"))
    layout = gen.get("layout", "lawnmower")
    prefix = gen.get("prefix", "set")
    if n_sets < 1:
        raise CliError("n_sets must be >= 1")
    template = propagation_config(cfg, seed)
    set_seeds = np.random.SeedSequence(seed).generate_state(n_sets, dtype=np.uint64)
    written = []
    for k, s in enumerate(set_seeds):
        pc = replace(template, seed=int(s))
        if layout == "lawnmower":
            along = float(gen["along_spacing_m"]) if "along_spacing_m" in gen else None
            mset = synthetic_set(region, spacing, pc, along)
        elif layout == "hover":
            mset = hover_set(region, spacing, pc, int(gen.get("per_point", "5")), float(gen.get("jitter_m", "0.3")))
        else:
            raise CliError(f"unknown layout {layout!r}")
        written += io.write_dataset(mset, out / f"{prefix}_{k:03d}.csv")
    for p in written[::2]:
        io.read_dataset(p)
    return written


def _region_spec(mset) -> GridSpec:
    n_ly, n_lx = mset.region_grid_shape
    return GridSpec(n_ly + 1, n_lx + 1, mset.grid_spacing)


def cmd_quantize(args) -> list[Path]:
    cfg = RunConfig(args.config)
    out = _out_dir(args.out)
    mode = CombiningMode(cfg.get("quantize", "mode", "db_mean"))
    written = []
    for p in cfg.paths("quantize", "datasets"):
        mset = io.read_dataset(p)
        grid = quantize(mset, _region_spec(mset), mode)
        target = out / f"{p.stem}_grid.csv"
        io.write_grid(grid, target)
        written.append(target)
    return written


def _train_instances(cfg, seed, side):
    sets = _load_sets(cfg, "train_sets")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    count = int(cfg.get("training", "instances", "100"))
    return draw_instances(sets, side, count, rng, min_measurements=2), rng


def cmd_train(args) -> list[Path]:
    if args.out is None:
        raise CliError("--out is required")
    cfg = RunConfig(args.config)
    seed = cfg.seed(args.seed)
    side, spacing = _patch(cfg)
    target = Path(args.out)
    target.parent.mkdir(parents=True, exist_ok=True)
    lo = int(cfg.get("training", "n_obs_min", "10"))
    hi = int(cfg.get("training", "n_obs_max", "100"))
    name = args.estimator

    if name in ("knn", "kriging", "krr"):
        instances, rng = _train_instances(cfg, seed, side)
        sampler = uniform_n_obs(lo, hi)
        splits = draw_splits(instances, sampler, int(cfg.get("training", "splits", "200")), rng)
        trainer = {"knn": train_knn, "kriging": train_kriging, "krr": train_krr}[name]
        best = trainer(splits, search_grid(cfg)).best
        io.write_params(target, **{name: best})
        if name not in io.read_params(target):
            raise CliError(f"failed to write {target}")
        return [target]

    trad = None
    if name == "frade":
        if not cfg.has("training", "traditional_params"):
            raise CliError("frade training needs 'traditional_params' in [training]")
        trad = _traditional_params(cfg.path_of(cfg.get("training", "traditional_params")))
    instances, rng = _train_instances(cfg, seed, side)
    copies = int(cfg.get("training", "copies", "5"))
    examples = []
    for inst in instances:
        examples += make_training_examples(inst, GridSpec.for_patch(inst.patch, spacing), (lo, hi), copies, rng)
    adam = AdamConfig(
        learning_rate=float(cfg.get("training", "learning_rate", "1e-4")),
        batch_size=int(cfg.get("training", "batch_size", "200")),
        epochs=int(cfg.get("training", "epochs", "50")),
        seed=int(rng.integers(2 ** 63)),
    )
    channels = 5 if name == "frade" else 2
    weights = NetworkWeights.init(channels, rng)
    estimator = FradeEstimator(weights, *trad) if name == "frade" else NetworkEstimator(weights)
    trained, log = train_network(examples, estimator, adam)
    target.write_bytes(trained.to_bytes())
    log_path = target.with_name(target.stem + ".log.csv")
    with open(log_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for epoch, loss in log.rows():
            w.writerow([epoch, io.fmt_db(loss)])
    NetworkWeights.from_bytes(target.read_bytes())
    return [target, log_path]


def evaluate_report(cfg: RunConfig, seed: int, threads: int) -> bytes:
    """Report CSV bytes of the configured evaluation."""
    side, spacing = _patch(cfg)
    sets = _load_sets(cfg, "test_sets")
    estimator = build_estimator(cfg)
    kinds = [MetricKind(v.strip()) for v in cfg.get("evaluation", "metrics").split(",") if v.strip()]
    n_obs = _ints(cfg.get("evaluation", "n_obs"))
    iterations = int(cfg.get("evaluation", "iterations", "100"))
    if not kinds or not n_obs:
        raise CliError("need at least one metric and one n_obs value")
    reports = run_sweep(sets, estimator, kinds, n_obs, side, spacing, iterations, seed=seed, threads=threads)
    buf = _io.StringIO()
    write_report_csv(reports, buf)
    return buf.getvalue().encode("utf-8")


def cmd_evaluate(args) -> list[Path]:
    cfg = RunConfig(args.config)
    seed = cfg.seed(args.seed)
    threads = _threads(args.threads)
    out = _out_dir(args.out)
    data = evaluate_report(cfg, seed, threads)
    if args.check_seed and evaluate_report(cfg, seed, threads) != data:
        raise CliError("rerun with the same seed produced a different report")
    target = out / "report.csv"
    target.write_bytes(data)
    if target.read_bytes() != data:
        raise CliError(f"failed to write {target}")
    return [target]


def merge_reports(paths) -> tuple[list[str], list[dict]]:
    """Stack report CSVs into one table with a leading ``source`` column."""
    if not paths:
        raise CliError("report needs at least one input CSV")
    columns = ["source"]
    rows = []
    for p in paths:
        with open(p, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not set(REPORT_HEADER) <= set(reader.fieldnames):
                raise CliError(f"{p} is not a report CSV")
            for c in reader.fieldnames:
                if c not in columns:
                    columns.append(c)
            for row in reader:
                rows.append({"source": str(p), **row})
    if not rows:
        raise CliError("input reports contain no rows")
    return columns, rows


def summary_table(rows) -> str:
    """Lowest mean error per metric."""
    best = {}
    for r in rows:
        v = float(r["mean_error_db"])
        m = r["metric"]
        if m not in best or v < float(best[m]["mean_error_db"]):
            best[m] = r
    lines = [f"{'metric':<16}{'min_error_db':>14}  {'estimator':<10}{'n_obs':>7}  source"]
    for m in sorted(best):
        r = best[m]
        lines.append(f"{m:<16}{r['mean_error_db']:>14}  {r['estimator']:<10}{r['n_obs']:>7}  {r['source']}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> list[Path]:
    columns, rows = merge_reports(args.reports)
    out = _out_dir(args.out)
    long_path = out / "report_long.csv"
    with open(long_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, columns, restval="", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    text = summary_table(rows)
    summary_path = out / "summary.txt"
    summary_path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return [long_path, summary_path]


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--seed", type=int, help="run seed (decimal u64); overrides [run] seed")
    common.add_argument("--out", help="output directory (train: output params or weights file)")
    common.add_argument("--threads", type=int, help="worker threads; defaults to $RME_THREADS or 1")

    parser = argparse.ArgumentParser(prog="radiomap", description="Radio map estimation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="synthesize measurement sets")
    sub.add_parser("quantize", parents=[common], help="quantize measurement sets onto their region grid")
    p = sub.add_parser("train", parents=[common], help="fit an estimator")
    p.add_argument("--estimator", required=True, choices=ESTIMATORS)
    p = sub.add_parser("evaluate", parents=[common], help="Monte-Carlo error report")
    p.add_argument("--check-seed", action="store_true", help="run twice and require identical bytes")
    p = sub.add_parser("report", parents=[common], help="merge report CSVs and summarize")
    p.add_argument("reports", nargs="*", help="report CSVs to merge")
    return parser


COMMANDS = {
    "generate": cmd_generate,
    "quantize": cmd_quantize,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (CliError, OSError, ValueError, KeyError, RuntimeError, configparser.Error) as exc:
        print(f"radiomap {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
