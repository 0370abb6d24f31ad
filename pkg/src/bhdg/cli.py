"""Command-line entry point: ``bhdg {run,sweep,sensitivity,ablation,stats,trace}``.

Settings come from an optional TOML file (``--config``) and are overridden by
flags. Every command writes CSV tables plus a ``meta.json`` holding the
resolved configuration and its hash. Exit status is 0 on success, 2 for a bad
configuration and 3 for unreadable or invalid input files.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import experiment as ex
from .ingest import DatasetError, load_arff, load_csv
from .metrics import HIGHER_IS_BETTER, METRIC_NAMES
from .solver import VARIANTS, HyperParams, fit, write_trace
from .stats import RankTable, average_ranks, friedman, nemenyi_cd, write_cd_data
from .synthetic import planted_task, random_task

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_CONFIG = 2
EXIT_IO = 3

HP_FIELDS = [f.name for f in fields(HyperParams)]


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# Config

def load_config(path):
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def resolve_hyperparams(cfg, args):
    values = dict(cfg.get("hyperparams", {}))
    unknown = set(values) - set(HP_FIELDS)
    if unknown:
        raise ConfigError(f"unknown hyperparameters: {sorted(unknown)}")
    for name in HP_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        return HyperParams(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dataset_specs(cfg, args):
    """Dataset specs from ``--dataset`` (repeatable) or the ``[[datasets]]`` table."""
    if args.dataset:
        return [parse_dataset_flag(s) for s in args.dataset]
    specs = cfg.get("datasets", [])
    if isinstance(specs, dict):
        specs = [specs]
    if not specs:
        raise ConfigError("no dataset given; use --dataset or a [[datasets]] table")
    return specs


def parse_dataset_flag(text):
    """``planted:SEED``, ``random:SEED``, ``data.arff`` (labels in data.xml) or ``X.csv,Y.csv``."""
    kind, _, rest = text.partition(":")
    if kind in ("planted", "random"):
        try:
            return {"synthetic": kind, "seed": int(rest or 0)}
        except ValueError as exc:
            raise ConfigError(f"bad synthetic seed in {text!r}") from exc
    if "," in text:
        features, labels = text.split(",", 1)
        return {"features": features, "labels": labels}
    if text.endswith(".arff"):
        return {"arff": text, "xml": str(Path(text).with_suffix(".xml"))}
    raise ConfigError(f"cannot interpret dataset {text!r}")


def load_dataset(spec):
    name = spec.get("name")
    if "synthetic" in spec:
        kwargs = {k: spec[k] for k in ("n", "d", "c", "seed") if k in spec}
        if spec["synthetic"] == "planted":
            ds, _ = planted_task(**kwargs)
        elif spec["synthetic"] == "random":
            ds = random_task(**kwargs)
        else:
            raise ConfigError(f"unknown synthetic task {spec['synthetic']!r}")
    elif "arff" in spec:
        ds = load_arff(spec["arff"], spec.get("xml") or str(Path(spec["arff"]).with_suffix(".xml")), name)
    elif "features" in spec and "labels" in spec:
        ds = load_csv(spec["features"], spec["labels"], name)
    else:
        raise ConfigError(f"dataset spec needs 'arff', 'features'/'labels' or 'synthetic': {spec}")
    if name:
        ds.name = name
    return ds


def _list(value, cast):
    if value is None:
        return None
    items = value if isinstance(value, (list, tuple)) else str(value).split(",")
    return [cast(v) for v in items]


def _fraction(v):
    f = float(v)
    if not 0.0 < f <= 1.0:
        raise ConfigError(f"feature fraction {v!r} not in (0, 1]")
    return f


def run_settings(cfg, args):
    sec = dict(cfg.get("run", {}))
    variants = _list(args.variant, str) or sec.get("variants") or ["bhdg"]
    bad = [v for v in variants if v not in ex.SELECTORS]
    if bad:
        raise ConfigError(f"unknown variants {bad}; choose from {list(ex.SELECTORS)}")
    seeds = _list(args.seed, int) or [int(s) for s in sec.get("seeds", [0])]
    fractions = _list(getattr(args, "fractions", None), _fraction) or \
        ([_fraction(f) for f in sec["fractions"]] if "fractions" in sec else None)
    train_fraction = args.train_fraction if args.train_fraction is not None else sec.get("train_fraction", 0.5)
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must lie in (0, 1)")
    return {
        "variants": variants, "seeds": seeds, "fractions": fractions, "train_fraction": float(train_fraction),
        "workers": args.workers or sec.get("workers", 1),
        "mlknn_k": sec.get("mlknn_k", 10), "mlknn_s": sec.get("mlknn_s", 1.0),
    }


# --------------------------------------------------------------------------
# Output helpers

def out_dir(cfg, args):
    path = Path(args.out or cfg.get("run", {}).get("out", "results"))
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    return path


def write_meta(path, command, resolved):
    meta = {"command": command, "version": __version__, "config": resolved,
            "config_hash": ex.config_hash(resolved)}
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return meta["config_hash"]


def write_plot_data(path, rows, x_field):
    """Tidy long table: one line per (dataset, metric, series, x), mean over seeds."""
    groups = {}
    for r in rows:
        if r.status != "ok":
            continue
        x = r.hyperparams.get(x_field) if x_field != "feature_fraction" else r.feature_fraction
        for m in METRIC_NAMES:
            groups.setdefault((r.dataset, m, r.variant, x), []).append(getattr(r, m))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dataset,metric,series,x,y,n\n")
        for (dsname, m, series, x), ys in sorted(groups.items(), key=lambda kv: tuple(map(str, kv[0]))):
            fh.write(f"{dsname},{m},{series},{float(x)!r},{float(np.mean(ys))!r},{len(ys)}\n")


def _finish(dest, command, resolved, rows, plot_x=None):
    h = write_meta(dest / "meta.json", command, resolved)
    ex.write_rows(dest / "results.csv", rows, header_comment=f"bhdg {command} config_hash={h}")
    if plot_x:
        write_plot_data(dest / "plot_data.csv", rows, plot_x)
    failed = sum(r.status != "ok" for r in rows)
    print(f"{command}: {len(rows)} rows ({failed} diverged) -> {dest}")


# --------------------------------------------------------------------------
# Commands

def cmd_run(args, cfg):
    hp = resolve_hyperparams(cfg, args)
    rs = run_settings(cfg, args)
    specs = dataset_specs(cfg, args)
    datasets = [load_dataset(s) for s in specs]
    fractions = rs["fractions"] or [0.2]
    jobs = [(ds, replace(hp, seed=seed), v, fractions, rs["train_fraction"], rs["mlknn_k"], rs["mlknn_s"])
            for ds in datasets for v in rs["variants"] for seed in rs["seeds"]]
    rows = ex.run_cells(jobs, rs["workers"])
    resolved = {"hyperparams": asdict(hp), "datasets": specs, **{**rs, "fractions": fractions}}
    _finish(out_dir(cfg, args), "run", resolved, rows)


def cmd_sweep(args, cfg):
    hp = resolve_hyperparams(cfg, args)
    rs = run_settings(cfg, args)
    specs = dataset_specs(cfg, args)
    datasets = [load_dataset(s) for s in specs]
    rows = ex.run_sweep(datasets, hp, rs["variants"], rs["seeds"], rs["fractions"], rs["train_fraction"],
                        rs["mlknn_k"], rs["mlknn_s"], rs["workers"])
    resolved = {"hyperparams": asdict(hp), "datasets": specs, **rs}
    _finish(out_dir(cfg, args), "sweep", resolved, rows, plot_x="feature_fraction")


def cmd_sensitivity(args, cfg):
    sec = cfg.get("sensitivity", {})
    parameter = args.parameter or sec.get("parameter")
    if parameter not in ex.SENSITIVITY_GRIDS:
        raise ConfigError(f"--parameter must be one of {sorted(ex.SENSITIVITY_GRIDS)}")
    values = _list(args.values, float) or sec.get("values") or list(ex.SENSITIVITY_GRIDS[parameter])
    if cfg.get("hyperparams") or any(getattr(args, n, None) is not None for n in HP_FIELDS):
        base = resolve_hyperparams(cfg, args)
    else:
        base = HyperParams(**ex.RECOMMENDED)
    rs = run_settings(cfg, args)
    fraction = (rs["fractions"] or [0.2])[0]
    specs = dataset_specs(cfg, args)
    rows = []
    for s in specs:
        rows += ex.run_sensitivity(load_dataset(s), parameter, values, base, rs["seeds"], fraction,
                                   rs["train_fraction"], rs["mlknn_k"], rs["mlknn_s"], rs["workers"])
    resolved = {"hyperparams": asdict(base), "datasets": specs, "parameter": parameter,
                "values": values, **{**rs, "fractions": [fraction]}}
    _finish(out_dir(cfg, args), "sensitivity", resolved, rows, plot_x=parameter)


def cmd_ablation(args, cfg):
    hp = resolve_hyperparams(cfg, args)
    rs = run_settings(cfg, args)
    fraction = (rs["fractions"] or [0.2])[0]
    specs = dataset_specs(cfg, args)
    datasets = [load_dataset(s) for s in specs]
    rows = ex.run_ablation(datasets, hp, rs["seeds"], fraction, rs["train_fraction"],
                           rs["mlknn_k"], rs["mlknn_s"], rs["workers"])
    resolved = {"hyperparams": asdict(hp), "datasets": specs, **{**rs, "variants": list(VARIANTS),
                                                                  "fractions": [fraction]}}
    dest = out_dir(cfg, args)
    _finish(dest, "ablation", resolved, rows)
    wins = ex.ablation_wins(rows)
    with open(dest / "wins.csv", "w", encoding="utf-8") as fh:
        fh.write("dataset,variant,wins\n")
        for dsname in sorted(wins):
            for v in VARIANTS:
                fh.write(f"{dsname},{v},{wins[dsname].get(v, 0)}\n")


def _tables_from_rows(rows, fraction):
    """Per metric: datasets x methods table of seed-averaged values at ``fraction``."""
    ok = [r for r in rows if r.status == "ok"]
    if not ok:
        raise ConfigError("no successful rows to compare")
    datasets = sorted({r.dataset for r in ok})
    methods = sorted({r.variant for r in ok})
    tables = {}
    for m in METRIC_NAMES:
        vals = np.full((len(datasets), len(methods)), np.nan)
        for i, dsname in enumerate(datasets):
            for j, meth in enumerate(methods):
                cand = [r for r in ok if r.dataset == dsname and r.variant == meth]
                if not cand:
                    continue
                best = min({r.feature_fraction for r in cand}, key=lambda f: abs(f - fraction))
                vals[i, j] = np.mean([getattr(r, m) for r in cand if r.feature_fraction == best])
        if np.isnan(vals).any():
            raise ConfigError(f"results do not cover every (dataset, method) pair for {m}")
        tables[m] = RankTable(methods, datasets, vals, HIGHER_IS_BETTER[m])
    return tables


def _read_wide_table(path, metric):
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    methods = header[1:]
    datasets, vals = [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        datasets.append(cells[0])
        vals.append([float(c) for c in cells[1:]])
    return RankTable(methods, datasets, vals, HIGHER_IS_BETTER[metric])


def cmd_stats(args, cfg):
    tables = {}
    if args.results:
        rows = [r for p in args.results for r in ex.read_rows(p)]
        tables.update(_tables_from_rows(rows, args.fraction))
    for item in args.table or []:
        metric, _, path = item.partition("=")
        if metric not in METRIC_NAMES or not path:
            raise ConfigError(f"--table expects METRIC=FILE with METRIC in {METRIC_NAMES}")
        tables[metric] = _read_wide_table(path, metric)
    if not tables:
        raise ConfigError("stats needs --results or --table")
    dest = out_dir(cfg, args)
    lines = ["metric,K,N,chi2,FF,CD"]
    rank_lines = ["metric,method,avg_rank"]
    for m in METRIC_NAMES:
        if m not in tables:
            continue
        t = tables[m]
        K, N = len(t.methods), len(t.datasets)
        r = average_ranks(t)
        try:
            chi2, ff = friedman(r, N)
        except ZeroDivisionError:
            chi2, ff = float("nan"), float("inf")
        try:
            cd = nemenyi_cd(K, N, args.alpha)
        except ValueError:
            cd = float("nan")
        lines.append(f"{m},{K},{N},{chi2!r},{ff!r},{cd!r}")
        rank_lines += [f"{m},{meth},{float(x)!r}" for meth, x in zip(t.methods, r)]
        write_cd_data(dest / f"cd_{m}.csv", t.methods, r, cd)
    (dest / "stats.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (dest / "ranks.csv").write_text("\n".join(rank_lines) + "\n", encoding="utf-8")
    write_meta(dest / "meta.json", "stats", {"results": args.results, "tables": args.table,
                                            "fraction": args.fraction, "alpha": args.alpha})
    print("\n".join(lines))


def cmd_trace(args, cfg):
    hp = resolve_hyperparams(cfg, args)
    rs = run_settings(cfg, args)
    specs = dataset_specs(cfg, args)
    ds = load_dataset(specs[0])
    variant = rs["variants"][0]
    if variant not in VARIANTS:
        raise ConfigError(f"trace needs a solver variant, one of {VARIANTS}")
    hp = replace(hp, seed=rs["seeds"][0])
    X_tr, Y_tr, _, _ = ex.prepare(ds, rs["train_fraction"], hp.seed)
    _, state = fit(X_tr, Y_tr, hp, variant)
    dest = out_dir(cfg, args)
    write_trace(state, dest / "trace.csv")
    write_meta(dest / "meta.json", "trace", {"hyperparams": asdict(hp), "dataset": specs[0],
                                            "variant": variant, "train_fraction": rs["train_fraction"]})
    print(f"trace: {state.iter} iterations, converged={state.converged} -> {dest / 'trace.csv'}")


# --------------------------------------------------------------------------
# Parser

def _common(p, fractions=True):
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--dataset", action="append",
                   help="planted:SEED, random:SEED, data.arff (with data.xml) or X.csv,Y.csv; repeatable")
    p.add_argument("--variant", help="comma-separated selectors: " + ",".join(ex.SELECTORS))
    p.add_argument("--seed", help="comma-separated seeds")
    p.add_argument("--out", help="output directory (default: results)")
    p.add_argument("--workers", type=int, help="parallel processes")
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    if fractions:
        p.add_argument("--fractions", help="comma-separated feature fractions")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--tol", type=float)
    for name in ("lambda1", "lambda2", "lambda3", "rho0", "alpha", "sigma", "epsilon", "hash_coupling"):
        p.add_argument(f"--{name.replace('_', '-')}", type=float, dest=name)
    p.add_argument("--l", type=int, dest="l", help="hash code length")
    p.add_argument("--k", type=int, dest="k", help="graph neighbour count")


def build_parser():
    parser = argparse.ArgumentParser(prog="bhdg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="fit, select and evaluate single cells"))
    _common(sub.add_parser("sweep", help="feature-fraction sweep"))
    p = sub.add_parser("sensitivity", help="vary one hyperparameter")
    _common(p)
    p.add_argument("--parameter", choices=sorted(ex.SENSITIVITY_GRIDS))
    p.add_argument("--values", help="comma-separated grid (default: published grid)")
    _common(sub.add_parser("ablation", help="compare bhdg, bhdg1 and bhdg2"))
    p = sub.add_parser("stats", help="Friedman and Nemenyi statistics")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--results", nargs="+", help="results.csv files from run or sweep")
    p.add_argument("--table", action="append", help="METRIC=FILE wide table (rows datasets, columns methods)")
    p.add_argument("--fraction", type=float, default=0.2, help="feature fraction to compare at")
    p.add_argument("--alpha", type=float, default=0.05)
    _common(sub.add_parser("trace", help="per-iteration objective trace"), fractions=False)
    return parser


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "sensitivity": cmd_sensitivity,
            "ablation": cmd_ablation, "stats": cmd_stats, "trace": cmd_trace}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"bhdg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DatasetError) as exc:
        print(f"bhdg: input error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
