"""Experiment pipeline: fit a selector, keep the top features, classify, score.

One *cell* is (dataset, selector variant, hyperparameters, feature budget,
seed). Cells are independent and deterministic given their seeds.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import mlknn
from .ingest import make_split, minmax_scale
from .metrics import METRIC_NAMES, evaluate
from .solver import VARIANTS, FeatureRanking, HyperParams, SolverDivergence, fit, select_top

BASELINES = ("random", "variance")
SELECTORS = VARIANTS + BASELINES

# Published grids and the recommended setting (lambda1, lambda2, lambda3, rho, alpha).
LAMBDA_GRID = (1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
ALPHA_GRID = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
RHO_GRID = (0.01, 0.05, 0.1, 0.15, 0.2, 0.25)
RECOMMENDED = {"lambda1": 1000.0, "lambda2": 10.0, "lambda3": 1000.0, "rho0": 0.01, "alpha": 1.0}
SENSITIVITY_GRIDS = {"lambda1": LAMBDA_GRID, "lambda2": LAMBDA_GRID, "lambda3": LAMBDA_GRID,
                     "rho0": RHO_GRID, "alpha": ALPHA_GRID}

ROW_FIELDS = ["dataset", "variant", "seed", "feature_count", "feature_fraction",
              *METRIC_NAMES, "status", "iterations", "wall_time", "hyperparams"]


@dataclass
class ResultRow:
    dataset: str
    variant: str
    seed: int
    feature_count: int
    feature_fraction: float
    hl: float = float("nan")
    rl: float = float("nan")
    oe: float = float("nan")
    cv: float = float("nan")
    ap: float = float("nan")
    macro_f1: float = float("nan")
    status: str = "ok"
    iterations: int = 0
    wall_time: float = 0.0
    hyperparams: dict = field(default_factory=dict)

    def metrics(self):
        return {m: getattr(self, m) for m in METRIC_NAMES}

    def as_csv_row(self, include_time=True):
        row = asdict(self)
        row["hyperparams"] = json.dumps(self.hyperparams, sort_keys=True)
        if not include_time:
            row["wall_time"] = ""
        return row


def baseline_ranking(name, X, seed):
    d = X.shape[1]
    if name == "random":
        return FeatureRanking.from_scores(np.random.default_rng(seed).random(d))
    if name == "variance":
        return FeatureRanking.from_scores(X.var(axis=0))
    raise ValueError(f"unknown baseline {name!r}")


def rank_features(X, Y, variant, hp):
    """Return ``(ranking, state_or_None)`` for a selector on training data."""
    if variant in BASELINES:
        return baseline_ranking(variant, X, hp.seed), None
    return fit(X, Y, hp, variant)


def feature_counts(d, spec):
    """Expand a feature budget: a float fraction, an int count, or a list of either."""
    items = spec if isinstance(spec, (list, tuple)) else [spec]
    out = []
    for item in items:
        if isinstance(item, (int, np.integer)) and not isinstance(item, bool):
            count = int(item)
        else:
            count = math.ceil(round(float(item) * d, 9))
        if not 0 < count <= d:
            raise ValueError(f"feature budget {item!r} is out of range for d={d}")
        out.append(count)
    return out


def prepare(ds, train_fraction, seed):
    split = make_split(ds, train_fraction, seed)
    tr, te = list(split.train_indices), list(split.test_indices)
    X_tr, X_te = minmax_scale(ds.X[tr], ds.X[te])
    return X_tr, ds.Y[tr], X_te, ds.Y[te]


def score_subset(X_tr, Y_tr, X_te, Y_te, features, k=10, s=1.0):
    model = mlknn.train(X_tr[:, features], Y_tr, k, s)
    hard, ranks = mlknn.predict(model, X_te[:, features])
    return evaluate(hard, ranks, Y_te)


def run_cell(ds, hp, variant, feature_spec, train_fraction=0.5, split_seed=None,
             mlknn_k=10, mlknn_s=1.0, trace_path=None):
    """Fit, select, classify and evaluate one configuration.

    ``feature_spec`` may be a list, in which case one row per budget is
    returned from a single fit. Solver divergence is reported through the
    row status instead of an exception.
    """
    if variant not in SELECTORS:
        raise ValueError(f"unknown selector {variant!r}")
    split_seed = hp.seed if split_seed is None else split_seed
    X_tr, Y_tr, X_te, Y_te = prepare(ds, train_fraction, split_seed)
    counts = feature_counts(ds.d, feature_spec)
    hp_record = asdict(hp)
    t0 = time.perf_counter()
    try:
        ranking, state = rank_features(X_tr, Y_tr, variant, hp)
    except (SolverDivergence, FloatingPointError, np.linalg.LinAlgError) as exc:
        return [ResultRow(ds.name, variant, hp.seed, c, c / ds.d, status=f"diverged: {exc}",
                          hyperparams=hp_record) for c in counts]
    if trace_path is not None and state is not None:
        from .solver import write_trace
        write_trace(state, trace_path)
    fit_time = time.perf_counter() - t0
    rows = []
    for count in counts:
        features = select_top(ranking, count)
        t1 = time.perf_counter()
        rep = score_subset(X_tr, Y_tr, X_te, Y_te, features, mlknn_k, mlknn_s)
        rows.append(ResultRow(
            ds.name, variant, hp.seed, count, count / ds.d, **rep.as_dict(),
            iterations=state.iter if state is not None else 0,
            wall_time=fit_time + time.perf_counter() - t1, hyperparams=hp_record,
        ))
    return rows


# --------------------------------------------------------------------------
# Grids

def _cell_job(args):
    ds, hp, variant, spec, frac, mk, ms = args
    return run_cell(ds, hp, variant, spec, frac, mlknn_k=mk, mlknn_s=ms)


def run_cells(jobs, workers=1):
    """Run ``jobs`` (tuples for :func:`_cell_job`) and concatenate rows in job order."""
    if workers <= 1:
        results = [_cell_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, jobs))
    return [row for rows in results for row in rows]


def sweep_budget(d, fractions=None):
    """Default feature budgets: 2%..20% of d in 1% steps, or counts 2..14 for small d."""
    if fractions is not None:
        return list(fractions)
    if d < 50:
        return list(range(2, min(14, d) + 1))
    return [round(0.01 * p, 2) for p in range(2, 21)]


def run_sweep(datasets, hp, variants, seeds, fractions=None, train_fraction=0.5,
              mlknn_k=10, mlknn_s=1.0, workers=1):
    jobs = []
    for ds in datasets:
        budget = sweep_budget(ds.d, fractions)
        for variant in variants:
            for seed in seeds:
                jobs.append((ds, replace(hp, seed=seed), variant, budget, train_fraction, mlknn_k, mlknn_s))
    return run_cells(jobs, workers)


def run_sensitivity(ds, parameter, values=None, base=None, seeds=(0,), fraction=0.2,
                    train_fraction=0.5, mlknn_k=10, mlknn_s=1.0, workers=1):
    """Vary one hyperparameter with the rest fixed at ``base`` (default: recommended)."""
    if parameter not in SENSITIVITY_GRIDS:
        raise ValueError(f"no sensitivity grid for {parameter!r}")
    base = base or HyperParams(**RECOMMENDED)
    values = SENSITIVITY_GRIDS[parameter] if values is None else values
    jobs = [(ds, replace(base, **{parameter: v}, seed=s), "bhdg", fraction, train_fraction, mlknn_k, mlknn_s)
            for v in values for s in seeds]
    return run_cells(jobs, workers)


def run_ablation(datasets, hp, seeds=(0,), fraction=0.2, train_fraction=0.5,
                 mlknn_k=10, mlknn_s=1.0, workers=1):
    jobs = [(ds, replace(hp, seed=s), v, fraction, train_fraction, mlknn_k, mlknn_s)
            for ds in datasets for v in VARIANTS for s in seeds]
    return run_cells(jobs, workers)


def ablation_wins(rows):
    """Per dataset, how many of the six metrics each variant wins (mean over seeds).

    Ties on a metric credit every tied variant.
    """
    from .metrics import HIGHER_IS_BETTER
    table = {}
    for r in rows:
        if r.status == "ok":
            table.setdefault(r.dataset, {}).setdefault(r.variant, []).append(r)
    wins = {}
    for dsname, per in table.items():
        means = {v: {m: float(np.mean([getattr(r, m) for r in rs])) for m in METRIC_NAMES}
                 for v, rs in per.items()}
        counts = {v: 0 for v in means}
        for m in METRIC_NAMES:
            vals = {v: means[v][m] for v in means}
            best = max(vals.values()) if HIGHER_IS_BETTER[m] else min(vals.values())
            for v, x in vals.items():
                if x == best:
                    counts[v] += 1
        wins[dsname] = counts
    return wins


# --------------------------------------------------------------------------
# Output

def config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_rows(path, rows, header_comment=None, include_time=False, extra_fields=()):
    """Write result rows as CSV with a stable column order.

    ``include_time=False`` blanks the wall-clock column so that files are
    byte-reproducible.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_comment:
            for line in header_comment.splitlines():
                fh.write(f"# {line}\n")
        fields = ROW_FIELDS + list(extra_fields)
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            row = r.as_csv_row(include_time) if isinstance(r, ResultRow) else r
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for rec in csv.DictReader(lines):
        row = ResultRow(
            dataset=rec["dataset"], variant=rec["variant"], seed=int(rec["seed"]),
            feature_count=int(rec["feature_count"]), feature_fraction=float(rec["feature_fraction"]),
            status=rec["status"], iterations=int(rec["iterations"] or 0),
            wall_time=float(rec["wall_time"] or 0.0), hyperparams=json.loads(rec["hyperparams"] or "{}"),
        )
        for m in METRIC_NAMES:
            setattr(row, m, float(rec[m]))
        out.append(row)
    return out
