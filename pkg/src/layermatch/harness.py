"""Experiment orchestration: trials, baselines, sweeps, and reports.

A run covers every two-class task of the ten-digit dataset (45 pairs)
for a number of repeats, each repeat with its own random split.  Three
methods are compared: the full coupled-layer method ("matched", default
plans pinned to the outcome of the structure search; set
``matched_plans`` to none to re-search at startup), the equal-depth
ablation with same-index coupling ("aligned"), and linear correlation
projection straight on raw features ("cca-svm").  Reports are
deterministic for a given master seed.
"""

import itertools
import json
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import cca, classify, matcher, sae, synth
from .data import load_multifeatures, split_trial
from .exceptions import LoadError, NumericError

METHODS = ("cca-svm", "aligned", "matched")

# tags folded into derived seeds so the independent random streams
# (search, per-net init, trials) never collide
_SEARCH_TAG = 101
_PLAN_TAG = 211

SMOKE_PAIRS = 3
SMOKE_REPEATS = 3


def derive_seed(*parts):
    """Deterministic 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


def parse_plan(text):
    """Plan from a compact pair list, e.g. ``2:2,3:3,5:4``.

    Depths are taken from the final (top) pair.
    """
    pairs = []
    for chunk in text.split(","):
        i, j = chunk.strip().split(":")
        pairs.append((int(i), int(j)))
    a, b = pairs[-1]
    return matcher.MatchingPlan(a, b, tuple(pairs))


ALIGNED_PLAN = parse_plan("2:2,3:3,4:4")


@dataclass
class ExperimentConfig:
    """Everything a run needs; file values and CLI flags both land here."""

    data_dir: str = "data"
    profile_path: str = None
    pixel_path: str = None
    methods: tuple = METHODS
    depth_min: int = 3
    depth_max: int = 5
    full_rank_only: bool = False
    repeats: int = 10
    n_pairs: int = None  # None = all 45 two-class tasks
    co_ratio: float = 0.6
    train_ratio: float = 0.2
    co_scope: str = "task"
    baseline_rank: int = 100
    weight_decay: float = 1e-4
    lr: float = 0.2
    momentum: float = 0.95
    omega: float = 1.0
    corr_weight: float = 1.0
    cca_reg: float = 1e-2
    svm_c: float = 0.1
    top_width: int = 30
    max_iters: int = 15
    steps_per_iter: int = 4
    step_batch: int = None
    pretrain_epochs: int = 60
    pretrain_lr: float = None
    pretrain_batch: int = 80
    pretrain_noise: float = 0.0
    tol: float = 1e-4
    patience: int = 3
    fine_tune_epochs: int = 15
    center: bool = True
    dtype: str = "float32"
    seed: int = 0
    jobs: int = 1
    search_pairs: int = 2
    # the structure search trains every candidate, so it gets a longer
    # budget than the per-task trials; None inherits the trial value
    search_max_iters: int = 40
    search_steps_per_iter: int = 8
    search_pretrain_epochs: int = 150
    search_fine_tune_epochs: int = 60
    # the two structures the search settles on; None = search at startup
    matched_plans: tuple = ("2:2,3:3,5:4", "2:2,4:3")
    sweep_plans: tuple = ("2:2,3:3,5:4",)
    backend: str = None

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not (0 < self.co_ratio and 0 < self.train_ratio
                and self.co_ratio + self.train_ratio <= 1):
            raise ValueError("invalid co/train ratios")
        for depth in (self.depth_min, self.depth_max):
            if not matcher.DEPTH_MIN <= depth <= matcher.DEPTH_MAX:
                raise ValueError(f"depth {depth} outside [2, 5]")
        if self.depth_min > self.depth_max:
            raise ValueError("depth_min above depth_max")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")

    def train_config(self, top_width=None):
        return matcher.TrainConfig(
            top_width=self.top_width if top_width is None else top_width,
            hyper=sae.SaeHyperParams(
                weight_decay=self.weight_decay, lr=self.lr, omega=self.omega,
                momentum=self.momentum,
                corr_weight=self.corr_weight,
            ),
            max_iters=self.max_iters,
            steps_per_iter=self.steps_per_iter,
            step_batch=self.step_batch,
            pretrain_epochs=self.pretrain_epochs,
            pretrain_lr=self.pretrain_lr,
            pretrain_batch=self.pretrain_batch,
            pretrain_noise=self.pretrain_noise,
            tol=self.tol,
            patience=self.patience,
            fine_tune_epochs=self.fine_tune_epochs,
            cca_reg=self.cca_reg,
            center=self.center,
            dtype=self.dtype,
            backend=self.backend,
        )

    def search_train_config(self):
        tc = self.train_config()
        overrides = {
            "max_iters": self.search_max_iters,
            "steps_per_iter": self.search_steps_per_iter,
            "pretrain_epochs": self.search_pretrain_epochs,
            "fine_tune_epochs": self.search_fine_tune_epochs,
        }
        return replace(tc, **{k: v for k, v in overrides.items() if v is not None})


_LIST_FIELDS = {"methods", "matched_plans", "sweep_plans"}
_NONE_OK = {"profile_path", "pixel_path", "cca_reg", "n_pairs", "matched_plans",
            "backend", "pretrain_lr", "pretrain_batch", "step_batch",
            "search_max_iters", "search_steps_per_iter",
            "search_pretrain_epochs", "search_fine_tune_epochs"}


def _coerce(name, kind, raw):
    if raw is None or (isinstance(raw, str) and raw.lower() == "none"):
        if name in _NONE_OK:
            return None
        raise ValueError(f"config key {name} cannot be none")
    if name in _LIST_FIELDS:
        if isinstance(raw, str):
            return tuple(part.strip() for part in raw.split(";" if ";" in raw else ",")
                         if part.strip())
        return tuple(raw)
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if kind in (int, float) and not isinstance(raw, str):
        return kind(raw)
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def load_config(path=None, overrides=None):
    """Build a config from an optional key=value file plus overrides.

    File syntax: one ``key = value`` pair per line, ``#`` comments.
    Overrides (a dict) win over file values.
    """
    values = {}
    if path is not None:
        if not os.path.exists(path):
            raise LoadError(f"config file not found: {path}")
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise LoadError(f"{path}:{lineno}: expected key=value")
                key, raw = line.split("=", 1)
                values[key.strip()] = raw.strip()
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    types = {"str": str, "int": int, "float": float, "bool": bool, "tuple": tuple}
    coerced = {}
    for key, raw in values.items():
        if key not in known:
            raise LoadError(f"unknown config key {key!r}")
        kind = known[key]
        if isinstance(kind, str):
            kind = types.get(kind, str)
        coerced[key] = _coerce(key, kind, raw)
    return ExperimentConfig(**coerced)


def apply_smoke(config):
    """Desk-scale variant: 3 class pairs, 3 repeats, single search pair."""
    return replace(config, n_pairs=SMOKE_PAIRS, repeats=SMOKE_REPEATS, search_pairs=1)


def resolve_dataset(config):
    """Load the two-view tables, generating the cached surrogate if needed."""
    if config.profile_path or config.pixel_path:
        for path in (config.profile_path, config.pixel_path):
            if not path or not os.path.exists(path):
                raise LoadError(f"dataset file not found: {path}")
        return load_multifeatures(config.profile_path, config.pixel_path)
    return synth.load_dataset(config.data_dir)


def all_class_pairs(n_classes=10):
    return list(itertools.combinations(range(n_classes), 2))


def task_pairs(config):
    pairs = all_class_pairs()
    if config.n_pairs is not None:
        pairs = pairs[: config.n_pairs]
    return pairs


def run_baseline_ccasvm(split, config):
    """Linear correlation projection on raw standardized features, then SVM.

    Projects through the leading ``baseline_rank`` canonical directions
    of the raw views; with co-occurrence blocks barely larger than the
    feature dimension the directions overfit, which is what keeps this
    baseline weak.
    """
    k = min(config.baseline_rank, split.co_source.shape[1], split.co_target.shape[1])
    cov = cca.covariances(split.co_source, split.co_target, center=config.center)
    proj = cca.solve_cca(cov, k, reg=config.cca_reg)
    x_train = cca.project(split.train_source[0], proj.v_source, proj.mean_source)
    x_test = cca.project(split.test_target[0], proj.v_target, proj.mean_target)
    labels = split.train_source[1]
    pair = tuple(sorted(set(labels.tolist())))
    model = classify.fit_binary(x_train, labels, pair, c=config.svm_c)
    return classify.class_accuracy(model, x_test, split.test_target[1])


def _deep_accuracy(plan, split, config, trial_seed, plan_index):
    tc = config.train_config()
    model = matcher.train_joint(
        plan, split, tc, seed=derive_seed(trial_seed, _PLAN_TAG, plan_index)
    )
    x_train = model.common_subspace(split.train_source[0], "source")
    x_test = model.common_subspace(split.test_target[0], "target")
    labels = split.train_source[1]
    pair = tuple(sorted(set(labels.tolist())))
    svm = classify.fit_binary(x_train, labels, pair, c=config.svm_c)
    acc = classify.class_accuracy(svm, x_test, split.test_target[1])
    return acc, model


def run_trial(source, target, pair, repeat, config, matched_plans):
    """All requested methods on one (class pair, repeat) split."""
    class_a, class_b = pair
    trial_seed = derive_seed(config.seed, class_a, class_b, repeat)
    split = split_trial(
        source, target, pair,
        ratios=(config.co_ratio, config.train_ratio),
        seed=trial_seed, co_scope=config.co_scope,
    )
    records = []

    def record(method, plan_label, **extra):
        base = {
            "class_a": class_a, "class_b": class_b, "repeat": repeat,
            "method": method, "plan": plan_label,
            "accuracy": None, "excluded": 0, "error": "",
            "objective": None, "seconds": None,
        }
        base.update(extra)
        return base

    for method in config.methods:
        runs = [(None, "")]
        if method == "matched":
            runs = [(plan, plan.label) for plan in matched_plans]
        elif method == "aligned":
            runs = [(ALIGNED_PLAN, ALIGNED_PLAN.label)]
        for plan_index, (plan, label) in enumerate(runs):
            start = time.perf_counter()
            try:
                if method == "cca-svm":
                    acc = run_baseline_ccasvm(split, config)
                    extra = {"accuracy": acc}
                else:
                    acc, model = _deep_accuracy(
                        plan, split, config, trial_seed, plan_index
                    )
                    extra = {
                        "accuracy": acc,
                        "objective": model.objective,
                        "converged": model.converged,
                        "n_iters": model.n_iters,
                    }
            except NumericError as exc:
                extra = {"excluded": 1, "error": str(exc)}
            extra["seconds"] = round(time.perf_counter() - start, 3)
            records.append(record(method, label, **extra))
    return records


def candidate_plans(config):
    plans = []
    for a in range(config.depth_min, config.depth_max + 1):
        for b in range(config.depth_min, config.depth_max + 1):
            plans.extend(
                matcher.enumerate_matchings(a, b, full_rank_only=config.full_rank_only)
            )
    return plans


def search_plans(source, target, config, n_select=2):
    """Rank candidate plans by mean objective over seeded search splits.

    Returns (selected plans, search records).  Mirrors the published
    protocol: the structure search runs once, on co-occurrence data of a
    few tasks, and the winning structures are then used for every task.
    """
    plans = candidate_plans(config)
    pairs = all_class_pairs()
    rng = np.random.default_rng(derive_seed(config.seed, _SEARCH_TAG))
    chosen = rng.choice(len(pairs), size=min(config.search_pairs, len(pairs)),
                        replace=False)
    objectives = np.zeros((len(plans), len(chosen)))
    records = []
    for col, pair_idx in enumerate(sorted(chosen.tolist())):
        class_a, class_b = pairs[pair_idx]
        split_seed = derive_seed(config.seed, _SEARCH_TAG, class_a, class_b)
        split = split_trial(
            source, target, (class_a, class_b),
            ratios=(config.co_ratio, config.train_ratio),
            seed=split_seed, co_scope=config.co_scope,
        )
        results = matcher.train_all(plans, split, config.search_train_config(),
                                    seed=split_seed)
        for row, result in enumerate(results):
            objectives[row, col] = result.objective
            records.append({
                "kind": "search", "class_a": class_a, "class_b": class_b,
                "plan": result.plan.label, "objective": result.objective,
                "seconds": round(result.seconds, 3),
                "error": result.error or "",
            })
    means = objectives.mean(axis=1)
    order = sorted(
        range(len(plans)),
        key=lambda idx: (means[idx], plans[idx].m, plans[idx].pairs),
    )
    selected = [plans[idx] for idx in order[:n_select]
                if np.isfinite(means[idx])]
    if not selected:
        raise NumericError("plan search found no finite objective")
    for rank, idx in enumerate(order):
        if np.isfinite(means[idx]):
            records.append({
                "kind": "search-rank", "rank": rank, "plan": plans[idx].label,
                "objective": float(means[idx]),
            })
    return selected, records


@dataclass
class ExperimentReport:
    """Everything a run produced, ready for emission."""

    config: ExperimentConfig
    records: list
    search_records: list
    matched_plans: list
    categories: dict = field(default_factory=dict)  # method key -> class -> acc
    task_table: dict = field(default_factory=dict)  # method key -> pair -> acc
    excluded: int = 0
    wall_clock: float = 0.0

    def method_keys(self):
        return sorted(self.categories)

    def mean_accuracy(self, key):
        cats = self.categories[key]
        return float(np.mean(list(cats.values()))) if cats else float("nan")


def _method_key(record):
    if record["method"] == "matched":
        return f"matched[{record['plan']}]"
    return record["method"]


def aggregate_records(records):
    """Per-task means over repeats, then per-category means over tasks."""
    by_task = {}
    excluded = 0
    for rec in records:
        if rec["excluded"]:
            excluded += 1
            continue
        key = _method_key(rec)
        task = (rec["class_a"], rec["class_b"])
        by_task.setdefault(key, {}).setdefault(task, []).append(rec["accuracy"])
    task_table = {}
    categories = {}
    for key, tasks in by_task.items():
        task_means = {task: float(np.mean(accs)) for task, accs in sorted(tasks.items())}
        task_table[key] = task_means
        categories[key] = classify.aggregate_category_accuracy(
            [(task, acc) for task, acc in task_means.items()]
        )
    return categories, task_table, excluded


_POOL_STATE = {}


def _pool_init(source, target, config, matched_plans):
    _POOL_STATE["args"] = (source, target, config, matched_plans)


def _pool_trial(task):
    source, target, config, matched_plans = _POOL_STATE["args"]
    pair, repeat = task
    return run_trial(source, target, pair, repeat, config, matched_plans)


def run_experiment(config):
    """Full protocol: optional plan search, then all pairs x repeats."""
    start = time.perf_counter()
    source, target = resolve_dataset(config)

    matched_plans, search_records = [], []
    if "matched" in config.methods:
        if config.matched_plans:
            matched_plans = [parse_plan(text) for text in config.matched_plans]
        else:
            matched_plans, search_records = search_plans(source, target, config)

    tasks = [(pair, repeat)
             for pair in task_pairs(config)
             for repeat in range(config.repeats)]
    records = []
    if config.jobs > 1:
        with ProcessPoolExecutor(
            max_workers=config.jobs,
            initializer=_pool_init,
            initargs=(source, target, config, matched_plans),
        ) as pool:
            for chunk in pool.map(_pool_trial, tasks):
                records.extend(chunk)
    else:
        for pair, repeat in tasks:
            records.extend(run_trial(source, target, pair, repeat, config,
                                     matched_plans))

    records.sort(key=lambda r: (r["class_a"], r["class_b"], r["repeat"],
                                r["method"], r["plan"]))
    categories, task_table, excluded = aggregate_records(records)
    if excluded:
        warnings.warn(f"{excluded} trial(s) excluded for numeric failures",
                      stacklevel=2)
    return ExperimentReport(
        config=config,
        records=records,
        search_records=search_records,
        matched_plans=matched_plans,
        categories=categories,
        task_table=task_table,
        excluded=excluded,
        wall_clock=time.perf_counter() - start,
    )


def neuron_sweep(config, widths):
    """Accuracy of the pinned sweep plans across top-layer widths.

    Returns (table, reports) where table maps (plan label, width) to the
    mean accuracy over all tasks.
    """
    if not widths:
        raise ValueError("widths must be non-empty")
    plans = [parse_plan(text) for text in config.sweep_plans]
    table = {}
    all_records = []
    for width in widths:
        sub = replace(
            config,
            methods=("matched",),
            matched_plans=tuple(config.sweep_plans),
            top_width=width,
        )
        report = run_experiment(sub)
        for plan in plans:
            key = f"matched[{plan.label}]"
            cats = report.categories.get(key, {})
            table[(plan.label, width)] = (
                float(np.mean(list(cats.values()))) if cats else float("nan")
            )
        for rec in report.records:
            rec = dict(rec)
            rec["top_width"] = width
            all_records.append(rec)
    return table, all_records


def _fmt(value):
    return "" if value is None else f"{value:.6f}"


def write_report_csv(path, records):
    columns = ["class_a", "class_b", "repeat", "method", "plan",
               "accuracy", "excluded"]
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for rec in records:
            row = [str(rec["class_a"]), str(rec["class_b"]), str(rec["repeat"]),
                   rec["method"], rec["plan"], _fmt(rec["accuracy"]),
                   str(rec["excluded"])]
            fh.write(",".join(row) + "\n")


def write_summary(path, report):
    lines = []
    lines.append("two-view transfer experiment")
    lines.append(f"seed={report.config.seed} repeats={report.config.repeats} "
                 f"pairs={len(task_pairs(report.config))} "
                 f"methods={','.join(report.config.methods)}")
    if report.matched_plans:
        lines.append("matched plans: "
                     + "; ".join(p.label for p in report.matched_plans))
    lines.append(f"excluded trials: {report.excluded}")
    lines.append("")
    keys = report.method_keys()
    if keys:
        classes = sorted({cls for key in keys for cls in report.categories[key]})
        header = ["class"] + keys
        widths_ = [max(len(h), 10) for h in header]
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths_)))
        for cls in classes:
            row = [str(cls)]
            for key in keys:
                acc = report.categories[key].get(cls)
                row.append("" if acc is None else f"{acc:.4f}")
            lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths_)))
        row = ["mean"]
        for key in keys:
            row.append(f"{report.mean_accuracy(key):.4f}")
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths_)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trials_jsonl(path, report):
    with open(path, "w") as fh:
        meta = {
            "kind": "meta",
            "seed": report.config.seed,
            "repeats": report.config.repeats,
            "methods": list(report.config.methods),
            "matched_plans": [p.label for p in report.matched_plans],
            "excluded": report.excluded,
            "wall_clock": round(report.wall_clock, 3),
        }
        fh.write(json.dumps(meta) + "\n")
        for rec in report.search_records:
            fh.write(json.dumps(rec) + "\n")
        for rec in report.records:
            out = dict(rec)
            out["kind"] = "trial"
            fh.write(json.dumps(out) + "\n")


def emit_reports(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_report_csv(os.path.join(out_dir, "report.csv"), report.records)
    write_summary(os.path.join(out_dir, "summary.txt"), report)
    write_trials_jsonl(os.path.join(out_dir, "trials.jsonl"), report)


def write_sweep(out_dir, table, records):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "sweep.csv"), "w") as fh:
        fh.write("plan,width,accuracy\n")
        for (label, width), acc in sorted(table.items()):
            fh.write(f"{label},{width},{acc:.6f}\n")
    with open(os.path.join(out_dir, "trials.jsonl"), "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
