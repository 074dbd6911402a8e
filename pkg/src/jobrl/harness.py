"""Experiment orchestration: benchmark tables, OOD tables, sweeps and diagnostics.

CSV layouts (one header row, comma separated, floats written with ``repr``):

* summary      ``method,dataset,n_instances,n_skipped,mean_ratio,std_ratio``
* instances    ``method,dataset,instance,ratio``
* skipped      ``dataset,instance,reason``
* sweep        ``parameter,value,method,n_instances,mean_ratio,std_ratio``
* diagnostics  ``step,max_q,normalized_max_q``

Rows follow the order in which methods and datasets were given.  ``std`` is
the population standard deviation over instances.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .baselines import PolicyKind, exact_optimum, greedy_policy, random_policy
from .checkpoint import load_checkpoint
from .env import rollout
from .estimators import argmax_q_policy
from .generators import GeneratorConfig, generate_many, load_dataset
from .graph import BIDIRECTIONAL, JobAllocationGraph
from .mis import BudgetExceeded
from .qnet import init_params, q_values
from ._rng import substream

SUMMARY_COLUMNS = ("method", "dataset", "n_instances", "n_skipped", "mean_ratio", "std_ratio")
INSTANCE_COLUMNS = ("method", "dataset", "instance", "ratio")
SKIPPED_COLUMNS = ("dataset", "instance", "reason")
SWEEP_COLUMNS = ("parameter", "value", "method", "n_instances", "mean_ratio", "std_ratio")
DIAG_COLUMNS = ("step", "max_q", "normalized_max_q")

DEFAULT_BUDGET = 10**6


@dataclass
class Dataset:
    name: str
    graphs: list
    instance_names: list = None
    generator: list = field(default_factory=list)

    def __post_init__(self):
        if self.instance_names is None:
            self.instance_names = [f"{i:04d}" for i in range(len(self.graphs))]

    @classmethod
    def from_dir(cls, name, path):
        graphs, records = load_dataset(path)
        gens = [{k: r[k] for k in ("family", "params", "seed") if k in r} for r in records]
        return cls(name, graphs, [r["path"] for r in records], gens)


@dataclass
class BenchmarkReport:
    methods: list
    datasets: list
    ratios: dict = field(default_factory=dict)  # (method, dataset) -> [(instance, ratio)]
    skipped: list = field(default_factory=list)  # (dataset, instance, reason)
    metadata: dict = field(default_factory=dict)

    def cell(self, method, dataset):
        values = np.array([r for _, r in self.ratios.get((method, dataset), [])])
        if values.size == 0:
            return 0, float("nan"), float("nan")
        return values.size, float(values.mean()), float(values.std())

    def summary_rows(self):
        rows = []
        for m in self.methods:
            for d in self.datasets:
                n, mean, std = self.cell(m, d)
                n_skip = sum(1 for ds, _, _ in self.skipped if ds == d)
                rows.append((m, d, n, n_skip, mean, std))
        return rows

    def instance_rows(self):
        return [(m, d, inst, r) for m in self.methods for d in self.datasets for inst, r in self.ratios.get((m, d), [])]


@dataclass
class SweepResult:
    parameter: str
    grid: list
    series: dict = field(default_factory=dict)  # method -> [(mean, std, n)]
    metadata: dict = field(default_factory=dict)

    def rows(self):
        return [
            (self.parameter, v, m, n, mean, std)
            for m, points in self.series.items()
            for v, (mean, std, n) in zip(self.grid, points)
        ]


@dataclass
class EpisodeDiagnostics:
    max_q: list
    normalized: list
    losses: list = field(default_factory=list)

    def rows(self):
        return [(t, q, n) for t, (q, n) in enumerate(zip(self.max_q, self.normalized))]


def _label(kind):
    # checkpoint paths are shortened to their file name for table labels
    if kind.tag == "gnn":
        return f"gnn:{os.path.basename(kind.arg)}"
    return str(kind)


def policy_factory(kind: PolicyKind, seed=0):
    """Returns ``(make_policy(instance_idx, repeat), n_repeats_matter)``.

    Random and untrained-network policies are stochastic over their seed and
    get averaged over repeats; greedy and trained policies are deterministic.
    """
    if kind.tag == "greedy":
        policy = greedy_policy(kind.arg or "selection")
        return (lambda i, r: policy), False
    if kind.tag == "gnn":
        params, _ = load_checkpoint(kind.arg)
        policy = argmax_q_policy(params)
        return (lambda i, r: policy), False
    base = int(kind.arg) if kind.arg is not None else seed
    if kind.tag == "random":
        return (lambda i, r: random_policy(np.random.SeedSequence([base, i, r]))), True
    if kind.tag == "untrained-gnn":
        cache = {}

        def make(i, r):
            if r not in cache:
                cache[r] = argmax_q_policy(init_params(substream(base + r, "init")))
            return cache[r]

        return make, True
    raise ValueError(f"unknown policy kind {kind}")


def _optima(dataset: Dataset, budget, report):
    out = []
    for name, g in zip(dataset.instance_names, dataset.graphs):
        try:
            out.append(exact_optimum(g, budget).size)
        except BudgetExceeded as exc:
            report.skipped.append((dataset.name, name, f"oracle budget exceeded: {exc}"))
            out.append(None)
    return out


def run_benchmark(datasets, methods, seeds=5, seed=0, budget=DEFAULT_BUDGET, mode=BIDIRECTIONAL, labels=None):
    """Approximation ratios of every method on every dataset instance.

    ``methods`` are :class:`PolicyKind` values (or their string form).
    Stochastic methods are rolled out ``seeds`` times per instance and the
    per-instance ratio is the mean over those rollouts.
    """
    kinds = [PolicyKind.parse(m) if isinstance(m, str) else m for m in methods]
    names = labels or [_label(k) for k in kinds]
    report = BenchmarkReport(names, [d.name for d in datasets])
    report.metadata = {
        "seed": seed,
        "seeds": seeds,
        "budget": budget,
        "removal_mode": mode,
        "code_version": __version__,
        "methods": [str(k) for k in kinds],
        "datasets": {d.name: d.generator for d in datasets},
    }
    for d in datasets:
        optima = _optima(d, budget, report)
        for kind, label in zip(kinds, names):
            make, stochastic = policy_factory(kind, seed)
            repeats = seeds if stochastic else 1
            cell = report.ratios.setdefault((label, d.name), [])
            for i, (name, g, best) in enumerate(zip(d.instance_names, d.graphs, optima)):
                if best is None:
                    continue
                sizes = [len(rollout(g, make(i, r), mode)[0]) for r in range(repeats)]
                cell.append((name, 1.0 if best == 0 else float(np.mean(sizes)) / best))
    return report


def run_ood(checkpoints, datasets, seed=0, budget=DEFAULT_BUDGET, mode=BIDIRECTIONAL):
    """Cross table of trained checkpoints (``label -> path``) against datasets."""
    methods = [PolicyKind("gnn", path) for path in checkpoints.values()]
    report = run_benchmark(datasets, methods, seeds=1, seed=seed, budget=budget, mode=mode,
                           labels=list(checkpoints))
    report.metadata["checkpoints"] = {label: _checkpoint_meta(path) for label, path in checkpoints.items()}
    return report


def _checkpoint_meta(path):
    _, meta = load_checkpoint(path)
    return {k: meta.get(k) for k in ("generator", "train_config", "dims")}


def run_er_sweep(checkpoint, parameter, grid, base=None, count=10, seed=0, seeds=5,
                 budget=DEFAULT_BUDGET, mode=BIDIRECTIONAL):
    """Vary ``p_conflict`` or ``n_jobs`` of the ER generator and evaluate each grid point.

    Instances at grid point ``k`` are generated from a seed derived from
    ``(seed, k)``; the grid itself is a user choice and is recorded as such.
    """
    if parameter not in ("p_conflict", "n_jobs"):
        raise ValueError(f"can only sweep p_conflict or n_jobs, not {parameter!r}")
    grid = list(grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("sweep grid must be strictly increasing")
    base = base or GeneratorConfig("erdos-renyi", n_jobs=30, n_people=5, p_conflict=0.10, p_select=0.666)
    methods = ([f"gnn:{checkpoint}"] if checkpoint else []) + ["greedy", "random"]
    result = SweepResult(parameter, grid)
    result.metadata = {"base": base.params(), "count": count, "seed": seed, "grid_source": "user"}
    for k, value in enumerate(grid):
        value = int(value) if parameter == "n_jobs" else float(value)
        cfg = GeneratorConfig(base.family, **{**base.params(), parameter: value},
                              seed=int(np.random.SeedSequence([seed, k]).generate_state(1)[0]))
        ds = Dataset(f"{parameter}={value}", generate_many(cfg, count))
        report = run_benchmark([ds], methods, seeds=seeds, seed=seed, budget=budget, mode=mode)
        for label, (_, _, n, _, mean, std) in zip(report.methods, report.summary_rows()):
            key = "gnn" if label.startswith("gnn:") else label
            result.series.setdefault(key, []).append((mean, std, n))
    return result


def run_diagnostics(params, g: JobAllocationGraph, losses=(), mode=BIDIRECTIONAL):
    """Max Q per step of one argmax-policy episode, also divided by the episode maximum.

    When the largest value is not positive the series is divided by the
    largest magnitude instead.
    """
    from .graph import apply_assignment

    series = []
    s = g
    while not s.is_terminal:
        q = q_values(s, params)
        i = int(np.argmax(q))
        series.append(float(q[i]))
        s = apply_assignment(s, s.selection[i], mode)
    if not series:
        return EpisodeDiagnostics([], [], list(losses))
    top = max(series)
    scale = top if top > 0 else max(abs(x) for x in series)
    normalized = [x / scale for x in series] if scale else [0.0 for _ in series]
    return EpisodeDiagnostics(series, normalized, list(losses))


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def format_table(report: BenchmarkReport):
    width = max([len(m) for m in report.methods] + [6])
    lines = [" " * width + "".join(f"  {d:>20}" for d in report.datasets)]
    for m in report.methods:
        cells = []
        for d in report.datasets:
            n, mean, std = report.cell(m, d)
            cells.append(f"  {mean:.3f} ± {std:.3f}".rjust(22) if n else "  n/a".rjust(22))
        lines.append(m.ljust(width) + "".join(cells))
    return "\n".join(lines) + "\n"


def emit(obj, out, fmt="csv"):
    """Write ``obj`` to ``out`` (a directory for reports, a file otherwise).

    Returns the list of paths written.  Output depends only on ``obj``.
    """
    written = []

    def write(path, text):
        with open(path, "w", newline="") as fh:
            fh.write(text)
        written.append(path)

    if isinstance(obj, BenchmarkReport):
        os.makedirs(out, exist_ok=True)
        if fmt == "table":
            write(os.path.join(out, "table.txt"), format_table(obj))
            return written
        write(os.path.join(out, "summary.csv"), _csv_text(SUMMARY_COLUMNS, obj.summary_rows()))
        write(os.path.join(out, "instances.csv"), _csv_text(INSTANCE_COLUMNS, obj.instance_rows()))
        write(os.path.join(out, "skipped.csv"), _csv_text(SKIPPED_COLUMNS, obj.skipped))
        write(os.path.join(out, "metadata.json"), json.dumps(obj.metadata, sort_keys=True, indent=1) + "\n")
    elif isinstance(obj, SweepResult):
        write(out, _csv_text(SWEEP_COLUMNS, obj.rows()))
    elif isinstance(obj, EpisodeDiagnostics):
        write(out, _csv_text(DIAG_COLUMNS, obj.rows()))
    else:
        raise TypeError(f"cannot emit {type(obj).__name__}")
    return written


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
