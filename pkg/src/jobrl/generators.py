"""Seeded synthetic instance families and dataset statistics."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from ._rng import RNG_ALGORITHM, make_rng
from .graph import JobAllocationGraph, read_graph, write_graph

ERDOS_RENYI = "erdos-renyi"
BARABASI_ALBERT = "barabasi-albert"
FAMILIES = (ERDOS_RENYI, BARABASI_ALBERT)
_FAMILY_ALIASES = {"er": ERDOS_RENYI, "ba": BARABASI_ALBERT}

MANIFEST_NAME = "manifest.jsonl"


class InvalidConfig(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    family: str = ERDOS_RENYI
    n_jobs: int = 300
    n_people: int = 15
    p_conflict: float = 0.10
    p_select: float = 0.666
    ba_m: int = 3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", _FAMILY_ALIASES.get(self.family, self.family))
        self.check()

    def check(self):
        if self.family not in FAMILIES:
            raise InvalidConfig(f"unknown family {self.family!r}")
        if self.n_jobs < 1 or self.n_people < 1:
            raise InvalidConfig("n_jobs and n_people must be >= 1")
        for name in ("p_conflict", "p_select"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidConfig(f"{name}={p} is not a probability")
        if self.family == BARABASI_ALBERT and not 1 <= self.ba_m < self.n_jobs:
            raise InvalidConfig(f"ba_m={self.ba_m} must satisfy 1 <= ba_m < n_jobs={self.n_jobs}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def params(self):
        d = asdict(self)
        d.pop("seed")
        d.pop("family")
        if self.family == ERDOS_RENYI:
            d.pop("ba_m")
        else:
            d.pop("p_conflict")
        return d


# Selection probabilities chosen so the expected |S| hits a target mean
# selection-edge count per family (e.g. 2998.75 / (300 * 15) for er).
PRESETS = {
    "er": GeneratorConfig(ERDOS_RENYI, n_jobs=300, n_people=15, p_conflict=0.10, p_select=0.666),
    "ba": GeneratorConfig(BARABASI_ALBERT, n_jobs=300, n_people=15, ba_m=3, p_select=0.697),
    "planny": GeneratorConfig(ERDOS_RENYI, n_jobs=507, n_people=25, p_conflict=0.0559, p_select=0.456),
    "er-desk": GeneratorConfig(ERDOS_RENYI, n_jobs=30, n_people=5, p_conflict=0.10, p_select=0.666),
    "ba-desk": GeneratorConfig(BARABASI_ALBERT, n_jobs=30, n_people=5, ba_m=3, p_select=0.697),
}


def barabasi_albert_edges(n, m, rng):
    """Undirected preferential-attachment edges on ``n`` vertices.

    Starts from a star on ``m + 1`` vertices; each later vertex attaches to
    ``m`` distinct earlier vertices drawn proportionally to degree, so the
    graph has exactly ``m * (n - m)`` edges.
    """
    edges = [(0, v) for v in range(1, m + 1)]
    # vertex v appears deg(v) times
    pool = [0] * m + list(range(1, m + 1))
    for new in range(m + 1, n):
        targets = set()
        while len(targets) < m:
            targets.add(pool[int(rng.integers(len(pool)))])
        for t in sorted(targets):
            edges.append((t, new))
            pool.append(t)
        pool.extend([new] * m)
    return edges


def generate(config: GeneratorConfig) -> JobAllocationGraph:
    config.check()
    rng = make_rng(int(config.seed))
    n, k = config.n_jobs, config.n_people
    if config.family == ERDOS_RENYI:
        mask = rng.random((n, n)) < config.p_conflict
        np.fill_diagonal(mask, False)
        u, v = np.nonzero(mask)
        conflicts = list(zip(u.tolist(), v.tolist()))
    else:
        conflicts = []
        for u, v in barabasi_albert_edges(n, config.ba_m, rng):
            conflicts += [(u, v), (v, u)]
    people, jobs = np.nonzero(rng.random((k, n)) < config.p_select)
    selection = list(zip(people.tolist(), jobs.tolist()))
    return JobAllocationGraph(k, n, selection, conflicts)


def generate_many(config: GeneratorConfig, count: int):
    """``count`` instances; instance ``i`` uses seed ``config.seed + i``."""
    return [generate(config.with_seed(config.seed + i)) for i in range(count)]


def density(g: JobAllocationGraph) -> float:
    possible = g.n_people * g.n_jobs + g.n_jobs * (g.n_jobs - 1)
    if possible == 0:
        return 0.0
    return (len(g.selection) + len(g.conflicts)) / possible


@dataclass(frozen=True)
class DatasetStats:
    n_graphs: int
    mean_jobs: float
    mean_people: float
    mean_conflict_arcs: float
    mean_selection_edges: float
    mean_density: float


def dataset_stats(graphs) -> DatasetStats:
    graphs = list(graphs)
    if not graphs:
        raise EmptyDataset("dataset_stats needs at least one graph")
    return DatasetStats(
        n_graphs=len(graphs),
        mean_jobs=float(np.mean([g.n_jobs for g in graphs])),
        mean_people=float(np.mean([g.n_people for g in graphs])),
        mean_conflict_arcs=float(np.mean([len(g.conflicts) for g in graphs])),
        mean_selection_edges=float(np.mean([len(g.selection) for g in graphs])),
        mean_density=float(np.mean([density(g) for g in graphs])),
    )


def write_dataset(config: GeneratorConfig, count: int, out_dir):
    """Generate ``count`` instances into ``out_dir`` with a JSON-lines manifest."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i in range(count):
        cfg = config.with_seed(config.seed + i)
        name = f"instance_{i:04d}.jap"
        write_graph(generate(cfg), os.path.join(out_dir, name))
        records.append({
            "family": cfg.family,
            "params": cfg.params(),
            "seed": cfg.seed,
            "path": name,
            "rng": RNG_ALGORITHM,
        })
    with open(os.path.join(out_dir, MANIFEST_NAME), "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return records


def read_manifest(dataset_dir):
    path = os.path.join(dataset_dir, MANIFEST_NAME)
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def config_from_record(rec) -> GeneratorConfig:
    return GeneratorConfig(family=rec["family"], seed=rec["seed"], **rec["params"])


def load_dataset(dataset_dir):
    """Return ``(graphs, manifest records)`` for a dataset directory.

    A directory without a manifest is read as every ``*.jap`` file in name order.
    """
    if os.path.exists(os.path.join(dataset_dir, MANIFEST_NAME)):
        records = read_manifest(dataset_dir)
    else:
        records = [{"path": f} for f in sorted(os.listdir(dataset_dir)) if f.endswith(".jap")]
    graphs = [read_graph(os.path.join(dataset_dir, r["path"])) for r in records]
    return graphs, records
