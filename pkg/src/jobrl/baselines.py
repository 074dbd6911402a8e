"""Baseline policies, the exact maximum-allocation oracle and approximation ratios."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import compress

import numpy as np

from ._rng import make_rng
from .env import rollout
from .graph import BIDIRECTIONAL, Allocation, Assignment, JobAllocationGraph
from .mis import BudgetExceeded, max_independent_set
from .trainer import EmptyActionSet

BRUTE_FORCE = "brute-force"
DECOMPOSED_BNB = "decomposed-bnb"


class NotOptimal(ValueError):
    pass


@dataclass(frozen=True)
class OptimumResult:
    size: int
    witness: Allocation
    method: str
    node_count: int
    optimal: bool = True


@dataclass(frozen=True)
class PolicyKind:
    """A policy named on the command line: ``greedy[:selection|total]``,
    ``random[:SEED]``, ``untrained-gnn[:SEED]`` or ``gnn:CHECKPOINT``."""

    tag: str
    arg: str | None = None

    TAGS = ("gnn", "untrained-gnn", "greedy", "random")

    @classmethod
    def parse(cls, text):
        tag, _, arg = text.partition(":")
        if tag not in cls.TAGS:
            raise ValueError(f"unknown policy {text!r}; expected one of {cls.TAGS}")
        if tag == "gnn" and not arg:
            raise ValueError("gnn policy needs a checkpoint path: gnn:PATH")
        if tag == "greedy" and arg not in ("", "selection", "total"):
            raise ValueError(f"greedy degree must be 'selection' or 'total', got {arg!r}")
        return cls(tag, arg or None)

    def __str__(self):
        return self.tag if self.arg is None else f"{self.tag}:{self.arg}"


def greedy_action(g: JobAllocationGraph, degree="selection"):
    """Lowest-degree job first, then the lowest-degree person qualified for it.

    A job's ``"total"`` degree counts its remaining selection edges plus its
    conflict neighbours; ``"selection"`` counts selection edges only.  A
    person's degree is always the number of selection edges left.  Ties go
    to the lowest index.
    """
    if g.is_terminal:
        raise EmptyActionSet("no selection edges left")
    job_people = g.job_people
    if degree == "selection":
        job_deg = [len(ps) for ps in job_people]
    elif degree == "total":
        job_deg = [len(ps) + len(c) for ps, c in zip(job_people, g.conflict_neighbors)]
    else:
        raise ValueError(f"unknown degree kind {degree!r}")
    job = min((j for j in range(g.n_jobs) if job_people[j]), key=lambda j: (job_deg[j], j))
    person = min(job_people[job], key=lambda p: (len(g.person_jobs[p]), p))
    return Assignment(person, job)


def random_action(g: JobAllocationGraph, rng):
    if g.is_terminal:
        raise EmptyActionSet("no selection edges left")
    return Assignment(*g.selection[int(rng.integers(len(g.selection)))])


def greedy_policy(degree="selection"):
    return lambda state: greedy_action(state.graph, degree)


def random_policy(seed=None):
    rng = make_rng(seed)
    return lambda state: random_action(state.graph, rng)


def replay_policy(allocation):
    """Plays the assignments of ``allocation`` that are still available, in sorted order."""
    order = sorted(allocation)

    def policy(state):
        available = state.graph.selection_set
        for a in order:
            if (a.person, a.job) in available:
                return a
        # every listed assignment is gone; finish with whatever is left
        return Assignment(*state.graph.selection[0])

    return policy


def _person_conflict_graph(g: JobAllocationGraph, person):
    jobs = list(g.person_jobs[person])
    local = {j: i for i, j in enumerate(jobs)}
    neighbors = g.conflict_neighbors
    adj = []
    for j in jobs:
        bits = 0
        for x in neighbors[j]:
            i = local.get(x)
            if i is not None:
                bits |= 1 << i
        adj.append(bits)
    return jobs, adj


def per_person_mis(g: JobAllocationGraph, person, budget=10**7):
    """Maximum conflict-free job set for one person; returns ``(jobs, nodes)``."""
    jobs, adj = _person_conflict_graph(g, person)
    members, nodes = max_independent_set(len(jobs), adj, budget)
    return [jobs[i] for i in members], nodes


def exact_optimum(g: JobAllocationGraph, budget=10**7) -> OptimumResult:
    """Maximum allocation size with a witness.

    Feasibility only couples assignments of the same person, so the optimum
    is the sum over people of a maximum independent set in the conflict graph
    (arcs taken as undirected) induced on that person's eligible jobs.
    ``budget`` bounds the search nodes per person; when it runs out
    :class:`BudgetExceeded` is raised with ``.result`` holding the best
    allocation found, flagged non-optimal.
    """
    pairs, total_nodes = [], 0
    exhausted = None
    for person in range(g.n_people):
        try:
            jobs, nodes = per_person_mis(g, person, budget)
        except BudgetExceeded as exc:
            local_jobs, _ = _person_conflict_graph(g, person)
            members, nodes = exc.result
            jobs = [local_jobs[i] for i in members]
            exhausted = person
        pairs += [(person, j) for j in jobs]
        total_nodes += nodes
    witness = Allocation.from_pairs(pairs, g)
    result = OptimumResult(len(pairs), witness, DECOMPOSED_BNB, total_nodes, exhausted is None)
    if exhausted is not None:
        raise BudgetExceeded(f"node budget {budget} exhausted for person {exhausted}", result)
    return result


def brute_force_optimum(g: JobAllocationGraph, max_edges=22) -> OptimumResult:
    """Enumerate every subset of S and keep the largest feasible one."""
    m = len(g.selection)
    if m > max_edges:
        raise ValueError(f"|S|={m} is too large for enumeration (limit {max_edges})")
    neighbors = g.conflict_neighbors
    clashes = [
        (a, b)
        for a in range(m)
        for b in range(a + 1, m)
        if g.selection[a][0] == g.selection[b][0] and g.selection[b][1] in neighbors[g.selection[a][1]]
    ]
    masks = np.arange(1 << m, dtype=np.int64)
    ok = np.ones(masks.shape, dtype=bool)
    for a, b in clashes:
        ok &= ((masks >> a) & (masks >> b) & 1) == 0
    sizes = np.zeros(masks.shape, dtype=np.int64)
    for i in range(m):
        sizes += (masks >> i) & 1
    sizes[~ok] = -1
    best = int(np.argmax(sizes))
    chosen = list(compress(g.selection, [(best >> i) & 1 for i in range(m)]))
    return OptimumResult(int(sizes[best]), Allocation.from_pairs(chosen, g), BRUTE_FORCE, 1 << m)


def approximation_ratio(policy, g: JobAllocationGraph, oracle: OptimumResult, mode=BIDIRECTIONAL):
    """``|rollout allocation| / optimum``.

    ``policy`` is a callable (state -> assignment) or a :class:`PolicyKind`.
    """
    if not oracle.optimal:
        raise NotOptimal("oracle result is a budget-truncated lower bound")
    if isinstance(policy, str):
        policy = PolicyKind.parse(policy)
    if isinstance(policy, PolicyKind):
        from .harness import policy_factory

        make, _ = policy_factory(policy)
        policy = make(0, 0)
    allocation, _ = rollout(g, policy, mode)
    if oracle.size == 0:
        return 1.0
    return len(allocation) / oracle.size
