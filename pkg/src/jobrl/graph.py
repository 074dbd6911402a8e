"""Job-allocation graphs, allocations and the assignment transition.

A graph has ``n_people`` person vertices and ``n_jobs`` job vertices, both
indexed from zero.  Selection edges ``(person, job)`` say who may do what;
conflict arcs ``(job_a, job_b)`` say that whoever does ``job_a`` may not also
do ``job_b``.  Graphs are immutable: :func:`apply_assignment` returns a new
graph that shares the conflict structure with its parent.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple

import numpy as np

BIDIRECTIONAL = "bidirectional"
PAPER_LITERAL = "paper-literal"
REMOVAL_MODES = (BIDIRECTIONAL, PAPER_LITERAL)

FORMAT_HEADER = "jap 1"


class InvalidGraph(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"invalid job allocation graph: {lines}{more}")


class ActionNotAvailable(ValueError):
    pass


class AssignmentNotInSelection(ValueError):
    pass


class MalformedRecord(ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class Assignment(NamedTuple):
    person: int
    job: int


@dataclass(frozen=True)
class Violation:
    kind: str
    edge: tuple
    detail: str = ""

    def __str__(self):
        return f"{self.kind} {self.edge}" + (f" ({self.detail})" if self.detail else "")


def _parse_vertex(ref, default_side):
    """Return ``(side, index)`` for a vertex reference.

    Plain integers take ``default_side``; strings like ``"p3"`` / ``"j0"`` and
    tuples like ``("j", 0)`` carry their own side.
    """
    if isinstance(ref, (bool, np.bool_)):
        raise TypeError(f"bad vertex reference {ref!r}")
    if isinstance(ref, (int, np.integer)):
        return default_side, int(ref)
    if isinstance(ref, str) and len(ref) >= 2 and ref[0] in "pj" and ref[1:].isdigit():
        return ref[0], int(ref[1:])
    if isinstance(ref, tuple) and len(ref) == 2 and ref[0] in ("p", "j"):
        return ref[0], int(ref[1])
    raise TypeError(f"bad vertex reference {ref!r}")


def validate_graph(n_people, n_jobs, selection, conflicts):
    """Check candidate edge sets against the job-allocation-graph rules.

    Returns an empty list when the candidate is a valid graph, otherwise one
    :class:`Violation` per offending edge.  Nothing is raised for bad edges.
    """
    violations = []
    if n_people < 0 or n_jobs < 0:
        violations.append(Violation("NegativeCount", (n_people, n_jobs)))
        return violations
    bound = {"p": n_people, "j": n_jobs}

    seen_sel = set()
    for edge in selection:
        try:
            a = _parse_vertex(edge[0], "p")
            b = _parse_vertex(edge[1], "j")
        except (TypeError, ValueError, IndexError) as exc:
            violations.append(Violation("MalformedEdge", tuple(edge), str(exc)))
            continue
        if a[0] == b[0]:
            violations.append(Violation("SelectionNotBipartite", tuple(edge)))
            continue
        person, job = (a, b) if a[0] == "p" else (b, a)
        bad = [v for v in (person, job) if not 0 <= v[1] < bound[v[0]]]
        if bad:
            violations.append(Violation("IndexOutOfRange", tuple(edge), f"{bad[0][0]}{bad[0][1]}"))
            continue
        key = (person[1], job[1])
        if key in seen_sel:
            violations.append(Violation("DuplicateSelection", key))
        seen_sel.add(key)

    seen_conf = set()
    for arc in conflicts:
        try:
            a = _parse_vertex(arc[0], "j")
            b = _parse_vertex(arc[1], "j")
        except (TypeError, ValueError, IndexError) as exc:
            violations.append(Violation("MalformedEdge", tuple(arc), str(exc)))
            continue
        if a[0] != "j" or b[0] != "j":
            violations.append(Violation("ConflictNotJobToJob", tuple(arc)))
            continue
        bad = [v for v in (a, b) if not 0 <= v[1] < n_jobs]
        if bad:
            violations.append(Violation("IndexOutOfRange", tuple(arc), f"j{bad[0][1]}"))
            continue
        if a[1] == b[1]:
            violations.append(Violation("SelfConflict", (a[1], b[1])))
            continue
        key = (a[1], b[1])
        if key in seen_conf:
            violations.append(Violation("DuplicateConflict", key))
        seen_conf.add(key)
    return violations


class _ConflictIndex:
    """Per-job conflict adjacency; shared between a graph and its successors."""

    def __init__(self, n_jobs, conflicts):
        out_sets = [set() for _ in range(n_jobs)]
        in_sets = [set() for _ in range(n_jobs)]
        for u, v in conflicts:
            out_sets[u].add(v)
            in_sets[v].add(u)
        self.out = tuple(frozenset(s) for s in out_sets)
        self.inc = tuple(frozenset(s) for s in in_sets)
        self.both = tuple(o | i for o, i in zip(self.out, self.inc))
        arr = np.array(conflicts, dtype=np.int64).reshape(-1, 2)
        self.src = arr[:, 0].copy()
        self.dst = arr[:, 1].copy()


@dataclass(frozen=True, eq=False)
class JobAllocationGraph:
    """An immutable job-allocation graph.

    ``selection`` and ``conflicts`` are stored as lexicographically sorted
    tuples of index pairs; the position of an edge in ``selection`` is its
    canonical edge index.
    """

    n_people: int
    n_jobs: int
    selection: tuple = ()
    conflicts: tuple = ()
    _cindex: _ConflictIndex = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        sel = tuple(sorted((int(p), int(j)) for p, j in self.selection))
        conf = tuple(sorted((int(u), int(v)) for u, v in self.conflicts))
        object.__setattr__(self, "selection", sel)
        object.__setattr__(self, "conflicts", conf)
        if self._cindex is None:
            problems = validate_graph(self.n_people, self.n_jobs, sel, conf)
            if problems:
                raise InvalidGraph(problems)
            object.__setattr__(self, "_cindex", _ConflictIndex(self.n_jobs, conf))

    @classmethod
    def _successor(cls, parent, selection):
        # Selection is already sorted, validated and a subset of the parent's.
        g = object.__new__(cls)
        object.__setattr__(g, "n_people", parent.n_people)
        object.__setattr__(g, "n_jobs", parent.n_jobs)
        object.__setattr__(g, "selection", selection)
        object.__setattr__(g, "conflicts", parent.conflicts)
        object.__setattr__(g, "_cindex", parent._cindex)
        return g

    def __eq__(self, other):
        if not isinstance(other, JobAllocationGraph):
            return NotImplemented
        return (
            self.n_people == other.n_people
            and self.n_jobs == other.n_jobs
            and self.selection == other.selection
            and self.conflicts == other.conflicts
        )

    def __hash__(self):
        return hash((self.n_people, self.n_jobs, self.selection, self.conflicts))

    def __repr__(self):
        return (
            f"JobAllocationGraph(n_people={self.n_people}, n_jobs={self.n_jobs}, "
            f"|S|={len(self.selection)}, |C|={len(self.conflicts)})"
        )

    @property
    def is_terminal(self):
        return not self.selection

    @property
    def actions(self):
        return [Assignment(p, j) for p, j in self.selection]

    @cached_property
    def selection_set(self):
        return frozenset(self.selection)

    @cached_property
    def edge_index(self):
        """Map from selection pair to its canonical index."""
        return {e: i for i, e in enumerate(self.selection)}

    @cached_property
    def selection_array(self):
        return np.array(self.selection, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def person_jobs(self):
        lists = [[] for _ in range(self.n_people)]
        for p, j in self.selection:
            lists[p].append(j)
        return tuple(tuple(x) for x in lists)

    @cached_property
    def job_people(self):
        lists = [[] for _ in range(self.n_jobs)]
        for p, j in self.selection:
            lists[j].append(p)
        return tuple(tuple(x) for x in lists)

    @cached_property
    def degree_features(self):
        return degree_features(self)

    @property
    def conflict_out(self):
        return self._cindex.out

    @property
    def conflict_in(self):
        return self._cindex.inc

    @property
    def conflict_neighbors(self):
        """Jobs joined to each job by a conflict arc in either direction."""
        return self._cindex.both

    @property
    def conflict_arrays(self):
        return self._cindex.src, self._cindex.dst

    def fingerprint(self):
        return hashlib.sha256(serialize(self).encode()).hexdigest()[:16]

    def relabel(self, person_perm, job_perm):
        """Return the graph with person ``p`` renamed ``person_perm[p]`` (same for jobs)."""
        return JobAllocationGraph(
            self.n_people,
            self.n_jobs,
            [(person_perm[p], job_perm[j]) for p, j in self.selection],
            [(job_perm[u], job_perm[v]) for u, v in self.conflicts],
        )


@dataclass(frozen=True)
class Allocation:
    assignments: frozenset
    graph_fingerprint: str = ""

    @classmethod
    def from_pairs(cls, pairs: Iterable, graph: JobAllocationGraph | None = None):
        fp = graph.fingerprint() if graph is not None else ""
        return cls(frozenset(Assignment(int(p), int(j)) for p, j in pairs), fp)

    def __len__(self):
        return len(self.assignments)

    def __iter__(self):
        return iter(sorted(self.assignments))

    def __contains__(self, item):
        return Assignment(*item) in self.assignments

    @property
    def size(self):
        return len(self.assignments)


def validate_allocation(g: JobAllocationGraph, allocation):
    """Check feasibility of ``allocation`` on ``g``.

    Returns ``(True, None)`` or ``(False, (a, b))`` with the first pair of
    same-person assignments whose jobs conflict (in either direction).
    Raises :class:`AssignmentNotInSelection` when an assignment is not in S.
    """
    pairs = sorted(Assignment(int(p), int(j)) for p, j in allocation)
    sel = g.selection_set
    for a in pairs:
        if (a.person, a.job) not in sel:
            raise AssignmentNotInSelection(f"{a} is not a selection edge")
    by_person = {}
    for a in pairs:
        by_person.setdefault(a.person, []).append(a.job)
    neighbors = g.conflict_neighbors
    for person, jobs in sorted(by_person.items()):
        held = set()
        for job in jobs:
            clash = neighbors[job] & held
            if clash:
                return False, (Assignment(person, min(clash)), Assignment(person, job))
            held.add(job)
    return True, None


@dataclass(frozen=True)
class DegreeFeatures:
    person_features: np.ndarray
    job_features: np.ndarray


def degree_features(g: JobAllocationGraph) -> DegreeFeatures:
    sel = g.selection_array
    person = np.zeros((g.n_people, 2))
    job = np.zeros((g.n_jobs, 2))
    person[:, 0] = np.bincount(sel[:, 0], minlength=g.n_people)
    job[:, 0] = np.bincount(sel[:, 1], minlength=g.n_jobs)
    src, _ = g.conflict_arrays
    job[:, 1] = np.bincount(src, minlength=g.n_jobs)
    return DegreeFeatures(person, job)


def removed_by(g: JobAllocationGraph, a, mode=BIDIRECTIONAL):
    """Selection edges that disappear when ``a`` is taken (including ``a``)."""
    person, job = int(a[0]), int(a[1])
    if mode == BIDIRECTIONAL:
        blocked = g.conflict_neighbors[job]
    elif mode == PAPER_LITERAL:
        blocked = g.conflict_out[job]
    else:
        raise ValueError(f"unknown conflict removal mode {mode!r}")
    return {(person, job)} | {(person, x) for x in g.person_jobs[person] if x in blocked}


def apply_assignment(g: JobAllocationGraph, a, mode=BIDIRECTIONAL) -> JobAllocationGraph:
    """Take assignment ``a`` and drop every selection edge it rules out."""
    person, job = int(a[0]), int(a[1])
    if (person, job) not in g.selection_set:
        raise ActionNotAvailable(f"{Assignment(person, job)} is not available")
    gone = removed_by(g, (person, job), mode)
    remaining = tuple(e for e in g.selection if e not in gone)
    return JobAllocationGraph._successor(g, remaining)


def serialize(g: JobAllocationGraph) -> str:
    lines = [FORMAT_HEADER, f"people {g.n_people}", f"jobs {g.n_jobs}"]
    lines += [f"s {p} {j}" for p, j in g.selection]
    lines += [f"c {u} {v}" for u, v in g.conflicts]
    return "\n".join(lines) + "\n"


def _int_field(tok, lineno, name):
    try:
        value = int(tok)
    except ValueError:
        raise MalformedRecord(f"expected an integer, got {tok!r}", lineno, name) from None
    if value < 0:
        raise MalformedRecord(f"negative value {value}", lineno, name)
    return value


def deserialize(text: str) -> JobAllocationGraph:
    n_people = n_jobs = None
    selection, conflicts = [], []
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if not seen_header:
            if toks != FORMAT_HEADER.split():
                raise MalformedRecord(f"expected header {FORMAT_HEADER!r}", lineno, "header")
            seen_header = True
            continue
        tag = toks[0]
        if tag in ("people", "jobs"):
            if len(toks) != 2:
                raise MalformedRecord(f"'{tag}' takes one value", lineno, tag)
            value = _int_field(toks[1], lineno, tag)
            if tag == "people":
                n_people = value
            else:
                n_jobs = value
        elif tag in ("s", "c"):
            if len(toks) != 3:
                raise MalformedRecord(f"'{tag}' takes two indices", lineno, tag)
            if n_people is None or n_jobs is None:
                raise MalformedRecord("edge before 'people'/'jobs' counts", lineno, tag)
            if tag == "s":
                p = _int_field(toks[1], lineno, "person")
                j = _int_field(toks[2], lineno, "job")
                if p >= n_people:
                    raise MalformedRecord(f"person {p} out of range", lineno, "person")
                if j >= n_jobs:
                    raise MalformedRecord(f"job {j} out of range", lineno, "job")
                selection.append((p, j))
            else:
                u = _int_field(toks[1], lineno, "job")
                v = _int_field(toks[2], lineno, "job")
                for x in (u, v):
                    if x >= n_jobs:
                        raise MalformedRecord(f"job {x} out of range", lineno, "job")
                conflicts.append((u, v))
        else:
            raise MalformedRecord(f"unknown record tag {tag!r}", lineno, "tag")
    if not seen_header:
        raise MalformedRecord("empty record", None, "header")
    if n_people is None or n_jobs is None:
        raise MalformedRecord("missing 'people' or 'jobs' count", None, "people" if n_people is None else "jobs")
    try:
        return JobAllocationGraph(n_people, n_jobs, selection, conflicts)
    except InvalidGraph as exc:
        raise MalformedRecord(str(exc)) from exc


def read_graph(path) -> JobAllocationGraph:
    with open(path) as fh:
        return deserialize(fh.read())


def write_graph(g: JobAllocationGraph, path):
    with open(path, "w") as fh:
        fh.write(serialize(g))
