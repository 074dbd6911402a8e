from __future__ import annotations

import os

from .graph import JobAllocationGraph, read_graph


def check_graph(X):
    """Return ``X`` as a :class:`JobAllocationGraph` (paths are read from disk)."""
    if isinstance(X, JobAllocationGraph):
        return X
    if isinstance(X, (str, os.PathLike)):
        return read_graph(X)
    raise TypeError(f"expected a JobAllocationGraph or instance path, got {type(X).__name__}")


def check_graphs(X, allow_empty=False):
    """Normalise a graph or an iterable of graphs/paths to a list of graphs."""
    if isinstance(X, (JobAllocationGraph, str, os.PathLike)):
        X = [X]
    try:
        graphs = [check_graph(x) for x in X]
    except TypeError as exc:
        raise TypeError(f"expected graphs: {exc}") from None
    if not graphs and not allow_empty:
        raise ValueError("got an empty collection of graphs")
    return graphs


def is_single_graph(X):
    return isinstance(X, (JobAllocationGraph, str, os.PathLike))
