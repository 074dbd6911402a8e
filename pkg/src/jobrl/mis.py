"""Maximum independent set by branch and bound on integer bitsets."""

from __future__ import annotations

import sys


class BudgetExceeded(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


def _bits(x):
    while x:
        low = x & -x
        yield low.bit_length() - 1
        x ^= low


def clique_cover_bound(P, adj):
    """Size of a greedy clique cover of ``P``; never below the independence number."""
    k = 0
    while P:
        low = P & -P
        P ^= low
        cand = P & adj[low.bit_length() - 1]
        while cand:
            u = cand & -cand
            P ^= u
            cand &= adj[u.bit_length() - 1]
        k += 1
    return k


def greedy_independent_set(P, adj):
    """Repeatedly take the vertex of minimum degree inside the remaining set."""
    chosen = 0
    while P:
        v = min(_bits(P), key=lambda x: ((adj[x] & P).bit_count(), x))
        chosen |= 1 << v
        P &= ~(adj[v] | (1 << v))
    return chosen


def max_independent_set(n, adj, budget=10**7):
    """Exact maximum independent set of an undirected graph.

    ``adj[v]`` is the neighbour bitset of vertex ``v`` (no self loops).
    Returns ``(members, node_count)`` with ``members`` a sorted list.  Raises
    :class:`BudgetExceeded` (carrying the best set found) if more than
    ``budget`` search nodes would be needed.

    Vertices of degree 0 or 1 are taken without branching (some maximum set
    always contains them); otherwise the search branches on a vertex of
    maximum degree and prunes with the clique-cover bound.
    """
    full = (1 << n) - 1
    best = [greedy_independent_set(full, adj)]
    best_size = [best[0].bit_count()]
    nodes = [0]

    def search(P, cur, size):
        nodes[0] += 1
        if nodes[0] > budget:
            raise BudgetExceeded(f"node budget {budget} exhausted")
        changed = True
        while changed and P:
            changed = False
            for v in _bits(P):
                if not (P >> v) & 1:
                    continue
                if (adj[v] & P).bit_count() <= 1:
                    cur |= 1 << v
                    size += 1
                    P &= ~(adj[v] | (1 << v))
                    changed = True
        if not P:
            if size > best_size[0]:
                best[0], best_size[0] = cur, size
            return
        if size + clique_cover_bound(P, adj) <= best_size[0]:
            return
        v = max(_bits(P), key=lambda x: ((adj[x] & P).bit_count(), -x))
        search(P & ~(adj[v] | (1 << v)), cur | (1 << v), size + 1)
        search(P & ~(1 << v), cur, size)

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * n + 100))
    try:
        search(full, 0, 0)
    except BudgetExceeded as exc:
        exc.result = (sorted(_bits(best[0])), nodes[0] - 1)
        raise
    finally:
        sys.setrecursionlimit(limit)
    return sorted(_bits(best[0])), nodes[0]
