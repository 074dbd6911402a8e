import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from jobrl.graph import JobAllocationGraph

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def small_graphs(draw, max_people=3, max_jobs=6, min_people=1, min_jobs=1):
    n_p = draw(st.integers(min_people, max_people))
    n_j = draw(st.integers(min_jobs, max_jobs))
    pairs = [(p, j) for p in range(n_p) for j in range(n_j)]
    sel = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    arcs = [(u, v) for u in range(n_j) for v in range(n_j) if u != v]
    conf = draw(st.lists(st.sampled_from(arcs), unique=True, max_size=len(arcs))) if arcs else []
    return JobAllocationGraph(n_p, n_j, sel, conf)


def random_graph(rng, n_people, n_jobs, p_sel=0.6, p_conf=0.3):
    sel = [(p, j) for p in range(n_people) for j in range(n_jobs) if rng.random() < p_sel]
    conf = [(u, v) for u in range(n_jobs) for v in range(n_jobs) if u != v and rng.random() < p_conf]
    return JobAllocationGraph(n_people, n_jobs, sel, conf)


@pytest.fixture
def four_by_five():
    # four people, five jobs; conflicts j0->j1, j2->j3, j4->j2
    return JobAllocationGraph(
        4, 5,
        [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (3, 3), (3, 4), (0, 4)],
        [(0, 1), (2, 3), (4, 2)],
    )


@pytest.fixture
def two_by_three():
    return JobAllocationGraph(2, 3, [(0, 0), (0, 1), (0, 2), (1, 1)], [(0, 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
