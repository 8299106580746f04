import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from palette_mpc.graph import D1LCInstance, Graph

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=60)
settings.load_profile("default")


@st.composite
def graphs(draw, min_n=1, max_n=10):
    n = draw(st.integers(min_n, max_n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Graph.from_edges(n, [e for e, keep in zip(pairs, mask) if keep])


@st.composite
def instances(draw, min_n=1, max_n=10, universe=12):
    """Random D1LC instances: palette of size d(v) + 1 + extra from a small universe."""
    g = draw(graphs(min_n, max_n))
    pals = []
    for d in g.degrees.tolist():
        size = d + 1 + draw(st.integers(0, 2))
        pool = max(universe, size)
        pals.append(draw(st.lists(st.integers(0, pool - 1), min_size=size, max_size=size, unique=True)))
    return D1LCInstance.build(g, pals)


def random_proper_partial(inst: D1LCInstance, rng: np.random.Generator, frac: float = 0.5) -> np.ndarray:
    """Greedy coloring of a random subset of nodes in random order."""
    color = np.full(inst.n, -1, dtype=np.int64)
    for v in rng.permutation(inst.n).tolist():
        if rng.random() >= frac:
            continue
        nb = color[inst.graph.neighbors(v)]
        free = [c for c in inst.palette(v).tolist() if c not in set(nb.tolist())]
        if free:
            color[v] = free[rng.integers(len(free))]
    return color


@pytest.fixture
def triangle():
    return D1LCInstance.build(Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)]))
