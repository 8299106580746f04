"""Seeded instance generators."""

from __future__ import annotations

import numpy as np

from .graph import D1LCInstance, Graph


class BadParams(ValueError):
    pass


KINDS = ("gnp", "planted", "hypercube", "star-forest")


def gnp_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    if n < 0 or not 0 <= p <= 1:
        raise BadParams("gnp needs n >= 0 and 0 <= p <= 1")
    src, dst = [], []
    for i in range(n - 1):
        hits = np.flatnonzero(rng.random(n - i - 1) < p)
        src.append(np.full(len(hits), i))
        dst.append(hits + i + 1)
    if not src:
        return Graph.empty(n)
    return Graph.from_edges(n, np.stack([np.concatenate(src), np.concatenate(dst)], axis=1))


def planted_graph(k: int, count: int, rng: np.random.Generator, noise: float = 0.0) -> Graph:
    """``count`` disjoint K_k blocks plus optional G(n, noise) edges between blocks."""
    if k < 1 or count < 1:
        raise BadParams("planted needs k >= 1 and count >= 1")
    n = k * count
    iu, ju = np.triu_indices(k, 1)
    edges = [np.stack([iu + b * k, ju + b * k], axis=1) for b in range(count)]
    if noise > 0:
        extra = gnp_graph(n, noise, rng).edge_list()
        edges.append(extra[extra[:, 0] // k != extra[:, 1] // k])
    return Graph.from_edges(n, np.concatenate(edges) if edges else np.zeros((0, 2), np.int64))


def hypercube_graph(dim: int) -> Graph:
    if dim < 0 or dim > 20:
        raise BadParams("hypercube dimension must lie in [0, 20]")
    n = 1 << dim
    ids = np.arange(n)
    edges = [np.stack([ids, ids ^ (1 << b)], axis=1) for b in range(dim)]
    e = np.concatenate(edges) if edges else np.zeros((0, 2), np.int64)
    return Graph.from_edges(n, e[e[:, 0] < e[:, 1]])


def star_forest_graph(stars: int, leaves: int) -> Graph:
    if stars < 1 or leaves < 0:
        raise BadParams("star-forest needs stars >= 1 and leaves >= 0")
    size = leaves + 1
    n = stars * size
    centers = np.repeat(np.arange(stars) * size, leaves)
    leaf = centers + np.tile(np.arange(1, size), stars)
    return Graph.from_edges(n, np.stack([centers, leaf], axis=1))


def random_palettes(graph: Graph, rng: np.random.Generator, extra: int = 0) -> list[np.ndarray]:
    """Palettes of size d(v) + 1 + extra drawn without replacement from [0, n^2)."""
    n = graph.n
    universe = max(n * n, 1)
    out = []
    for d in graph.degrees.tolist():
        size = min(d + 1 + extra, universe)
        pal: set[int] = set()
        while len(pal) < size:
            pal.update(rng.integers(0, universe, size=size - len(pal)).tolist())
        out.append(np.array(sorted(pal), dtype=np.int64))
    return out


def generate(
    kind: str,
    seed: int = 0,
    n: int = 100,
    p: float | None = None,
    avg_degree: float | None = None,
    k: int = 8,
    count: int = 4,
    noise: float = 0.0,
    dim: int = 4,
    stars: int = 4,
    leaves: int = 4,
    palettes: str = "default",
    extra: int = 0,
) -> D1LCInstance:
    rng = np.random.default_rng(seed)
    if kind == "gnp":
        if p is None:
            if avg_degree is None:
                raise BadParams("gnp needs p or avg_degree")
            p = avg_degree / max(n, 1)
        g = gnp_graph(n, p, rng)
    elif kind == "planted":
        g = planted_graph(k, count, rng, noise)
    elif kind == "hypercube":
        g = hypercube_graph(dim)
    elif kind == "star-forest":
        g = star_forest_graph(stars, leaves)
    else:
        raise BadParams(f"unknown kind {kind!r}; expected one of {KINDS}")
    if palettes == "default":
        if extra:
            lists = [np.arange(d + 1 + extra) for d in g.degrees.tolist()]
            return D1LCInstance.build(g, lists)
        return D1LCInstance.build(g)
    if palettes == "random":
        return D1LCInstance.build(g, random_palettes(g, rng, extra))
    raise BadParams("palettes must be 'default' or 'random'")
