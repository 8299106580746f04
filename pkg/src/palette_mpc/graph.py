"""Graphs, (degree+1)-list-coloring instances, node parameters and verification.

Graphs are stored in CSR form (``indptr``/``indices``) with sorted neighbor
lists; palettes use the same layout.  Everything here is immutable except
:class:`ColoringState`, whose ``color`` array holds a color id, ``UNCOLORED``
or ``DEFERRED`` per node.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

UNCOLORED = -1
DEFERRED = -2


class GraphError(ValueError):
    """Base class for malformed graphs and instances."""


class ParseError(GraphError):
    pass


class SelfLoop(GraphError):
    def __init__(self, node: int):
        super().__init__(f"self-loop at node {node}")
        self.node = node


class NonSymmetricEdge(GraphError):
    def __init__(self, u: int, v: int):
        super().__init__(f"edge {u}->{v} has no reverse entry")
        self.edge = (u, v)


class PaletteTooSmall(GraphError):
    def __init__(self, node: int, size: int, degree: int):
        super().__init__(f"node {node}: palette size {size} <= degree {degree}")
        self.node = node


class ImproperInput(GraphError):
    pass


def _csr_from_lists(lists: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    sizes = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
    indptr = np.zeros(len(lists) + 1, dtype=np.int64)
    np.cumsum(sizes, out=indptr[1:])
    flat = np.concatenate(lists).astype(np.int64) if lists else np.zeros(0, np.int64)
    return indptr, flat


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph on nodes ``0..n-1`` in CSR form."""

    indptr: np.ndarray
    indices: np.ndarray

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]] | np.ndarray) -> "Graph":
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
        arr = arr.reshape(-1, 2)
        if len(arr) and (arr.min() < 0 or arr.max() >= n):
            raise GraphError("edge endpoint outside 0..n-1")
        loops = arr[:, 0] == arr[:, 1]
        if loops.any():
            raise SelfLoop(int(arr[loops][0, 0]))
        src = np.concatenate([arr[:, 0], arr[:, 1]])
        dst = np.concatenate([arr[:, 1], arr[:, 0]])
        return cls._from_directed(n, src, dst)

    @classmethod
    def from_adjacency(cls, adjacency: Mapping[int, Iterable[int]] | Sequence[Iterable[int]]) -> "Graph":
        items = adjacency.items() if isinstance(adjacency, Mapping) else enumerate(adjacency)
        adj = {int(v): {int(u) for u in nbrs} for v, nbrs in items}
        n = max(adj, default=-1) + 1
        if sorted(adj) != list(range(n)):
            raise GraphError("node ids must be dense 0..n-1")
        for v, nbrs in adj.items():
            for u in nbrs:
                if u == v:
                    raise SelfLoop(v)
                if u not in adj or v not in adj[u]:
                    raise NonSymmetricEdge(v, u)
        src = np.fromiter((v for v, nb in adj.items() for _ in nb), dtype=np.int64)
        dst = np.fromiter((u for nb in adj.values() for u in nb), dtype=np.int64)
        return cls._from_directed(n, src, dst)

    @classmethod
    def _from_directed(cls, n: int, src: np.ndarray, dst: np.ndarray) -> "Graph":
        key = np.unique(src * max(n, 1) + dst)
        src, dst = np.divmod(key, max(n, 1))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return cls(indptr, dst.astype(np.int64))

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64))

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def m(self) -> int:
        return len(self.indices) // 2

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    @cached_property
    def src(self) -> np.ndarray:
        """Source endpoint of every directed edge, aligned with ``indices``."""
        return np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)

    @cached_property
    def neighbor_sets(self) -> list[frozenset]:
        return [frozenset(self.neighbors(v).tolist()) for v in range(self.n)]

    def edge_list(self) -> np.ndarray:
        mask = self.src < self.indices
        return np.stack([self.src[mask], self.indices[mask]], axis=1)

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def induced(self, nodes: np.ndarray) -> "Graph":
        """Subgraph induced by ``nodes`` (relabelled to 0..k-1 in the given order)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        local = np.full(self.n, -1, dtype=np.int64)
        local[nodes] = np.arange(len(nodes))
        keep = (local[self.src] >= 0) & (local[self.indices] >= 0)
        return Graph._from_directed(len(nodes), local[self.src[keep]], local[self.indices[keep]])


@dataclass(frozen=True, eq=False)
class D1LCInstance:
    """Graph plus per-node palettes with ``p(v) >= d(v) + 1``.

    ``labels`` maps local node ids to the ids of the instance this one was
    derived from (identity for loaded instances).
    """

    graph: Graph
    pal_ptr: np.ndarray
    pal_colors: np.ndarray
    labels: np.ndarray

    @classmethod
    def build(
        cls,
        graph: Graph,
        palettes: Mapping[int, Iterable[int]] | Sequence[Iterable[int]] | None = None,
        labels: np.ndarray | None = None,
        check: bool = True,
    ) -> "D1LCInstance":
        n = graph.n
        lists = []
        for v in range(n):
            given = None
            if palettes is not None:
                given = palettes.get(v) if isinstance(palettes, Mapping) else palettes[v]
            if given is None:
                lists.append(np.arange(graph.degree(v) + 1, dtype=np.int64))
            else:
                lists.append(np.unique(np.asarray(list(given), dtype=np.int64)))
        ptr, flat = _csr_from_lists(lists)
        if labels is None:
            labels = np.arange(n, dtype=np.int64)
        inst = cls(graph, ptr, flat, np.asarray(labels, dtype=np.int64))
        if check:
            inst.validate()
        return inst

    def validate(self) -> None:
        sizes = self.palette_sizes
        bad = np.flatnonzero(sizes <= self.graph.degrees)
        if len(bad):
            v = int(bad[0])
            raise PaletteTooSmall(v, int(sizes[v]), self.graph.degree(v))
        if len(self.pal_colors) and self.pal_colors.min() < 0:
            raise GraphError("colors must be non-negative integers")

    @property
    def n(self) -> int:
        return self.graph.n

    @cached_property
    def palette_sizes(self) -> np.ndarray:
        return np.diff(self.pal_ptr)

    def palette(self, v: int) -> np.ndarray:
        return self.pal_colors[self.pal_ptr[v] : self.pal_ptr[v + 1]]

    @cached_property
    def palette_sets(self) -> list[frozenset]:
        return [frozenset(self.palette(v).tolist()) for v in range(self.n)]

    @cached_property
    def palette_owner(self) -> np.ndarray:
        return np.repeat(np.arange(self.n, dtype=np.int64), self.palette_sizes)

    @cached_property
    def color_span(self) -> int:
        """One more than the largest color id; used to build (node, color) keys."""
        return int(self.pal_colors.max()) + 1 if len(self.pal_colors) else 1

    @cached_property
    def palette_keys(self) -> np.ndarray:
        """Sorted ``node * color_span + color`` keys for membership lookups."""
        return self.palette_owner * self.color_span + self.pal_colors

    def palette_position(self, nodes: np.ndarray, colors: np.ndarray) -> np.ndarray:
        """Flat palette index of ``colors[i]`` in ``nodes[i]``'s palette, or -1."""
        nodes = np.asarray(nodes, dtype=np.int64)
        colors = np.asarray(colors, dtype=np.int64)
        out = np.full(len(nodes), -1, dtype=np.int64)
        ok = (colors >= 0) & (colors < self.color_span)
        keys = nodes[ok] * self.color_span + colors[ok]
        pos = np.searchsorted(self.palette_keys, keys)
        pos_c = np.minimum(pos, len(self.palette_keys) - 1)
        hit = (pos < len(self.palette_keys)) & (self.palette_keys[pos_c] == keys)
        res = np.where(hit, pos_c, -1)
        out[ok] = res
        return out

    def sub_instance(self, nodes: np.ndarray, palette_lists: Sequence[np.ndarray] | None = None) -> "D1LCInstance":
        """Instance induced on ``nodes`` with optionally replaced palettes."""
        nodes = np.asarray(nodes, dtype=np.int64)
        g = self.graph.induced(nodes)
        if palette_lists is None:
            palette_lists = [self.palette(int(v)) for v in nodes]
        ptr, flat = _csr_from_lists(list(palette_lists))
        return D1LCInstance(g, ptr, flat, self.labels[nodes])


class ColoringState:
    """Mutable per-node status: a color id, ``UNCOLORED`` or ``DEFERRED``."""

    def __init__(self, n: int, color: np.ndarray | None = None):
        self.color = np.full(n, UNCOLORED, dtype=np.int64) if color is None else np.asarray(color, dtype=np.int64).copy()

    @classmethod
    def from_mapping(cls, n: int, mapping: Mapping[int, int]) -> "ColoringState":
        st = cls(n)
        for v, c in mapping.items():
            st.color[v] = c
        return st

    def copy(self) -> "ColoringState":
        return ColoringState(len(self.color), self.color)

    @property
    def colored(self) -> np.ndarray:
        return self.color >= 0

    @property
    def uncolored(self) -> np.ndarray:
        return self.color == UNCOLORED

    @property
    def deferred(self) -> np.ndarray:
        return self.color == DEFERRED

    def __len__(self) -> int:
        return len(self.color)

    def as_dict(self) -> dict[int, int]:
        return {int(v): int(c) for v, c in enumerate(self.color) if c >= 0}


@dataclass(frozen=True)
class NodeParams:
    slack: int
    sparsity: Fraction
    discrepancy: Fraction
    unevenness: Fraction
    slackability: Fraction
    strong_slackability: Fraction


# --------------------------------------------------------------------------
# loading


_EDGE_RE = re.compile(r"^\s*(-?\d+)\s+(-?\d+)\s*$")


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_edges(text: str) -> tuple[int, list[tuple[int, int]]]:
    """Parse "u v" lines; returns (n, edges) with n = 1 + largest id seen."""
    edges = []
    n = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        if line.startswith("n ") or line.startswith("nodes"):
            try:
                n = max(n, int(line.split()[-1]))
            except ValueError:
                raise ParseError(f"line {lineno}: bad node count {raw!r}") from None
            continue
        m = _EDGE_RE.match(line)
        if not m:
            raise ParseError(f"line {lineno}: expected 'u v', got {raw!r}")
        u, v = int(m.group(1)), int(m.group(2))
        if u < 0 or v < 0:
            raise ParseError(f"line {lineno}: negative node id")
        edges.append((u, v))
        n = max(n, u + 1, v + 1)
    return n, edges


def parse_palettes(text: str) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        head, sep, tail = line.partition(":")
        if not sep:
            raise ParseError(f"line {lineno}: expected 'v: c1 c2 ...'")
        try:
            v = int(head)
            colors = [int(tok) for tok in tail.split()]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if v in out:
            raise ParseError(f"line {lineno}: duplicate palette for node {v}")
        out[v] = colors
    return out


def parse_coloring(text: str) -> dict[int, int]:
    out: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        head, sep, tail = line.partition(":")
        try:
            out[int(head)] = int(tail)
        except ValueError:
            raise ParseError(f"line {lineno}: expected 'v: c'") from None
    return out


def load_instance(graph_description: str, palette_description: str | None = None, n: int | None = None) -> D1LCInstance:
    """Build a validated instance from edge-list and palette text."""
    n_seen, edges = parse_edges(graph_description)
    palettes = parse_palettes(palette_description) if palette_description else {}
    n_total = max(n_seen, n or 0, max(palettes, default=-1) + 1)
    graph = Graph.from_edges(n_total, edges)
    return D1LCInstance.build(graph, palettes)


def read_instance(graph_path: str | Path, palette_path: str | Path | None = None) -> D1LCInstance:
    graph_text = Path(graph_path).read_text()
    palette_text = Path(palette_path).read_text() if palette_path else None
    return load_instance(graph_text, palette_text)


def format_edges(graph: Graph) -> str:
    lines = [f"# n {graph.n}", f"n {graph.n}"]
    lines += [f"{u} {v}" for u, v in graph.edge_list().tolist()]
    return "\n".join(lines) + "\n"


def format_palettes(inst: D1LCInstance) -> str:
    return "".join(f"{v}: {' '.join(map(str, inst.palette(v).tolist()))}\n" for v in range(inst.n))


def format_coloring(color: np.ndarray) -> str:
    return "".join(f"{v}: {int(c)}\n" for v, c in enumerate(color) if c >= 0)


# --------------------------------------------------------------------------
# parameters


def residual_palette(inst: D1LCInstance, coloring: ColoringState, v: int) -> np.ndarray:
    nb = inst.graph.neighbors(v)
    used = coloring.color[nb]
    return np.setdiff1d(inst.palette(v), used[used >= 0], assume_unique=False)


def compute_slack(inst: D1LCInstance, coloring: ColoringState, v: int) -> int:
    """Residual palette size minus the number of uncolored, non-deferred neighbors."""
    nb = inst.graph.neighbors(v)
    d = int(np.count_nonzero(coloring.color[nb] == UNCOLORED))
    return len(residual_palette(inst, coloring, v)) - d


def edges_within(graph: Graph, nodes: Iterable[int]) -> int:
    nodes = list(nodes)
    sets = graph.neighbor_sets
    inside = set(nodes)
    return sum(len(sets[u] & inside) for u in nodes) // 2


def compute_sparsity(inst: D1LCInstance, v: int) -> Fraction:
    d = inst.graph.degree(v)
    if d == 0:
        return Fraction(0)
    m_nv = edges_within(inst.graph, inst.graph.neighbors(v).tolist())
    return Fraction(d * (d - 1) // 2 - m_nv, d)


def compute_disparity(inst: D1LCInstance, u: int, v: int) -> Fraction:
    pu = inst.palette_sets[u]
    return Fraction(len(pu - inst.palette_sets[v]), len(pu))


def compute_discrepancy(inst: D1LCInstance, v: int) -> Fraction:
    # grouped by denominator to keep Fraction arithmetic cheap
    pv = inst.palette_sets[v]
    sums: dict[int, int] = {}
    for u in inst.graph.neighbors(v).tolist():
        pu = inst.palette_sets[u]
        sums[len(pu)] = sums.get(len(pu), 0) + len(pu - pv)
    return sum((Fraction(a, b) for b, a in sums.items()), Fraction(0))


def compute_unevenness(inst: D1LCInstance, v: int) -> Fraction:
    deg = inst.graph.degrees
    dv = int(deg[v])
    sums: dict[int, int] = {}
    for du in deg[inst.graph.neighbors(v)].tolist():
        if du > dv:
            sums[du + 1] = sums.get(du + 1, 0) + du - dv
    return sum((Fraction(a, b) for b, a in sums.items()), Fraction(0))


def compute_slackability(inst: D1LCInstance, v: int) -> tuple[Fraction, Fraction]:
    zeta = compute_sparsity(inst, v)
    return compute_discrepancy(inst, v) + zeta, compute_unevenness(inst, v) + zeta


def node_params(inst: D1LCInstance, v: int, coloring: ColoringState | None = None) -> NodeParams:
    if coloring is not None and (coloring.color != UNCOLORED).any():
        red = reduce_instance(inst, coloring)
        local = np.flatnonzero(red.labels == inst.labels[v])
        if not len(local):
            raise GraphError(f"node {v} is colored")
        inst, v = red, int(local[0])
        coloring = None
    zeta = compute_sparsity(inst, v)
    disc = compute_discrepancy(inst, v)
    eta = compute_unevenness(inst, v)
    slack = int(inst.palette_sizes[v]) - inst.graph.degree(v)
    return NodeParams(slack, zeta, disc, eta, disc + zeta, eta + zeta)


# --------------------------------------------------------------------------
# self-reduction and verification


def check_partial(inst: D1LCInstance, coloring: ColoringState) -> None:
    color = coloring.color
    colored = np.flatnonzero(color >= 0)
    if len(colored):
        pos = inst.palette_position(colored, color[colored])
        off = colored[pos < 0]
        if len(off):
            raise ImproperInput(f"node {int(off[0])} colored {int(color[off[0]])} outside its palette")
    g = inst.graph
    cs, cd = color[g.src], color[g.indices]
    bad = (cs >= 0) & (cs == cd)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ImproperInput(f"edge {int(g.src[i])}-{int(g.indices[i])} monochromatic")


def reduce_instance(inst: D1LCInstance, coloring: ColoringState, check: bool = True) -> D1LCInstance:
    """Residual instance on uncolored and deferred nodes.

    Palettes lose every color used by a colored neighbor; the result keeps
    the D1LC guarantee whenever ``coloring`` is proper.
    """
    if check:
        check_partial(inst, coloring)
    color = coloring.color
    keep = np.flatnonzero(color < 0)
    if len(keep) == inst.n:
        return inst
    g = inst.graph
    # mark palette entries blocked by colored neighbors
    mask = color[g.indices] >= 0
    pos = inst.palette_position(g.src[mask], color[g.indices[mask]])
    blocked = np.zeros(len(inst.pal_colors), dtype=bool)
    blocked[pos[pos >= 0]] = True
    alive = ~blocked
    lists = [inst.pal_colors[inst.pal_ptr[v] : inst.pal_ptr[v + 1]][alive[inst.pal_ptr[v] : inst.pal_ptr[v + 1]]] for v in keep.tolist()]
    return inst.sub_instance(keep, lists)


@dataclass(frozen=True)
class Verdict:
    valid: bool
    kind: str = "ok"  # ok | Uncolored | OffPalette | Monochromatic
    node: int | None = None
    other: int | None = None
    color: int | None = None

    def __bool__(self) -> bool:
        return self.valid

    def describe(self) -> str:
        if self.valid:
            return "valid"
        if self.kind == "Monochromatic":
            return f"Monochromatic edge {self.node}-{self.other} color {self.color}"
        if self.kind == "OffPalette":
            return f"OffPalette node {self.node} color {self.color}"
        return f"{self.kind} node {self.node}"


def verify_coloring(inst: D1LCInstance, coloring: ColoringState | np.ndarray | Mapping[int, int]) -> Verdict:
    """Accept iff every node is colored from its palette and no edge is monochromatic."""
    if isinstance(coloring, ColoringState):
        color = coloring.color
    elif isinstance(coloring, Mapping):
        color = ColoringState.from_mapping(inst.n, coloring).color
    else:
        color = np.asarray(coloring, dtype=np.int64)
    missing = np.flatnonzero(color < 0)
    if len(missing):
        return Verdict(False, "Uncolored", int(missing[0]))
    pos = inst.palette_position(np.arange(inst.n), color)
    off = np.flatnonzero(pos < 0)
    if len(off):
        v = int(off[0])
        return Verdict(False, "OffPalette", v, color=int(color[v]))
    g = inst.graph
    mono = np.flatnonzero(color[g.src] == color[g.indices])
    if len(mono):
        i = int(mono[0])
        return Verdict(False, "Monochromatic", int(g.src[i]), int(g.indices[i]), int(color[g.src[i]]))
    return Verdict(True)
