"""Almost-clique decomposition, V_start classification and clique roles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .config import AcdParams
from .exact import filtered_ge
from .graph import D1LCInstance, compute_unevenness

_CHUNK = 512


class EmptyClique(ValueError):
    pass


def _frac_sum(nums: np.ndarray, dens: np.ndarray) -> Fraction:
    if not len(nums):
        return Fraction(0)
    uniq, inv = np.unique(dens, return_inverse=True)
    sums = np.zeros(len(uniq), dtype=object)
    np.add.at(sums, inv, nums.astype(object))
    return sum((Fraction(int(a), int(b)) for a, b in zip(sums, uniq.tolist())), Fraction(0))


class InstanceStats:
    """Per-edge and per-node quantities shared by the decomposition steps.

    Edge arrays align with ``inst.graph.indices`` (directed edge v -> u, v = src).
    """

    def __init__(self, inst: D1LCInstance):
        self.inst = inst
        self.g = inst.graph
        self.deg = self.g.degrees

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        g = self.g
        return sparse.csr_matrix((np.ones(len(g.indices), dtype=np.int32), g.indices, g.indptr), shape=(g.n, g.n))

    def _edge_values(self, left: sparse.csr_matrix, right: sparse.csr_matrix) -> np.ndarray:
        """(left @ right)[v, u] for every directed edge, computed in row chunks."""
        g = self.g
        out = np.zeros(len(g.indices), dtype=np.int64)
        for lo in range(0, g.n, _CHUNK):
            hi = min(g.n, lo + _CHUNK)
            prod = (left[lo:hi] @ right).tocsr()
            prod.sort_indices()
            e_lo, e_hi = g.indptr[lo], g.indptr[hi]
            if e_lo == e_hi:
                continue
            rows = g.src[e_lo:e_hi] - lo
            cols = g.indices[e_lo:e_hi]
            pr = np.repeat(np.arange(hi - lo), np.diff(prod.indptr))
            pkeys = pr.astype(np.int64) * g.n + prod.indices
            ekeys = rows * g.n + cols
            pos = np.searchsorted(pkeys, ekeys)
            pos_c = np.minimum(pos, max(len(pkeys) - 1, 0))
            hit = (pos < len(pkeys)) & (pkeys[pos_c] == ekeys) if len(pkeys) else np.zeros(len(ekeys), bool)
            out[e_lo:e_hi] = np.where(hit, prod.data[pos_c] if len(pkeys) else 0, 0)
        return out

    @cached_property
    def common(self) -> np.ndarray:
        """|N(v) ∩ N(u)| per directed edge."""
        a = self.adjacency
        return self._edge_values(a, a)

    @cached_property
    def overlap(self) -> np.ndarray:
        """|Ψ(v) ∩ Ψ(u)| per directed edge."""
        inst = self.inst
        pm = sparse.csr_matrix(
            (np.ones(len(inst.pal_colors), dtype=np.int32), inst.pal_colors, inst.pal_ptr),
            shape=(inst.n, inst.color_span),
        )
        return self._edge_values(pm, pm.T.tocsc())

    @cached_property
    def inner_edges(self) -> np.ndarray:
        """m(N(v)): edges among the neighbors of v."""
        return np.bincount(self.g.src, weights=self.common, minlength=self.g.n).astype(np.int64) // 2

    @cached_property
    def sparsity_num(self) -> np.ndarray:
        """d(v) * sparsity(v) = C(d, 2) - m(N(v)), an integer."""
        d = self.deg
        return d * (d - 1) // 2 - self.inner_edges

    @cached_property
    def sparsity(self) -> np.ndarray:
        d = self.deg
        return np.where(d > 0, self.sparsity_num / np.maximum(d, 1), 0.0)

    @cached_property
    def _disc_terms(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.inst.palette_sizes[self.g.indices]
        return p - self.overlap, p

    @cached_property
    def discrepancy(self) -> np.ndarray:
        num, den = self._disc_terms
        return np.bincount(self.g.src, weights=num / den, minlength=self.g.n)

    def discrepancy_exact(self, v: int) -> Fraction:
        num, den = self._disc_terms
        lo, hi = self.g.indptr[v], self.g.indptr[v + 1]
        return _frac_sum(num[lo:hi], den[lo:hi])

    @cached_property
    def unevenness(self) -> np.ndarray:
        du = self.deg[self.g.indices]
        dv = self.deg[self.g.src]
        terms = np.maximum(0, du - dv) / (du + 1)
        return np.bincount(self.g.src, weights=terms, minlength=self.g.n)

    def sparsity_exact(self, v: int) -> Fraction:
        d = int(self.deg[v])
        return Fraction(int(self.sparsity_num[v]), d) if d else Fraction(0)

    def slackability_exact(self, v: int) -> Fraction:
        return self.discrepancy_exact(v) + self.sparsity_exact(v)


@dataclass(frozen=True)
class AlmostCliqueDecomposition:
    v_sparse: np.ndarray
    v_uneven: np.ndarray
    cliques: list
    unplaced: np.ndarray  # dissolved into v_sparse without meeting the sparse threshold

    @property
    def v_dense(self) -> np.ndarray:
        if not self.cliques:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(self.cliques))

    def labels(self, n: int) -> np.ndarray:
        """-1 sparse, -2 uneven, i >= 0 for clique i."""
        lab = np.full(n, -1, dtype=np.int64)
        lab[self.v_uneven] = -2
        for i, c in enumerate(self.cliques):
            lab[c] = i
        return lab

    def dump(self) -> str:
        lines = [f"sparse: {' '.join(map(str, self.v_sparse.tolist()))}", f"uneven: {' '.join(map(str, self.v_uneven.tolist()))}"]
        lines += [f"clique {i}: {' '.join(map(str, c.tolist()))}" for i, c in enumerate(self.cliques)]
        return "\n".join(lines) + "\n"


def sparse_mask(stats: InstanceStats, eps: Fraction) -> np.ndarray:
    d = stats.deg
    # sparsity >= eps*d  <=>  C(d,2) - m(N(v)) >= eps*d^2
    return eps.denominator * stats.sparsity_num >= eps.numerator * d * d


def uneven_mask(stats: InstanceStats, eps: Fraction, nodes: np.ndarray | None = None) -> np.ndarray:
    inst = stats.inst
    d = stats.deg.astype(float)
    rhs = float(eps) * d
    ok = filtered_ge(stats.unevenness, rhs, lambda i: compute_unevenness(inst, i) >= eps * int(stats.deg[i]))
    if nodes is not None:
        mask = np.zeros(inst.n, dtype=bool)
        mask[nodes] = True
        ok &= mask
    return ok


def _diameter_ok(adj: sparse.csr_matrix, nodes: np.ndarray) -> bool:
    k = len(nodes)
    if k <= 2:
        return True
    sub = adj[nodes][:, nodes].toarray().astype(bool)
    reach = sub | np.eye(k, dtype=bool)
    two = (reach.astype(np.int32) @ reach.astype(np.int32)) > 0
    return bool(two.all())


def _peel(stats: InstanceStats, comp: np.ndarray, eps: Fraction) -> tuple[np.ndarray, list[int]]:
    """Remove nodes from ``comp`` until (iii), (iv) and diameter <= 2 hold."""
    adj = stats.adjacency
    deg = stats.deg
    a, b = eps.numerator, eps.denominator
    comp = np.sort(comp)
    removed: list[int] = []
    while len(comp):
        inner = np.asarray(adj[comp][:, comp].sum(axis=1)).ravel()
        size = len(comp)
        bad = (b * deg[comp] > (a + b) * size) | (b * size > (a + b) * inner)
        if not bad.any() and _diameter_ok(adj, comp):
            break
        cand = np.flatnonzero(bad) if bad.any() else np.arange(size)
        # fewest internal neighbors first, then highest degree, then largest id
        pick = cand[np.lexsort((-comp[cand], -deg[comp[cand]], inner[cand]))[0]]
        removed.append(int(comp[pick]))
        comp = np.delete(comp, pick)
    return comp, removed


def _clique_ok(stats: InstanceStats, comp: np.ndarray, eps: Fraction) -> bool:
    inner = np.asarray(stats.adjacency[comp][:, comp].sum(axis=1)).ravel()
    a, b = eps.numerator, eps.denominator
    size = len(comp)
    if (b * stats.deg[comp] > (a + b) * size).any() or (b * size > (a + b) * inner).any():
        return False
    return _diameter_ok(stats.adjacency, comp)


def _reattach(stats: InstanceStats, cliques: list, dissolved: list[int], eps: Fraction) -> tuple[list, list[int]]:
    """Give peeled nodes a second chance.

    Each node joins the adjacent clique it shares most edges with if every
    condition still holds; the rest are regrouped by plain adjacency and peeled
    again, which recovers small blocks the similarity graph split apart.
    """
    g = stats.g
    owner = np.full(g.n, -1, dtype=np.int64)
    for i, c in enumerate(cliques):
        owner[c] = i
    left = []
    for v in sorted(dissolved):
        hits = owner[g.neighbors(v)]
        hits = hits[hits >= 0]
        placed = False
        if len(hits):
            ids, counts = np.unique(hits, return_counts=True)
            for i in ids[np.lexsort((ids, -counts))].tolist():
                grown = np.sort(np.append(cliques[i], v))
                if _clique_ok(stats, grown, eps):
                    cliques[i] = grown
                    owner[v] = i
                    placed = True
                    break
        if not placed:
            left.append(v)
    if len(left) < 2:
        return cliques, left
    nodes = np.array(left, dtype=np.int64)
    sub = stats.adjacency[nodes][:, nodes]
    k, comp_of = connected_components(sub, directed=False)
    rest: list[int] = []
    for j in range(k):
        comp = nodes[comp_of == j]
        if len(comp) < 2:
            rest += comp.tolist()
            continue
        if len(comp) <= EXACT_PACK_LIMIT:
            found, removed = _exact_pack(stats, comp, eps)
            cliques += found
            rest += removed
            continue
        kept, removed = _peel(stats, comp, eps)
        rest += removed
        if len(kept):
            cliques.append(kept)
    return cliques, sorted(rest)


EXACT_PACK_LIMIT = 14


def _exact_pack(stats: InstanceStats, comp: np.ndarray, eps: Fraction) -> tuple[list, list[int]]:
    """Repeatedly carve out the largest valid almost-clique by exhaustive search."""
    comp = np.sort(comp)
    a, b = eps.numerator, eps.denominator
    adj = stats.adjacency[comp][:, comp].toarray().astype(bool)
    deg = stats.deg[comp]
    k = len(comp)
    # subsets as bitmasks, largest first, ties by smallest member ids
    masks = sorted(range(1, 1 << k), key=lambda m: (-bin(m).count("1"), [i for i in range(k) if m >> i & 1]))
    rows = [sum(1 << j for j in range(k) if adj[i, j]) for i in range(k)]
    free = (1 << k) - 1
    found = []
    for m in masks:
        if m & ~free:
            continue
        size = bin(m).count("1")
        members = [i for i in range(k) if m >> i & 1]
        if any(b * int(deg[i]) > (a + b) * size or b * size > (a + b) * bin(rows[i] & m).count("1") for i in members):
            continue
        idx = comp[members]
        if not _diameter_ok(stats.adjacency, idx):
            continue
        found.append(idx)
        free &= ~m
    return found, [int(comp[i]) for i in range(k) if free >> i & 1]


def compute_acd(inst: D1LCInstance, params: AcdParams | None = None, stats: InstanceStats | None = None, sim=None) -> AlmostCliqueDecomposition:
    params = params or AcdParams()
    stats = stats or InstanceStats(inst)
    g = inst.graph
    if sim is not None:
        # every node gathers its 2-hop view: adjacency lists of its neighbors
        sim.hold(int(g.max_degree) ** 2 + int(inst.palette_sizes.max(initial=0)) * (g.max_degree + 1), "acd 2-hop view")
        sim.charge("acd", 2)
    is_sparse = sparse_mask(stats, params.eps_sp)
    rest = np.flatnonzero(~is_sparse)
    is_uneven = uneven_mask(stats, params.eps_sp, rest)
    cand = ~is_sparse & ~is_uneven

    eps = params.eps_ac
    a, b = eps.numerator, eps.denominator
    src, dst = g.src, g.indices
    dmax = np.maximum(stats.deg[src], stats.deg[dst])
    # closed neighbourhoods overlap on a (1 - eps_ac) fraction
    similar = b * (stats.common + 2) >= (b - a) * (dmax + 1)
    keep = similar & cand[src] & cand[dst]
    simg = sparse.csr_matrix((np.ones(int(keep.sum()), dtype=np.int8), (src[keep], dst[keep])), shape=(g.n, g.n))
    _, comp_of = connected_components(simg, directed=False)

    cliques = []
    dissolved: list[int] = []
    cand_nodes = np.flatnonzero(cand)
    if len(cand_nodes):
        order = np.argsort(comp_of[cand_nodes], kind="stable")
        grouped = cand_nodes[order]
        cuts = np.flatnonzero(np.diff(comp_of[grouped])) + 1
        for comp in np.split(grouped, cuts):
            kept, removed = _peel(stats, comp, eps)
            dissolved += removed
            if len(kept):
                cliques.append(kept)
    if dissolved:
        cliques, dissolved = _reattach(stats, cliques, dissolved, eps)
    cliques.sort(key=lambda c: int(c[0]))
    dissolved_arr = np.array(sorted(dissolved), dtype=np.int64)
    v_sparse = np.union1d(np.flatnonzero(is_sparse), dissolved_arr).astype(np.int64)
    return AlmostCliqueDecomposition(v_sparse, np.flatnonzero(is_uneven), cliques, dissolved_arr)


def acd_violations(
    inst: D1LCInstance,
    acd: AlmostCliqueDecomposition,
    params: AcdParams | None = None,
    min_degree: int = 0,
    stats: InstanceStats | None = None,
) -> list[str]:
    """Every failed decomposition condition, checked node by node.

    Node conditions are checked for nodes of degree >= ``min_degree``; the
    partition and clique diameters are always checked.
    """
    params = params or AcdParams()
    stats = stats or InstanceStats(inst)
    out = []
    parts = [acd.v_sparse, acd.v_uneven] + list(acd.cliques)
    allnodes = np.concatenate(parts) if parts else np.zeros(0, np.int64)
    if len(allnodes) != inst.n or len(np.unique(allnodes)) != inst.n:
        out.append("partition: parts do not partition V")
    deg = stats.deg
    big = deg >= min_degree
    sp = sparse_mask(stats, params.eps_sp)
    for v in acd.v_sparse[big[acd.v_sparse] & ~sp[acd.v_sparse]].tolist():
        out.append(f"(i) node {v} not sparse")
    if len(acd.v_uneven):
        un = uneven_mask(stats, params.eps_sp)
        for v in acd.v_uneven[big[acd.v_uneven] & ~un[acd.v_uneven]].tolist():
            out.append(f"(ii) node {v} not uneven")
    e = params.eps_ac
    adj = stats.adjacency
    for i, c in enumerate(acd.cliques):
        inner = np.asarray(adj[c][:, c].sum(axis=1)).ravel()
        size = len(c)
        for v, dv, k in zip(c.tolist(), deg[c].tolist(), inner.tolist()):
            if dv < min_degree:
                continue
            if e.denominator * dv > (e.numerator + e.denominator) * size:
                out.append(f"(iii) node {v} in clique {i}")
            if e.denominator * size > (e.numerator + e.denominator) * k:
                out.append(f"(iv) node {v} in clique {i}")
        if not _diameter_ok(adj, c):
            out.append(f"diameter: clique {i}")
    return out


# ----------------------------------------------------------------- V_start


@dataclass(frozen=True)
class VStartClassification:
    v_balanced: np.ndarray
    v_disc: np.ndarray
    v_easy: np.ndarray
    v_heavy: np.ndarray
    v_start: np.ndarray


def heavy_mass(inst: D1LCInstance, v: int, color: int) -> Fraction:
    """Expected number of neighbors of v picking ``color`` under uniform trials."""
    total = Fraction(0)
    for u in inst.graph.neighbors(v).tolist():
        if color in inst.palette_sets[u]:
            total += Fraction(1, int(inst.palette_sizes[u]))
    return total


def _heavy_total(inst: D1LCInstance, v: int, threshold: Fraction) -> tuple[float, callable]:
    """Float estimate of sum of H(c) over heavy colors, with an exact recomputation."""
    nb = inst.graph.neighbors(v)
    if not len(nb):
        return 0.0, lambda: Fraction(0)
    sizes = inst.palette_sizes[nb]
    cols = np.concatenate([inst.palette(u) for u in nb.tolist()])
    w = np.repeat(1.0 / sizes, sizes)
    uniq, inv = np.unique(cols, return_inverse=True)
    h = np.bincount(inv, weights=w)
    heavy = filtered_ge(h, np.full(len(h), float(threshold)), lambda i: heavy_mass(inst, v, int(uniq[i])) >= threshold)
    approx = float(h[heavy].sum())

    def exact() -> Fraction:
        return sum((heavy_mass(inst, v, int(c)) for c in uniq[heavy].tolist()), Fraction(0))

    return approx, exact


def classify_vstart(
    inst: D1LCInstance,
    acd: AlmostCliqueDecomposition,
    params: AcdParams | None = None,
    stats: InstanceStats | None = None,
) -> VStartClassification:
    params = params or AcdParams()
    stats = stats or InstanceStats(inst)
    g = inst.graph
    n = g.n
    deg = stats.deg
    sparse_set = np.zeros(n, dtype=bool)
    sparse_set[acd.v_sparse] = True
    dense = np.zeros(n, dtype=bool)
    dense[acd.v_dense] = True
    uneven = np.zeros(n, dtype=bool)
    uneven[acd.v_uneven] = True

    def count_ge(counts, eps):
        return eps.denominator * counts >= eps.numerator * deg

    big_nb = 3 * deg[g.indices] > 2 * deg[g.src]
    balanced = sparse_set & count_ge(np.bincount(g.src, weights=big_nb, minlength=n).astype(np.int64), params.eps_1)
    disc = sparse_set & filtered_ge(
        stats.discrepancy, float(params.eps_2) * deg, lambda i: stats.discrepancy_exact(i) >= params.eps_2 * int(deg[i])
    )
    dense_nb = np.bincount(g.src, weights=dense[g.indices], minlength=n).astype(np.int64)
    easy = balanced | disc | uneven | (sparse_set & count_ge(dense_nb, params.eps_3))
    heavy = np.zeros(n, dtype=bool)
    for v in np.flatnonzero(sparse_set & ~easy).tolist():
        approx, exact = _heavy_total(inst, v, params.heavy_threshold)
        rhs = float(params.eps_4) * int(deg[v])
        heavy[v] = filtered_ge(np.array([approx]), np.array([rhs]), lambda _i: exact() >= params.eps_4 * int(deg[v]))[0]
    easy_nb = np.bincount(g.src, weights=easy[g.indices], minlength=n).astype(np.int64)
    start = sparse_set & ~easy & ~heavy & count_ge(easy_nb, params.eps_5)
    return VStartClassification(*(np.flatnonzero(x) for x in (balanced, disc, easy, heavy, start)))


# ------------------------------------------------------------------- roles


@dataclass(frozen=True)
class CliqueRoles:
    clique: np.ndarray
    leader: int
    outliers: np.ndarray
    inliers: np.ndarray
    low_slack: bool
    slackability: Fraction


def select_leader(inst: D1LCInstance, clique, stats: InstanceStats | None = None) -> int:
    clique = np.asarray(clique, dtype=np.int64)
    if not len(clique):
        raise EmptyClique("clique is empty")
    stats = stats or InstanceStats(inst)
    best = None
    for v in np.sort(clique).tolist():
        sigma = stats.slackability_exact(v)
        if best is None or sigma < best[0]:
            best = (sigma, v)
    return best[1]


def is_low_slack_clique(inst: D1LCInstance, clique, leader: int, ell: int, stats: InstanceStats | None = None) -> bool:
    stats = stats or InstanceStats(inst)
    return stats.slackability_exact(leader) <= ell


def compute_outliers(
    inst: D1LCInstance,
    clique,
    leader: int,
    ell: int | None = None,
    stats: InstanceStats | None = None,
) -> CliqueRoles:
    stats = stats or InstanceStats(inst)
    g = inst.graph
    c = np.sort(np.asarray(clique, dtype=np.int64))
    size = len(c)
    nx = g.neighbor_sets[leader]
    common = np.array([len(g.neighbor_sets[u] & nx) for u in c.tolist()], dtype=np.int64)
    k1 = min(size, math.ceil(max(g.degree(leader), size) / 3))
    k2 = min(size, math.ceil(size / 6))
    few_common = c[np.lexsort((c, common))[:k1]]
    high_deg = c[np.lexsort((c, -g.degrees[c]))[:k2]]
    not_adj = c[[u not in nx for u in c.tolist()]]
    outliers = np.union1d(np.union1d(few_common, high_deg), not_adj).astype(np.int64)
    inliers = np.setdiff1d(c, outliers).astype(np.int64)
    if ell is None:
        from .config import RunConfig

        ell = RunConfig.ell(g.max_degree)
    sigma = stats.slackability_exact(leader)
    return CliqueRoles(c, int(leader), outliers, inliers, bool(sigma <= ell), sigma)


def compute_roles(inst: D1LCInstance, acd: AlmostCliqueDecomposition, ell: int, stats: InstanceStats | None = None) -> list[CliqueRoles]:
    stats = stats or InstanceStats(inst)
    return [compute_outliers(inst, c, select_leader(inst, c, stats), ell, stats) for c in acd.cliques]
