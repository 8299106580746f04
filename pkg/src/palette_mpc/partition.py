"""Recursive degree reduction by hashing nodes and colors into bins."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .derand import DerandOutcome, PhaseRecord, derandomize_algorithm, greedy_by_classes, _net_for, _residual
from .graph import UNCOLORED, ColoringState, D1LCInstance
from .local_procs import color_middle_plan
from .mpc import Simulator


class NoValidSeed(RuntimeError):
    def __init__(self, budget: int, detail: str):
        super().__init__(f"no hash seed among the first {budget} satisfies the partition bounds ({detail})")
        self.budget = budget


class DegreeTooHigh(ValueError):
    pass


def next_prime(x: int) -> int:
    x = max(x, 2)
    while True:
        if all(x % p for p in range(2, int(x**0.5) + 1)):
            return x
        x += 1


def _affine(a: int, b: int, prime: int, bins: int, x: np.ndarray) -> np.ndarray:
    # python ints avoid overflow for primes near n^2
    if prime < (1 << 31):
        return ((a * x.astype(np.int64) + b) % prime) % bins
    return np.array([((a * int(v) + b) % prime) % bins for v in x.tolist()], dtype=np.int64)


@dataclass(frozen=True)
class HashChoice:
    index: int  # position in the scan
    a1: int
    b1: int
    p1: int
    a2: int
    b2: int
    p2: int
    bins: int

    def node_bin(self, ids: np.ndarray) -> np.ndarray:
        return _affine(self.a1, self.b1, self.p1, self.bins, np.asarray(ids))

    def color_bin(self, colors: np.ndarray) -> np.ndarray:
        return _affine(self.a2, self.b2, self.p2, self.bins - 1, np.asarray(colors))


def hash_candidate(index: int, n: int, color_span: int, bins: int) -> HashChoice:
    p1 = next_prime(n)
    p2 = next_prime(max(n * n, color_span, 2))
    digest = hashlib.blake2b(index.to_bytes(8, "little"), digest_size=32, person=b"palette-hash").digest()
    w = [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]
    return HashChoice(index, 1 + w[0] % (p1 - 1), w[1] % p1, p1, 1 + w[2] % (p2 - 1), w[3] % p2, p2, bins)


@dataclass
class PartitionResult:
    hashes: HashChoice | None
    g_mid_nodes: np.ndarray
    bin_nodes: list[np.ndarray]  # node ids (in the parent instance) per bin
    g_mid: D1LCInstance
    bins: list[D1LCInstance]
    check: dict = field(default_factory=dict)


def _restricted_lists(inst: D1LCInstance, nodes: np.ndarray, h: HashChoice, b: int) -> list[np.ndarray]:
    keep = h.color_bin(inst.pal_colors) == b
    return [inst.pal_colors[inst.pal_ptr[v] : inst.pal_ptr[v + 1]][keep[inst.pal_ptr[v] : inst.pal_ptr[v + 1]]] for v in nodes.tolist()]


def _bin_degrees(inst: D1LCInstance, label: np.ndarray) -> np.ndarray:
    g = inst.graph
    same = label[g.src] == label[g.indices]
    return np.bincount(g.src[same], minlength=inst.n)


def evaluate_hashes(inst: D1LCInstance, h: HashChoice, mid: np.ndarray, delta, n_global: int) -> tuple[bool, str, np.ndarray, np.ndarray]:
    """Check both partition bounds; returns (ok, reason, d', p')."""
    n = inst.n
    nb = h.bins
    label = np.where(mid, -1, h.node_bin(np.arange(n)))
    d_new = _bin_degrees(inst, label)
    p_new = inst.palette_sizes.copy()
    color_bins = h.color_bin(inst.pal_colors)
    restricted = (label >= 0) & (label < nb - 1)
    match = color_bins == label[inst.palette_owner]
    counts = np.bincount(inst.palette_owner[match], minlength=n)
    p_new[restricted] = counts[restricted]
    bad = np.flatnonzero(d_new >= p_new)
    if len(bad):
        return False, f"node {int(bad[0])}: d'={int(d_new[bad[0]])} >= p'={int(p_new[bad[0]])}", d_new, p_new
    a, b = delta.numerator, delta.denominator
    d = inst.graph.degrees
    for v in np.flatnonzero(~mid).tolist():
        if int(d_new[v]) ** b * n_global**a >= (2 * int(d[v])) ** b:
            return False, f"node {v}: d'={int(d_new[v])} not below 2 d n^-delta (d={int(d[v])})", d_new, p_new
    return True, "ok", d_new, p_new


def select_hashes(inst: D1LCInstance, delta, cfg: RunConfig, n_global: int | None = None) -> tuple[HashChoice, int]:
    """First hash pair in the fixed scan order whose partition meets both bounds; returns (choice, tried)."""
    n_global = n_global or inst.n
    bins = cfg.bin_count(n_global)
    mid = inst.graph.degrees <= cfg.mid_threshold(n_global)
    reason = "no candidates"
    for i in range(cfg.seed_budget):
        h = hash_candidate(i, max(inst.n, 2), max(inst.color_span, n_global * n_global), bins)
        ok, reason, _, _ = evaluate_hashes(inst, h, mid, delta, n_global)
        if ok:
            return h, i + 1
    raise NoValidSeed(cfg.seed_budget, reason)


def low_space_partition(inst: D1LCInstance, delta, cfg: RunConfig, n_global: int | None = None, sim: Simulator | None = None) -> PartitionResult:
    n_global = n_global or inst.n
    nb = cfg.bin_count(n_global)
    mid = inst.graph.degrees <= cfg.mid_threshold(n_global)
    if nb <= 2 or mid.all():
        nodes = np.arange(inst.n)
        return PartitionResult(None, nodes, [], inst, [], {"trivial": True})
    h, tried = select_hashes(inst, delta, cfg, n_global)
    if sim is not None:
        sim.charge("partition:select_hashes", sim.sort_rounds * tried)
    ok, reason, d_new, p_new = evaluate_hashes(inst, h, mid, delta, n_global)
    assert ok, reason
    label = np.where(mid, -1, h.node_bin(np.arange(inst.n)))
    g_mid_nodes = np.flatnonzero(mid)
    bin_nodes = [np.flatnonzero(label == b) for b in range(nb)]
    bins = [inst.sub_instance(bin_nodes[b], _restricted_lists(inst, bin_nodes[b], h, b)) for b in range(nb - 1)]
    bins.append(inst.sub_instance(bin_nodes[nb - 1]))
    res = PartitionResult(h, g_mid_nodes, bin_nodes, inst.sub_instance(g_mid_nodes), bins)
    res.check = {"tried": tried, "d_prime": d_new, "p_prime": p_new, "mid": mid}
    return res


def partition_violations(inst: D1LCInstance, part: PartitionResult, delta, n_global: int) -> list[str]:
    """Independent recheck of a partition: cover, disjointness, both bounds, disjoint color bins."""
    out = []
    all_nodes = np.concatenate([part.g_mid_nodes, *part.bin_nodes]) if part.bin_nodes else part.g_mid_nodes
    if len(all_nodes) != inst.n or len(np.unique(all_nodes)) != inst.n:
        out.append("parts do not partition V")
    a, b = delta.numerator, delta.denominator
    for sub in [part.g_mid, *part.bins]:
        bad = np.flatnonzero(sub.graph.degrees >= sub.palette_sizes)
        if len(bad):
            out.append(f"d' >= p' in a part ({len(bad)} nodes)")
    for nodes, sub in zip(part.bin_nodes, part.bins):
        d = inst.graph.degrees[nodes]
        for dv, dn in zip(d.tolist(), sub.graph.degrees.tolist()):
            if dn**b * n_global**a >= (2 * dv) ** b:
                out.append(f"degree bound violated: d={dv} d'={dn}")
                break
    seen: dict[int, int] = {}
    for i, sub in enumerate(part.bins[:-1]):
        for c in np.unique(sub.pal_colors).tolist():
            if seen.setdefault(c, i) != i:
                out.append(f"color {c} appears in bins {seen[c]} and {i}")
                break
    return out


# ------------------------------------------------------------------ driver


@dataclass
class TraceEntry:
    depth: int
    kind: str  # partition | mid | fallback
    nodes: int
    max_degree: int
    bin_sizes: list[int] = field(default_factory=list)
    bin_max_degrees: list[int] = field(default_factory=list)
    hash_index: int = -1


@dataclass
class PipelineLog:
    records: list[PhaseRecord] = field(default_factory=list)
    trace: list[TraceEntry] = field(default_factory=list)
    partition_checks: list[list[str]] = field(default_factory=list)
    levels: list = field(default_factory=list)
    mid_rounds: int = 0
    deferred_total: int = 0
    final_greedy: int = 0


def low_degree_fallback(inst: D1LCInstance, cfg: RunConfig, sim: Simulator | None = None, threshold: int | None = None) -> ColoringState:
    """Greedy over the classes of a distance-2 coloring, one class per round."""
    limit = cfg.low_threshold(inst.n) if threshold is None else threshold
    if inst.graph.max_degree > limit:
        raise DegreeTooHigh(f"max degree {inst.graph.max_degree} exceeds the low-degree threshold {limit}")
    color = np.full(inst.n, UNCOLORED, dtype=np.int64)
    greedy_by_classes(inst, color, np.arange(inst.n), _net_for(sim, inst))
    return ColoringState(inst.n, color)


def derandomized_mid_degree_color(
    inst: D1LCInstance,
    cfg: RunConfig,
    sim: Simulator | None = None,
    n_global: int | None = None,
    log: PipelineLog | None = None,
    depth: int = 0,
) -> ColoringState:
    n_global = n_global or inst.n
    low = cfg.low_threshold(n_global)
    if inst.graph.max_degree <= low:
        if log is not None:
            log.trace.append(TraceEntry(depth, "fallback", inst.n, inst.graph.max_degree))
        return low_degree_fallback(inst, cfg, sim, low)
    before = sim.stats.rounds_by_category.get("pipeline", 0) if sim is not None else 0
    out: DerandOutcome = derandomize_algorithm(color_middle_plan, inst, cfg, sim, low)
    if log is not None:
        log.trace.append(TraceEntry(depth, "mid", inst.n, inst.graph.max_degree))
        log.records.extend(out.records)
        log.levels.extend(out.levels)
        log.deferred_total += sum(lv.deferred for lv in out.levels)
        log.final_greedy += out.final_greedy
        if sim is not None:
            log.mid_rounds += sim.stats.rounds_by_category.get("pipeline", 0) - before
    return out.coloring


def low_space_color_reduce(
    inst: D1LCInstance,
    cfg: RunConfig,
    sim: Simulator | None = None,
    n_global: int | None = None,
    log: PipelineLog | None = None,
    depth: int = 0,
    max_depth: int = 64,
) -> ColoringState:
    n_global = n_global or inst.n
    if depth > max_depth:
        raise RuntimeError("partition recursion did not terminate")
    part = low_space_partition(inst, cfg.delta, cfg, n_global, sim)
    if part.hashes is None:
        return derandomized_mid_degree_color(inst, cfg, sim, n_global, log, depth)
    if log is not None:
        log.trace.append(
            TraceEntry(
                depth, "partition", inst.n, inst.graph.max_degree,
                [len(x) for x in part.bin_nodes], [b.graph.max_degree for b in part.bins], part.hashes.index,
            )
        )
        log.partition_checks.append(partition_violations(inst, part, cfg.delta, n_global))
    color = np.full(inst.n, UNCOLORED, dtype=np.int64)
    for nodes, sub in zip(part.bin_nodes[:-1], part.bins[:-1]):
        if len(nodes):
            color[nodes] = low_space_color_reduce(sub, cfg, sim, n_global, log, depth + 1, max_depth).color
    last = part.bin_nodes[-1]
    if len(last):
        sub = _residual(inst, color, last)
        color[last] = low_space_color_reduce(sub, cfg, sim, n_global, log, depth + 1, max_depth).color
    mid = part.g_mid_nodes
    if len(mid):
        sub = _residual(inst, color, mid)
        color[mid] = derandomized_mid_degree_color(sub, cfg, sim, n_global, log, depth + 1).color
    return ColoringState(inst.n, color)
