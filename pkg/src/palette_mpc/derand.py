"""Seed search for normal procedures, and the deferral loop around it.

A phase is derandomized by coloring the power graph G^(4r), giving each
power-color class a disjoint chunk of one pseudorandom string, and fixing
the seed bit by bit so the number of success-property failures never
exceeds its mean over all seeds.  Failing nodes are deferred; deferred
nodes are recolored on the residual instance at the next level.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator

import numpy as np

from .config import RunConfig
from .exact import log_star
from .graph import DEFERRED, UNCOLORED, ColoringState, D1LCInstance, Graph
from .local_procs import LevelState, Net, NormalProcedure, OutputView, TapeExecutor, finalize_phase, residual_lists
from .mpc import Simulator, assign_machines, ball_words
from .prg import SeededGenerator, TrueRandomOracle
from .tape import RandomTape, SourceTape, StreamTape

MAX_RADIUS = 3  # largest radius declared by any phase of the coloring plan


class SeedSpaceTooLarge(ValueError):
    pass


class OutputLengthExceeded(ValueError):
    pass


class ResidualTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class PowerColoring:
    radius: int
    distance: int
    colors: np.ndarray
    color_count: int
    max_ball_words: int = 0


def _balls(graph: Graph, distance: int) -> np.ndarray:
    """Packed bitsets of the closed distance-``distance`` balls."""
    n = graph.n
    words = (n + 63) // 64
    ball = np.zeros((n, words), dtype=np.uint64)
    ids = np.arange(n)
    ball[ids, ids // 64] = np.uint64(1) << (ids % 64).astype(np.uint64)
    deg = graph.degrees
    has = np.flatnonzero(deg > 0)
    step = 4096
    for _ in range(distance):
        nxt = ball.copy()
        for lo in range(0, len(has), step):
            nodes = has[lo : lo + step]
            a, b = graph.indptr[nodes[0]], graph.indptr[nodes[-1] + 1]
            rows = ball[graph.indices[a:b]]
            starts = graph.indptr[nodes] - a
            nxt[nodes] |= np.bitwise_or.reduceat(rows, starts, axis=0)
        if np.array_equal(nxt, ball):
            break
        ball = nxt
    return ball


def _members(row: np.ndarray, n: int) -> np.ndarray:
    bits = np.unpackbits(row.view(np.uint8), bitorder="little")[:n]
    return np.flatnonzero(bits)


def color_power_graph(
    graph: Graph,
    radius: int = 1,
    distance: int | None = None,
    inst: D1LCInstance | None = None,
    sim: Simulator | None = None,
) -> PowerColoring:
    """Greedy coloring of G^distance (default distance 4 * radius) in ascending id order."""
    if distance is None:
        distance = 4 * radius
    n = graph.n
    colors = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return PowerColoring(radius, distance, colors, 0)
    if graph.m == 0 or distance == 0:
        colors[:] = 0
        return PowerColoring(radius, distance, colors, 1, 0)
    ball = _balls(graph, distance)
    weight = None
    if inst is not None:
        weight = 1 + graph.degrees + inst.palette_sizes
    peak = 0
    for v in range(n):
        mem = _members(ball[v], n)
        if weight is not None:
            peak = max(peak, int(weight[mem].sum()))
        used = colors[mem]
        used = np.unique(used[used >= 0])
        # smallest color not in ``used``
        gaps = np.flatnonzero(used != np.arange(len(used)))
        colors[v] = int(gaps[0]) if len(gaps) else len(used)
    if sim is not None:
        sim.hold(peak, f"distance-{distance} ball")
        sim.charge(f"power_coloring:d{distance}:collect", distance)
        sim.charge(f"power_coloring:d{distance}:color", log_star(n))
    return PowerColoring(radius, distance, colors, int(colors.max()) + 1, peak)


def assign_chunks(source, seed: int, power: PowerColoring, bits_per_node: int) -> SourceTape:
    """Node with power color i reads output bits [i * B, (i + 1) * B)."""
    need = power.color_count * bits_per_node
    if need > source.t:
        raise OutputLengthExceeded(f"{power.color_count} chunks of {bits_per_node} bits exceed output length {source.t}")
    return SourceTape(source, seed, power.colors * bits_per_node, bits_per_node)


class _ZeroTape(RandomTape):
    def _bits(self, nodes, start, nbits):
        return np.zeros(len(nodes), dtype=np.int64)


@dataclass
class PhaseRecord:
    phase: str
    level: int
    seed_bits: int
    chosen_seed: int
    failures: int
    mean: Fraction
    deferred: int
    participants: int
    radius: int
    bits_per_node: int

    def line(self) -> str:
        return (
            f"{self.phase} level={self.level} seed_bits={self.seed_bits} seed={self.chosen_seed} "
            f"failures={self.failures} mean={float(self.mean):.6g} deferred={self.deferred} participants={self.participants}"
        )


@dataclass
class PhaseResult:
    color: np.ndarray
    deferred: np.ndarray
    seed: int
    record: PhaseRecord
    table: np.ndarray  # F(seed) for every seed


def failure_count(proc: NormalProcedure, st: LevelState, new: np.ndarray, aux: dict) -> int:
    view = OutputView(st.inst, new, proc.participants, aux, st.low_threshold)
    return int((~proc.evaluators.ssp(view) & (new == UNCOLORED)).sum())


def conditional_expectation_seed(table: np.ndarray) -> int:
    """Fix seed bits from the most significant one, keeping the half with the smaller mean (ties to 0)."""
    size = len(table)
    d = size.bit_length() - 1
    if 1 << d != size:
        raise SeedSpaceTooLarge("seed table length must be a power of two")
    lo = 0
    for bit in range(d - 1, -1, -1):
        half = 1 << bit
        zero = int(table[lo : lo + half].sum())
        one = int(table[lo + half : lo + 2 * half].sum())
        if one < zero:
            lo += half
    return lo


def make_source(cfg: RunConfig, t: int, power: PowerColoring | None = None):
    if t <= 1:
        return None
    if cfg.source == "oracle":
        d = min(cfg.max_seed_bits, t - 1)
        return TrueRandomOracle(d, t, cfg.entropy_seed)
    probe = SeededGenerator(0, t, cfg.prg_k)
    d = min(cfg.max_seed_bits, cfg.prg_k * probe.m, t - 1)
    return SeededGenerator(d, t, cfg.prg_k)


def derandomize_phase(
    proc: NormalProcedure,
    st: LevelState,
    power: PowerColoring,
    cfg: RunConfig | None = None,
    source=None,
    level: int = 0,
    threads: int = 1,
    defer: bool = True,
) -> PhaseResult:
    """Pick a seed by conditional expectations, run the phase with it and defer SSP failures."""
    cfg = cfg or st.cfg
    B = proc.bits_per_node
    t = power.color_count * B
    if source is None:
        source = make_source(cfg, t, power)
    seed_bits = 0 if source is None else source.seed_bits
    if seed_bits > 24:
        raise SeedSpaceTooLarge(f"2^{seed_bits} seeds")
    if source is not None and t > source.t:
        raise OutputLengthExceeded(f"phase needs {t} bits, source supplies {source.t}")

    def tape_for(seed: int) -> RandomTape:
        if source is None:
            return _ZeroTape(st.inst.n, B)
        return assign_chunks(source, seed, power, B)

    def evaluate(seed: int) -> int:
        new, aux = proc.run(st.color.copy(), tape_for(seed), None)
        return failure_count(proc, st, new, aux)

    seeds = range(1 << seed_bits)
    if threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            table = np.fromiter(pool.map(evaluate, seeds), dtype=np.int64, count=len(seeds))
    else:
        table = np.fromiter((evaluate(s) for s in seeds), dtype=np.int64, count=len(seeds))
    seed = conditional_expectation_seed(table)

    net = st.net
    if net is not None:
        sim = net.sim
        sim.collect_ball(st.inst, [], proc.radius, strict=False, label=f"{proc.name}:collect")
        sim.hold(len(table), "seed table")
        sim.aggregate(np.zeros((1, len(table)), dtype=np.int64), label=proc.name)
        sim.charge(f"{proc.name}:broadcast_seed", 1)
    new, aux = proc.run(st.color.copy(), tape_for(seed), net)
    fail = finalize_phase(st, proc, new, aux, defer)
    mean = Fraction(int(table.sum()), len(table))
    rec = PhaseRecord(
        proc.name, level, seed_bits, seed, int(fail.sum()), mean, int(fail.sum()) if defer else 0,
        int(proc.participants.sum()), proc.radius, B,
    )
    return PhaseResult(st.color, fail, seed, rec, table)


class DerandExecutor:
    def __init__(self, power: PowerColoring, level: int = 0, threads: int = 1, source_factory: Callable | None = None):
        self.power = power
        self.level = level
        self.threads = threads
        self.source_factory = source_factory
        self.records: list[PhaseRecord] = []
        self.results: list[PhaseResult] = []
        self.keep_results = False

    def execute(self, st: LevelState, proc: NormalProcedure) -> None:
        source = None
        if self.source_factory is not None:
            source = self.source_factory(self.power.color_count * proc.bits_per_node)
        res = derandomize_phase(proc, st, self.power, st.cfg, source, self.level, self.threads)
        self.records.append(res.record)
        if self.keep_results:
            self.results.append(res)

    def run(self, st: LevelState, plan: Iterator[NormalProcedure]) -> None:
        for proc in plan:
            self.execute(st, proc)


# ---------------------------------------------------------------- fallback


def greedy_by_classes(
    inst: D1LCInstance,
    color: np.ndarray,
    nodes: np.ndarray,
    net: Net | None = None,
    label: str = "fallback",
) -> int:
    """Color ``nodes`` greedily, one distance-2 class per round; returns the number of classes."""
    nodes = np.sort(np.asarray(nodes, dtype=np.int64))
    if not len(nodes):
        return 0
    sub = inst.graph.induced(nodes)
    power = color_power_graph(sub, distance=2)
    g = inst.graph
    sim = net.sim if net is not None else None
    if sim is not None:
        prev = sim.category
        sim.category = "fallback"
        sim.charge(f"{label}:classes", 2 + log_star(len(nodes)))
    for c in range(power.color_count):
        cls = nodes[power.colors == c]
        for v in cls.tolist():
            nb = color[g.indices[g.indptr[v] : g.indptr[v + 1]]]
            pal = inst.palette(v)
            free = pal[~np.isin(pal, nb[nb >= 0])]
            if not len(free):
                raise RuntimeError(f"node {v} has no free color; input is not a valid D1LC instance")
            color[v] = int(free[0])
        if net is not None:
            net.round(cls, color[cls], f"{label}:class{c}")
    if sim is not None:
        sim.category = prev
    return power.color_count


# ------------------------------------------------------------- full engine


@dataclass
class LevelTrace:
    level: int
    nodes: int
    max_degree: int
    phases: int
    deferred: int
    fallback_nodes: int
    fallback_classes: int


@dataclass
class DerandOutcome:
    coloring: ColoringState
    records: list[PhaseRecord] = field(default_factory=list)
    levels: list[LevelTrace] = field(default_factory=list)
    final_greedy: int = 0


def _net_for(sim: Simulator | None, inst: D1LCInstance) -> Net | None:
    if sim is None:
        return None
    return Net(sim, assign_machines(inst, sim.cfg), inst)


def derandomize_algorithm(
    plan_fn: Callable[[LevelState], Iterator[NormalProcedure]] | None,
    inst: D1LCInstance,
    cfg: RunConfig,
    sim: Simulator | None = None,
    low_threshold: int | None = None,
    rng: np.random.Generator | None = None,
    source_factory: Callable | None = None,
    radius: int = MAX_RADIUS,
) -> DerandOutcome:
    """Run the plan level by level; each level recolors the previous level's deferred nodes.

    In randomized mode (``cfg.mode``) phases read a stream tape instead of a
    searched seed; the deferral skeleton is the same.  ``plan_fn=None`` is
    the empty phase sequence.
    """
    n = inst.n
    lt = cfg.low_threshold(n) if low_threshold is None else low_threshold
    out = DerandOutcome(ColoringState(n))
    color = out.coloring.color
    current = np.arange(n, dtype=np.int64)
    sub = inst
    randomized = cfg.mode == "randomized"
    if randomized and rng is None:
        rng = np.random.default_rng(cfg.entropy_seed)
    threads = cfg.host_threads()
    for level in range(cfg.levels()):
        if not len(current):
            break
        net = _net_for(sim, sub)
        st = LevelState(sub, cfg, lt, np.full(sub.n, UNCOLORED, dtype=np.int64), net=net, ell=RunConfig.ell(sub.graph.max_degree))
        phases = 0
        if plan_fn is not None:
            if randomized:
                ex = TapeExecutor(StreamTape(sub.n, rng), defer=True)
                ex.run(st, plan_fn(st))
                phases = len(ex.records)
                out.records.extend(
                    PhaseRecord(r["phase"], level, 0, -1, r["failures"], Fraction(r["failures"]), r["failures"], r["participants"], 0, 0)
                    for r in ex.records
                )
            else:
                power = color_power_graph(sub.graph, radius, inst=sub, sim=sim)
                ex = DerandExecutor(power, level, threads, source_factory)
                ex.run(st, plan_fn(st))
                phases = len(ex.records)
                out.records.extend(ex.records)
        pending = np.flatnonzero(st.color == UNCOLORED)
        classes = greedy_by_classes(sub, st.color, pending, net, label=f"fallback:L{level}")
        color[current] = st.color
        deferred = np.flatnonzero(st.color == DEFERRED)
        out.levels.append(LevelTrace(level, sub.n, sub.graph.max_degree, phases, len(deferred), len(pending), classes))
        if not len(deferred):
            current = deferred
            break
        # residual instance on the deferred nodes (self-reducibility)
        sub = _residual(inst, color, current[deferred])
        current = current[deferred]
    if len(current):
        words = ball_words(sub)
        if sim is not None and words > sim.budget:
            raise ResidualTooLarge(f"{len(current)} remaining nodes need {words} words, budget {sim.budget}")
        rest = np.full(sub.n, UNCOLORED, dtype=np.int64)
        order = np.arange(sub.n)
        g = sub.graph
        for v in order.tolist():
            nb = rest[g.indices[g.indptr[v] : g.indptr[v + 1]]]
            pal = sub.palette(v)
            rest[v] = int(pal[~np.isin(pal, nb[nb >= 0])][0])
        if sim is not None:
            sim.hold(words, "final residual")
            sim.charge("final_greedy", 2)
        color[current] = rest
        out.final_greedy = len(current)
    return out


def _residual(inst: D1LCInstance, color: np.ndarray, nodes: np.ndarray) -> D1LCInstance:
    """Sub-instance on ``nodes`` with palettes stripped of colors used by colored neighbors."""
    ptr, flat = residual_lists(inst, color, nodes)
    lists = [flat[ptr[i] : ptr[i + 1]] for i in range(len(nodes))]
    return inst.sub_instance(nodes, lists)
