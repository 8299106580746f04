"""Round-synchronous low-space MPC simulator with word accounting.

Every machine holds at most ``local_space_words`` words.  Communication goes
through :meth:`Simulator.exchange`, which checks per-machine send/receive
volumes, orders the buffer by (destination, source, sequence) and folds it
into a sha256 transcript.  Sorting and aggregation are black-box primitives
charged a fixed number of rounds.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .graph import D1LCInstance, Graph


class MpcError(RuntimeError):
    pass


class SpaceExceeded(MpcError):
    def __init__(self, what: str, words: int, budget: int):
        super().__init__(f"{what}: {words} words exceed local space {budget}")
        self.words = words
        self.budget = budget


class SendOverflow(MpcError):
    def __init__(self, machine: int, words: int, budget: int):
        super().__init__(f"machine {machine} sends {words} words, budget {budget}")
        self.machine = machine


class ReceiveOverflow(MpcError):
    def __init__(self, machine: int, words: int, budget: int):
        super().__init__(f"machine {machine} receives {words} words, budget {budget}")
        self.machine = machine


class InsufficientGlobalSpace(MpcError):
    pass


@dataclass(frozen=True)
class MpcConfig:
    phi: Fraction
    delta: Fraction
    local_space_words: int
    machine_count: int

    @classmethod
    def for_instance(cls, cfg, n: int) -> "MpcConfig":
        return cls(cfg.phi, cfg.delta, cfg.local_space(n), cfg.machines(n))


@dataclass
class RoundStats:
    rounds_elapsed: int = 0
    peak_words_per_machine: int = 0
    total_messages: int = 0
    total_words: int = 0
    primitive_invocations: dict = field(default_factory=dict)
    rounds_by_category: dict = field(default_factory=dict)

    def copy(self) -> "RoundStats":
        return RoundStats(
            self.rounds_elapsed,
            self.peak_words_per_machine,
            self.total_messages,
            self.total_words,
            dict(self.primitive_invocations),
            dict(self.rounds_by_category),
        )


@dataclass(frozen=True)
class Placement:
    node_machine: np.ndarray  # first machine holding each node's edges
    machine_words: np.ndarray  # words stored per machine
    machines_used: int


def assign_machines(inst: D1LCInstance, cfg: MpcConfig) -> Placement:
    """Pack adjacency lists onto machines in node-id order.

    A node whose list exceeds one machine is split over consecutive fresh
    machines; otherwise lists never straddle machines.
    """
    s = cfg.local_space_words
    deg = inst.graph.degrees.tolist()
    node_machine = np.zeros(inst.n, dtype=np.int64)
    loads: list[int] = []
    cur = -1
    for v, w in enumerate(deg):
        if w > s:
            for chunk in range(0, w, s):
                loads.append(min(s, w - chunk))
            node_machine[v] = len(loads) - -(-w // s)
            cur = -1
            continue
        if cur < 0 or loads[cur] + w > s:
            loads.append(0)
            cur = len(loads) - 1
        loads[cur] += w
        node_machine[v] = cur
    used = max(len(loads), 1)
    if used > cfg.machine_count:
        raise InsufficientGlobalSpace(
            f"{2 * inst.graph.m} edge words need {used} machines of {s} words, only {cfg.machine_count} available"
        )
    return Placement(node_machine, np.asarray(loads or [0], dtype=np.int64), used)


class Simulator:
    def __init__(self, cfg: MpcConfig, sort_rounds: int = 3):
        self.cfg = cfg
        self.sort_rounds = sort_rounds
        self.stats = RoundStats()
        self.charges: list[tuple[str, str, int]] = []  # (label, category, rounds)
        self._transcript = hashlib.sha256()
        self.category = "pipeline"

    # ---------------------------------------------------------------- basics

    @property
    def budget(self) -> int:
        return self.cfg.local_space_words

    def transcript_digest(self) -> str:
        return self._transcript.copy().hexdigest()

    def hold(self, words: int | np.ndarray, what: str = "machine") -> None:
        """Record that some machine holds ``words`` words; fatal if over budget."""
        peak = int(np.max(words)) if np.size(words) else 0
        if peak > self.budget:
            raise SpaceExceeded(what, peak, self.budget)
        self.stats.peak_words_per_machine = max(self.stats.peak_words_per_machine, peak)

    def _charge(self, label: str, rounds: int, category: str | None = None) -> None:
        cat = category or self.category
        self.stats.rounds_elapsed += rounds
        self.stats.rounds_by_category[cat] = self.stats.rounds_by_category.get(cat, 0) + rounds
        self.charges.append((label, cat, rounds))

    def charge(self, label: str, rounds: int, category: str | None = None) -> None:
        """Charge rounds for a step whose traffic is not simulated message by message."""
        self._charge(label, int(rounds), category)
        self._transcript.update(f"charge|{label}|{int(rounds)}\n".encode())

    # -------------------------------------------------------------- exchange

    def exchange(
        self,
        src: np.ndarray,
        dst: np.ndarray,
        payload: np.ndarray | None = None,
        words: np.ndarray | int = 1,
        label: str = "exchange",
        category: str | None = None,
    ) -> np.ndarray:
        """Deliver one round of messages between machines.

        Returns the delivery order (indices into the input) sorted by
        (destination, source, sequence).
        """
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        k = len(src)
        w = np.broadcast_to(np.asarray(words, dtype=np.int64), (k,))
        mc = self.cfg.machine_count
        if k:
            if src.max() >= mc or dst.max() >= mc or min(src.min(), dst.min()) < 0:
                raise MpcError("message addressed outside the machine range")
            sent = np.bincount(src, weights=w, minlength=mc)
            if sent.max() > self.budget:
                m = int(np.argmax(sent))
                raise SendOverflow(m, int(sent[m]), self.budget)
            recv = np.bincount(dst, weights=w, minlength=mc)
            if recv.max() > self.budget:
                m = int(np.argmax(recv))
                raise ReceiveOverflow(m, int(recv[m]), self.budget)
            self.hold(max(sent.max(), recv.max()), "exchange buffer")
        seq = np.arange(k, dtype=np.int64)
        order = np.lexsort((seq, src, dst))
        h = self._transcript
        h.update(f"round|{label}|{k}\n".encode())
        if k:
            h.update(dst[order].tobytes())
            h.update(src[order].tobytes())
            if payload is not None:
                h.update(np.ascontiguousarray(np.asarray(payload, dtype=np.int64)[order]).tobytes())
        self.stats.total_messages += k
        self.stats.total_words += int(w.sum()) if k else 0
        self._charge(label, 1, category)
        return order

    def local_round(
        self, placement: Placement, inst: D1LCInstance, senders: np.ndarray, payload: np.ndarray, label: str, words: int = 1
    ) -> None:
        """One LOCAL round: every sender ships ``words`` words to each neighbor's machine."""
        g = inst.graph
        senders = np.asarray(senders, dtype=np.int64)
        if len(senders) == 0:
            self.exchange(np.zeros(0, np.int64), np.zeros(0, np.int64), label=label)
            return
        counts = g.degrees[senders]
        src_nodes = np.repeat(senders, counts)
        starts = g.indptr[senders]
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        dst_nodes = g.indices[np.repeat(starts, counts) + offs]
        pay = np.repeat(np.asarray(payload, dtype=np.int64), counts)
        nm = placement.node_machine
        self.exchange(
            nm[src_nodes], nm[dst_nodes], payload=np.stack([src_nodes, dst_nodes, pay], axis=1), words=words, label=label
        )

    # ------------------------------------------------------------ primitives

    def _primitive(self, name: str, records: int, label: str) -> None:
        if records > self.cfg.machine_count * self.budget:
            raise InsufficientGlobalSpace(f"{name} on {records} records exceeds global space")
        self.stats.primitive_invocations[name] = self.stats.primitive_invocations.get(name, 0) + 1
        self.charge(f"{name}:{label}", self.sort_rounds)

    def global_sort(self, records: np.ndarray, key: np.ndarray | None = None, label: str = "") -> np.ndarray:
        """Stable sort across machines, charged ``sort_rounds`` rounds."""
        records = np.asarray(records)
        key = records if key is None else np.asarray(key)
        self._primitive("sort", len(records), label)
        return records[np.argsort(key, kind="stable")]

    def aggregate(self, values: np.ndarray, label: str = "") -> np.ndarray:
        """Column sums of per-machine vectors (e.g. a failure table), charged as one sort."""
        values = np.asarray(values)
        if values.ndim == 2:
            self.hold(values.shape[1], "aggregate vector")
        self._primitive("aggregate", len(values), label)
        return values.sum(axis=0)

    def collect_ball(
        self,
        inst: D1LCInstance,
        nodes,
        radius: int,
        strict: bool = True,
        label: str = "collect",
    ) -> dict[int, D1LCInstance]:
        """Gather the radius-hop induced sub-instance of each requested node.

        ``strict`` applies the a-priori bound Delta**(2 radius) <= s; otherwise
        only the measured ball size is checked.
        """
        s = self.budget
        if strict:
            bound = max(inst.graph.max_degree, 1) ** (2 * radius)
            if bound > s:
                raise SpaceExceeded(f"radius-{radius} ball bound", bound, s)
        out = {}
        peak = 0
        for v in np.atleast_1d(np.asarray(nodes, dtype=np.int64)).tolist():
            ball = bfs_ball(inst.graph, v, radius)
            sub = inst.sub_instance(ball)
            words = ball_words(sub)
            if words > s:
                raise SpaceExceeded(f"ball of node {v}", words, s)
            peak = max(peak, words)
            out[v] = sub
        self.hold(peak, "ball")
        self.charge(label, radius)
        return out

    def account(self) -> RoundStats:
        return self.stats.copy()


def bfs_ball(graph: Graph, v: int, radius: int) -> np.ndarray:
    seen = np.zeros(graph.n, dtype=bool)
    seen[v] = True
    frontier = np.array([v], dtype=np.int64)
    for _ in range(radius):
        if not len(frontier):
            break
        nb = np.concatenate([graph.neighbors(u) for u in frontier.tolist()])
        nb = np.unique(nb[~seen[nb]])
        seen[nb] = True
        frontier = nb
    return np.flatnonzero(seen)


def ball_words(inst: D1LCInstance) -> int:
    """Words to store an instance: one per node, adjacency entry and palette color."""
    return inst.n + len(inst.graph.indices) + len(inst.pal_colors)
