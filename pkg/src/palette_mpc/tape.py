"""Per-node random tapes.

A tape hands out bits to nodes sequentially; a node's reads never exceed
its declared demand.  Values are little-endian: the first bit read is bit 0.
"""

from __future__ import annotations

import numpy as np


class TapeExhausted(RuntimeError):
    def __init__(self, node: int, wanted: int, demand: int):
        super().__init__(f"node {node} wants bit {wanted} beyond its demand of {demand}")
        self.node = node


MAX_READ = 31


def bit_length(bound: np.ndarray) -> np.ndarray:
    """ceil(log2(bound)) for positive integers (0 for bound == 1)."""
    bound = np.asarray(bound, dtype=np.int64)
    out = np.zeros(bound.shape, dtype=np.int64)
    big = bound > 1
    out[big] = np.ceil(np.log2(bound[big])).astype(np.int64)
    # guard against float rounding at exact powers of two
    too_small = big & ((1 << np.minimum(out, 62)) < bound)
    out[too_small] += 1
    too_big = big & (out > 0) & ((1 << np.maximum(out - 1, 0)) >= bound)
    out[too_big] -= 1
    return out


class RandomTape:
    def __init__(self, n: int, demand: int | np.ndarray | None = None):
        self.n = n
        self.cursor = np.zeros(n, dtype=np.int64)
        self.demand = None if demand is None else np.broadcast_to(np.asarray(demand, dtype=np.int64), (n,))

    def _advance(self, nodes: np.ndarray, nbits: np.ndarray) -> np.ndarray:
        start = self.cursor[nodes]
        end = start + nbits
        if self.demand is not None:
            over = end > self.demand[nodes]
            if over.any():
                i = int(np.flatnonzero(over)[0])
                raise TapeExhausted(int(nodes[i]), int(end[i]), int(self.demand[nodes[i]]))
        self.cursor[nodes] = end
        return start

    def read(self, nodes, nbits) -> np.ndarray:
        """Next ``nbits[i]`` bits of node ``nodes[i]`` as unsigned integers."""
        nodes = np.asarray(nodes, dtype=np.int64)
        nbits = np.broadcast_to(np.asarray(nbits, dtype=np.int64), nodes.shape).copy()
        if len(nodes) != len(np.unique(nodes)):
            raise ValueError("a node may appear once per read")
        if (nbits > MAX_READ).any() or (nbits < 0).any():
            raise ValueError(f"reads are limited to {MAX_READ} bits")
        start = self._advance(nodes, nbits)
        return self._bits(nodes, start, nbits)

    def _bits(self, nodes, start, nbits) -> np.ndarray:
        raise NotImplementedError


class StreamTape(RandomTape):
    """Bits drawn from a numpy generator (randomized mode)."""

    def __init__(self, n: int, rng: np.random.Generator, demand=None):
        super().__init__(n, demand)
        self.rng = rng

    def _bits(self, nodes, start, nbits):
        if not len(nodes):
            return np.zeros(0, dtype=np.int64)
        return self.rng.integers(0, np.int64(1) << nbits, dtype=np.int64)


class FixedTape(RandomTape):
    """Explicit bit lists per node; reading past the end raises."""

    def __init__(self, bits: dict[int, list[int]] | list[list[int]], n: int | None = None):
        if not isinstance(bits, dict):
            bits = dict(enumerate(bits))
        n = n if n is not None else max(bits, default=-1) + 1
        super().__init__(n, np.array([len(bits.get(v, [])) for v in range(n)], dtype=np.int64))
        self.table = {v: np.asarray(b, dtype=np.int64) for v, b in bits.items()}

    def _bits(self, nodes, start, nbits):
        out = np.zeros(len(nodes), dtype=np.int64)
        for i, (v, s, k) in enumerate(zip(nodes.tolist(), start.tolist(), nbits.tolist())):
            if k:
                chunk = self.table[v][s : s + k]
                out[i] = int((chunk << np.arange(k)).sum())
        return out


class SourceTape(RandomTape):
    """Bits read from a randomness source under a fixed seed.

    Node v's j-th bit is output bit ``offset[v] + j`` of the source.
    """

    def __init__(self, source, seed: int, offset: np.ndarray, demand):
        super().__init__(len(offset), demand)
        self.source = source
        self.seed = seed
        self.offset = np.asarray(offset, dtype=np.int64)

    def _bits(self, nodes, start, nbits):
        return self.source.read(self.seed, self.offset[nodes] + start, nbits)


def uniform(tape: RandomTape, nodes: np.ndarray, bound: np.ndarray, retries: int) -> np.ndarray:
    """Uniform index in [0, bound) per node by rejection sampling.

    Every retry is read whether or not an earlier one was accepted, so the
    number of bits consumed depends only on ``bound``.  If all retries are
    rejected the last draw is reduced mod ``bound``.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    bound = np.asarray(bound, dtype=np.int64)
    nb = bit_length(bound)
    out = np.full(len(nodes), -1, dtype=np.int64)
    val = np.zeros(len(nodes), dtype=np.int64)
    for _ in range(retries):
        val = tape.read(nodes, nb)
        take = (out < 0) & (val < bound)
        out[take] = val[take]
    miss = out < 0
    out[miss] = val[miss] % bound[miss]
    return out
