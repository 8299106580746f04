"""Randomness sources: a frozen true-random table and a k-wise independent generator.

The generator's output bit i under seed s is bit (i mod m) of P_s(floor(i/m)),
where P_s is a degree-(k-1) polynomial over GF(2^m).
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np


class BadParams(ValueError):
    pass


# primitive polynomials x^m + ..., as integers including the x^m term
PRIMITIVE = {
    8: 0x11D,
    9: 0x211,
    10: 0x409,
    11: 0x805,
    12: 0x1053,
    13: 0x201B,
    14: 0x4443,
    15: 0x8003,
    16: 0x1100B,
    17: 0x20009,
    18: 0x40081,
    19: 0x80027,
    20: 0x100009,
    21: 0x200005,
    22: 0x400003,
    23: 0x800021,
    24: 0x1000087,
}
TABLE_MAX_M = 20


@lru_cache(maxsize=None)
def field_tables(m: int) -> tuple[np.ndarray, np.ndarray]:
    """exp/log tables of GF(2^m) with generator x."""
    poly = PRIMITIVE[m]
    order = (1 << m) - 1
    exp = np.zeros(2 * order, dtype=np.int64)
    log = np.zeros(1 << m, dtype=np.int64)
    x = 1
    for i in range(order):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x >> m:
            x ^= poly
    if x != 1 or len(np.unique(exp[:order])) != order:
        raise BadParams(f"polynomial for m={m} is not primitive")
    exp[order:] = exp[:order]
    return exp, log


def gf_mul_int(a: int, b: int, m: int) -> int:
    poly = PRIMITIVE[m]
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> m:
            a ^= poly
    return r


def gf_mul(a: np.ndarray, b: np.ndarray, m: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if m <= TABLE_MAX_M:
        exp, log = field_tables(m)
        out = exp[log[a] + log[b]]
        return np.where((a == 0) | (b == 0), 0, out)
    poly = PRIMITIVE[m]
    a, b = np.broadcast_arrays(a.copy(), b)
    a = a.copy()
    r = np.zeros(a.shape, dtype=np.int64)
    for i in range(m):
        r ^= np.where((b >> i) & 1 == 1, a, 0)
        a = a << 1
        a ^= np.where((a >> m) & 1 == 1, poly, 0)
    return r


class SeededGenerator:
    kind = "generator"

    def __init__(self, seed_bits: int, t: int, k: int = 8):
        if seed_bits < 0 or t < 1 or k < 1:
            raise BadParams("need seed_bits >= 0, t >= 1, k >= 1")
        m = 8
        while (1 << m) * m < t:
            m += 1
        if m not in PRIMITIVE:
            raise BadParams(f"output length {t} needs GF(2^{m}), unsupported")
        if seed_bits >= t:
            raise BadParams(f"seed length {seed_bits} must be below output length {t}")
        self.seed_bits = seed_bits
        self.t = t
        self.k = k
        self.m = m
        # with enough seed bits the seed is the coefficient vector itself
        self.direct = seed_bits >= k * m

    @property
    def seed_count(self) -> int:
        return 1 << self.seed_bits

    def coefficients(self, seed: int) -> list[int]:
        if not 0 <= seed < self.seed_count:
            raise BadParams(f"seed {seed} outside [0, 2^{self.seed_bits})")
        mask = (1 << self.m) - 1
        if self.direct:
            return [(seed >> (j * self.m)) & mask for j in range(self.k)]
        nbytes = (self.m + 7) // 8
        digest = hashlib.blake2b(
            seed.to_bytes(8, "little"), digest_size=min(64, self.k * nbytes), person=b"palette-prg"
        ).digest()
        if len(digest) < self.k * nbytes:
            digest += hashlib.blake2b(digest, digest_size=64).digest()
        return [int.from_bytes(digest[j * nbytes : (j + 1) * nbytes], "little") & mask for j in range(self.k)]

    def words(self, seed: int, idx: np.ndarray) -> np.ndarray:
        """P_seed evaluated at field points ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        coef = self.coefficients(seed)
        r = np.full(idx.shape, coef[-1], dtype=np.int64)
        for c in reversed(coef[:-1]):
            r = gf_mul(r, idx, self.m) ^ c
        return r

    def bit(self, seed: int, i: int) -> int:
        if not 0 <= i < self.t:
            raise BadParams(f"bit index {i} outside output length {self.t}")
        w = int(self.words(seed, np.array([i // self.m]))[0])
        return (w >> (i % self.m)) & 1

    def read(self, seed: int, pos: np.ndarray, nbits: np.ndarray) -> np.ndarray:
        pos = np.asarray(pos, dtype=np.int64)
        nbits = np.asarray(nbits, dtype=np.int64)
        if len(pos) and (pos + nbits).max() > self.t:
            raise BadParams("read past the generator's output length")
        m = self.m
        w0 = pos // m
        off = pos % m
        span = int(((off + nbits + m - 1) // m).max(initial=0))
        out = np.zeros(len(pos), dtype=np.int64)
        if span == 0:
            return out
        uniq, inv = np.unique(np.concatenate([w0 + j for j in range(span)]), return_inverse=True)
        vals = self.words(seed, uniq)[inv].reshape(span, len(pos))
        for j in range(span):
            shift = j * m - off
            part = np.where(shift >= 0, vals[j] << np.maximum(shift, 0), vals[j] >> np.maximum(-shift, 0))
            out |= np.where(shift < nbits, part, 0)
        return out & ((np.int64(1) << nbits) - 1)


class TrueRandomOracle:
    """Frozen table of uniform bits, one row per index in [0, 2^d)."""

    kind = "oracle"
    MAX_BITS = 1 << 26

    def __init__(self, seed_bits: int, t: int, entropy_seed: int = 0):
        if seed_bits < 0 or t < 1:
            raise BadParams("need seed_bits >= 0 and t >= 1")
        if (t << seed_bits) > self.MAX_BITS:
            raise BadParams(f"oracle table of {t << seed_bits} bits is too large")
        self.seed_bits = seed_bits
        self.t = t
        rng = np.random.default_rng(entropy_seed)
        self.table = rng.integers(0, 2, size=(1 << seed_bits, t), dtype=np.uint8)
        self.table.setflags(write=False)

    @property
    def seed_count(self) -> int:
        return 1 << self.seed_bits

    def bit(self, seed: int, i: int) -> int:
        return int(self.table[seed, i])

    def read(self, seed: int, pos: np.ndarray, nbits: np.ndarray) -> np.ndarray:
        pos = np.asarray(pos, dtype=np.int64)
        nbits = np.asarray(nbits, dtype=np.int64)
        out = np.zeros(len(pos), dtype=np.int64)
        row = self.table[seed]
        for j in range(int(nbits.max(initial=0))):
            live = j < nbits
            if (pos[live] + j >= self.t).any():
                raise BadParams("read past the oracle's output length")
            out[live] |= row[pos[live] + j].astype(np.int64) << j
        return out


def build_source(kind: str, params: dict):
    """``kind`` is "generator" (params d, t, k) or "oracle" (params d, t, entropy_seed)."""
    try:
        if kind in ("generator", "SeededGenerator"):
            return SeededGenerator(int(params["d"]), int(params["t"]), int(params.get("k", 8)))
        if kind in ("oracle", "TrueRandomOracle"):
            return TrueRandomOracle(int(params["d"]), int(params["t"]), int(params.get("entropy_seed", 0)))
    except KeyError as exc:
        raise BadParams(f"missing parameter {exc}") from None
    raise BadParams(f"unknown source kind {kind!r}")
