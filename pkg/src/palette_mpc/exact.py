"""Exact integer helpers for rational powers and threshold tests."""

from __future__ import annotations

from fractions import Fraction
from typing import Callable

import numpy as np


def iroot_floor(x: int, k: int) -> int:
    """Largest y with y**k <= x."""
    if x < 0 or k < 1:
        raise ValueError("iroot_floor needs x >= 0, k >= 1")
    if x < 2 or k == 1:
        return x
    y = int(round(x ** (1.0 / k))) if x.bit_length() < 1000 else 1 << (x.bit_length() // k)
    while y**k > x:
        y -= 1
    while (y + 1) ** k <= x:
        y += 1
    return y


def iroot_ceil(x: int, k: int) -> int:
    y = iroot_floor(x, k)
    return y if y**k == x else y + 1


def pow_floor(base: int, q: Fraction) -> int:
    """floor(base ** q) for integer base >= 0 and rational q >= 0."""
    q = Fraction(q)
    return iroot_floor(base**q.numerator, q.denominator)


def pow_ceil(base: int, q: Fraction) -> int:
    q = Fraction(q)
    return iroot_ceil(base**q.numerator, q.denominator)


def mul_pow_gt(d: int, base: int, q: Fraction, s: int) -> bool:
    """Exact test of d * base**q > s (all arguments non-negative)."""
    q = Fraction(q)
    return d**q.denominator * base**q.numerator > s**q.denominator


def filtered_ge(approx: np.ndarray, rhs: np.ndarray, exact: Callable[[int], bool], rel: float = 1e-9) -> np.ndarray:
    """``approx >= rhs`` elementwise, deferring to ``exact(i)`` where the floats are too close to call."""
    approx = np.asarray(approx, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    out = approx >= rhs
    close = np.abs(approx - rhs) <= rel * np.maximum(1.0, np.abs(rhs))
    for i in np.flatnonzero(close).tolist():
        out[i] = exact(i)
    return out


def log_star(x: float) -> int:
    """Iterated base-2 logarithm: number of log2 applications until x <= 1."""
    count = 0
    while x > 1:
        x = float(np.log2(x))
        count += 1
    return count


def tower(i: int) -> int:
    """2 ↑↑ i."""
    value = 1
    for _ in range(i):
        value = 2**value
    return value
