"""Run configuration: a flat key = value file, every knob with a default."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

from .exact import pow_ceil


class ConfigError(ValueError):
    pass


MODES = ("randomized", "derandomized")
SOURCES = ("generator", "oracle")


@dataclass(frozen=True)
class AcdParams:
    eps_ac: Fraction = Fraction(1, 3)
    eps_sp: Fraction = Fraction(1, 3)
    eps_1: Fraction = Fraction(1, 100)
    eps_2: Fraction = Fraction(1, 100)
    eps_3: Fraction = Fraction(1, 100)
    eps_4: Fraction = Fraction(1, 100)
    eps_5: Fraction = Fraction(1, 100)
    heavy_threshold: Fraction = Fraction(1)

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "heavy_threshold":
                if val <= 0:
                    raise ConfigError("heavy_threshold must be positive")
            elif not 0 < val < 1:
                raise ConfigError(f"{f.name} must lie in (0, 1)")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "derandomized"
    phi: Fraction = Fraction(1, 2)
    delta: Fraction = Fraction(1, 10)
    entropy_seed: int = 0

    # simulator
    space_constant: int = 2**14
    machine_count: int = 0  # 0: one machine per node
    sort_rounds: int = 3

    # degree ranges
    low_degree_threshold: int = 0  # 0: ceil(log2(n) ** low_degree_exponent)
    low_degree_exponent: int = 7
    mid_degree_threshold: int = 0  # 0: ceil(n ** (7 delta))
    partition: bool = True
    seed_budget: int = 4096
    recursion_levels: int = 0  # 0: ceil(1 / delta)

    # randomness
    source: str = "generator"
    max_seed_bits: int = 16
    prg_k: int = 8
    rejection_retries: int = 8

    # decomposition
    eps_ac: Fraction = Fraction(1, 3)
    eps_sp: Fraction = Fraction(1, 3)
    eps_1: Fraction = Fraction(1, 100)
    eps_2: Fraction = Fraction(1, 100)
    eps_3: Fraction = Fraction(1, 100)
    eps_4: Fraction = Fraction(1, 100)
    eps_5: Fraction = Fraction(1, 100)
    heavy_threshold: Fraction = Fraction(1)

    # success-property constants
    gamma: Fraction = Fraction(1, 128)
    c_p: Fraction = Fraction(1, 4)
    c_t: Fraction = Fraction(4)
    trc_rounds: int = 2
    kappa: Fraction = Fraction(1)

    threads: int = 0  # 0: PALETTE_MPC_THREADS or 1
    debug_checks: bool = False
    report_path: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.source not in SOURCES:
            raise ConfigError(f"source must be one of {SOURCES}")
        if not 0 < self.delta < self.phi < 1:
            raise ConfigError("need 0 < delta < phi < 1")
        if not 0 < self.kappa <= 1:
            raise ConfigError("kappa must lie in (0, 1]")
        if self.max_seed_bits < 1 or self.max_seed_bits > 24:
            raise ConfigError("max_seed_bits must lie in [1, 24]")
        if self.prg_k < 2:
            raise ConfigError("prg_k must be at least 2")
        if self.trc_rounds < 1 or self.rejection_retries < 1:
            raise ConfigError("trc_rounds and rejection_retries must be positive")
        for name in ("space_constant", "seed_budget", "sort_rounds", "low_degree_exponent"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        self.acd_params()  # range checks

    # ----------------------------------------------------------------- derived

    def acd_params(self) -> AcdParams:
        return AcdParams(**{f.name: getattr(self, f.name) for f in fields(AcdParams)})

    def low_threshold(self, n: int) -> int:
        if self.low_degree_threshold:
            return self.low_degree_threshold
        if n < 2:
            return 1
        return max(1, math.ceil(math.log2(n) ** self.low_degree_exponent - 1e-9))

    def mid_threshold(self, n: int) -> int:
        if self.mid_degree_threshold:
            return self.mid_degree_threshold
        return pow_ceil(max(n, 1), 7 * self.delta)

    def bin_count(self, n: int) -> int:
        return pow_ceil(max(n, 1), self.delta)

    def local_space(self, n: int) -> int:
        phi = self.phi
        return pow_ceil(self.space_constant**phi.denominator * max(n, 1) ** phi.numerator, Fraction(1, phi.denominator))

    def machines(self, n: int) -> int:
        return self.machine_count or max(n, 1)

    def levels(self) -> int:
        return self.recursion_levels or math.ceil(1 / self.delta)

    def host_threads(self) -> int:
        if self.threads:
            return self.threads
        try:
            return max(1, int(os.environ.get("PALETTE_MPC_THREADS", "1")))
        except ValueError:
            return 1

    @staticmethod
    def ell(max_degree: int) -> int:
        return math.ceil(math.log2(max(max_degree, 2)) ** 2.1 - 1e-9)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: _coerce(k, v) for k, v in kw.items()})

    # -------------------------------------------------------------- text form

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            values[key.strip().replace("-", "_")] = val.strip()
        values.update(overrides)
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(k, v) for k, v in values.items()})

    @classmethod
    def load(cls, path: str | Path | None, **overrides) -> "RunConfig":
        text = Path(path).read_text() if path else ""
        return cls.from_text(text, **overrides)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value):
    kind = _TYPES.get(key)
    if kind is None:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        return Fraction(value) if kind == "Fraction" else value
    try:
        if kind == "Fraction":
            return Fraction(value)
        if kind == "int":
            return int(value)
        if kind == "bool":
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def exercising_profile(**kw) -> RunConfig:
    """Low thresholds so that desk-sized graphs reach the randomized subroutines."""
    base = dict(low_degree_exponent=1, mid_degree_threshold=128, max_seed_bits=4)
    base.update(kw)
    return RunConfig().with_overrides(**base)
