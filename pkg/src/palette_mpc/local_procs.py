"""Randomized LOCAL subroutines written against a random tape.

Each subroutine is a *step* over a color array (``UNCOLORED``/``DEFERRED``/
color ids).  The orchestrations (SlackColor, ColorSparse, ColorDense,
ColorMiddle) are generator *plans* that yield :class:`NormalProcedure`
objects; an executor runs each one, evaluates its strong success property
and either defers or terminates the nodes that miss it.  The same plan code
runs under a plain tape (randomized mode) and under the seed search in
:mod:`palette_mpc.derand`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterator

import numpy as np

from . import acd as acd_mod
from .acd import AlmostCliqueDecomposition, CliqueRoles, InstanceStats, VStartClassification
from .config import RunConfig
from .exact import log_star, mul_pow_gt, pow_floor, tower
from .graph import DEFERRED, UNCOLORED, ColoringState, D1LCInstance, check_partial
from .tape import RandomTape, bit_length, uniform

FAIL = -1


class BadParameters(ValueError):
    pass


class XTooLarge(ValueError):
    pass


class InlierNotAdjacent(ValueError):
    pass


class UnknownSubroutine(KeyError):
    pass


class ProbabilityOutOfRange(UserWarning):
    pass


# ------------------------------------------------------------------ helpers


def blocked_entries(inst: D1LCInstance, color: np.ndarray) -> np.ndarray:
    """Mask over ``inst.pal_colors``: entries used by a colored neighbor."""
    g = inst.graph
    nbc = color[g.indices]
    used = nbc >= 0
    pos = inst.palette_position(g.src[used], nbc[used])
    blocked = np.zeros(len(inst.pal_colors), dtype=bool)
    blocked[pos[pos >= 0]] = True
    return blocked


def residual_sizes(inst: D1LCInstance, color: np.ndarray) -> np.ndarray:
    b = blocked_entries(inst, color)
    return inst.palette_sizes - np.bincount(inst.palette_owner[b], minlength=inst.n)


def residual_lists(inst: D1LCInstance, color: np.ndarray, nodes: np.ndarray, blocked: np.ndarray | None = None):
    """CSR (ptr, colors) of the residual palettes of ``nodes``."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if blocked is None:
        blocked = blocked_entries(inst, color)
    starts = inst.pal_ptr[nodes]
    sizes = inst.palette_sizes[nodes]
    idx = _segments(starts, sizes)
    keep = ~blocked[idx]
    kept_sizes = np.add.reduceat(keep.astype(np.int64), np.r_[0, np.cumsum(sizes)[:-1]]) if len(nodes) and len(idx) else np.zeros(len(nodes), np.int64)
    kept_sizes = np.where(sizes > 0, kept_sizes, 0)
    ptr = np.zeros(len(nodes) + 1, dtype=np.int64)
    np.cumsum(kept_sizes, out=ptr[1:])
    return ptr, inst.pal_colors[idx[keep]]


def _segments(starts: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Concatenated ranges [starts[i], starts[i] + sizes[i])."""
    total = int(sizes.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offs = np.arange(total) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    return np.repeat(starts, sizes) + offs


def neighbor_count(inst: D1LCInstance, mask: np.ndarray) -> np.ndarray:
    g = inst.graph
    return np.bincount(g.src, weights=mask[g.indices], minlength=g.n).astype(np.int64)


def _as_mask(n: int, nodes) -> np.ndarray:
    nodes = np.asarray(nodes)
    if nodes.dtype == bool and len(nodes) == n:
        return nodes.copy()
    m = np.zeros(n, dtype=bool)
    m[nodes.astype(np.int64)] = True
    return m


class Net:
    """Binds a simulator and a placement so steps can report their traffic."""

    def __init__(self, sim, placement, inst: D1LCInstance):
        self.sim = sim
        self.placement = placement
        self.inst = inst

    def round(self, senders: np.ndarray, payload: np.ndarray, label: str, words: int = 1) -> None:
        self.sim.local_round(self.placement, self.inst, senders, payload, label, words=words)


# ------------------------------------------------------------------- trials


def _fisher_yates(tape: RandomTape, owners: np.ndarray, ptr: np.ndarray, flat: np.ndarray, k: np.ndarray, retries: int) -> None:
    """Shuffle the first k[i] slots of segment i in place (partial Fisher-Yates)."""
    p = np.diff(ptr)
    for j in range(int(k.max(initial=0))):
        act = np.flatnonzero(j < k)
        r = uniform(tape, owners[act], p[act] - j, retries)
        a = ptr[act] + j
        b = a + r
        tmp = flat[a].copy()
        flat[a] = flat[b]
        flat[b] = tmp


def _trial_step(
    inst: D1LCInstance,
    color: np.ndarray,
    part: np.ndarray,
    x: np.ndarray,
    tape: RandomTape,
    retries: int,
    net: Net | None = None,
    label: str = "multi_trial",
) -> np.ndarray:
    """One MultiTrial round for uncolored nodes ``part``; writes new colors into ``color``.

    x is clamped to the residual palette size.  Returns per-node outcome.
    """
    part = np.asarray(part, dtype=np.int64)
    if not len(part):
        return np.zeros(0, dtype=np.int64)
    ptr, flat = residual_lists(inst, color, part)
    flat = flat.copy()
    p = np.diff(ptr)
    k = np.minimum(np.broadcast_to(np.asarray(x, dtype=np.int64), part.shape), p)
    _fisher_yates(tape, part, ptr, flat, k, retries)

    sel = _segments(ptr[:-1], k)
    owner = np.repeat(np.arange(len(part)), k)
    cand = flat[sel]
    span = inst.color_span

    g = inst.graph
    local = np.full(g.n, -1, dtype=np.int64)
    local[part] = np.arange(len(part))
    e_lo = g.indptr[part]
    deg = g.degrees[part]
    eidx = _segments(e_lo, deg)
    ev = np.repeat(np.arange(len(part)), deg)
    eu = local[g.indices[eidx]]
    live = eu >= 0
    ev, eu = ev[live], eu[live]
    # every color in X_u blocks (v, color) for each participating neighbor u of v
    cstart = np.r_[0, np.cumsum(k)[:-1]]
    blocked_v = np.repeat(ev, k[eu])
    blocked_c = cand[_segments(cstart[eu], k[eu])]
    blocked_keys = np.unique(blocked_v * span + blocked_c)
    ok = ~np.isin(owner * span + cand, blocked_keys, assume_unique=False)

    big = np.iinfo(np.int64).max
    vals = np.where(ok, cand, big)
    best = np.minimum.reduceat(vals, cstart) if len(vals) else np.full(len(part), big)
    outcome = np.where(best < big, best, FAIL)
    if net is not None:
        first = np.where(k > 0, flat[np.minimum(ptr[:-1], max(len(flat) - 1, 0))], FAIL) if len(flat) else np.full(len(part), FAIL)
        net.round(part, first, f"{label}:propose", words=int(k.max(initial=1)))
        won = outcome >= 0
        net.round(part[won], outcome[won], f"{label}:commit")
    color[part[outcome >= 0]] = outcome[outcome >= 0]
    return outcome


def _check_participants(color: np.ndarray, part: np.ndarray) -> None:
    if (color[part] != UNCOLORED).any():
        raise BadParameters("participants must be uncolored")


def try_random_color(inst, coloring: ColoringState, participants, tape: RandomTape, retries: int = 8, net=None) -> np.ndarray:
    part = np.sort(np.asarray(participants, dtype=np.int64))
    _check_participants(coloring.color, part)
    return _trial_step(inst, coloring.color, part, np.ones(len(part), np.int64), tape, retries, net, "try_random_color")


def multi_trial(inst, coloring: ColoringState, participants, x: int, tape: RandomTape, retries: int = 8, net=None) -> np.ndarray:
    part = np.sort(np.asarray(participants, dtype=np.int64))
    _check_participants(coloring.color, part)
    if x < 1:
        raise BadParameters("x must be at least 1")
    if len(part):
        p = residual_sizes(inst, coloring.color)[part]
        if (p < x).any():
            v = int(part[np.flatnonzero(p < x)[0]])
            raise XTooLarge(f"node {v} has residual palette {int(p[part == v][0])} < x = {x}")
    return _trial_step(inst, coloring.color, part, np.full(len(part), x, np.int64), tape, retries, net)


GS_BITS = 4
GS_THRESHOLD = 1  # value < 1 out of 16: probability 1/16


def _generate_slack_step(inst, color, part, tape, retries, net=None) -> np.ndarray:
    part = np.asarray(part, dtype=np.int64)
    draw = tape.read(part, GS_BITS) if len(part) else np.zeros(0, np.int64)
    sampled = part[draw < GS_THRESHOLD]
    out = np.full(len(part), FAIL, dtype=np.int64)
    res = _trial_step(inst, color, sampled, np.ones(len(sampled), np.int64), tape, retries, net, "generate_slack")
    out[np.searchsorted(part, sampled)] = res
    return out


def generate_slack(inst, coloring: ColoringState, participants, tape: RandomTape, retries: int = 8, net=None) -> np.ndarray:
    """Sample each participant with probability 1/16 (4 tape bits), then one trial for the sample."""
    part = np.sort(np.asarray(participants, dtype=np.int64))
    _check_participants(coloring.color, part)
    return _generate_slack_step(inst, coloring.color, part, tape, retries, net)


def _synch_step(inst, color, roles: list[CliqueRoles], members: np.ndarray, tape, retries, net=None) -> np.ndarray:
    """Leaders permute residual palettes and propose distinct colors to their inliers."""
    g = inst.graph
    n = g.n
    leaders, groups = [], []
    for r in roles:
        inl = r.inliers[members[r.inliers]]
        if len(inl):
            nx = g.neighbor_sets[r.leader]
            if any(u not in nx for u in inl.tolist()):
                raise InlierNotAdjacent(f"clique with leader {r.leader} has an inlier outside N(leader)")
            leaders.append(r.leader)
            groups.append(np.sort(inl))
    proposal = np.full(n, FAIL, dtype=np.int64)
    if not leaders:
        return proposal
    lead = np.asarray(leaders, dtype=np.int64)
    if len(np.unique(lead)) != len(lead):
        raise BadParameters("a node leads two cliques")
    ptr, flat = residual_lists(inst, color, lead)
    flat = flat.copy()
    p = np.diff(ptr)
    k = np.minimum(p, np.array([len(x) for x in groups]))
    _fisher_yates(tape, lead, ptr, flat, k, retries)
    for i, inl in enumerate(groups):
        served = inl[: k[i]]
        proposal[served] = flat[ptr[i] : ptr[i] + k[i]]
    if net is not None:
        net.round(lead, flat[np.minimum(ptr[:-1], max(len(flat) - 1, 0))] if len(flat) else np.full(len(lead), FAIL), "synch:propose", words=int(k.max(initial=1)))
    has = proposal >= 0
    # T = proposals of neighbors that also hold a proposal
    clash = has[g.src] & has[g.indices] & (proposal[g.src] == proposal[g.indices])
    conflicted = np.zeros(n, dtype=bool)
    conflicted[g.src[clash]] = True
    cand = np.flatnonzero(has & ~conflicted)
    pos = inst.palette_position(cand, proposal[cand])
    blocked = blocked_entries(inst, color)
    in_res = (pos >= 0) & ~blocked[np.maximum(pos, 0)]
    win = cand[in_res]
    out = np.full(n, FAIL, dtype=np.int64)
    out[win] = proposal[win]
    if net is not None:
        sent = np.flatnonzero(has)
        net.round(sent, proposal[sent], "synch:exchange")
        net.round(win, out[win], "synch:commit")
    color[win] = out[win]
    return out


def synch_color_trial(inst, coloring: ColoringState, clique_roles, tape: RandomTape, participants=None, retries: int = 8, net=None) -> np.ndarray:
    """Returns a per-node array: the kept color or FAIL (FAIL also for non-inliers)."""
    roles = [clique_roles] if isinstance(clique_roles, CliqueRoles) else list(clique_roles)
    members = coloring.color == UNCOLORED
    if participants is not None:
        members &= _as_mask(inst.n, participants)
    return _synch_step(inst, coloring.color, roles, members, tape, retries, net)


PS_BITS = 16


def put_aside_probability(ell: int, delta_c: int) -> int:
    """Sampling threshold k for a 16-bit draw (probability k / 2^16), clamped to 1."""
    if delta_c <= 0:
        return 1 << PS_BITS
    k = (ell * ell << PS_BITS) // (48 * delta_c)
    if k > 1 << PS_BITS:
        warnings.warn(ProbabilityOutOfRange(f"p_s = {ell}^2/(48*{delta_c}) > 1, clamped to 1"), stacklevel=3)
        k = 1 << PS_BITS
    return k


def _put_aside_step(inst, color, roles: list[CliqueRoles], members: np.ndarray, ell: int, tape, net=None) -> np.ndarray:
    """Mask of put-aside nodes: sampled inliers with no sampled neighbor anywhere."""
    n = inst.n
    d_res = neighbor_count(inst, color == UNCOLORED)
    sampled = np.zeros(n, dtype=bool)
    for r in roles:
        inl = r.inliers[members[r.inliers]]
        if not len(inl):
            continue
        delta_c = int(d_res[r.clique].max(initial=0))
        k = put_aside_probability(ell, delta_c)
        draw = tape.read(inl, PS_BITS)
        sampled[inl[draw < k]] = True
    has_sampled_nb = neighbor_count(inst, sampled) > 0
    if net is not None:
        s = np.flatnonzero(sampled)
        net.round(s, np.ones(len(s), np.int64), "put_aside:sample")
    return sampled & ~has_sampled_nb


def put_aside(inst, clique_roles, ell: int, tape: RandomTape, coloring: ColoringState | None = None, net=None) -> np.ndarray:
    roles = [clique_roles] if isinstance(clique_roles, CliqueRoles) else list(clique_roles)
    color = coloring.color if coloring is not None else np.full(inst.n, UNCOLORED, dtype=np.int64)
    for r in roles:
        if not r.low_slack:
            raise BadParameters(f"clique led by {r.leader} is not low-slack")
    return np.flatnonzero(_put_aside_step(inst, color, roles, color == UNCOLORED, ell, tape, net))


# --------------------------------------------------------------- evaluators


class OutputView:
    """A phase's outputs as seen by the success properties."""

    def __init__(self, inst: D1LCInstance, after: np.ndarray, participants: np.ndarray, aux: dict | None = None, low_threshold: int = 0):
        self.inst = inst
        self.after = after
        self.participants = participants
        self.aux = aux or {}
        self.low_threshold = low_threshold

    def deferring(self, mask: np.ndarray) -> "OutputView":
        after = self.after.copy()
        after[mask] = DEFERRED
        return OutputView(self.inst, after, self.participants, self.aux, self.low_threshold)

    @cached_property
    def colored(self) -> np.ndarray:
        return self.after >= 0

    @cached_property
    def p_res(self) -> np.ndarray:
        return residual_sizes(self.inst, self.after)

    @cached_property
    def d_res(self) -> np.ndarray:
        return neighbor_count(self.inst, self.after == UNCOLORED)

    @cached_property
    def d_part(self) -> np.ndarray:
        return neighbor_count(self.inst, (self.after == UNCOLORED) & self.participants)

    @property
    def s_res(self) -> np.ndarray:
        return self.p_res - self.d_res

    @property
    def s_part(self) -> np.ndarray:
        return self.p_res - self.d_part

    @cached_property
    def low(self) -> np.ndarray:
        return self.d_res < self.low_threshold


@dataclass
class SuccessEvaluators:
    name: str
    radius: int
    holds: Callable[[OutputView], np.ndarray]

    def ssp(self, view: OutputView) -> np.ndarray:
        return self._eval(view)

    def wsp(self, view: OutputView, deferred: np.ndarray | None = None) -> np.ndarray:
        return self._eval(view if deferred is None else view.deferring(deferred))

    def _eval(self, view: OutputView) -> np.ndarray:
        ok = view.colored | view.low | self.holds(view)
        return ok | ~view.participants


def _exceeds(d: np.ndarray, s: np.ndarray, s_min: int, pow2: int | None, exps: list[Fraction]) -> np.ndarray:
    """d * min(2^pow2, s_min^e for e in exps) > s, exactly."""
    out = np.ones(len(d), dtype=bool)
    if pow2 is not None:
        out &= (d << pow2) > s if pow2 < 40 else d > 0
    for e in exps:
        approx = d * float(s_min) ** float(e)
        close = np.abs(approx - s) <= 1e-9 * np.maximum(1.0, np.abs(s))
        res = approx > s
        for i in np.flatnonzero(close).tolist():
            res[i] = mul_pow_gt(int(d[i]), s_min, e, int(s[i]))
        out &= res
    return out


def ssp_wsp_for(subroutine: str, cfg: RunConfig | None = None, **params) -> SuccessEvaluators:
    """Success properties per subroutine; every one includes the colored and low-degree escapes.

    params: ``s_min``, ``kappa``, ``i`` (loop index) for the trial loops;
    ``clique_of`` (node -> clique index or -1) and ``ell`` for put_aside and
    synch_color_trial.
    """
    cfg = cfg or RunConfig()
    if subroutine == "try_random_color":
        return SuccessEvaluators(subroutine, cfg.trc_rounds, lambda v: v.s_part >= 2 * v.d_part)
    if subroutine == "generate_slack":
        g = cfg.gamma
        return SuccessEvaluators(subroutine, 1, lambda v: g.denominator * v.s_res >= g.numerator * v.d_res)
    if subroutine in ("multi_trial_tower", "multi_trial_power"):
        s_min = int(params["s_min"])
        kappa = Fraction(params.get("kappa", cfg.kappa))
        i = int(params["i"])
        e_rho = 1 / (1 + kappa)
        if subroutine == "multi_trial_tower":
            x = tower(i)
            pow2 = x if x < 40 else 40
            exps = [kappa * e_rho]
            radius = 2
        else:
            pow2 = None
            exps = [min((i + 1) * kappa, Fraction(1)) * e_rho]
            radius = 3
        return SuccessEvaluators(subroutine, radius, lambda v: ~_exceeds(v.d_part, v.s_part, s_min, pow2, exps))
    if subroutine == "multi_trial_final":
        return SuccessEvaluators(subroutine, 1, lambda v: np.zeros(v.inst.n, dtype=bool))
    if subroutine in ("put_aside", "synch_color_trial"):
        clique_of = np.asarray(params["clique_of"], dtype=np.int64)
        ell = int(params["ell"])
        k = int(clique_of.max(initial=-1)) + 1
        if subroutine == "put_aside":
            c = cfg.c_p

            def holds(v: OutputView) -> np.ndarray:
                got = v.aux.get("put_aside", np.zeros(v.inst.n, bool)) | (v.after == DEFERRED)
                inc = clique_of >= 0
                cnt = np.bincount(clique_of[inc & got], minlength=k)
                ok_c = c.denominator * cnt >= c.numerator * ell * ell
                return np.where(inc, ok_c[np.maximum(clique_of, 0)] if k else False, False)

            return SuccessEvaluators(subroutine, 2, holds)
        c = cfg.c_t

        def holds(v: OutputView) -> np.ndarray:
            inc = clique_of >= 0
            fails = np.bincount(clique_of[inc & v.participants & (v.after == UNCOLORED)], minlength=k)
            ok_c = c.denominator * fails <= c.numerator * ell
            return np.where(inc, ok_c[np.maximum(clique_of, 0)] if k else False, False)

        return SuccessEvaluators(subroutine, 2, holds)
    raise UnknownSubroutine(subroutine)


EVALUATOR_NAMES = (
    "try_random_color",
    "generate_slack",
    "multi_trial_tower",
    "multi_trial_power",
    "multi_trial_final",
    "put_aside",
    "synch_color_trial",
)


# --------------------------------------------------------- plans and state


@dataclass
class NormalProcedure:
    """One derandomizable phase.

    ``run(color, tape, net)`` mutates and returns the color array plus an aux
    dict; it reads at most ``bits_per_node`` tape bits per node and only
    radius-``radius`` information.
    """

    name: str
    radius: int
    bits_per_node: int
    participants: np.ndarray  # bool mask
    run: Callable[[np.ndarray, RandomTape, Net | None], tuple[np.ndarray, dict]]
    evaluators: SuccessEvaluators
    commit: Callable[["LevelState", dict], None] | None = None
    input_words_bound: int = 0
    output_words_bound: int = 1


@dataclass
class LevelState:
    inst: D1LCInstance
    cfg: RunConfig
    low_threshold: int
    color: np.ndarray
    net: Net | None = None
    put_aside: np.ndarray | None = None
    terminated: np.ndarray | None = None
    ell: int = 1
    roles: list = field(default_factory=list)
    acd: AlmostCliqueDecomposition | None = None
    vstart: VStartClassification | None = None
    events: list = field(default_factory=list)

    def __post_init__(self):
        n = self.inst.n
        if self.put_aside is None:
            self.put_aside = np.zeros(n, dtype=bool)
        if self.terminated is None:
            self.terminated = np.zeros(n, dtype=bool)

    @cached_property
    def stats(self) -> InstanceStats:
        return InstanceStats(self.inst)

    def active(self, members) -> np.ndarray:
        """Members still in play: uncolored, not put aside or terminated, not low degree."""
        m = _as_mask(self.inst.n, members)
        d_res = neighbor_count(self.inst, self.color == UNCOLORED)
        return m & (self.color == UNCOLORED) & ~self.put_aside & ~self.terminated & (d_res >= self.low_threshold)

    def charge(self, label: str, rounds: int) -> None:
        if self.net is not None:
            self.net.sim.charge(label, rounds)


def _bits_for(inst: D1LCInstance, color: np.ndarray, nodes: np.ndarray, picks: int, retries: int) -> int:
    if not len(nodes) or picks == 0:
        return 0
    p = residual_sizes(inst, color)[nodes]
    return int(picks * retries * bit_length(np.array([max(int(p.max()), 1)]))[0])


def trc_block_proc(st: LevelState, members: np.ndarray, rounds: int | None = None, name: str = "try_random_color") -> NormalProcedure:
    cfg = st.cfg
    rounds = rounds or cfg.trc_rounds
    inst = st.inst
    part = np.flatnonzero(members)

    def run(color, tape, net):
        for r in range(rounds):
            live = part[color[part] == UNCOLORED]
            _trial_step(inst, color, live, np.ones(len(live), np.int64), tape, cfg.rejection_retries, net, f"{name}:{r}")
        return color, {}

    return NormalProcedure(
        name,
        rounds,
        _bits_for(inst, st.color, part, rounds, cfg.rejection_retries),
        members,
        run,
        ssp_wsp_for("try_random_color", cfg),
    )


def generate_slack_proc(st: LevelState, members: np.ndarray) -> NormalProcedure:
    cfg = st.cfg
    inst = st.inst
    part = np.flatnonzero(members)

    def run(color, tape, net):
        _generate_slack_step(inst, color, part, tape, cfg.rejection_retries, net)
        return color, {}

    bits = GS_BITS + _bits_for(inst, st.color, part, 1, cfg.rejection_retries) if len(part) else 0
    return NormalProcedure("generate_slack", 1, bits, members, run, ssp_wsp_for("generate_slack", cfg))


def multi_trial_proc(st: LevelState, members: np.ndarray, x: int, reps: int, evaluators: SuccessEvaluators, name: str) -> NormalProcedure:
    cfg = st.cfg
    inst = st.inst
    part = np.flatnonzero(members)
    p = residual_sizes(inst, st.color)[part] if len(part) else np.zeros(0, np.int64)
    x_eff = int(min(x, int(p.max(initial=1))))

    def run(color, tape, net):
        for r in range(reps):
            live = part[color[part] == UNCOLORED]
            _trial_step(inst, color, live, np.full(len(live), x_eff, np.int64), tape, cfg.rejection_retries, net, f"{name}:{r}")
        return color, {}

    return NormalProcedure(name, reps, _bits_for(inst, st.color, part, reps * x_eff, cfg.rejection_retries), members, run, evaluators)


def _clique_index(n: int, roles: list[CliqueRoles], which: str = "clique") -> np.ndarray:
    out = np.full(n, -1, dtype=np.int64)
    for i, r in enumerate(roles):
        out[getattr(r, which)] = i
    return out


def put_aside_proc(st: LevelState, roles: list[CliqueRoles]) -> NormalProcedure:
    cfg = st.cfg
    inst = st.inst
    members = np.zeros(inst.n, dtype=bool)
    for r in roles:
        members[r.inliers] = True
    members = st.active(members)
    idx = np.full(inst.n, -1, dtype=np.int64)
    for i, r in enumerate(roles):
        idx[r.clique] = i
    ell = st.ell

    def run(color, tape, net):
        return color, {"put_aside": _put_aside_step(inst, color, roles, members, ell, tape, net)}

    def commit(state: LevelState, aux: dict) -> None:
        state.put_aside |= aux["put_aside"]

    ev = ssp_wsp_for("put_aside", cfg, clique_of=np.where(members, idx, -1), ell=ell)
    return NormalProcedure("put_aside", 1, PS_BITS, members, run, ev, commit)


def synch_proc(st: LevelState, roles: list[CliqueRoles]) -> NormalProcedure:
    cfg = st.cfg
    inst = st.inst
    members = np.zeros(inst.n, dtype=bool)
    for r in roles:
        members[r.inliers] = True
    members = st.active(members)
    idx = np.where(members, _clique_index(inst.n, roles), -1)
    leaders = np.array([r.leader for r in roles], dtype=np.int64)

    def run(color, tape, net):
        _synch_step(inst, color, roles, members, tape, cfg.rejection_retries, net)
        return color, {}

    sizes = np.array([int(members[r.inliers].sum()) for r in roles], dtype=np.int64)
    bits = _bits_for(inst, st.color, leaders, int(sizes.max(initial=0)), cfg.rejection_retries) if len(leaders) else 0
    ev = ssp_wsp_for("synch_color_trial", cfg, clique_of=idx, ell=st.ell)
    return NormalProcedure("synch_color_trial", 1, bits, members, run, ev)


def slack_color_plan(
    st: LevelState,
    members,
    s_min: int | None = None,
    kappa: Fraction | None = None,
    label: str = "slack_color",
) -> Iterator[NormalProcedure]:
    """SlackColor as a sequence of phases; the executor handles nodes that miss a phase's property."""
    cfg = st.cfg
    kappa = Fraction(cfg.kappa if kappa is None else kappa)
    members = _as_mask(st.inst.n, members)
    act = st.active(members)
    if not act.any():
        return
    yield trc_block_proc(st, act, name=f"{label}/trc")
    act = st.active(members)
    if not act.any():
        return
    if s_min is None:
        view = OutputView(st.inst, st.color, act)
        s_min = max(2, int(view.s_part[act].min()))
        st.charge(f"{label}/s_min", cfg.sort_rounds)
    if not (s_min > 1 and 1 / Fraction(s_min) < kappa <= 1):
        raise BadParameters(f"need 1 < s_min and 1/s_min < kappa <= 1 (s_min={s_min}, kappa={kappa})")
    for stage, i, x, reps in slack_color_schedule(s_min, kappa):
        act = st.active(members)
        if not act.any():
            return
        if stage == "final":
            ev = ssp_wsp_for("multi_trial_final", cfg)
        else:
            ev = ssp_wsp_for(f"multi_trial_{stage}", cfg, s_min=s_min, kappa=kappa, i=i)
        yield multi_trial_proc(st, act, x, reps, ev, f"{label}/{stage}{i if stage != 'final' else ''}")


def slack_color_schedule(s_min: int, kappa) -> list[tuple[str, int, int, int]]:
    """(stage, i, x, repetitions) for the trial loops after the initial block."""
    kappa = Fraction(kappa)
    e_rho = 1 / (1 + kappa)
    rho = float(s_min) ** float(e_rho)
    out = []
    for i in range(log_star(rho) + 1):
        out.append(("tower", i, tower(i) if i < 5 else 1 << 40, 2))
    for i in range(1, -(-1 // kappa) + 1):
        out.append(("power", i, max(1, pow_floor(s_min, i * kappa * e_rho)), 3))
    out.append(("final", 0, max(1, pow_floor(s_min, e_rho)), 1))
    return out


def prepare_decomposition(st: LevelState) -> None:
    inst = st.inst
    params = st.cfg.acd_params()
    sim = st.net.sim if st.net is not None else None
    st.acd = acd_mod.compute_acd(inst, params, st.stats, sim)
    st.vstart = acd_mod.classify_vstart(inst, st.acd, params, st.stats)
    st.charge("vstart", 3)
    st.roles = acd_mod.compute_roles(inst, st.acd, st.ell, st.stats)
    st.charge("roles", 3)


def color_sparse_plan(st: LevelState) -> Iterator[NormalProcedure]:
    n = st.inst.n
    acd, vs = st.acd, st.vstart
    su = _as_mask(n, np.union1d(acd.v_sparse, acd.v_uneven))
    start = _as_mask(n, vs.v_start)
    rest = su & ~start
    act = st.active(rest)
    if act.any():
        yield generate_slack_proc(st, act)
    yield from slack_color_plan(st, start, label="sparse_start")
    yield from slack_color_plan(st, rest, label="sparse_rest")


def color_put_aside(st: LevelState) -> None:
    """Each low-slack leader colors its put-aside set greedily in id order."""
    inst = st.inst
    color = st.color
    p_nodes = np.flatnonzero(st.put_aside & (color == UNCOLORED))
    if not len(p_nodes):
        return
    if st.net is not None:
        st.net.sim.hold(int(inst.palette_sizes[p_nodes].sum()), "put-aside palettes")
    for v in p_nodes.tolist():
        nb = inst.graph.neighbors(v)
        used = color[nb]
        free = np.setdiff1d(inst.palette(v), used[used >= 0])
        color[v] = int(free[0])
    if st.net is not None:
        st.net.round(p_nodes, color[p_nodes], "put_aside:color")
    st.put_aside[:] = False


def color_dense_plan(st: LevelState) -> Iterator[NormalProcedure]:
    n = st.inst.n
    dense = _as_mask(n, st.acd.v_dense)
    if not dense.any():
        return
    act = st.active(dense)
    if act.any():
        yield generate_slack_proc(st, act)
    low = [r for r in st.roles if r.low_slack]
    if low:
        yield put_aside_proc(st, low)
    outliers = np.zeros(n, dtype=bool)
    for r in st.roles:
        outliers[r.outliers] = True
    yield from slack_color_plan(st, outliers, label="dense_outliers")
    if st.roles:
        yield synch_proc(st, st.roles)
    yield from slack_color_plan(st, dense, label="dense_rest")
    color_put_aside(st)


def color_middle_plan(st: LevelState) -> Iterator[NormalProcedure]:
    if st.inst.n == 0:
        return
    prepare_decomposition(st)
    yield from color_sparse_plan(st)
    yield from color_dense_plan(st)


# ---------------------------------------------------------------- executors


def finalize_phase(st: LevelState, proc: NormalProcedure, new: np.ndarray, aux: dict, defer: bool) -> np.ndarray:
    """Install a phase's outputs; returns the mask of SSP failures."""
    view = OutputView(st.inst, new, proc.participants, aux, st.low_threshold)
    ok = proc.evaluators.ssp(view)
    fail = ~ok & (new == UNCOLORED)
    if proc.commit is not None:
        proc.commit(st, aux)
    if defer:
        new[fail] = DEFERRED
        st.put_aside &= ~fail
    else:
        st.terminated |= fail
    st.color = new
    if st.cfg.debug_checks:
        check_partial(st.inst, ColoringState(st.inst.n, np.where(new >= 0, new, UNCOLORED)))
    return fail


class TapeExecutor:
    """Runs every phase on one tape (randomized mode or a fixed test tape)."""

    def __init__(self, tape: RandomTape, defer: bool = True):
        self.tape = tape
        self.defer = defer
        self.records: list[dict] = []

    def execute(self, st: LevelState, proc: NormalProcedure) -> None:
        new, aux = proc.run(st.color.copy(), self.tape, st.net)
        fail = finalize_phase(st, proc, new, aux, self.defer)
        self.records.append({"phase": proc.name, "failures": int(fail.sum()), "participants": int(proc.participants.sum())})

    def run(self, st: LevelState, plan: Iterator[NormalProcedure]) -> None:
        for proc in plan:
            self.execute(st, proc)


def _state_from(inst, coloring: ColoringState, cfg: RunConfig | None, low_threshold: int | None, net=None) -> LevelState:
    cfg = cfg or RunConfig()
    lt = cfg.low_threshold(inst.n) if low_threshold is None else low_threshold
    return LevelState(inst, cfg, lt, coloring.color.copy(), net=net, ell=RunConfig.ell(inst.graph.max_degree))


def _outcomes(before: np.ndarray, after: np.ndarray, part: np.ndarray) -> np.ndarray:
    newly = (before[part] == UNCOLORED) & (after[part] >= 0)
    return np.where(newly, after[part], FAIL)


def slack_color(
    inst,
    coloring: ColoringState,
    participants,
    s_min: int,
    kappa,
    tape: RandomTape,
    cfg: RunConfig | None = None,
    low_threshold: int = 0,
) -> np.ndarray:
    """Run SlackColor on ``participants``; terminated nodes stay uncolored (outcome FAIL)."""
    part = np.sort(np.asarray(participants, dtype=np.int64))
    _check_participants(coloring.color, part)
    kappa = Fraction(kappa)
    if not (s_min > 1 and 1 / Fraction(s_min) < kappa <= 1):
        raise BadParameters("need 1 < s_min and 1/s_min < kappa <= 1")
    if len(part):
        mask = _as_mask(inst.n, part)
        s = OutputView(inst, coloring.color, mask).s_part[part]
        if (s < s_min).any():
            raise BadParameters(f"s_min = {s_min} exceeds the slack of some participant")
    st = _state_from(inst, coloring, cfg, low_threshold)
    before = coloring.color.copy()
    TapeExecutor(tape, defer=False).run(st, slack_color_plan(st, part, s_min, kappa))
    coloring.color[:] = np.where(st.color >= 0, st.color, coloring.color)
    return _outcomes(before, coloring.color, part)


def _run_plan(inst, coloring, cfg, tape, plan_fn, low_threshold, acd=None, vstart=None, roles=None) -> LevelState:
    st = _state_from(inst, coloring, cfg, low_threshold)
    if acd is not None:
        st.acd = acd
        st.vstart = vstart
        st.roles = roles if roles is not None else acd_mod.compute_roles(inst, acd, st.ell, st.stats)
    TapeExecutor(tape).run(st, plan_fn(st))
    coloring.color[:] = st.color
    return st


def color_sparse(inst, coloring: ColoringState, acd, vstart, cfg: RunConfig, tape: RandomTape, low_threshold: int | None = None) -> ColoringState:
    """ColorSparse; nodes missing a success property are marked DEFERRED."""
    _run_plan(inst, coloring, cfg, tape, color_sparse_plan, low_threshold, acd, vstart, roles=[])
    return coloring


def color_dense(inst, coloring: ColoringState, acd, cfg: RunConfig, tape: RandomTape, low_threshold: int | None = None) -> ColoringState:
    _run_plan(inst, coloring, cfg, tape, color_dense_plan, low_threshold, acd, None)
    return coloring


def color_middle(inst, cfg: RunConfig, tape: RandomTape, low_threshold: int | None = None) -> ColoringState:
    coloring = ColoringState(inst.n)
    _run_plan(inst, coloring, cfg, tape, color_middle_plan, low_threshold)
    return coloring
