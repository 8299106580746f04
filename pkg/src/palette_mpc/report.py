"""RunReport: a plain ``key: value`` text document with bracketed sections."""

from __future__ import annotations

import hashlib
from collections import OrderedDict

from .graph import format_coloring


def _stem(label: str) -> str:
    return label.split(":", 1)[0]


def build_report(result, inst) -> str:
    sim = result.sim
    stats = sim.stats
    log = result.log
    lines: list[str] = []

    def section(name: str) -> None:
        if lines:
            lines.append("")
        lines.append(f"[{name}]")

    section("run")
    lines.append(f"verdict: {'valid' if result.verdict.valid else 'invalid'}")
    lines.append(f"violation: {'' if result.verdict.valid else result.verdict.describe()}")
    lines.append(f"mode: {result.cfg.mode}")
    lines.append(f"nodes: {inst.n}")
    lines.append(f"edges: {inst.graph.m}")
    lines.append(f"max_degree: {inst.graph.max_degree}")
    lines.append(f"coloring_sha256: {hashlib.sha256(format_coloring(result.coloring.color).encode()).hexdigest()}")
    lines.append(f"transcript_sha256: {sim.transcript_digest()}")
    lines.append(f"wall_clock_seconds: {result.seconds:.3f}")

    section("rounds")
    lines.append(f"total: {stats.rounds_elapsed}")
    for cat in sorted(stats.rounds_by_category):
        lines.append(f"category.{cat}: {stats.rounds_by_category[cat]}")
    lines.append(f"mid_degree_pipeline: {log.mid_rounds}")
    lines.append(f"peak_words: {stats.peak_words_per_machine}")
    lines.append(f"budget_words: {sim.budget}")
    lines.append(f"machines: {sim.cfg.machine_count}")
    lines.append(f"messages: {stats.total_messages}")
    lines.append(f"words: {stats.total_words}")
    for name in sorted(stats.primitive_invocations):
        lines.append(f"primitive.{name}: {stats.primitive_invocations[name]}")

    section("charges")
    grouped: OrderedDict[tuple[str, str], int] = OrderedDict()
    for label, cat, rounds in sim.charges:
        key = (cat, _stem(label))
        grouped[key] = grouped.get(key, 0) + rounds
    for (cat, stem), rounds in grouped.items():
        lines.append(f"{cat}.{stem}: {rounds}")

    section("phases")
    lines.append(f"count: {len(log.records)}")
    lines.append(f"deferred_total: {log.deferred_total}")
    lines.append(f"final_greedy_nodes: {log.final_greedy}")
    for i, rec in enumerate(log.records):
        lines.append(f"phase.{i}: {rec.line()}")
    for i, lv in enumerate(log.levels):
        lines.append(
            f"level.{i}: level={lv.level} nodes={lv.nodes} max_degree={lv.max_degree} phases={lv.phases} "
            f"deferred={lv.deferred} fallback_nodes={lv.fallback_nodes} fallback_classes={lv.fallback_classes}"
        )

    section("trace")
    for i, t in enumerate(log.trace):
        extra = ""
        if t.kind == "partition":
            extra = f" hash={t.hash_index} bins={','.join(map(str, t.bin_sizes))} bin_max_degrees={','.join(map(str, t.bin_max_degrees))}"
        lines.append(f"entry.{i}: depth={t.depth} kind={t.kind} nodes={t.nodes} max_degree={t.max_degree}{extra}")
    violations = [v for chk in log.partition_checks for v in chk]
    lines.append(f"partition_violations: {len(violations)}")

    section("config")
    for raw in result.cfg.to_text().splitlines():
        key, _, val = raw.partition(" = ")
        lines.append(f"{key}: {val}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    cur = out.setdefault("", {})
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            cur = out.setdefault(line[1:-1], {})
            continue
        key, _, val = line.partition(":")
        cur[key.strip()] = val.strip()
    return out


def strip_wall_clock(text: str) -> str:
    return "\n".join(l for l in text.splitlines() if not l.startswith("wall_clock_seconds:"))


def summarize(text: str) -> tuple[str, bool]:
    """Human-readable summary and whether the per-entry charges add up to the totals."""
    rep = parse_report(text)
    run = rep.get("run", {})
    rounds = rep.get("rounds", {})
    charges = rep.get("charges", {})
    phases = rep.get("phases", {})
    total = int(rounds.get("total", 0) or 0)
    per_cat: dict[str, int] = {}
    for key, val in charges.items():
        cat = key.split(".", 1)[0]
        per_cat[cat] = per_cat.get(cat, 0) + int(val)
    summed = sum(per_cat.values())
    consistent = summed == total and all(
        int(rounds.get(f"category.{cat}", 0)) == v for cat, v in per_cat.items()
    )
    fallback = per_cat.get("fallback", 0)
    share = fallback / total if total else 0.0
    out = [
        f"verdict            {run.get('verdict', 'n/a')} {run.get('violation', '')}".rstrip(),
        f"rounds total       {total}",
        f"rounds pipeline    {per_cat.get('pipeline', 0)}",
        f"rounds fallback    {fallback}",
        f"fallback share     {share:.3f}",
        f"mid-degree rounds  {rounds.get('mid_degree_pipeline', 0)}",
        f"peak words         {rounds.get('peak_words', 0)} / budget {rounds.get('budget_words', 0)}",
        f"messages           {rounds.get('messages', 0)}",
        f"phases             {phases.get('count', 0)}",
        f"deferred total     {phases.get('deferred_total', 0)}",
        f"final greedy nodes {phases.get('final_greedy_nodes', 0)}",
    ]
    for key in sorted(k for k in phases if k.startswith("level.")):
        out.append(f"  {key}: {phases[key]}")
    out.append(f"charges sum        {summed} ({'consistent' if consistent else 'MISMATCH'})")
    return "\n".join(out) + "\n", consistent
