"""palette-mpc: run, generate, verify, report."""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from .config import ConfigError, RunConfig
from .generate import KINDS, BadParams, generate
from .graph import GraphError, format_coloring, format_edges, format_palettes, parse_coloring, read_instance, verify_coloring
from .mpc import MpcError
from .pipeline import run_pipeline
from .report import build_report, summarize

EXIT_INVALID = 1
EXIT_USAGE = 2


def _config_flags(p: argparse.ArgumentParser) -> None:
    grp = p.add_argument_group("config overrides")
    for f in fields(RunConfig):
        if f.name == "partition":
            continue
        grp.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", default=None, metavar="V")


def _overrides(args) -> dict:
    return {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}


def cmd_run(args) -> int:
    try:
        cfg = RunConfig.load(args.config, **_overrides(args))
        if args.no_partition:
            cfg = cfg.with_overrides(partition=False)
        inst = read_instance(args.graph, args.palettes)
    except (ConfigError, GraphError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = run_pipeline(inst, cfg)
    except MpcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = build_report(result, inst)
    if args.out:
        Path(args.out).write_text(format_coloring(result.coloring.color))
    report_path = args.report or result.cfg.report_path
    if report_path:
        Path(report_path).write_text(text)
    print(f"verdict: {result.verdict.describe()}")
    return 0 if result.verdict.valid else EXIT_INVALID


def cmd_generate(args) -> int:
    try:
        inst = generate(
            args.kind,
            seed=args.seed,
            n=args.n,
            p=args.p,
            avg_degree=args.avg_degree,
            k=args.k,
            count=args.count,
            noise=args.noise,
            dim=args.dim,
            stars=args.stars,
            leaves=args.leaves,
            palettes=args.palettes,
            extra=args.extra,
        )
    except BadParams as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    Path(f"{out}.edges").write_text(format_edges(inst.graph))
    Path(f"{out}.pal").write_text(format_palettes(inst))
    print(f"wrote {out}.edges and {out}.pal (n={inst.n}, m={inst.graph.m})")
    return 0


def cmd_verify(args) -> int:
    try:
        inst = read_instance(args.graph, args.palettes)
        coloring = parse_coloring(Path(args.coloring).read_text())
    except (GraphError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    verdict = verify_coloring(inst, coloring)
    print(verdict.describe())
    return 0 if verdict.valid else EXIT_INVALID


def cmd_report(args) -> int:
    try:
        text = Path(args.report).read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    summary, _ = summarize(text)
    print(summary, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="palette-mpc", description="Deterministic list coloring on a simulated MPC substrate.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="color an instance and verify the result")
    run.add_argument("graph")
    run.add_argument("--palettes")
    run.add_argument("--config", help="flat 'key = value' config file")
    run.add_argument("--out", help="write the coloring here ('v: c' lines)")
    run.add_argument("--report", help="write the run report here")
    run.add_argument("--no-partition", action="store_true")
    _config_flags(run)
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("generate", help="write a seeded instance as PREFIX.edges and PREFIX.pal")
    gen.add_argument("kind", choices=KINDS)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n", type=int, default=100)
    gen.add_argument("--p", type=float)
    gen.add_argument("--avg-degree", type=float)
    gen.add_argument("--k", type=int, default=8)
    gen.add_argument("--count", type=int, default=4)
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--dim", type=int, default=4)
    gen.add_argument("--stars", type=int, default=4)
    gen.add_argument("--leaves", type=int, default=4)
    gen.add_argument("--palettes", choices=("default", "random"), default="default")
    gen.add_argument("--extra", type=int, default=0, help="palette colors beyond d(v)+1")
    gen.set_defaults(func=cmd_generate)

    ver = sub.add_parser("verify", help="check a coloring file against an instance")
    ver.add_argument("graph")
    ver.add_argument("coloring")
    ver.add_argument("--palettes")
    ver.set_defaults(func=cmd_verify)

    rep = sub.add_parser("report", help="summarize a run report")
    rep.add_argument("report")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
