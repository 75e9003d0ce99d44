"""Command-line entry point: collect | analyze | ablate | verify | report.

Exit codes are shared by every command: 0 clean, 2 partial, 1 failed,
64 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import ConfigError, apply_overrides, load_config
from .pipeline import (ABLATIONS, EXIT_CLEAN, EXIT_FAILED, EXIT_USAGE, PipelineError, ablate, analyze,
                       collect, report)
from .verify import VerifyConfig, bound_suite, identity_suite, run_all, transfer_suite

log = logging.getLogger("reasoning_entropy")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--backend", help="synthetic, http_completions, or an endpoint URL")
    p.add_argument("--n-rollouts", type=int, help="rollouts per checkpoint (N)")
    p.add_argument("--stride", type=float, help="checkpoint stride in tokens, or a fraction of the trace")
    p.add_argument("--alpha-surprisal", type=float)
    p.add_argument("--allow-degenerate", action="store_true", help="permit temperature 0")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reasoning-entropy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("collect", help="sample traces and estimate entropy trajectories")
    _run_flags(p)

    p = sub.add_parser("analyze", help="diagnostics report and CSV tables from trajectories")
    p.add_argument("inputs", nargs="+", help="trajectory JSONL files or run directories")
    p.add_argument("--out", help="report directory (default: <run>/reports)")
    p.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    p.add_argument("--bootstrap", type=int, default=1000, help="bootstrap resamples")
    p.add_argument("--method", choices=("pearson", "spearman"), default="pearson")

    p = sub.add_parser("ablate", help="re-estimate stored trajectories under an ablation")
    p.add_argument("kind", help=f"one of {', '.join(ABLATIONS)}")
    _run_flags(p)

    p = sub.add_parser("verify", help="numerical checks of the identities and bounds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--suite", choices=("all", "identities", "bounds", "transfer"), default="all")
    p.add_argument("--n-joints", type=int, default=24, help="random worlds for the identity suite")
    p.add_argument("--trials", type=int, default=1000, help="distribution pairs per bound")
    p.add_argument("--transfer-samples", type=int, default=100_000)
    p.add_argument("--world-sizes", default="2,2,4", help="|Q|,|C|,|A| of the transfer worlds")
    p.add_argument("--horizon", type=int, default=3)

    p = sub.add_parser("report", help="merge report.json files into one alignment row per model and dataset")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--output", help="write here instead of stdout")
    return parser


def _config(args):
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, seed=args.seed, out=args.out, backend=args.backend,
                          n_rollouts=args.n_rollouts, stride=args.stride,
                          alpha_surprisal=args.alpha_surprisal, allow_degenerate=args.allow_degenerate)
    return cfg.validate()


def cmd_collect(args) -> int:
    res = collect(_config(args))
    print(f"{res.status}: {res.new_trajectories} new trajectories, {res.skipped} skipped, "
          f"{res.failed_traces} failed; manifest {res.manifest_path}")
    for m in res.messages[:10]:
        print(f"  {m}", file=sys.stderr)
    return res.exit_code


def cmd_analyze(args) -> int:
    path = analyze(args.inputs, args.out, seed=args.seed, B=args.bootstrap, method=args.method)
    print(f"report written to {path}")
    return EXIT_CLEAN


def cmd_ablate(args) -> int:
    if args.kind not in ABLATIONS:
        raise UsageError(f"unknown ablation {args.kind!r}; expected one of {', '.join(ABLATIONS)}")
    out = ablate(args.kind, _config(args))
    print(out.read_text(), end="")
    return EXIT_CLEAN


def cmd_verify(args) -> int:
    try:
        sizes = tuple(int(x) for x in args.world_sizes.split(","))
    except ValueError:
        raise UsageError("--world-sizes expects three comma-separated integers") from None
    if len(sizes) != 3:
        raise UsageError("--world-sizes expects three comma-separated integers")
    vc = VerifyConfig(seed=args.seed, n_joints=args.n_joints, n_pairs=args.trials,
                      transfer_samples=args.transfer_samples, world_sizes=sizes, world_horizon=args.horizon)
    suite = {"all": run_all, "identities": identity_suite, "bounds": bound_suite,
             "transfer": transfer_suite}[args.suite]
    results = suite(vc)
    for r in results:
        print("\n".join(r.lines()))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_CLEAN


def cmd_report(args) -> int:
    text = report(args.reports, args.format, args.output)
    if args.output is None:
        print(text, end="")
    return EXIT_CLEAN


COMMANDS = {"collect": cmd_collect, "analyze": cmd_analyze, "ablate": cmd_ablate,
            "verify": cmd_verify, "report": cmd_report}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (PipelineError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
