"""Command line entry point: ``plotextract generate|extract|evaluate|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .evaluate import DEFAULT_GRID_SIZE, X_BASES, Y_BASES
from .gateway import (
    DEFAULT_IMAGE_LIMIT,
    DEFAULT_MODEL,
    AnthropicProvider,
    ConfigError,
    Gateway,
    ModelParams,
    api_key_from_env,
)
from .model import SchemaError, Status
from .pipeline import PipelineConfig, find_images, run_batch
from .report import (
    MODES,
    MalformedReport,
    NoOverlap,
    build_report,
    check_report,
    dumps_report,
    format_table,
    load_results,
    load_truth,
)
from .sandbox import InterpreterMissing
from .synthgen import generate_dataset

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_FAILURES = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1), got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plotextract", description="Extract numeric data from plot images with a vision model.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p: argparse.ArgumentParser) -> argparse.ArgumentParser:
        p.add_argument("--config", type=Path, help="JSON file of option defaults; flags override it")
        return p

    g = with_config(sub.add_parser("generate", help="write a synthetic benchmark"))
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--n", type=_positive_int, default=100, help="number of plots")
    g.add_argument("--corrupt-frac", type=_fraction, default=0.10, help="fraction of plots made unextractable")
    g.add_argument("--out", type=Path, default=Path("bench"))
    g.add_argument("--workers", type=_positive_int, default=1)

    e = with_config(sub.add_parser("extract", help="run the extraction workflow over images"))
    e.add_argument("--in", dest="input", type=Path, required=True, help="image directory, single image or benchmark")
    e.add_argument("--out", type=Path, required=True)
    e.add_argument("--mode", choices=["live", "replay", "hybrid"], default="live")
    e.add_argument("--transcripts", type=Path, help="recorded transcripts for replay or hybrid mode")
    e.add_argument("--workers", type=_positive_int, default=4)
    e.add_argument("--replot", choices=["codegen", "native"], default="codegen")
    e.add_argument("--interpreter", default="python3", help="command that runs generated scripts")
    e.add_argument("--timeout", type=_positive_float, default=60.0, help="seconds per script execution")
    e.add_argument("--max-repairs", type=_positive_int, default=3, help="maximum script executions per image")
    e.add_argument("--model", default=DEFAULT_MODEL)
    e.add_argument("--temperature", type=float, default=0.0)
    e.add_argument("--max-tokens", type=_positive_int)
    e.add_argument("--api-base", default="https://api.anthropic.com")
    e.add_argument("--api-version", default="2023-06-01")
    e.add_argument("--image-limit", type=_positive_int, default=DEFAULT_IMAGE_LIMIT, help="bytes")
    e.add_argument("--prompt-version", default="v1")
    e.add_argument("--keep-workdirs", action="store_true")

    v = with_config(sub.add_parser("evaluate", help="score extractions against ground truth"))
    v.add_argument("--extracted", type=Path, required=True)
    v.add_argument("--truth", type=Path, required=True)
    v.add_argument("--report", type=Path, required=True, help="output JSON path")
    v.add_argument("--mode", choices=["per_plot", "per_point", "both"], default="both")
    v.add_argument("--grid-size", type=_positive_int, default=DEFAULT_GRID_SIZE)
    v.add_argument("--y-base", choices=Y_BASES, default="truth_overlap")
    v.add_argument("--x-base", choices=X_BASES, default="truth_full")

    r = sub.add_parser("report", help="print an evaluation report as a table")
    r.add_argument("report", type=Path)
    r.add_argument("--format", choices=["text", "markdown"], default="text")
    parser.subcommands = {"generate": g, "extract": e, "evaluate": v, "report": r}
    return parser


def parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = getattr(args, "config", None)
    if config is None:
        return args
    try:
        values: Any = json.loads(config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {config}: {exc}")
    if not isinstance(values, dict):
        parser.error("config file must hold a JSON object")
    known = {k for k in vars(args) if k not in ("command", "config", "verbose")}
    unknown = sorted(set(k.replace("-", "_") for k in values) - known)
    if unknown:
        parser.error(f"unknown config keys: {', '.join(unknown)}")
    # string defaults go through each option's type check, and explicit flags still win
    defaults = {k.replace("-", "_"): val if isinstance(val, bool) or val is None else str(val) for k, val in values.items()}
    parser.subcommands[args.command].set_defaults(**defaults)
    return parser.parse_args(argv)


def cmd_generate(args: argparse.Namespace) -> int:
    m = generate_dataset(args.seed, args.n, args.corrupt_frac, args.out, workers=args.workers)
    unextractable = sum(not e.extractable for e in m.entries)
    print(f"wrote {len(m.entries)} plots ({unextractable} unextractable) to {args.out}")
    print(f"manifest sha256 {m.digest}")
    return EXIT_OK


def cmd_extract(args: argparse.Namespace) -> int:
    if args.mode != "live" and args.transcripts is None:
        raise UsageError(f"--mode {args.mode} needs --transcripts")
    provider = None
    if args.mode != "replay":
        provider = AnthropicProvider(api_key_from_env(), base_url=args.api_base, api_version=args.api_version)
    gateway = Gateway(args.mode, provider, args.transcripts, image_limit=args.image_limit)
    config = PipelineConfig(
        params=ModelParams(args.model, args.temperature, args.max_tokens),
        max_repair_iterations=args.max_repairs,
        replot_backend="native" if args.replot == "native" else "llm_codegen",
        sandbox_timeout=args.timeout,
        prompt_version=args.prompt_version,
        interpreter_cmd=args.interpreter,
        keep_workdirs=args.keep_workdirs,
    )
    images = find_images(args.input)
    if not images:
        raise UsageError(f"no images found in {args.input}")
    results = run_batch(images, args.out, gateway, config, args.workers)
    tally = {s: 0 for s in Status}
    for _, outcome in results:
        tally[outcome.status] += 1
    print(", ".join(f"{s.value} {n}" for s, n in tally.items()))
    return EXIT_FAILURES if tally[Status.FAILURE] else EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    modes = MODES if args.mode == "both" else (args.mode,)
    truth = load_truth(args.truth)
    results = load_results(args.extracted)
    report = build_report(truth, results, modes, args.grid_size, args.y_base, args.x_base)
    args.report.parent.mkdir(parents=True, exist_ok=True)
    args.report.write_text(dumps_report(report), encoding="utf-8")
    missing = report["unpaired"]
    for key, stems in missing.items():
        if stems:
            print(f"{key.replace('_', ' ')}: {', '.join(stems)}", file=sys.stderr)
    print(format_table(report), end="")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    try:
        report = json.loads(args.report.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedReport(f"not JSON: {exc}") from exc
    check_report(report)
    print(format_table(report, args.format), end="")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "extract": cmd_extract, "evaluate": cmd_evaluate, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, InterpreterMissing, NoOverlap, MalformedReport) as exc:
        print(f"plotextract {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, SchemaError, ValueError, KeyError) as exc:
        print(f"plotextract {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
