"""Command-line entry point: ``newsvar <verb> --config exp.toml [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import marketdata as md
from .pipeline import ConfigError, Pipeline, StageError, load_config

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

VERBS = {
    "ingest": "resample ticks to bars, aggregate sectors, write summary statistics",
    "build-dict": "label in-sample headlines and build the sentiment dictionary",
    "regressors": "emit POS/NEG/HIGH/NUMB/LAGVOL series on the modeling grid",
    "fit": "fit every model of the grid on the in-sample half",
    "run": "full experiment: rolling VaR, backtests, MCS and combination",
    "report": "summarize an existing run (SSM and combination AD table)",
}


def _taus(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid tau list {text!r}") from None


def _sign(text: str) -> int:
    if text.strip() not in ("+1", "1", "-1"):
        raise argparse.ArgumentTypeError("kernel sign must be +1 or -1")
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newsvar", description="News-augmented GARCH VaR pipeline.")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")
    for verb, help_text in VERBS.items():
        p = sub.add_parser(verb, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--tau", type=_taus, help="comma-separated VaR levels, e.g. 0.01,0.001")
        p.add_argument("--kernel-sign", type=_sign, help="combination kernel sign, +1 or -1")
        p.add_argument("--f-threshold", type=float, help="dictionary Fisher-score threshold")
        p.add_argument("--workers", type=int, help="sector-level worker processes")
        p.add_argument("--dry-run", action="store_true", help="validate and write the manifest only")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        "seed": args.seed,
        "out": args.out,
        "taus": args.tau,
        "kernel_sign": args.kernel_sign,
        "f_threshold": args.f_threshold,
        "workers": args.workers,
    }
    try:
        config = load_config(args.config, overrides)
        config.validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    pipe = Pipeline(config)
    if args.dry_run:
        pipe.stages.append(f"{args.verb} (dry run)")
        path = pipe.write_manifest(status="dry-run")
        print(path)
        return EXIT_OK
    action = {
        "ingest": pipe.ingest,
        "build-dict": pipe.build_dict,
        "regressors": pipe.regressors,
        "fit": pipe.fit,
        "run": pipe.run,
        "report": pipe.report,
    }[args.verb]
    try:
        result = action()
    except (ConfigError, md.DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        pipe.write_manifest(status="failed", error=str(exc))
        return EXIT_VALIDATION
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        pipe.write_manifest(status="failed", error=str(exc))
        return EXIT_RUNTIME
    if args.verb == "report":
        sys.stdout.write(result)
    for w in pipe.warnings:
        logging.getLogger("newsvar").warning(w)
    print(pipe.write_manifest())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
