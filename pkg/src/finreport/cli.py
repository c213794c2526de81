"""Command-line entry point: ``finreport <stage> --config run.json [--set key=value ...]``.

Exit codes: 0 on success, 1 for invalid input or configuration, 2 for a
runtime failure inside a stage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import ConfigMismatchError, FinReportError, ParseError, ValidationError
from .fixture import FixtureSpec, write_fixture
from .pipeline import STAGES, MissingArtifactError, StageError, run_pipeline, run_stage

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

STAGE_HELP = {
    "ingest": "load prices, factors and news and write the aligned panel",
    "train": "fit the news classifier on the training split",
    "predict": "write class predictions for every panel row",
    "factors": "build FF5 and FF5-News factor return series",
    "regress": "time-series regressions of each stock on both factor sets",
    "grs": "GRS test of jointly zero intercepts for both models",
    "risk": "EGARCH volatility, VaR and VaR accuracy metrics",
    "backtest": "long the positive-class stocks and compare with random picks",
    "report": "render one report per stock for the last test date",
    "pipeline": "run every stage in order",
}


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="path to the JSON run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value by dotted key, e.g. risk.window=120 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finreport", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "pipeline"):
        _add_config_args(sub.add_parser(name, help=STAGE_HELP[name], description=STAGE_HELP[name]))
    fx = sub.add_parser("gen-fixture", help="write a seeded synthetic dataset and config",
                        description="write a seeded synthetic dataset and config")
    fx.add_argument("out_dir", help="directory to create")
    fx.add_argument("--seed", type=int, default=0)
    fx.add_argument("--symbols", type=int, default=20, help="number of stocks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-fixture":
            out = write_fixture(args.out_dir, FixtureSpec(n_symbols=args.symbols, seed=args.seed))
            print(f"fixture written to {out}; run with --config {Path(out) / 'config.json'}")
            return EXIT_OK
        cfg = load_config(args.config, args.overrides)
        if args.command == "pipeline":
            result = run_pipeline(cfg)
        else:
            result = {args.command: run_stage(cfg, args.command)}
    except StageError as exc:
        user_error = (ValidationError, ParseError, ConfigMismatchError, MissingArtifactError)
        code = EXIT_VALIDATION if isinstance(exc.cause, user_error) else EXIT_RUNTIME
        print(f"error: {exc}", file=sys.stderr)
        return code
    except (ValidationError, ParseError, ConfigMismatchError, MissingArtifactError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FinReportError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"run_dir": str(cfg.run_dir()), "config_hash": cfg.config_hash(),
                      "summary": result}, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
