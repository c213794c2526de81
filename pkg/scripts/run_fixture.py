"""Generate the synthetic fixture and run the whole pipeline on it.

    python scripts/run_fixture.py /tmp/finreport-demo --seed 0 --set classifier.hidden=256
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from finreport.config import load_config
from finreport.fixture import FixtureSpec, write_fixture
from finreport.pipeline import run_pipeline


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--symbols", type=int, default=20)
    ap.add_argument("--set", dest="overrides", action="append", default=[])
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    data = write_fixture(Path(args.out_dir), FixtureSpec(n_symbols=args.symbols, seed=args.seed))
    cfg = load_config(data / "config.json", args.overrides)
    t0 = time.perf_counter()
    summary = run_pipeline(cfg)
    print(json.dumps(summary, indent=2, default=str))
    print(f"artifacts in {cfg.run_dir()} ({time.perf_counter() - t0:.1f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
