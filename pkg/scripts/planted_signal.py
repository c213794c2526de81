"""Planted-signal check over many fixture seeds.

For each seed: generate the synthetic market, run ingest through backtest,
and record whether the FF5-News model leaves smaller mean |alpha| than FF5
and whether the classifier's long book beats random picks of the same size
on Sharpe ratio.

    python scripts/planted_signal.py --seeds 20 --hidden 128
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path

from finreport.config import load_config
from finreport.fixture import FixtureSpec, write_fixture
from finreport.pipeline import prepare_run_dir, stage_backtest, stage_factors, stage_ingest, \
    stage_predict, stage_regress, stage_train

SIGNAL_STAGES = (stage_ingest, stage_train, stage_predict, stage_factors)


def run_seed(seed: int, workdir: Path, overrides=()) -> dict:
    data = write_fixture(workdir / f"seed{seed}", FixtureSpec(seed=seed))
    cfg = load_config(data / "config.json", overrides)
    run_dir = prepare_run_dir(cfg)
    for stage in SIGNAL_STAGES:
        stage(cfg, run_dir)
    reg = stage_regress(cfg, run_dir)
    bt = stage_backtest(cfg, run_dir)
    ff5, ff5n = reg["ff5"]["mean_abs_alpha"], reg["ff5news"]["mean_abs_alpha"]
    model_sharpe = bt["model"]["sharpe_ratio"]
    random_sharpe = bt["random"]["sharpe_mean"]
    ok_alpha = ff5n <= ff5
    ok_sharpe = model_sharpe is not None and random_sharpe is not None and model_sharpe > random_sharpe
    return {"seed": seed, "ff5_mean_abs_alpha": ff5, "ff5news_mean_abs_alpha": ff5n,
            "model_sharpe": model_sharpe, "random_sharpe": random_sharpe,
            "alpha_ok": ok_alpha, "sharpe_ok": ok_sharpe, "passed": ok_alpha and ok_sharpe}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--hidden", type=int, default=128)
    ap.add_argument("--set", dest="overrides", action="append", default=[])
    args = ap.parse_args(argv)
    overrides = [f"classifier.hidden={args.hidden}", *args.overrides]
    t0 = time.time()
    with tempfile.TemporaryDirectory() as tmp:
        rows = [run_seed(s, Path(tmp), overrides) for s in range(args.seeds)]
    for r in rows:
        print(json.dumps(r))
    passed = sum(r["passed"] for r in rows)
    print(f"{passed}/{len(rows)} seeds passed in {time.time() - t0:.1f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
