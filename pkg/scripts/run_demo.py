"""Generate demo data, run the workflow and draw the histogram.

    python3 scripts/run_demo.py [--out runs/demo] [--seed N] [--workers K]
"""

import argparse
import sys
import time
from pathlib import Path

from gwrepro.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent


def run(out: Path, config: Path, seed=None, workers=None) -> int:
    seed_args = [] if seed is None else ["--seed", str(seed)]
    t0 = time.perf_counter()
    rc = cli(["gen-data", "--config", str(config), "--out", str(out / "data"), "--force", *seed_args])
    if rc:
        return rc
    run_args = ["run", "--config", str(config), "--data", str(out / "data"), "--out", str(out / "run"), "--force"]
    if workers:
        run_args += ["--workers", str(workers)]
    rc = cli(run_args + seed_args)
    if rc:
        return rc
    results = out / "run" / "results" / "statmap.txt"
    rc = cli(["hist", "--results", str(results), "--csv", str(out / "hist.csv"), "--svg", str(out / "hist.svg")])
    print(f"demo finished in {time.perf_counter() - t0:.1f} s; outputs in {out}")
    return rc


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "demo")
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "demo.ini")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=None)
    a = ap.parse_args()
    sys.exit(run(a.out, a.config, a.seed, a.workers))
