"""Run every figure config through the command line entry point.

Each config in ``configs/fig*.cfg`` writes to ``<out>/<config stem>/``.
Pass config names to run a subset.

    python3 scripts/run_figures.py --out figures fig1_circle fig4_lambda_4
"""

import argparse
import sys
from pathlib import Path

from anisowillmore.cli import main as cli_main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config stems (default: all fig*.cfg)")
    ap.add_argument("--out", default="figures")
    args = ap.parse_args()
    paths = [CONFIGS / f"{n}.cfg" for n in args.names] or sorted(CONFIGS.glob("fig*.cfg"))
    status = 0
    for path in paths:
        print(f"== {path.stem}", flush=True)
        code = cli_main(["run", "--config", str(path), "--out", str(Path(args.out) / path.stem)])
        print(f"   exit {code}", flush=True)
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
