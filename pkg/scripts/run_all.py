"""Run every configuration in configs/ and print a one-line status for each.

    python3 scripts/run_all.py [--configs DIR] [--threads N] [--only NAME ...]
"""
import argparse
import sys
import time
from pathlib import Path

from sdwave.cli import execute
from sdwave.config import load_config


def main(argv=None):
    here = Path(__file__).resolve().parent.parent
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", default=str(here / "configs"))
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", nargs="*", help="config stems to run (default: all)")
    args = ap.parse_args(argv)

    paths = sorted(Path(args.configs).glob("*.json"))
    if args.only:
        paths = [p for p in paths if p.stem in args.only]
    failed = 0
    for p in paths:
        cfg = load_config(p)
        t0 = time.perf_counter()
        man = execute(cfg, Path(cfg.output["directory"]), args.threads)
        bad = [k for k, ok in man["verdicts"].items() if not ok]
        failed += bool(bad)
        note = f" failed: {', '.join(bad)}" if bad else ""
        print(f"{man['status'].upper():4s}  {p.stem:24s} {time.perf_counter() - t0:7.1f}s{note}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
