"""Run every configuration in configs/ through the CLI and report exit codes."""
import argparse
from pathlib import Path
import sys
import time

import tomli

from gsv.cli import main

ROOT = Path(__file__).resolve().parents[1]


def run(out_root):
    failures = 0
    for path in sorted((ROOT / "configs").glob("*.toml")):
        task = tomli.loads(path.read_text())["task"]
        start = time.perf_counter()
        code = main([task, "--config", str(path), "--out", str(out_root / path.stem)])
        failures += code != 0
        print(f"{path.name:22s} {task:11s} exit={code} {time.perf_counter() - start:6.2f}s")
    return failures


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(ROOT / "out"), help="root directory for the reports")
    args = ap.parse_args()
    sys.exit(1 if run(Path(args.out)) else 0)
