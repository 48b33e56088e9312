#!/usr/bin/env python3
"""Re-verify descent invariants on a finished experiment directory.

Thin wrapper over:  iadmm check --out <dir>
"""

import argparse
import sys
from pathlib import Path

from iadmm.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="experiment directory")
    parser.add_argument("--tol", type=float, default=1e-8)
    args = parser.parse_args()
    return cli_main(["check", "--out", str(args.out), "--tol", str(args.tol)])


if __name__ == "__main__":
    sys.exit(main())
