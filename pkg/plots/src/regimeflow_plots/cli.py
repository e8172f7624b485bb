"""`render_all <run_dir> <out_dir>` entry point."""
from __future__ import annotations

import argparse
import sys

from .figures import render_all
from .schemas import SchemaMismatch


def main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="render_all",
        description="Render all figures from a pipeline run directory")
    p.add_argument("run_dir", help="directory containing the run artifacts")
    p.add_argument("out_dir", help="directory to write PNG/SVG images into")
    args = p.parse_args(argv)
    try:
        written = render_all(args.run_dir, args.out_dir)
    except SchemaMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
