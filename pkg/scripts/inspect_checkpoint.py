#!/usr/bin/env python3
"""Print a checkpoint's metadata and tensor table without loading a model."""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from n2ndenoise.checkpoint import load_tensors


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("path", help="checkpoint file")
    p.add_argument("--meta-only", action="store_true")
    args = p.parse_args()

    tensors, meta = load_tensors(args.path)
    print(json.dumps(meta, sort_keys=True, indent=2))
    if args.meta_only:
        return

    total = 0
    print(f"\n{'name':<40} {'shape':<18} {'dtype':<8} {'bytes':>10}")
    for name in sorted(tensors):
        a = tensors[name]
        total += a.nbytes
        print(f"{name:<40} {str(tuple(a.shape)):<18} {str(a.dtype):<8} {a.nbytes:>10}")
    print(f"{'total':<40} {'':<18} {'':<8} {total:>10}")


if __name__ == "__main__":
    main()
