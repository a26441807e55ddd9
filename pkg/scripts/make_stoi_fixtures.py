#!/usr/bin/env python3
"""Bake intelligibility fixture scores for the metric cross-check suite.

Regenerates the deterministic (clean, degraded) pairs from
tests/stoi_fixture_recipes.py, scores each with the loop-based oracle
transcription in tests/stoi_reference.py, and writes the values to
tests/data/stoi_fixtures.json. Run from the repository root after any
intentional change to the recipes or the oracle:

    python3 scripts/make_stoi_fixtures.py
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT / "tests"))

from stoi_fixture_recipes import RECIPES, build_pair  # noqa: E402
from stoi_reference import stoi_reference  # noqa: E402


def main() -> None:
    fixtures = []
    for recipe in RECIPES:
        clean, degraded = build_pair(recipe)
        score = stoi_reference(clean.samples, degraded.samples)
        fixtures.append({**recipe, "stoi": round(float(score), 6)})
        print(f"{recipe['kind']:>11s} seed={recipe['seed']}: {score:.6f}")

    out = ROOT / "tests" / "data" / "stoi_fixtures.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"pairs": fixtures}, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
