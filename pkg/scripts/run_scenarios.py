"""Run the bundled scenarios (or the given scenario files) and summarise the outcome."""

import argparse
from importlib.resources import files
from pathlib import Path

from neckflow import io
from neckflow.cli import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scenarios", nargs="*", help="defaults to the bundled scenarios")
    ap.add_argument("--out", default="out")
    args = ap.parse_args()
    paths = args.scenarios or sorted(
        str(p) for p in files("neckflow").joinpath("scenarios").iterdir() if p.name.endswith(".json"))
    for path in paths:
        sc = io.load_scenario(path)
        rep = run_scenario(sc, Path(args.out) / sc.name)
        kinds = [e["type"] for e in rep["events"]]
        labels = [c["label"] for c in rep["components"]]
        secs = rep["wall_clock"]["total_seconds"]
        print(f"{sc.name:10s} {secs:7.2f}s  events {kinds}  surgeries {len(rep['surgeries'])}  "
              f"components {labels}")


if __name__ == "__main__":
    main()
