"""Entropy map over a section portrait, with chaotic-minus-regular contrast.

Runs the overlay task for one preset on a reduced grid and writes the bundle
(portrait.csv, map.csv, meta.json and SVG renderings) to ``--out``.

    python scripts/correspondence.py fig5 [--grid 21] [--out runs/fig5] [--workers 1]
"""

import argparse

from rabistark import cli
from rabistark.config import PRESETS, from_dict


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("preset", choices=sorted(PRESETS))
    ap.add_argument("--grid", type=int, default=21, help="nodes per axis")
    ap.add_argument("--N", type=int, default=None, help="Fock cutoff (default: the preset's)")
    ap.add_argument("--out", default=None)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    doc = {"preset": args.preset, "task": "overlay", "grid": {"n_q1": args.grid, "n_p1": args.grid},
           "output": args.out or f"runs/{args.preset}-overlay"}
    if args.N is not None:
        doc["quantum"] = {"N": args.N}
    raise SystemExit(cli.run(from_dict(doc), args.workers).exit_code)


if __name__ == "__main__":
    main()
