"""Chaotic-area fraction of the large-ratio section portraits versus U.

Seeds are cell centres of an ``n x n`` split of ``[-1.4, 1.4]^2`` inside the
Bloch disk.  Each seed is classified by its Lyapunov estimate, and the area
fraction is the share of energy-allowed section boxes visited by chaotic
seeds.  The ordering is printed for several box resolutions.

    python scripts/chaotic_area.py [--seeds 9] [--cells 25 50 100] [--workers 1]
"""

import argparse

from rabistark import classical, scan
from rabistark.config import from_dict


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=9, help="seeds per axis")
    ap.add_argument("--cells", type=int, nargs="+", default=[25, 50, 100])
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    box = scan.ScanGrid(7.0, (-1.4, 1.4), (-1.4, 1.4), 2, 2)
    seeds = [s for s in scan.overlay_seeds(box, args.seeds) if s[0] ** 2 + s[1] ** 2 < 2.0]
    rows = {}
    for preset in ("fig1a", "fig1b", "fig1c"):
        cfg = from_dict({"preset": preset})
        por = classical.section_portrait(cfg.model, cfg.E, seeds, workers=args.workers)
        live = [i for i in range(len(seeds)) if i not in por.skipped]
        lam = classical.map_pool(
            lambda i: classical.lyapunov_estimate(cfg.model, classical.lift_seed(cfg.model, cfg.E, *seeds[i])),
            live, args.workers)
        chaotic = [i for i, l in zip(live, lam) if l > classical.LYAP_THRESHOLD]
        rows[cfg.model.U] = [classical.chaotic_area_fraction(por, chaotic, n_cells=n) for n in args.cells]
        print(f"U={cfg.model.U:+.1f}: {len(chaotic)}/{len(live)} seeds chaotic")
    print("cells " + "".join(f"  U={U:+.1f}" for U in rows))
    for k, n in enumerate(args.cells):
        print(f"{n:5d} " + "".join(f"  {rows[U][k]:6.3f}" for U in rows))


if __name__ == "__main__":
    main()
