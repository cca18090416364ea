"""Critical Fock cutoff versus the length of the convergence window.

The cutoff returned by ``find_truncation`` grows with the window because the
truncated and doubled traces separate later for larger N.  This script
tabulates N_crit for the three reference points on several windows.

    python scripts/truncation_window.py [--windows 100 200 500] [--eps 1e-3]
"""

import argparse
import time

from rabistark import PhasePoint, quantum
from rabistark.config import from_dict
from rabistark.model import solve_p2_on_section

CASES = {"C1 resonant Rabi": "fig3", "C2 Stark U=0.999": "fig4", "C3 Stark U=-0.999": "fig5"}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--windows", type=float, nargs="+", default=[100.0, 200.0, 500.0])
    ap.add_argument("--eps", type=float, default=1e-3)
    args = ap.parse_args()
    print(f"{'case':<20}" + "".join(f"  T={w:<7g}" for w in args.windows))
    for name, preset in CASES.items():
        cfg = from_dict({"preset": preset})
        par, E = cfg.model, cfg.E
        pt = PhasePoint(0.0, -0.9, 0.0, solve_p2_on_section(par, E, 0.0, -0.9))
        cells = []
        for w in args.windows:
            t0 = time.perf_counter()
            res = quantum.find_truncation(par, pt, (0.0, w), eps=args.eps, report=True)
            cells.append(f"  {res.N:<4d}({time.perf_counter() - t0:4.1f}s)")
        print(f"{name:<20}" + "".join(cells))


if __name__ == "__main__":
    main()
