"""Acceptance gate: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
one PASS/FAIL line per criterion.  Runtime is several minutes.
"""

import math

import numpy as np
import pytest

from conftest import C1, C2, C3, RESONANT_RABI, STARK_DOWN, STARK_UP, CriterionLog, large_ratio
from rabistark import classical, io, quantum, scan
from rabistark.model import ModelParams, eom_rhs, hcl_energy, solve_p2_on_section

pytestmark = pytest.mark.acceptance

SEED = (0.0, -0.9)
# (name, params, energy, reference cutoff)
FIGURE_SETS = [
    ("large-ratio U=-0.3", large_ratio(-0.3), 7.0, 180),
    ("large-ratio U=0", large_ratio(0.0), 7.0, 160),
    ("large-ratio U=0.3", large_ratio(0.3), 7.0, 150),
    ("resonant Rabi", RESONANT_RABI, 1.3, 18),
    ("Stark U=0.999", STARK_UP, 0.15, 100),
    ("Stark U=-0.999", STARK_DOWN, 0.6, 16),
]
TRUNCATION_CASES = {"C1": (RESONANT_RABI, C1, (14, 24)), "C3": (STARK_DOWN, C3, (12, 22)),
                    "C2": (STARK_UP, C2, (80, 130))}
MAP_GRID = 21


def section_point(par, E):
    return (SEED[0], SEED[1], 0.0, solve_p2_on_section(par, E, *SEED))


@pytest.fixture(scope="module")
def truncations():
    return {k: quantum.find_truncation(par, pt, eps=1e-3, report=True)
            for k, (par, pt, _) in TRUNCATION_CASES.items()}


@pytest.fixture(scope="module")
def contrasts():
    """Chaotic-minus-regular mean S_m on 21 x 21 grids, keyed by configuration."""
    out = {}
    for key, par, E, N in [("stark-down", STARK_DOWN, 0.6, 16), ("resonant", RESONANT_RABI, 1.3, 18),
                           ("large-ratio U=0", large_ratio(0.0), 7.0, 160)]:
        grid = scan.ScanGrid(E, n_q1=MAP_GRID, n_p1=MAP_GRID)
        emap = scan.scan_entropy_map(par, grid, N)
        lyap = scan.lyapunov_map(par, emap)
        out[key] = (scan.classification_contrast(emap, lyap), scan.rank_correlation(emap, lyap),
                    int(np.sum(lyap > classical.LYAP_THRESHOLD)), int(np.sum(np.isfinite(lyap))))
    return out


def test_c1_section_lifts():
    log = CriterionLog(1, "energy-surface lifts")
    cases = [("C1", RESONANT_RABI, 1.3, 1.67033), ("C2", STARK_UP, 0.15, 0.77769), ("C3", STARK_DOWN, 0.6, 1.08086)]
    errs = {k: abs(solve_p2_on_section(par, E, *SEED) - ref) for k, par, E, ref in cases}
    ok = all(e <= 1e-5 for e in errs.values())
    log.record(ok, ", ".join(f"{k} |dp2|={e:.1e}" for k, e in errs.items()) + " (tol 1e-5)")
    assert ok


def test_c2_gradient_consistency():
    log = CriterionLog(2, "gradient consistency")
    rng = np.random.default_rng(2)
    h = 1e-6
    worst = 0.0
    for _ in range(1000):
        par = ModelParams(rng.uniform(0.1, 20), rng.uniform(0.1, 5), rng.uniform(0, 5), rng.uniform(-1, 1))
        rad, ang = math.sqrt(rng.uniform(0, 1.9)), rng.uniform(0, 2 * math.pi)
        y = np.array([rad * math.cos(ang), rad * math.sin(ang), *rng.uniform(-3, 3, 2)])
        grad = np.empty(4)
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            grad[k] = (hcl_energy(par, y + e) - hcl_energy(par, y - e)) / (2 * h)
        fd = np.array([grad[1], -grad[0], grad[3], -grad[2]])
        exact = eom_rhs(par, y).as_array()
        worst = max(worst, np.max(np.abs(exact - fd)) / max(1.0, np.max(np.abs(exact))))
    log.record(worst < 1e-6, f"max rel err {worst:.1e} over 1000 points (tol 1e-6)")
    assert worst < 1e-6


@pytest.mark.parametrize("name,par,E,N", FIGURE_SETS, ids=[f[0] for f in FIGURE_SETS])
def test_c3_conservation(name, par, E, N):
    log = CriterionLog(3, "conservation")
    tr = classical.integrate(par, section_point(par, E), t_end=500.0, tol=1e-10)
    # relative drift as defined on Trajectory: |dE| / max(1, |E0|); the bare |dE| / |E0| is reported too
    drift = tr.relative_drift
    bare = float(np.max(np.abs(tr.energies - tr.energies[0])) / abs(tr.energies[0]))
    times = quantum.time_grid((0.0, 500.0), 1.0)
    H = quantum.build_hamiltonian(par, N)
    psi0 = quantum.coherent_initial_state(section_point(par, E), N)
    states = quantum.evolve(H, psi0, times)
    norm = float(np.max(np.abs(np.linalg.norm(states, axis=1) - 1.0)))
    e = np.einsum("ti,ij,tj->t", states.conj(), H, states).real
    edrift = float(np.max(np.abs(e - e[0])) / abs(e[0]))
    ok = drift < 1e-8 and norm < 1e-10 and edrift < 1e-9
    log.record(ok, f"{name}: dE/max(1,E)={drift:.1e} (dE/E={bare:.1e}) |psi|-1={norm:.1e} d<H>/<H>={edrift:.1e}")
    assert drift < 1e-8
    assert norm < 1e-10
    assert edrift < 1e-9


@pytest.mark.parametrize("key", ["C1", "C2", "C3"])
def test_c4_mean_field(key, truncations):
    log = CriterionLog(4, "mean-field consistency")
    par, pt, _ = TRUNCATION_CASES[key]
    N = truncations[key].N
    psi = quantum.coherent_initial_state(pt, N)
    e = float(np.vdot(psi, quantum.build_hamiltonian(par, N) @ psi).real)
    err = abs(e - hcl_energy(par, pt))
    log.record(err < 1e-6, f"{key} N={N} |<H>-Hcl|={err:.1e}")
    assert err < 1e-6


@pytest.mark.parametrize("key", ["C1", "C3", "C2"])
def test_c5_truncation_bracket(key, truncations):
    log = CriterionLog(5, "truncation brackets")
    lo, hi = TRUNCATION_CASES[key][2]
    N = truncations[key].N
    ok = lo <= N <= hi
    log.record(ok, f"{key} N={N} in [{lo},{hi}]: {'yes' if ok else 'no'}")
    assert lo <= N <= hi


def test_c5_truncation_ratios(truncations):
    log = CriterionLog(5, "truncation brackets")
    n1, n2, n3 = (truncations[k].N for k in ("C1", "C2", "C3"))
    up, down = n2 / n1, n3 / n1
    # "about an order of magnitude" read as at least 5x; "comparable" as within a factor of 2
    ok = up >= 5.0 and 0.5 <= down <= 2.0
    log.record(ok, f"N(C2)/N(C1)={up:.1f} (>=5), N(C3)/N(C1)={down:.2f} (in [0.5,2])")
    assert ok


def test_c6_correspondence_contrast(contrasts):
    log = CriterionLog(6, "correspondence contrast")
    parts = []
    for key in ("stark-down", "large-ratio U=0"):
        c, r, nch, n = contrasts[key]
        ok = c > 0
        parts.append(ok)
        log.record(ok, f"{key} 21x21 contrast={c:+.4f} rank-corr={r:+.2f} chaotic {nch}/{n}")
    assert all(parts)


def test_c7_negative_control(contrasts):
    log = CriterionLog(7, "negative control")
    c, r, nch, n = contrasts["resonant"]
    margin = contrasts["stark-down"][0]
    ok = c <= 0 or abs(c) < margin
    log.record(ok, f"resonant 21x21 contrast={c:+.4f} rank-corr={r:+.2f} vs margin {margin:.4f}")
    assert ok


def test_c8_stark_modulates_chaos():
    log = CriterionLog(8, "chaotic-area ordering")
    grid = scan.ScanGrid(7.0, (-1.4, 1.4), (-1.4, 1.4), 2, 2)
    seeds = [s for s in scan.overlay_seeds(grid, 9) if s[0] ** 2 + s[1] ** 2 < 2.0]
    area = {}
    for U in (-0.3, 0.0, 0.3):
        par = large_ratio(U)
        por = classical.section_portrait(par, 7.0, seeds)
        chaotic = [i for i, s in enumerate(seeds) if i not in por.skipped
                   and classical.lyapunov_estimate(par, classical.lift_seed(par, 7.0, *s)) > classical.LYAP_THRESHOLD]
        area[U] = classical.chaotic_area_fraction(por, chaotic, n_cells=100)
    ok = area[-0.3] > area[0.0] > area[0.3]
    log.record(ok, " > ".join(f"area(U={U:+.1f})={a:.3f}" for U, a in area.items()))
    assert ok


def test_c9_determinism(tmp_path):
    log = CriterionLog(9, "determinism")
    grid = scan.ScanGrid(0.6, n_q1=11, n_p1=11)
    a = scan.scan_entropy_map(STARK_DOWN, grid, 16, workers=1, cache=quantum.SpectrumCache(1))
    b = scan.scan_entropy_map(STARK_DOWN, grid, 16, workers=4, cache=quantum.SpectrumCache(1))
    same = (io.write_map_csv(tmp_path / "a.csv", a).read_bytes()
            == io.write_map_csv(tmp_path / "b.csv", b).read_bytes())
    same = same and np.array_equal(a.values, b.values, equal_nan=True)
    seeds = scan.overlay_seeds(grid, 3)
    pa = classical.section_portrait(STARK_DOWN, 0.6, seeds, workers=1)
    pb = classical.section_portrait(STARK_DOWN, 0.6, seeds, workers=4)
    ok = same and pa.crossings == pb.crossings
    log.record(ok, "11x11 map and portrait identical for 1 and 4 workers" if ok else "outputs differ")
    assert ok
