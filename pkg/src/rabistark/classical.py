"""Classical mean-field dynamics: trajectories, Poincare sections and a
largest-Lyapunov-exponent estimate.

The section is the plane ``q2 = 0`` crossed with ``p2 > 0``; crossings are
reported in the ``(q1, p1)`` plane.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rk
from .errors import EnergyDriftError, NumericError, SingularityError, StiffnessError
from .model import BOUNDARY_MARGIN, ModelParams, PhasePoint, _as_point, _hcl, from_bloch, solve_p2_on_section

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_T_END = 500.0
DEFAULT_MAX_CROSSINGS = 400
DRIFT_FACTOR = 100.0
CROSSING_TOL = 1e-10
MAX_STEPS = 50_000_000
#: successive local tolerances tried by :func:`integrate`, as fractions of ``tol``
TIGHTENING = (1.0, 0.1, 0.01, 0.001)
MIN_LOCAL_TOL = 1e-15

LYAP_THRESHOLD = 0.01
LYAP_T_END = 2000.0
LYAP_TOL = 1e-9
LYAP_D0 = 1e-8
LYAP_RENORM = 1.0


@dataclass
class Trajectory:
    """Accepted integrator steps plus the dense-output polynomials between them.

    ``local_tol`` is the step-controller tolerance that met the drift budget.
    """

    times: np.ndarray
    states: np.ndarray
    energies: np.ndarray
    local_tol: float
    bloch: np.ndarray = field(repr=False)
    dense: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.times)

    @property
    def relative_drift(self) -> float:
        e0 = self.energies[0]
        return float(np.max(np.abs(self.energies - e0)) / max(1.0, abs(e0)))

    def __call__(self, t) -> np.ndarray:
        """Evaluate the continuous solution at time(s) ``t``; returns shape ``(len(t), 4)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise ValueError("requested time outside the integrated interval")
        out = np.empty((len(t), 4))
        if len(self.dense) == 0:
            out[:] = self.states[0]
            return out
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.dense) - 1)
        buf = np.empty(rk.NB)
        for j, (tj, kj) in enumerate(zip(t, k)):
            h = self.times[kj + 1] - self.times[kj]
            rk.dense_eval(self.dense[kj], self.bloch[kj], (tj - self.times[kj]) / h, buf)
            out[j] = from_bloch(buf)
        return out


@dataclass(frozen=True)
class SectionCrossing:
    t: float
    q1: float
    p1: float
    p2: float
    q2: float = 0.0
    energy: float = float("nan")
    seed: int = 0


def _raise_status(status, t_fail):
    if status == rk.SINGULAR:
        raise SingularityError(f"trajectory reached the Bloch boundary margin at t = {t_fail:.6g}", t=t_fail)
    if status == rk.UNDERFLOW:
        raise StiffnessError(f"step size underflow at t = {t_fail:.6g}", t=t_fail)
    if status == rk.MAX_STEPS:
        raise StiffnessError(f"step limit exceeded at t = {t_fail:.6g}", t=t_fail)


def _check_args(t_end, tol):
    if not t_end > 0:
        raise ValueError(f"t_end must be > 0, got {t_end}")
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")


def _integrate_once(params, y0, t_end, tol, margin):
    par = params.as_array()
    status, t_fail, times, states, bloch, dense = rk.integrate_kernel(
        par, rk.TABLEAU, y0, float(t_end), float(tol), float(margin), True, MAX_STEPS)
    _raise_status(status, t_fail)
    energies = np.array([_hcl(par, s) for s in states])
    return Trajectory(times, states, energies, float(tol), bloch, dense)


def integrate(params: ModelParams, init, t_end: float = DEFAULT_T_END, tol: float = DEFAULT_TOL,
              margin: float = BOUNDARY_MARGIN, drift_factor: float = DRIFT_FACTOR) -> Trajectory:
    """Adaptive Runge-Kutta solution of Hamilton's equations on ``[0, t_end]``.

    Guarantees a relative energy drift of at most ``drift_factor * tol``: the
    first pass uses ``tol`` as the local (relative and absolute) tolerance and,
    if the monitored drift exceeds the budget, the pass is repeated with the
    local tolerance tightened by successive factors of ten.

    Raises
    ------
    SingularityError
        The orbit came within ``margin`` of the Bloch boundary.
    StiffnessError
        The step size underflowed.
    EnergyDriftError
        No tightening met the budget.
    """
    _check_args(t_end, tol)
    y0 = _as_point(init).as_array()
    budget = drift_factor * tol
    traj = None
    for frac in TIGHTENING:
        local = max(tol * frac, MIN_LOCAL_TOL)
        traj = _integrate_once(params, y0, t_end, local, margin)
        if traj.relative_drift <= budget:
            if frac != 1.0:
                log.debug("drift budget met at local tol %.1e", local)
            return traj
        if local == MIN_LOCAL_TOL:
            break
    raise EnergyDriftError(
        f"relative energy drift {traj.relative_drift:.3e} exceeds budget {budget:.3e} "
        f"even at local tol {traj.local_tol:.1e}")


def poincare_section(params: ModelParams, init, t_end: float = DEFAULT_T_END, tol: float = DEFAULT_TOL,
                     max_crossings: int | None = None, margin: float = BOUNDARY_MARGIN,
                     seed: int = 0) -> list[SectionCrossing]:
    """Crossings of ``q2 = 0`` with ``p2 > 0``, in time order.

    Each crossing is refined by bisection on the dense output until
    ``|q2| < 1e-10``.  ``max_crossings`` stops the run early.  A seed lying on
    the section with ``p2 > 0`` is its own first crossing at ``t = 0``.
    """
    _check_args(t_end, tol)
    y0 = _as_point(init).as_array()
    cap = np.iinfo(np.int64).max if max_crossings is None else int(max_crossings)
    status, t_fail, rows = rk.section_kernel(params.as_array(), rk.TABLEAU, y0, float(t_end), float(tol),
                                             float(margin), True, cap, CROSSING_TOL, MAX_STEPS)
    _raise_status(status, t_fail)
    return [SectionCrossing(t=r[0], q1=r[1], p1=r[2], p2=r[4], q2=r[3], energy=r[5], seed=seed) for r in rows]


@dataclass
class Portrait:
    """Union of per-seed crossings with the bookkeeping needed to reproduce it."""

    params: ModelParams
    E: float
    seeds: list[tuple[float, float]]
    crossings: list[SectionCrossing]
    skipped: dict[int, str]

    def points(self, seed: int | None = None) -> np.ndarray:
        rows = [(c.q1, c.p1) for c in self.crossings if seed is None or c.seed == seed]
        return np.array(rows, dtype=float).reshape(-1, 2)


def lift_seed(params: ModelParams, E: float, q1: float, p1: float) -> PhasePoint | None:
    """Point ``(q1, p1, 0, p2)`` on the energy surface, or ``None`` if there is none."""
    p2 = solve_p2_on_section(params, E, q1, p1)
    return None if p2 is None else PhasePoint(q1, p1, 0.0, p2)


def map_pool(fn, items, workers=None):
    """``list(map(fn, items))``, on a thread pool when ``workers > 1``.

    The jitted kernels release the GIL, so threads run them concurrently.
    Result order always follows ``items``.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def section_portrait(params: ModelParams, E: float, seeds, t_end: float = DEFAULT_T_END,
                     tol: float = DEFAULT_TOL, max_crossings: int = DEFAULT_MAX_CROSSINGS,
                     workers: int | None = None) -> Portrait:
    """Poincare portrait at energy ``E`` from ``(q1, p1)`` seeds.

    Seeds are lifted to the energy surface on the section; those without a
    lift, or whose orbit fails numerically, are listed in ``skipped`` with the
    reason.  Each seed runs until ``max_crossings`` crossings or ``t_end``.
    """
    seeds = [(float(a), float(b)) for a, b in seeds]

    def one(item):
        i, (q1, p1) = item
        try:
            pt = lift_seed(params, E, q1, p1)
        except NumericError as exc:
            return i, None, f"lift failed: {exc}"
        if pt is None:
            return i, None, "off-surface"
        try:
            return i, poincare_section(params, pt, t_end, tol, max_crossings=max_crossings, seed=i), None
        except NumericError as exc:
            return i, None, f"{type(exc).__name__}: {exc}"

    results = map_pool(one, enumerate(seeds), workers)
    crossings: list[SectionCrossing] = []
    skipped: dict[int, str] = {}
    for i, cr, reason in results:
        if cr is None:
            skipped[i] = reason
        else:
            crossings.extend(cr)
    if seeds and len(skipped) == len(seeds):
        warnings.warn(f"empty portrait: all {len(seeds)} seeds skipped at E = {E}", RuntimeWarning, stacklevel=2)
    return Portrait(params, float(E), seeds, crossings, skipped)


def lyapunov_estimate(params: ModelParams, init, t_end: float = LYAP_T_END, tol: float = LYAP_TOL,
                      d0: float = LYAP_D0, renorm_dt: float = LYAP_RENORM,
                      margin: float = BOUNDARY_MARGIN) -> float:
    """Largest Lyapunov exponent from a shadow orbit at distance ``d0``.

    The shadow is pulled back to distance ``d0`` every ``renorm_dt``; the
    estimate is the mean logarithmic stretch rate over ``[0, t_end]``.  For
    regular orbits it decays roughly like ``log(t) / t``.
    """
    _check_args(t_end, tol)
    y0 = _as_point(init).as_array()
    status, t_fail, lam = rk.lyapunov_kernel(params.as_array(), rk.TABLEAU, y0, float(t_end), float(tol),
                                             float(margin), True, float(d0), float(renorm_dt), MAX_STEPS)
    _raise_status(status, t_fail)
    return float(lam)


def is_chaotic(params: ModelParams, init, threshold: float = LYAP_THRESHOLD, **kw) -> bool:
    return lyapunov_estimate(params, init, **kw) > threshold


def _cell_edges(n_cells):
    lim = np.sqrt(2.0)
    return np.linspace(-lim, lim, n_cells + 1)


def visited_cells(portrait: Portrait, seeds=None, n_cells: int = 100) -> np.ndarray:
    """Boolean ``(n_cells, n_cells)`` mask of section boxes hit by the given seeds' crossings."""
    edges = _cell_edges(n_cells)
    keep = None if seeds is None else set(seeds)
    pts = np.array([(c.q1, c.p1) for c in portrait.crossings if keep is None or c.seed in keep],
                   dtype=float).reshape(-1, 2)
    mask = np.zeros((n_cells, n_cells), dtype=bool)
    if len(pts):
        i = np.clip(np.searchsorted(edges, pts[:, 0], side="right") - 1, 0, n_cells - 1)
        j = np.clip(np.searchsorted(edges, pts[:, 1], side="right") - 1, 0, n_cells - 1)
        mask[i, j] = True
    return mask


def section_footprint(params: ModelParams, E: float, n_cells: int = 100) -> np.ndarray:
    """Boolean mask of section boxes whose centre lifts to the energy surface."""
    edges = _cell_edges(n_cells)
    centres = 0.5 * (edges[1:] + edges[:-1])
    mask = np.zeros((n_cells, n_cells), dtype=bool)
    for i, q1 in enumerate(centres):
        for j, p1 in enumerate(centres):
            if q1 * q1 + p1 * p1 >= 2.0:
                continue
            try:
                mask[i, j] = solve_p2_on_section(params, E, q1, p1) is not None
            except NumericError:
                pass
    return mask


def chaotic_area_fraction(portrait: Portrait, chaotic_seeds, n_cells: int = 100,
                          footprint: np.ndarray | None = None) -> float:
    """Fraction of section boxes visited by chaotic seeds.

    The square ``[-sqrt2, sqrt2]^2`` is split into ``n_cells x n_cells`` boxes.
    The denominator is the number of boxes in ``footprint`` (default: the
    boxes whose centre lies on the energy surface).
    """
    if footprint is None:
        footprint = section_footprint(portrait.params, portrait.E, n_cells)
    hit = visited_cells(portrait, chaotic_seeds, n_cells)
    denom = int(footprint.sum())
    return float(hit.sum()) / denom if denom else 0.0
