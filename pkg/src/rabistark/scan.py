"""Phase-space scans: time-averaged entropy maps on a fixed-energy section and
their pairing with classical Poincare portraits.

Grid nodes ``(q1, p1)`` are lifted to ``(q1, p1, 0, p2)`` on the energy
surface; the coherent state centred there is evolved and its time-averaged
linear entropy ``S_m`` is recorded.  Nodes that cannot be evaluated are
masked with one of the reasons in :data:`MASK_REASONS`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from . import classical
from .errors import NumericError
from .model import BOUNDARY_MARGIN, SQRT2, ModelParams, PhasePoint, solve_p2_on_section
from .quantum import (DEFAULT_DT, DEFAULT_WINDOW, Spectrum, SpectrumCache, _trunc,
                      coherent_initial_state, spectra, time_average, time_grid)

OFF_SURFACE = "off-surface"
BOUNDARY = "boundary"
TRUNCATION_FAILURE = "truncation-failure"
MASK_REASONS = (OFF_SURFACE, BOUNDARY, TRUNCATION_FAILURE)

DEFAULT_RANGE = (-1.2, 1.2)
DEFAULT_COUNT = 41


@dataclass(frozen=True)
class ScanGrid:
    """Closed ``(q1, p1)`` rectangle sampled at ``n_q1 x n_p1`` nodes on the section ``H = E``."""

    E: float
    q1_range: tuple[float, float] = DEFAULT_RANGE
    p1_range: tuple[float, float] = DEFAULT_RANGE
    n_q1: int = DEFAULT_COUNT
    n_p1: int = DEFAULT_COUNT

    def __post_init__(self):
        object.__setattr__(self, "q1_range", tuple(map(float, self.q1_range)))
        object.__setattr__(self, "p1_range", tuple(map(float, self.p1_range)))
        if not math.isfinite(self.E):
            raise ValueError(f"E must be finite, got {self.E!r}")
        for name in ("q1_range", "p1_range"):
            lo, hi = getattr(self, name)
            if not (-SQRT2 <= lo <= hi <= SQRT2):
                raise ValueError(f"{name} = {(lo, hi)} must be an interval inside [-sqrt(2), sqrt(2)]")
        for name in ("n_q1", "n_p1"):
            n = getattr(self, name)
            if int(n) != n or n < 2:
                raise ValueError(f"{name} must be an integer >= 2, got {n!r}")

    @staticmethod
    def _axis(rng, n):
        lo, hi = rng
        # lo + (hi - lo) * (k / (n - 1)): k / (n - 1) is correctly rounded, so
        # node 2k of the refined axis reproduces node k bit for bit
        return np.array([lo + (hi - lo) * (k / (n - 1)) for k in range(n)])

    @property
    def q1_values(self) -> np.ndarray:
        return self._axis(self.q1_range, self.n_q1)

    @property
    def p1_values(self) -> np.ndarray:
        return self._axis(self.p1_range, self.n_p1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_q1, self.n_p1

    def nodes(self):
        """``(i, j, q1, p1)`` in row-major order, ``i`` indexing ``q1``."""
        qs, ps = self.q1_values, self.p1_values
        for i, q1 in enumerate(qs):
            for j, p1 in enumerate(ps):
                yield i, j, float(q1), float(p1)

    def refined(self) -> "ScanGrid":
        """Grid with every interval halved; its even nodes are the current nodes."""
        return ScanGrid(self.E, self.q1_range, self.p1_range, 2 * self.n_q1 - 1, 2 * self.n_p1 - 1)

    def axes(self) -> dict:
        return {"E": self.E, "q1_range": list(self.q1_range), "p1_range": list(self.p1_range),
                "n_q1": self.n_q1, "n_p1": self.n_p1}


@dataclass
class EntropyMap:
    """``S_m`` per grid node; ``values`` is NaN exactly where ``reasons`` is non-empty."""

    grid: ScanGrid
    values: np.ndarray
    p2: np.ndarray
    reasons: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def mask(self) -> np.ndarray:
        """True on masked nodes."""
        return self.reasons != ""

    def counts(self) -> dict:
        return {r: int(np.sum(self.reasons == r)) for r in MASK_REASONS}


@dataclass(frozen=True)
class CellResult:
    p2: float
    S_m: float
    reason: str


def lift_node(params: ModelParams, E: float, q1: float, p1: float,
              margin: float = BOUNDARY_MARGIN) -> tuple[PhasePoint | None, str]:
    """Energy-surface point above a grid node, or ``(None, reason)``.

    Nodes with ``q1^2 + p1^2 >= 2`` carry no Bloch point at all and so lie
    outside the section footprint (off-surface).  Nodes inside the disk but
    within ``margin`` of its rim, where the equations of motion are singular,
    are flagged as boundary.
    """
    r = q1 * q1 + p1 * p1
    if r >= 2.0:
        return None, OFF_SURFACE
    if r > 2.0 - margin:
        return None, BOUNDARY
    try:
        p2 = solve_p2_on_section(params, E, q1, p1)
    except NumericError:
        # vanishing section denominator: no finite p2 solves the energy equation
        return None, OFF_SURFACE
    if p2 is None:
        return None, OFF_SURFACE
    return PhasePoint(q1, p1, 0.0, p2), ""


def scan_cell(params: ModelParams, E: float, q1: float, p1: float, trunc, window=DEFAULT_WINDOW,
              dt: float = DEFAULT_DT, cache: SpectrumCache | None = spectra) -> CellResult:
    """Evaluate one grid node; all numerical failures end up in ``reason``."""
    pt, reason = lift_node(params, E, q1, p1)
    if pt is None:
        return CellResult(math.nan, math.nan, reason)
    times = time_grid(window, dt)
    try:
        psi0 = coherent_initial_state(pt, trunc)
        sp = cache.get(params, trunc) if cache is not None else Spectrum.for_model(params, trunc)
        S_m = time_average(sp.entropy_trace(psi0, times), times)
    except NumericError:
        # TruncationTooSmallError when the cutoff cannot hold the coherent state
        return CellResult(pt.p2, math.nan, TRUNCATION_FAILURE)
    return CellResult(pt.p2, S_m, "")


def scan_entropy_map(params: ModelParams, grid: ScanGrid, trunc, window=DEFAULT_WINDOW,
                     dt: float = DEFAULT_DT, workers: int | None = None,
                     cache: SpectrumCache | None = spectra) -> EntropyMap:
    """``S_m`` over every node of ``grid`` with one shared eigendecomposition.

    Cells are independent and written by index, so the map does not depend
    on ``workers``.  Per-cell failures are masked; the scan never aborts on
    them.
    """
    trunc = _trunc(trunc)
    cache = cache if cache is not None else SpectrumCache(maxsize=1)
    cache.get(params, trunc)  # build the spectrum once before the pool fans out
    nodes = list(grid.nodes())

    def one(node):
        i, j, q1, p1 = node
        return i, j, scan_cell(params, grid.E, q1, p1, trunc, window, dt, cache)

    values = np.full(grid.shape, np.nan)
    p2 = np.full(grid.shape, np.nan)
    reasons = np.full(grid.shape, "", dtype=object)
    for i, j, res in classical.map_pool(one, nodes, workers):
        values[i, j], p2[i, j], reasons[i, j] = res.S_m, res.p2, res.reason
    meta = {"params": params_dict(params), "grid": grid.axes(), "N": trunc.N,
            "window": [float(w) for w in window], "dt": float(dt)}
    return EntropyMap(grid, values, p2, reasons.astype(str), meta)


def lyapunov_map(params: ModelParams, emap: EntropyMap, t_end: float = classical.LYAP_T_END,
                 tol: float = classical.LYAP_TOL, workers: int | None = None) -> np.ndarray:
    """Largest-Lyapunov estimate at each lifted node of ``emap``; NaN where there is no lift
    or the orbit fails numerically."""
    g = emap.grid
    todo = [(i, j, q1, p1) for i, j, q1, p1 in g.nodes() if math.isfinite(emap.p2[i, j])]

    def one(node):
        i, j, q1, p1 = node
        try:
            lam = classical.lyapunov_estimate(params, (q1, p1, 0.0, emap.p2[i, j]), t_end=t_end, tol=tol)
        except NumericError:
            lam = math.nan
        return i, j, lam

    out = np.full(g.shape, np.nan)
    for i, j, lam in classical.map_pool(one, todo, workers):
        out[i, j] = lam
    return out


def _paired(emap: EntropyMap, lyap: np.ndarray):
    ok = ~emap.mask & np.isfinite(lyap)
    return emap.values[ok], lyap[ok]


def classification_contrast(emap: EntropyMap, lyap: np.ndarray,
                            threshold: float = classical.LYAP_THRESHOLD) -> float:
    """Mean ``S_m`` over chaotic nodes minus mean ``S_m`` over regular nodes.

    A node is chaotic when its Lyapunov estimate exceeds ``threshold``.
    NaN when either class is empty.
    """
    s, lam = _paired(emap, lyap)
    chaotic = lam > threshold
    if not chaotic.any() or chaotic.all():
        return math.nan
    return float(s[chaotic].mean() - s[~chaotic].mean())


def rank_correlation(emap: EntropyMap, lyap: np.ndarray) -> float:
    """Spearman correlation between Lyapunov estimate and ``S_m`` over usable nodes."""
    s, lam = _paired(emap, lyap)
    if len(s) < 3:
        return math.nan
    return float(spearmanr(lam, s).statistic)


@dataclass
class Overlay:
    """Classical portrait and entropy map on the same section axes."""

    params: ModelParams
    grid: ScanGrid
    portrait: classical.Portrait
    entropy_map: EntropyMap
    lyapunov: np.ndarray | None
    meta: dict

    @property
    def contrast(self) -> float:
        return math.nan if self.lyapunov is None else classification_contrast(self.entropy_map, self.lyapunov)

    @property
    def correlation(self) -> float:
        return math.nan if self.lyapunov is None else rank_correlation(self.entropy_map, self.lyapunov)


def overlay_seeds(grid: ScanGrid, seeds_per_axis: int) -> list[tuple[float, float]]:
    """Centres of a ``seeds_per_axis x seeds_per_axis`` split of the grid rectangle.

    Centres rather than corners keep the seeds off the rim of the Bloch disk.
    """
    if seeds_per_axis < 1:
        raise ValueError(f"seeds_per_axis must be >= 1, got {seeds_per_axis}")
    n = seeds_per_axis

    def centres(rng):
        lo, hi = rng
        return [lo + (hi - lo) * ((k + 0.5) / n) for k in range(n)]

    return [(q, p) for q in centres(grid.q1_range) for p in centres(grid.p1_range)]


def scan_section_overlay(params: ModelParams, grid: ScanGrid, seeds_per_axis: int,
                         t_end: float = classical.DEFAULT_T_END, tol: float = classical.DEFAULT_TOL,
                         trunc=None, window=DEFAULT_WINDOW, dt: float = DEFAULT_DT,
                         max_crossings: int = classical.DEFAULT_MAX_CROSSINGS,
                         classify: bool = True, lyap_t_end: float = classical.LYAP_T_END,
                         workers: int | None = None, cache: SpectrumCache | None = spectra) -> Overlay:
    """Portrait and ``S_m`` map sharing ``grid``'s axes.

    ``trunc`` is required; pass the cutoff found by the converge step.  With
    ``classify`` each lifted node is also given a Lyapunov estimate so the
    contrast and rank-correlation metrics can be read off the bundle.
    """
    if trunc is None:
        raise ValueError("scan_section_overlay needs an explicit Fock truncation")
    trunc = _trunc(trunc)
    seeds = overlay_seeds(grid, seeds_per_axis)
    portrait = classical.section_portrait(params, grid.E, seeds, t_end=t_end, tol=tol,
                                          max_crossings=max_crossings, workers=workers)
    emap = scan_entropy_map(params, grid, trunc, window, dt, workers=workers, cache=cache)
    lyap = lyapunov_map(params, emap, t_end=lyap_t_end, workers=workers) if classify else None
    meta = {
        "axes": {"portrait": grid.axes(), "map": emap.grid.axes()},
        "classical": {"params": params_dict(params), "E": grid.E, "t_end": t_end, "tol": tol,
                      "seeds_per_axis": seeds_per_axis, "max_crossings": max_crossings},
        "quantum": {"params": params_dict(params), "N": trunc.N, "window": [float(w) for w in window],
                    "dt": float(dt)},
        "classification": ({"lyapunov_t_end": lyap_t_end, "lyapunov_tol": classical.LYAP_TOL,
                            "threshold": classical.LYAP_THRESHOLD} if classify else None),
    }
    return Overlay(params, grid, portrait, emap, lyap, meta)


def params_dict(params: ModelParams) -> dict:
    return {"omega": params.omega, "omega0": params.omega0, "g": params.g, "U": params.U}
