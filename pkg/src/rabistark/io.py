"""File formats: CSV tables at round-trip precision, binary state dumps,
minimal SVG plots and the overlay bundle directory."""

from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .scan import EntropyMap, Overlay, ScanGrid

STATE_MAGIC = b"RSLQSTAT"
_STATE_HEADER = struct.Struct("<8sII")

VIRIDIS = ["#440154", "#482878", "#3e4989", "#31688e", "#26828e",
           "#1f9e89", "#35b779", "#6ece58", "#b5de2b", "#fde725"]
MASK_GREY = "#bdbdbd"


def fmt(x) -> str:
    """17 significant digits: enough to round-trip any float64."""
    return format(float(x), ".17g")


def write_table(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_crossings_csv(path, crossings) -> Path:
    rows = ([c.seed, fmt(c.t), fmt(c.q1), fmt(c.p1), fmt(c.p2)] for c in crossings)
    return write_table(path, ["seed", "t", "q1", "p1", "p2"], rows)


def write_trace_csv(path, times, S) -> Path:
    return write_table(path, ["t", "S"], ([fmt(t), fmt(s)] for t, s in zip(times, S)))


def read_trace_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def write_map_csv(path, emap: EntropyMap) -> Path:
    """One row per node; ``mask`` holds the mask reason or ``ok``."""
    rows = []
    for i, j, q1, p1 in emap.grid.nodes():
        reason = emap.reasons[i, j] or "ok"
        rows.append([fmt(q1), fmt(p1), fmt(emap.p2[i, j]), fmt(emap.values[i, j]), reason])
    return write_table(path, ["q1", "p1", "p2", "S_m", "mask"], rows)


def read_map_csv(path, grid: ScanGrid) -> EntropyMap:
    """Inverse of :func:`write_map_csv` for a known grid."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != grid.n_q1 * grid.n_p1:
        raise ValueError(f"{path}: {len(rows)} rows for a {grid.n_q1}x{grid.n_p1} grid")
    values = np.array([float(r["S_m"]) for r in rows]).reshape(grid.shape)
    p2 = np.array([float(r["p2"]) for r in rows]).reshape(grid.shape)
    reasons = np.array(["" if r["mask"] == "ok" else r["mask"] for r in rows]).reshape(grid.shape)
    return EntropyMap(grid, values, p2, reasons)


def write_state(path, psi: np.ndarray, N: int) -> Path:
    """16-byte header ``RSLQSTAT``, u32 N, u32 reserved, then ``2N`` little-endian complex128."""
    psi = np.asarray(psi, dtype="<c16")
    if psi.shape != (2 * N,):
        raise ValueError(f"state of shape {psi.shape} does not match N = {N}")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_STATE_HEADER.pack(STATE_MAGIC, N, 0))
        fh.write(psi.tobytes())
    return path


def read_state(path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    magic, N, _ = _STATE_HEADER.unpack_from(raw)
    if magic != STATE_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    psi = np.frombuffer(raw, dtype="<c16", offset=_STATE_HEADER.size)
    if psi.shape != (2 * N,):
        raise ValueError(f"{path}: {psi.size} amplitudes for N = {N}")
    return psi.astype(complex), N


def ramp(x: float, lo: float, hi: float) -> str:
    """Viridis-like colour for ``x`` on ``[lo, hi]`` (piecewise linear between anchors)."""
    u = 0.0 if hi <= lo else min(1.0, max(0.0, (x - lo) / (hi - lo)))
    k = u * (len(VIRIDIS) - 1)
    i = min(int(k), len(VIRIDIS) - 2)
    f = k - i
    a = [int(VIRIDIS[i][n:n + 2], 16) for n in (1, 3, 5)]
    b = [int(VIRIDIS[i + 1][n:n + 2], 16) for n in (1, 3, 5)]
    return "#" + "".join(f"{round(x0 + f * (x1 - x0)):02x}" for x0, x1 in zip(a, b))


_SVG_HEAD = ('<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
             'viewBox="0 0 {w} {h}">\n<rect width="{w}" height="{h}" fill="white"/>\n')


def _frame(parts, x0, y0, size, xr, yr, title):
    parts.append(f'<rect x="{x0}" y="{y0}" width="{size}" height="{size}" fill="none" stroke="black"/>\n')
    parts.append(f'<text x="{x0 + size / 2}" y="{y0 - 8}" text-anchor="middle" font-size="13">{title}</text>\n')
    parts.append(f'<text x="{x0 + size / 2}" y="{y0 + size + 30}" text-anchor="middle" font-size="12">q1</text>\n')
    parts.append(f'<text x="{x0 - 34}" y="{y0 + size / 2}" font-size="12">p1</text>\n')
    for v, x in ((xr[0], x0), (xr[1], x0 + size)):
        parts.append(f'<text x="{x}" y="{y0 + size + 15}" text-anchor="middle" font-size="10">{v:.3g}</text>\n')
    for v, y in ((yr[0], y0 + size), (yr[1], y0)):
        parts.append(f'<text x="{x0 - 4}" y="{y + 3}" text-anchor="end" font-size="10">{v:.3g}</text>\n')


def svg_portrait(path, portrait, q1_range=(-1.2, 1.2), p1_range=(-1.2, 1.2), size: int = 480,
                 title: str = "Poincare section") -> Path:
    """Scatter of section crossings in the ``(q1, p1)`` plane."""
    x0, y0 = 50, 30
    parts = [_SVG_HEAD.format(w=size + 80, h=size + 80)]
    _frame(parts, x0, y0, size, q1_range, p1_range, title)
    sx = size / (q1_range[1] - q1_range[0])
    sy = size / (p1_range[1] - p1_range[0])
    parts.append('<g fill="black">\n')
    for c in portrait.crossings:
        if q1_range[0] <= c.q1 <= q1_range[1] and p1_range[0] <= c.p1 <= p1_range[1]:
            x = x0 + (c.q1 - q1_range[0]) * sx
            y = y0 + size - (c.p1 - p1_range[0]) * sy
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="0.8"/>\n')
    parts.append("</g>\n</svg>\n")
    path = Path(path)
    path.write_text("".join(parts))
    return path


def svg_heatmap(path, emap: EntropyMap, size: int = 480, vmin: float = 0.0, vmax: float | None = None,
                title: str = "time-averaged linear entropy") -> Path:
    """Node values as coloured cells; masked nodes grey.  ``vmax`` defaults to the largest value."""
    g = emap.grid
    finite = emap.values[~emap.mask]
    if vmax is None:
        vmax = float(finite.max()) if finite.size else 0.5
    x0, y0 = 50, 30
    cw, ch = size / g.n_q1, size / g.n_p1
    parts = [_SVG_HEAD.format(w=size + 140, h=size + 80)]
    for i, j, _, _ in g.nodes():
        colour = MASK_GREY if emap.mask[i, j] else ramp(emap.values[i, j], vmin, vmax)
        x = x0 + i * cw
        y = y0 + size - (j + 1) * ch
        parts.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{ch:.2f}" fill="{colour}"/>\n')
    _frame(parts, x0, y0, size, g.q1_range, g.p1_range, title)
    # colour bar
    bx, nb = x0 + size + 20, 50
    for k in range(nb):
        v = vmin + (vmax - vmin) * k / (nb - 1)
        y = y0 + size - (k + 1) * size / nb
        parts.append(f'<rect x="{bx}" y="{y:.2f}" width="16" height="{size / nb + 0.5:.2f}" fill="{ramp(v, vmin, vmax)}"/>\n')
    parts.append(f'<text x="{bx + 20}" y="{y0 + size}" font-size="10">{vmin:.3g}</text>\n')
    parts.append(f'<text x="{bx + 20}" y="{y0 + 8}" font-size="10">{vmax:.3g}</text>\n')
    parts.append("</svg>\n")
    path = Path(path)
    path.write_text("".join(parts))
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, data: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def write_bundle(directory, overlay: Overlay, extra_meta: dict | None = None) -> Path:
    """``portrait.csv``, ``map.csv`` and ``meta.json`` for an overlay, plus SVG renderings."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_crossings_csv(d / "portrait.csv", overlay.portrait.crossings)
    write_map_csv(d / "map.csv", overlay.entropy_map)
    g = overlay.grid
    svg_portrait(d / "portrait.svg", overlay.portrait, g.q1_range, g.p1_range)
    svg_heatmap(d / "map.svg", overlay.entropy_map)
    meta = dict(overlay.meta)
    meta["version"] = __version__
    meta["skipped_seeds"] = {str(k): v for k, v in overlay.portrait.skipped.items()}
    meta["mask_counts"] = overlay.entropy_map.counts()
    if overlay.lyapunov is not None:
        meta["contrast"] = overlay.contrast
        meta["rank_correlation"] = overlay.correlation
    if extra_meta:
        meta.update(extra_meta)
    write_json(d / "meta.json", meta)
    return d


def summary_table(rows: list[tuple[str, float]]) -> str:
    """Human-readable ``name value`` table at 6 significant digits."""
    width = max((len(k) for k, _ in rows), default=0)
    return "\n".join(f"{k:<{width}}  {v:.6g}" if isinstance(v, (int, float)) else f"{k:<{width}}  {v}"
                     for k, v in rows)
