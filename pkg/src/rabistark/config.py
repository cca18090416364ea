"""Run configurations: a strict TOML dialect, named presets and rendering.

A config document has top-level keys ``task``, ``preset``, ``output`` and
``workers`` plus the tables below; every key is optional unless noted and
unknown keys are rejected::

    task = "scan"              # poincare | entropy-trace | converge | scan | overlay
    preset = "fig5"            # optional, merged underneath this document

    [model]                    # required (usually via a preset)
    omega = 1.0
    omega0 = 1.0
    g = 0.2
    U = -0.999

    [section]
    E = 0.6                    # energy of the q2 = 0 section

    [classical]                # t_end, tol, max_crossings, seeds, seeds_per_axis
    [quantum]                  # N, window, dt, eps, cap, point
    [grid]                     # q1_range, p1_range, n_q1, n_p1
    [lyapunov]                 # t_end, tol, threshold, classify

``quantum.point`` is ``[q1, p1]`` (lifted onto the section at ``E``) or a
full ``[q1, p1, q2, p2]``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field, fields

import tomli
import tomli_w

from . import classical, quantum, scan
from .errors import ConfigError
from .model import ModelParams

TASKS = ("poincare", "entropy-trace", "converge", "scan", "overlay")

_C1 = [0.0, -0.9]
PRESETS: dict[str, dict] = {
    "fig1a": {"task": "poincare", "model": {"omega": 14.0, "omega0": 1.0, "g": 5.0, "U": -0.3},
              "section": {"E": 7.0}},
    "fig1b": {"task": "poincare", "model": {"omega": 14.0, "omega0": 1.0, "g": 5.0, "U": 0.0},
              "section": {"E": 7.0}},
    "fig1c": {"task": "poincare", "model": {"omega": 14.0, "omega0": 1.0, "g": 5.0, "U": 0.3},
              "section": {"E": 7.0}},
    "fig2a": {"task": "scan", "model": {"omega": 14.0, "omega0": 1.0, "g": 5.0, "U": -0.3},
              "section": {"E": 7.0}, "quantum": {"N": 180, "window": [0.0, 500.0]}},
    "fig2b": {"task": "scan", "model": {"omega": 14.0, "omega0": 1.0, "g": 5.0, "U": 0.0},
              "section": {"E": 7.0}, "quantum": {"N": 160, "window": [0.0, 500.0]}},
    "fig2c": {"task": "scan", "model": {"omega": 14.0, "omega0": 1.0, "g": 5.0, "U": 0.3},
              "section": {"E": 7.0}, "quantum": {"N": 150, "window": [0.0, 500.0]}},
    "fig3": {"task": "overlay", "model": {"omega": 1.0, "omega0": 1.0, "g": 0.4, "U": 0.0},
             "section": {"E": 1.3}, "quantum": {"N": 18, "point": _C1}},
    "fig4": {"task": "overlay", "model": {"omega": 1.0, "omega0": 1.0, "g": 0.6, "U": 0.999},
             "section": {"E": 0.15}, "quantum": {"N": 100, "point": _C1}},
    "fig5": {"task": "overlay", "model": {"omega": 1.0, "omega0": 1.0, "g": 0.2, "U": -0.999},
             "section": {"E": 0.6}, "quantum": {"N": 16, "point": _C1}},
}


@dataclass(frozen=True)
class ClassicalConfig:
    t_end: float = classical.DEFAULT_T_END
    tol: float = classical.DEFAULT_TOL
    max_crossings: int = classical.DEFAULT_MAX_CROSSINGS
    seeds: tuple[tuple[float, float], ...] = ()
    seeds_per_axis: int = 9


@dataclass(frozen=True)
class QuantumConfig:
    N: int | None = None
    window: tuple[float, float] = quantum.DEFAULT_WINDOW
    dt: float = quantum.DEFAULT_DT
    eps: float = 1e-3
    cap: int = quantum.TRUNCATION_CAP
    point: tuple[float, ...] | None = None


@dataclass(frozen=True)
class GridConfig:
    q1_range: tuple[float, float] = scan.DEFAULT_RANGE
    p1_range: tuple[float, float] = scan.DEFAULT_RANGE
    n_q1: int = scan.DEFAULT_COUNT
    n_p1: int = scan.DEFAULT_COUNT


@dataclass(frozen=True)
class LyapunovConfig:
    t_end: float = classical.LYAP_T_END
    tol: float = classical.LYAP_TOL
    threshold: float = classical.LYAP_THRESHOLD
    classify: bool = True


@dataclass(frozen=True)
class RunConfig:
    task: str
    model: ModelParams
    E: float | None = None
    classical: ClassicalConfig = field(default_factory=ClassicalConfig)
    quantum: QuantumConfig = field(default_factory=QuantumConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    lyapunov: LyapunovConfig = field(default_factory=LyapunovConfig)
    output: str = "rsl-out"
    workers: int | None = None
    preset: str | None = None

    def scan_grid(self) -> scan.ScanGrid:
        g = self.grid
        return scan.ScanGrid(self.E, g.q1_range, g.p1_range, g.n_q1, g.n_p1)


_TOP = {"task", "preset", "output", "workers", "model", "section", "classical", "quantum", "grid", "lyapunov"}
_TABLES = {
    "model": {f.name for f in fields(ModelParams)},
    "section": {"E"},
    "classical": {f.name for f in fields(ClassicalConfig)},
    "quantum": {f.name for f in fields(QuantumConfig)},
    "grid": {f.name for f in fields(GridConfig)},
    "lyapunov": {f.name for f in fields(LyapunovConfig)},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(path, v, integer=False, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if integer and (not isinstance(v, int)):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{path}: must be finite, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{path}: must be > 0, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(f"{path}: must be >= 0, got {v!r}")
    return int(v) if integer else float(v)


def _pair(path, v):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(f"{path}: expected a pair [a, b], got {v!r}")
    return (_num(f"{path}[0]", v[0]), _num(f"{path}[1]", v[1]))


def _check_keys(doc: dict):
    for k in doc:
        if k not in _TOP:
            raise ConfigError(f"unknown key {k!r}; allowed: {sorted(_TOP)}")
    for table, allowed in _TABLES.items():
        sub = doc.get(table, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"{table}: expected a table")
        for k in sub:
            if k not in allowed:
                raise ConfigError(f"unknown key {table}.{k}; allowed: {sorted(allowed)}")


def from_dict(doc: dict) -> RunConfig:
    """Validate a parsed document (presets already merged in)."""
    preset = doc.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        doc = _merge(PRESETS[preset], {k: v for k, v in doc.items() if k != "preset"})
        doc["preset"] = preset
    _check_keys(doc)

    task = doc.get("task")
    if task not in TASKS:
        raise ConfigError(f"task: expected one of {TASKS}, got {task!r}")

    m = doc.get("model")
    if not m:
        raise ConfigError("model: table is required (omega, omega0, g, U)")
    vals = {}
    for k in ("omega", "omega0", "g", "U"):
        if k not in m:
            raise ConfigError(f"model.{k}: required")
        vals[k] = _num(f"model.{k}", m[k])
    try:
        model = ModelParams(**vals)
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc

    E = doc.get("section", {}).get("E")
    E = None if E is None else _num("section.E", E)

    c = doc.get("classical", {})
    seeds = []
    for i, s in enumerate(c.get("seeds", [])):
        q1, p1 = _pair(f"classical.seeds[{i}]", s)
        if q1 * q1 + p1 * p1 >= 2.0:
            raise ConfigError(f"classical.seeds[{i}] = ({q1}, {p1}): q1^2 + p1^2 = {q1 * q1 + p1 * p1:g} "
                              "must be < 2")
        seeds.append((q1, p1))
    cl = ClassicalConfig(
        t_end=_num("classical.t_end", c.get("t_end", ClassicalConfig.t_end), positive=True),
        tol=_num("classical.tol", c.get("tol", ClassicalConfig.tol), positive=True),
        max_crossings=_num("classical.max_crossings", c.get("max_crossings", ClassicalConfig.max_crossings),
                           integer=True, positive=True),
        seeds=tuple(seeds),
        seeds_per_axis=_num("classical.seeds_per_axis", c.get("seeds_per_axis", ClassicalConfig.seeds_per_axis),
                            integer=True, positive=True),
    )

    q = doc.get("quantum", {})
    window = _pair("quantum.window", q.get("window", list(QuantumConfig.window)))
    if not window[1] > window[0] >= 0:
        raise ConfigError(f"quantum.window: need 0 <= t1 < t2, got {list(window)}")
    point = q.get("point")
    if point is not None:
        if not isinstance(point, (list, tuple)) or len(point) not in (2, 4):
            raise ConfigError(f"quantum.point: expected [q1, p1] or [q1, p1, q2, p2], got {point!r}")
        point = tuple(_num(f"quantum.point[{i}]", v) for i, v in enumerate(point))
        if point[0] ** 2 + point[1] ** 2 >= 2.0:
            raise ConfigError(f"quantum.point: q1^2 + p1^2 = {point[0] ** 2 + point[1] ** 2:g} must be < 2")
    N = q.get("N")
    qu = QuantumConfig(
        N=None if N is None else _num("quantum.N", N, integer=True, positive=True),
        window=window,
        dt=_num("quantum.dt", q.get("dt", QuantumConfig.dt), positive=True),
        eps=_num("quantum.eps", q.get("eps", QuantumConfig.eps), positive=True),
        cap=_num("quantum.cap", q.get("cap", QuantumConfig.cap), integer=True, positive=True),
        point=point,
    )

    g = doc.get("grid", {})
    gr = GridConfig(
        q1_range=_pair("grid.q1_range", g.get("q1_range", list(GridConfig.q1_range))),
        p1_range=_pair("grid.p1_range", g.get("p1_range", list(GridConfig.p1_range))),
        n_q1=_num("grid.n_q1", g.get("n_q1", GridConfig.n_q1), integer=True),
        n_p1=_num("grid.n_p1", g.get("n_p1", GridConfig.n_p1), integer=True),
    )
    try:
        scan.ScanGrid(0.0 if E is None else E, gr.q1_range, gr.p1_range, gr.n_q1, gr.n_p1)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc

    ly = doc.get("lyapunov", {})
    classify = ly.get("classify", LyapunovConfig.classify)
    if not isinstance(classify, bool):
        raise ConfigError(f"lyapunov.classify: expected true/false, got {classify!r}")
    lc = LyapunovConfig(
        t_end=_num("lyapunov.t_end", ly.get("t_end", LyapunovConfig.t_end), positive=True),
        tol=_num("lyapunov.tol", ly.get("tol", LyapunovConfig.tol), positive=True),
        threshold=_num("lyapunov.threshold", ly.get("threshold", LyapunovConfig.threshold)),
        classify=classify,
    )

    output = doc.get("output", RunConfig.output)
    if not isinstance(output, str) or not output:
        raise ConfigError(f"output: expected a non-empty path string, got {output!r}")
    workers = doc.get("workers")
    if workers is not None:
        workers = _num("workers", workers, integer=True, positive=True)

    needs_E = task in ("poincare", "scan", "overlay") or (point is not None and len(point) == 2)
    if needs_E and E is None:
        raise ConfigError(f"section.E: required for task {task!r}")
    if task in ("entropy-trace", "converge") and point is None:
        raise ConfigError(f"quantum.point: required for task {task!r}")
    if task in ("entropy-trace", "scan", "overlay") and qu.N is None and point is None:
        raise ConfigError(f"quantum.N: required for task {task!r} unless quantum.point is given "
                          "to find the truncation first")
    return RunConfig(task, model, E, cl, qu, gr, lc, output, workers, preset)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a TOML run configuration.

    Syntax errors raise :class:`ConfigError` carrying the line and column;
    validation errors name the offending field.
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error: {exc}") from exc
    return from_dict(doc)


def to_dict(cfg: RunConfig) -> dict:
    """Fully expanded document for ``cfg`` (no preset indirection)."""
    d = asdict(cfg)
    out: dict = {"task": cfg.task, "output": cfg.output}
    if cfg.preset is not None:
        out["preset"] = cfg.preset
    if cfg.workers is not None:
        out["workers"] = cfg.workers
    out["model"] = asdict(cfg.model)
    if cfg.E is not None:
        out["section"] = {"E": cfg.E}
    cl = d["classical"]
    cl["seeds"] = [list(s) for s in cfg.classical.seeds]
    out["classical"] = cl
    qu = {k: v for k, v in d["quantum"].items() if v is not None}
    qu["window"] = list(cfg.quantum.window)
    if cfg.quantum.point is not None:
        qu["point"] = list(cfg.quantum.point)
    out["quantum"] = qu
    gr = d["grid"]
    gr["q1_range"], gr["p1_range"] = list(cfg.grid.q1_range), list(cfg.grid.p1_range)
    out["grid"] = gr
    out["lyapunov"] = d["lyapunov"]
    return out


def render(cfg: RunConfig) -> str:
    """TOML text that :func:`parse_config` maps back to ``cfg``.

    Preset values are written out in full, so the text stays valid if a preset changes.
    """
    return tomli_w.dumps(to_dict(cfg))
