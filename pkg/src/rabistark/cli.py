"""``rsl`` command-line front end.

    rsl <task> --config <file> [--out <dir>] [--workers <n>] [--preset <name>]

Exit codes: 0 success, 1 configuration error, 2 numerical error, 3 I/O
error.  On failure a JSON object ``{"error": ..., "kind": ..., "exit_code": ...}``
is printed to stderr and, when the output directory exists, written to
``error.json`` there.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
import scipy
import tomli

from . import __version__, classical, io, quantum, scan
from .config import PRESETS, TASKS, RunConfig, from_dict, to_dict
from .errors import ConfigError, NumericError
from .model import PhasePoint, solve_p2_on_section

log = logging.getLogger("rsl")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    meta: dict


def versions() -> dict:
    return {"rabistark": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _point(cfg: RunConfig) -> PhasePoint:
    pt = cfg.quantum.point
    if len(pt) == 4:
        return PhasePoint(*pt)
    p2 = solve_p2_on_section(cfg.model, cfg.E, pt[0], pt[1])
    if p2 is None:
        raise ConfigError(f"quantum.point = {list(pt)} has no lift onto the section at E = {cfg.E}")
    return PhasePoint(pt[0], pt[1], 0.0, p2)


def _truncation(cfg: RunConfig, meta: dict) -> quantum.FockTruncation:
    """Configured cutoff, or the converged one at ``quantum.point`` when none is given."""
    if cfg.quantum.N is not None:
        return quantum.FockTruncation(cfg.quantum.N)
    q = cfg.quantum
    res = quantum.find_truncation(cfg.model, _point(cfg), q.window, q.dt, eps=q.eps, cap=q.cap, report=True)
    meta["converge"] = {"N_crit": res.N, "table": [[n, d] for n, d in res.table]}
    return res.trunc


def _seeds(cfg: RunConfig):
    if cfg.classical.seeds:
        return list(cfg.classical.seeds)
    return scan.overlay_seeds(cfg.scan_grid(), cfg.classical.seeds_per_axis)


def _task_poincare(cfg, out, workers, meta):
    c = cfg.classical
    seeds = _seeds(cfg)
    por = classical.section_portrait(cfg.model, cfg.E, seeds, t_end=c.t_end, tol=c.tol,
                                     max_crossings=c.max_crossings, workers=workers)
    io.write_crossings_csv(out / "crossings.csv", por.crossings)
    g = cfg.grid
    io.svg_portrait(out / "portrait.svg", por, g.q1_range, g.p1_range)
    meta["seeds"] = [list(s) for s in seeds]
    meta["skipped_seeds"] = {str(k): v for k, v in por.skipped.items()}
    meta["n_crossings"] = len(por.crossings)
    return [("crossings", len(por.crossings)), ("skipped seeds", len(por.skipped))]


def _task_entropy_trace(cfg, out, workers, meta):
    q = cfg.quantum
    pt = _point(cfg)
    trunc = _truncation(cfg, meta)
    times = quantum.time_grid(q.window, q.dt)
    psi0 = quantum.coherent_initial_state(pt, trunc)
    sp = quantum.Spectrum.for_model(cfg.model, trunc)
    S = sp.entropy_trace(psi0, times)
    io.write_trace_csv(out / "trace.csv", times, S)
    io.write_state(out / "state_final.bin", sp.evolve(psi0, times[-1:])[0], trunc.N)
    S_m = quantum.time_average(S, times)
    meta.update(point=list(pt), N=trunc.N, S_m=S_m, S_max=float(S.max()))
    return [("N", trunc.N), ("S_m", S_m), ("max S", float(S.max()))]


def _task_converge(cfg, out, workers, meta):
    q = cfg.quantum
    pt = _point(cfg)
    res = quantum.find_truncation(cfg.model, pt, q.window, q.dt, eps=q.eps, cap=q.cap, report=True)
    io.write_table(out / "converge.csv", ["N", "max_deviation"], ([n, io.fmt(d)] for n, d in res.table))
    meta.update(point=list(pt), N_crit=res.N, table=[[n, d] for n, d in res.table])
    return [("N_crit", res.N)] + [(f"dev N={n}", d) for n, d in res.table]


def _task_scan(cfg, out, workers, meta):
    q = cfg.quantum
    trunc = _truncation(cfg, meta)
    emap = scan.scan_entropy_map(cfg.model, cfg.scan_grid(), trunc, q.window, q.dt, workers=workers)
    io.write_map_csv(out / "map.csv", emap)
    io.svg_heatmap(out / "map.svg", emap)
    meta.update(map=emap.meta, mask_counts=emap.counts())
    vals = emap.values[~emap.mask]
    return [("N", trunc.N), ("cells", emap.values.size), ("masked", int(emap.mask.sum())),
            ("mean S_m", float(vals.mean()) if vals.size else float("nan"))]


def _task_overlay(cfg, out, workers, meta):
    q, c, ly = cfg.quantum, cfg.classical, cfg.lyapunov
    trunc = _truncation(cfg, meta)
    ov = scan.scan_section_overlay(cfg.model, cfg.scan_grid(), c.seeds_per_axis, t_end=c.t_end, tol=c.tol,
                                   trunc=trunc, window=q.window, dt=q.dt, max_crossings=c.max_crossings,
                                   classify=ly.classify, lyap_t_end=ly.t_end, workers=workers)
    if ly.classify and ly.threshold != classical.LYAP_THRESHOLD:
        meta["contrast_at_threshold"] = scan.classification_contrast(ov.entropy_map, ov.lyapunov, ly.threshold)
    io.write_bundle(out, ov)
    bundle_meta = json.loads((out / "meta.json").read_text())
    meta.update(overlay=bundle_meta)
    return [("N", trunc.N), ("crossings", len(ov.portrait.crossings)), ("contrast", ov.contrast),
            ("rank correlation", ov.correlation)]


_TASKS = {"poincare": _task_poincare, "entropy-trace": _task_entropy_trace, "converge": _task_converge,
          "scan": _task_scan, "overlay": _task_overlay}


def _fail(code: int, kind: str, exc: BaseException, out: Path | None) -> RunResult:
    err = {"error": str(exc), "kind": kind, "type": type(exc).__name__, "exit_code": code}
    print(json.dumps(err), file=sys.stderr)
    if out is not None and out.is_dir():
        try:
            io.write_json(out / "error.json", err)
        except OSError:
            pass
    return RunResult(code, out, err)


def run(cfg: RunConfig, workers: int | None = None) -> RunResult:
    """Execute ``cfg`` and write its artifacts plus ``meta.json`` into ``cfg.output``."""
    out = Path(cfg.output)
    workers = workers if workers is not None else cfg.workers
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"output directory {out} is not writable")
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc, None)
    meta = {"task": cfg.task, "config": to_dict(cfg), "versions": versions(), "workers": workers}
    t0 = time.perf_counter()
    try:
        summary = _TASKS[cfg.task](cfg, out, workers, meta)
        meta["wall_time_s"] = time.perf_counter() - t0
        # overlay bundles write their own meta.json first; this one supersedes it
        io.write_json(out / "meta.json", meta)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc, out)
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, "numeric", exc, out)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc, out)
    print(io.summary_table([("task", cfg.task), ("output", str(out))] + summary
                           + [("wall time [s]", meta["wall_time_s"])]))
    return RunResult(EXIT_OK, out, meta)


def load_config(task: str, path: str | None, preset: str | None, out: str | None) -> RunConfig:
    doc: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            doc = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: config syntax error: {exc}") from exc
    if doc.get("task", task) != task:
        raise ConfigError(f"task: config file says {doc['task']!r} but the command line asks for {task!r}")
    if preset is not None:
        if doc.get("preset", preset) != preset:
            raise ConfigError(f"preset: config file says {doc['preset']!r} but --preset is {preset!r}")
        doc["preset"] = preset
    doc["task"] = task
    if out is not None:
        doc["output"] = out
    return from_dict(doc)


def _workers(arg: int | None) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get("RSL_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"RSL_WORKERS must be a positive integer, got {env!r}") from exc
        if n < 1:
            raise ConfigError(f"RSL_WORKERS must be a positive integer, got {env!r}")
        return n
    return None


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="rsl", description="Rabi-Stark quantum-classical correspondence runs")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", help="TOML run configuration")
    ap.add_argument("--out", help="output directory (overrides the config's output)")
    ap.add_argument("--workers", type=int, help="worker threads (default: RSL_WORKERS or the config)")
    ap.add_argument("--preset", choices=sorted(PRESETS), help="named parameter set merged under the config")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.config is None and args.preset is None:
        return _fail(EXIT_CONFIG, "config", ConfigError("need --config and/or --preset"), None).exit_code
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {args.workers}")
        cfg = load_config(args.task, args.config, args.preset, args.out)
        workers = _workers(args.workers)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc, None).exit_code
    return run(cfg, workers).exit_code


if __name__ == "__main__":
    sys.exit(main())
