"""Command-line front end.

Commands::

    spikefit fit INSTANCE.json --engine snn-float
    spikefit synth --N 200 --d 8 --eta 20 --out inst.json
    spikefit line-fixed --trials 10 --out runs/line
    spikefit affine --corr pairs.txt --homography H.txt
    spikefit grid --grid-spec grid.json --out runs/grid
    spikefit compare --grid-spec grid.json --out runs/cmp

Exit codes: 0 success, 2 invalid input or configuration, 3 engine failure.
Every random choice derives from ``--seed``; without it a seed is drawn
from OS entropy and printed to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import bench, io
from .engine import SnnConfig, ls_refine, run
from .errors import ConfigError, SpikeFitError
from .fixedpoint import FixedPointConfig, integer_eps, quantize_dataset
from .model import Dataset, normalized_distance
from .ransac import RansacConfig, ransac

ENGINES = ("snn-float", "snn-fixed", "ransac")
EXIT_OK, EXIT_INVALID, EXIT_ENGINE = 0, 2, 3

# per-family defaults: synthetic grid, integer line fitting, affine registration
GRID_DEFAULTS = dict(K=300, M=200, alpha=0.02, eps_inlier=0.5)
LINE_DEFAULTS = dict(K=100, M=200, alpha=0.02, eps_inlier=4.0)
AFFINE_DEFAULTS = dict(K=300, M=200, alpha=0.02, eps_inlier=3.0)

CONFIG_SECTIONS = {"snn": SnnConfig, "fixedpoint": FixedPointConfig, "ransac": RansacConfig}


def derive_seed(master: int, *keys: int) -> int:
    """Independent 32-bit seed for a labelled sub-stream of ``master``."""
    ss = np.random.SeedSequence([int(master), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# -- configuration ------------------------------------------------------------


@dataclass
class Settings:
    snn: SnnConfig
    fp: FixedPointConfig
    ransac: RansacConfig
    refine: bool = False
    timing: bool = False


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path}: top level must be an object")
    for section, body in doc.items():
        if section not in CONFIG_SECTIONS:
            raise ConfigError(f"unknown config section {section!r}; use {sorted(CONFIG_SECTIONS)}")
        if not isinstance(body, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        allowed = {f.name for f in fields(CONFIG_SECTIONS[section])} - {"seed"}
        unknown = set(body) - allowed
        if unknown:
            raise ConfigError(f"unknown fields in {section!r}: {sorted(unknown)}")
    return doc


def build_settings(args, defaults: dict) -> Settings:
    doc = load_config(getattr(args, "config", None))
    snn_kw = dict(defaults)
    snn_kw.update(doc.get("snn", {}))
    rs_kw = {"K": snn_kw["K"], "eps_inlier": snn_kw["eps_inlier"]}
    rs_kw.update(doc.get("ransac", {}))
    fp_kw = dict(doc.get("fixedpoint", {}))
    for flag, key in (("K", "K"), ("M", "M"), ("alpha", "alpha"), ("eps", "eps_inlier")):
        val = getattr(args, flag, None)
        if val is not None:
            snn_kw[key] = val
            if key in ("K", "eps_inlier"):
                rs_kw[key] = val
    if getattr(args, "beta", None) is not None:
        fp_kw["beta"] = args.beta
    try:
        return Settings(
            SnnConfig(**snn_kw),
            FixedPointConfig(**fp_kw),
            RansacConfig(**rs_kw),
            refine=getattr(args, "refine", False),
            timing=getattr(args, "timing", False),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def resolve_seed(args) -> int:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        return args.seed
    seed = int(np.random.SeedSequence().entropy % (1 << 32))
    print(f"seed: {seed} (drawn from entropy; pass --seed {seed} to reproduce)", file=sys.stderr)
    return seed


# -- tasks --------------------------------------------------------------------


@dataclass
class Task:
    instance_id: str
    cell: str
    engine: str
    seed: int
    dataset: Dataset | None = None
    theta_gt: np.ndarray | None = None
    eps: float | None = None
    corrs: bench.CorrespondenceSet | None = None
    keep_result: bool = False


def validate_engine_input(engine: str, dataset: Dataset, settings: Settings, eps) -> None:
    """Reject inputs an engine cannot run on, before any work starts."""
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; choose from {ENGINES}")
    if engine == "snn-fixed":
        quantize_dataset(dataset, settings.fp)
        integer_eps(settings.snn.eps_inlier if eps is None else eps)


def fit_dataset(engine: str, dataset: Dataset, settings: Settings, seed: int, eps=None):
    eps = settings.snn.eps_inlier if eps is None else eps
    if engine == "ransac":
        result = ransac(dataset, replace(settings.ransac, seed=seed, eps_inlier=eps))
    else:
        cfg = replace(settings.snn, seed=seed, eps_inlier=eps)
        backend = "fixed" if engine == "snn-fixed" else "float"
        result = run(dataset, cfg, backend=backend, fp=settings.fp)
    if settings.refine and result.theta_best is not None:
        result = ls_refine(result, dataset, eps)
    return result


def execute(task: Task, settings: Settings):
    """Run one task; returns ``(result_row, FitResult or None)``."""
    t0 = time.perf_counter()
    if task.corrs is not None:
        s = settings.snn
        H, result = bench.fit_affine(task.corrs, task.engine, K=s.K, M=s.M, alpha=s.alpha,
                                     eps_px=task.eps, seed=task.seed, refine=True)
        metric = None
        if task.corrs.H_gt is not None:
            metric = bench.corner_auc(H, task.corrs.H_gt, task.corrs.image_size)
    else:
        result = fit_dataset(task.engine, task.dataset, settings, task.seed, task.eps)
        metric = None
        if task.theta_gt is not None and result.theta_best is not None:
            metric = normalized_distance(task.theta_gt, result.theta_best)
    wall = time.perf_counter() - t0 if settings.timing else None
    row = [task.instance_id, task.engine, result.psi_best, metric,
           result.op_counts.synaptic_ops, wall]
    return row, (result if task.keep_result else None)


def _execute_star(pair):
    return execute(*pair)


def run_tasks(tasks: list[Task], settings: Settings, jobs: int = 1):
    """Execute tasks, serially or on a process pool; output order is the task order."""
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_execute_star, [(t, settings) for t in tasks]))
    return [execute(t, settings) for t in tasks]


def summarize(tasks: list[Task], rows) -> list[list]:
    """Mean and population std of the metric per (cell, engine)."""
    groups: dict[tuple[str, str], list[float]] = {}
    for task, row in zip(tasks, rows):
        groups.setdefault((task.cell, task.engine), [])
        if row[3] is not None:
            groups[(task.cell, task.engine)].append(float(row[3]))
    out = []
    for (cell, engine), vals in sorted(groups.items()):
        a = np.asarray(vals)
        out.append([cell, engine, a.size,
                    float(a.mean()) if a.size else None,
                    float(a.std()) if a.size else None])
    return out


def deltas(summary) -> list[list]:
    by = {(c, m): mean for c, m, _, mean, _ in summary}
    out = []
    for cell in sorted({c for c, *_ in summary}):
        a, b = by.get((cell, "snn-float")), by.get((cell, "ransac"))
        out.append([cell, a, b, None if a is None or b is None else a - b])
    return out


def emit(out_dir, tables: dict, stdout_table: str) -> None:
    """Write every table under ``out_dir``, or print the main one."""
    if out_dir is None:
        header, rows = tables[stdout_table]
        sys.stdout.write(io.write_csv(None, header, rows))
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in tables.items():
        io.write_csv(out / f"{name}.csv", header, rows)


def _engines(args, default):
    engines = args.engine or list(default)
    for e in engines:
        if e not in ENGINES:
            raise ConfigError(f"unknown engine {e!r}; choose from {ENGINES}")
    # stable, de-duplicated
    return sorted(set(engines), key=engines.index)


def _positive(name, value):
    if value < 1:
        raise ConfigError(f"{name} must be >= 1, got {value}")
    return value


# -- commands -----------------------------------------------------------------


def cmd_fit(args) -> int:
    settings = build_settings(args, GRID_DEFAULTS)
    dataset, theta_gt, file_eps = io.load_instance(args.instance)
    eps = args.eps if args.eps is not None else file_eps
    engine = _engines(args, ["snn-float"])
    if len(engine) != 1:
        raise ConfigError("fit takes a single --engine")
    engine = engine[0]
    if engine == "snn-fixed" and args.eps is None and file_eps is None:
        eps = settings.snn.eps_inlier
    validate_engine_input(engine, dataset, settings, eps)
    seed = resolve_seed(args)
    trials = _positive("--trials", args.trials)
    stem = Path(args.instance).stem
    tasks = [Task(f"{stem}/t{k:03d}", stem, engine, derive_seed(seed, k), dataset, theta_gt, eps,
                  keep_result=(k == 0)) for k in range(trials)]
    results = _run(tasks, settings, args.jobs)
    rows = [r for r, _ in results]
    first = results[0][1]
    tables = {"results": (io.RESULT_COLUMNS, rows)}
    fixed = engine == "snn-fixed"
    tables["trace"] = (io.trace_header(dataset.d, fixed), list(io.trace_rows(first, dataset.d, fixed)))
    c = first.op_counts
    tables["opcounts"] = (io.OPCOUNT_COLUMNS, [[first.method, c.synaptic_ops, c.neuron_updates, c.spikes]])
    emit(args.out, tables, "results")
    return EXIT_OK


def cmd_synth(args) -> int:
    seed = resolve_seed(args)
    n = _positive("--instances", args.instances)
    out = Path(args.out)
    if n > 1:
        out.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        spec = bench.SyntheticSpec(N=args.N, d=args.d, eta_percent=args.eta,
                                   seed=derive_seed(seed, i), integer_mode=args.integer)
        if args.integer:
            if args.d != 2:
                raise ConfigError("integer instances are lines (d = 2)")
            ds, theta = bench.gen_integer_line_instance(spec)
        else:
            ds, theta = bench.gen_linear_instance(spec)
        path = out / f"instance_{i:03d}.json" if n > 1 else out
        io.save_instance(path, ds, theta, args.eps)
    return EXIT_OK


def _grid_tasks(cells, instances, trials, engines, seed, settings, integer=False):
    tasks = []
    for N, d, eta in cells:
        cell = f"N{N}-d{d}-eta{eta:g}"
        for i in range(instances):
            spec = bench.SyntheticSpec(N=N, d=d, eta_percent=eta, integer_mode=integer,
                                       seed=derive_seed(seed, 0, N, d, round(eta * 1000), i))
            ds, theta = (bench.gen_integer_line_instance if integer else bench.gen_linear_instance)(spec)
            for engine in engines:
                validate_engine_input(engine, ds, settings, None)
            for k in range(trials):
                tseed = derive_seed(seed, 1, N, d, round(eta * 1000), i, k)
                for engine in engines:
                    tasks.append(Task(f"{cell}-i{i:03d}/t{k:03d}", cell, engine, tseed, ds, theta))
    return tasks


def load_grid_spec(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"grid spec {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("grid spec must be an object")
    allowed = {"N", "d", "eta", "trials", "instances", "engines", "benchmark_grid"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown grid spec fields {sorted(unknown)}")
    if doc.get("benchmark_grid"):
        cells = bench.benchmark_grid()
    else:
        try:
            Ns, ds, etas = (list(doc[k]) for k in ("N", "d", "eta"))
        except KeyError as exc:
            raise ConfigError(f"grid spec needs lists N, d and eta (missing {exc})") from None
        except TypeError:
            raise ConfigError("grid spec N, d and eta must be lists") from None
        if not (Ns and ds and etas):
            raise ConfigError("grid spec lists must be non-empty")
        cells = [(int(N), int(d), float(e)) for N in Ns for d in ds for e in etas]
    for N, d, eta in cells:
        if N < d or d < 1 or not 0 <= eta <= 100:
            raise ConfigError(f"invalid grid cell N={N}, d={d}, eta={eta}")
    return {
        "cells": cells,
        "trials": _positive("trials", int(doc.get("trials", 10))),
        # the benchmark grid's 13 cells hold 5 instances each
        "instances": _positive("instances", int(doc.get("instances", 5 if doc.get("benchmark_grid") else 1))),
        "engines": list(doc.get("engines", [])),
    }


def _grid_common(args, default_engines):
    settings = build_settings(args, GRID_DEFAULTS)
    if args.grid_spec is None:
        raise ConfigError("--grid-spec is required")
    spec = load_grid_spec(args.grid_spec)
    if args.trials is not None:
        spec["trials"] = _positive("--trials", args.trials)
    args.engine = args.engine or spec["engines"] or None
    engines = _engines(args, default_engines)
    seed = resolve_seed(args)
    tasks = _grid_tasks(spec["cells"], spec["instances"], spec["trials"], engines, seed, settings)
    return settings, tasks


def _run(tasks, settings, jobs):
    try:
        return run_tasks(tasks, settings, jobs)
    except SpikeFitError as exc:
        raise EngineFailure(str(exc)) from exc


class EngineFailure(Exception):
    pass


def cmd_grid(args) -> int:
    settings, tasks = _grid_common(args, ["snn-float", "ransac"])
    rows = [r for r, _ in _run(tasks, settings, args.jobs)]
    summary = summarize(tasks, rows)
    emit(args.out, {"results": (io.RESULT_COLUMNS, rows),
                    "summary": (io.SUMMARY_COLUMNS, summary)}, "summary")
    return EXIT_OK


def cmd_compare(args) -> int:
    if args.engine:
        raise ConfigError("compare always runs snn-float against ransac")
    settings, tasks = _grid_common(args, ["snn-float", "ransac"])
    tasks = [t for t in tasks if t.engine in ("snn-float", "ransac")]
    rows = [r for r, _ in _run(tasks, settings, args.jobs)]
    summary = summarize(tasks, rows)
    emit(args.out, {"results": (io.RESULT_COLUMNS, rows),
                    "summary": (io.SUMMARY_COLUMNS, summary),
                    "deltas": (io.DELTA_COLUMNS, deltas(summary))}, "deltas")
    return EXIT_OK


def cmd_line_fixed(args) -> int:
    settings = build_settings(args, LINE_DEFAULTS)
    engines = _engines(args, ["snn-fixed", "ransac"])
    seed = resolve_seed(args)
    trials = _positive("--trials", args.trials if args.trials is not None else 10)
    cells = [(args.N, 2, float(e)) for e in args.etas]
    tasks = _grid_tasks(cells, _positive("--instances", args.instances), trials, engines,
                        seed, settings, integer=True)
    rows = [r for r, _ in _run(tasks, settings, args.jobs)]
    summary = summarize(tasks, rows)
    emit(args.out, {"results": (io.RESULT_COLUMNS, rows),
                    "summary": (io.SUMMARY_COLUMNS, summary)}, "summary")
    return EXIT_OK


def cmd_affine(args) -> int:
    settings = build_settings(args, AFFINE_DEFAULTS)
    engines = _engines(args, ["snn-float", "ransac"])
    if "snn-fixed" in engines:
        raise ConfigError("affine fitting runs on real-valued data; use snn-float or ransac")
    seed = resolve_seed(args)
    eps = settings.snn.eps_inlier
    trials = _positive("--trials", args.trials if args.trials is not None else 1)
    if args.corr is not None:
        corrs = [(Path(args.corr).stem,
                  io.load_correspondences(args.corr, args.homography, tuple(args.image_size)))]
    else:
        corrs = [(f"affine-i{i:03d}",
                  bench.gen_affine_instance(args.pairs, args.outlier_frac, args.noise_px,
                                            tuple(args.image_size), derive_seed(seed, 2, i)))
                 for i in range(_positive("--instances", args.instances))]
    for _, c in corrs:
        bench.affine_to_dataset(c)
    tasks = [Task(f"{name}/t{k:03d}", "affine", engine, derive_seed(seed, 3, j, k), eps=eps, corrs=c)
             for j, (name, c) in enumerate(corrs) for k in range(trials) for engine in engines]
    rows = [r for r, _ in _run(tasks, settings, args.jobs)]
    summary = summarize(tasks, rows)
    emit(args.out, {"results": (io.RESULT_COLUMNS, rows),
                    "summary": (io.SUMMARY_COLUMNS, summary)}, "results")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_common(p, engine=True):
    if engine:
        p.add_argument("--engine", action="append", choices=ENGINES,
                       help="engine to run (repeatable)")
    p.add_argument("--config", help="JSON file with 'snn', 'fixedpoint' and 'ransac' sections")
    p.add_argument("--seed", type=int, help="master seed (default: drawn from entropy and printed)")
    p.add_argument("--trials", type=int, help="repetitions per instance")
    p.add_argument("--out", help="output directory (default: print the main CSV)")
    p.add_argument("--K", type=int, help="number of sampling windows / iterations")
    p.add_argument("--M", type=int, help="gradient steps per window")
    p.add_argument("--alpha", type=float, help="learning rate")
    p.add_argument("--eps", type=float, help="inlier threshold")
    p.add_argument("--beta", type=int, help="fixed-point shift")
    p.add_argument("--refine", action="store_true", help="least-squares refit on the inliers")
    p.add_argument("--timing", action="store_true", help="fill the wall_time column")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikefit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one JSON instance")
    p.add_argument("instance")
    _add_common(p)
    p.set_defaults(func=cmd_fit, trials=1)

    p = sub.add_parser("synth", help="generate synthetic JSON instances")
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--eta", type=float, default=20.0, help="outlier percentage")
    p.add_argument("--integer", action="store_true", help="integer line instance (d = 2)")
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--eps", type=float, help="inlier threshold stored in the file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="file (one instance) or directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("line-fixed", help="integer line fitting: snn-fixed against ransac")
    _add_common(p)
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--etas", type=float, nargs="+", default=[10, 20, 30, 40, 50])
    p.add_argument("--instances", type=int, default=5)
    p.set_defaults(func=cmd_line_fixed)

    p = sub.add_parser("affine", help="affine registration scored by corner AUC@10")
    _add_common(p)
    p.add_argument("--corr", help="correspondence file, one 'x y x2 y2' per line")
    p.add_argument("--homography", help="ground-truth homography file (9 values)")
    p.add_argument("--image-size", type=int, nargs=2, default=[640, 480], metavar=("W", "H"))
    p.add_argument("--instances", type=int, default=5, help="synthetic instances without --corr")
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--outlier-frac", type=float, default=0.3)
    p.add_argument("--noise-px", type=float, default=0.5)
    p.set_defaults(func=cmd_affine)

    for name, func, text in (("grid", cmd_grid, "synthetic difficulty grid"),
                             ("compare", cmd_compare, "snn-float against ransac per grid cell")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--grid-spec", help="JSON with lists N, d, eta (or benchmark_grid: true)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except EngineFailure as exc:
        print(f"spikefit: engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except (SpikeFitError, ValueError) as exc:
        print(f"spikefit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
