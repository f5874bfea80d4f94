"""Parameter sweeps, CSV emission and group maps."""
from __future__ import annotations

import copy
import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .config import _read_tree, _merge, build_config
from .exceptions import ConfigError
from .geometry import map_index_to_grid
from .oracle import random_placement_baseline
from .pipeline import Scenario, evaluate_selection, full_pipeline, rng_stream
from .signal import PositionSelection

SWEEP_VARS = ("antennas", "candidates", "power_dBm", "ris_units", "hwi_ratio", "group_size")
SWEEP_METHODS = ("alg2", "alg3", "fpa", "no_ris", "passive_ris", "best_random", "worst_random",
                 "no_hwi")
ROW_FIELDS = ("sweep_value", "seed", "R_U", "R_E", "R_s", "alpha", "iterations", "wall_ms",
              "status")
AGG_FIELDS = ("method", "sweep_value", "n", "mean_R_s", "std_R_s", "mean_R_U", "mean_R_E")


@dataclass
class ExperimentSpec:
    scenario: Path
    sweep: str
    values: list
    methods: list
    seeds: list
    output: Path
    overrides: dict = field(default_factory=dict)
    max_iter: int = None
    record_timing: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.sweep not in SWEEP_VARS:
            raise ConfigError("sweep", f"must be one of {SWEEP_VARS}")
        if not self.values:
            raise ConfigError("values", "must be a nonempty list")
        if not self.seeds:
            raise ConfigError("seeds", "must be a nonempty list")
        if not self.methods:
            raise ConfigError("methods", "must be a nonempty list")
        for m in self.methods:
            if m not in SWEEP_METHODS:
                raise ConfigError("methods", f"unknown method {m!r}")
        self.scenario, self.output = Path(self.scenario), Path(self.output)


def load_spec(path, output=None):
    path = Path(path)
    if not path.exists():
        raise ConfigError("<file>", f"{path} does not exist")
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    known = set(ExperimentSpec.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown field")
    for key in ("scenario", "sweep", "values", "methods", "seeds"):
        if key not in raw:
            raise ConfigError(key, "missing")
    raw = dict(raw)
    raw["scenario"] = (path.parent / raw["scenario"]).resolve()
    out = output if output is not None else raw.get("output", "out")
    raw["output"] = Path(out) if output is not None else (path.parent / out).resolve()
    return ExperimentSpec(**raw)


def apply_sweep(tree, var, value):
    """Return a copy of a config tree with one sweep variable set."""
    tree = copy.deepcopy(tree)
    s, g = tree["system"], tree["geometry"]
    if var == "antennas":
        s["N_a"] = int(value)
    elif var == "candidates":
        n_v = int(g["grid_dims"][1])
        if int(value) % n_v:
            raise ConfigError("values", f"candidate count {value} is not a multiple of N_v={n_v}")
        g["grid_dims"] = [int(value) // n_v, n_v]
    elif var == "power_dBm":
        s["P0_dBm"] = float(value)
    elif var == "ris_units":
        m_v = int(g["ris_dims"][1])
        if int(value) % m_v:
            raise ConfigError("values", f"RIS size {value} is not a multiple of M_v={m_v}")
        g["ris_dims"] = [int(value) // m_v, m_v]
    elif var == "hwi_ratio":
        s["mu_t"] = s["mu_r"] = float(value)
    elif var == "group_size":
        s["n0"] = int(value)
    return tree


def method_tree(tree, method):
    tree = copy.deepcopy(tree)
    if method == "no_ris":
        tree["system"]["ris_mode"] = "none"
    elif method == "passive_ris":
        tree["system"]["ris_mode"] = "passive"
    elif method == "no_hwi":
        tree["system"]["mu_t"] = tree["system"]["mu_r"] = 0.0
    return tree


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _row(value, seed, report=None, iterations=0, wall=None, status="ok"):
    r = dict(sweep_value=value, seed=seed, R_U=None, R_E=None, R_s=None, alpha=None,
             iterations=iterations, wall_ms=wall, status=status)
    if report is not None:
        r.update(report.as_row())
    return r


def run_point(tree, method, value, seed, master, max_iter=None, record_timing=False):
    """One (method, sweep value, seed) evaluation; failures become status rows."""
    t0 = time.perf_counter()
    try:
        cfg, geo = build_config(method_tree(tree, method))
        scn = Scenario.build(cfg, geo, (master, seed))
        if method in ("best_random", "worst_random"):
            base = random_placement_baseline(scn, cfg.random_draws,
                                             rng_stream((master, seed), "random-placement"),
                                             max_iter=max_iter)
            i = int(np.argmax(base.values) if method == "best_random" else np.argmin(base.values))
            sel = PositionSelection.from_indices(base.selections[i], geo.grid_dims,
                                                 geo.grid_spacing)
            res = evaluate_selection(scn, sel, max_iter)
            report, iters = res.report, res.iterations
        else:
            placement = method if method in ("alg2", "alg3", "fpa") else cfg.placement
            res = full_pipeline(scn, placement, max_iter)
            report, iters = res.report, res.iterations
        status = "ok"
    except Exception as exc:           # recorded, the sweep continues
        report, iters, status = None, 0, f"error:{type(exc).__name__}"
    wall = (time.perf_counter() - t0) * 1e3 if record_timing else None
    return _row(value, seed, report, iters, wall, status)


def _run_job(args):
    return run_point(*args)


def run_sweep(spec: ExperimentSpec, master_seed=0, quiet=True):
    """Run every (method, value, seed) point; write one CSV per method plus an aggregate.

    Returns
    -------
    dict mapping method -> list of row dicts
    """
    base = _read_tree(spec.scenario)
    if spec.overrides:
        base = _merge(base, spec.overrides)
    jobs = []
    for method in spec.methods:
        for value in spec.values:
            tree = apply_sweep(base, spec.sweep, value)
            for seed in spec.seeds:
                jobs.append((tree, method, value, seed, master_seed, spec.max_iter,
                             spec.record_timing))
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(_run_job, jobs))
    else:
        rows = []
        for j in jobs:
            rows.append(_run_job(j))
            if not quiet:
                r = rows[-1]
                print(f"{j[1]:>13s} {spec.sweep}={j[2]} seed={j[3]} R_s={_fmt(r['R_s'])} "
                      f"{r['status']}", flush=True)
    out = {m: [] for m in spec.methods}
    for j, r in zip(jobs, rows):
        out[j[1]].append(r)
    spec.output.mkdir(parents=True, exist_ok=True)
    for m, rs in out.items():
        write_rows(spec.output / f"{m}.csv", ROW_FIELDS, rs)
    write_rows(spec.output / "aggregate.csv", AGG_FIELDS, aggregate(out, spec.values))
    return out


def aggregate(results, values):
    rows = []
    for m, rs in results.items():
        for v in values:
            ok = [r for r in rs if r["sweep_value"] == v and r["status"] == "ok"]
            rs_s = np.array([r["R_s"] for r in ok], float)
            mean = lambda key: float(np.mean([r[key] for r in ok])) if ok else None
            rows.append(dict(method=m, sweep_value=v, n=len(ok),
                             mean_R_s=float(rs_s.mean()) if ok else None,
                             std_R_s=float(rs_s.std()) if ok else None,
                             mean_R_U=mean("R_U"), mean_R_E=mean("R_E")))
    return rows


def write_rows(path, fields, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(fields)
        for r in rows:
            wr.writerow([_fmt(r[f]) for f in fields])


def emit_group_map(plan, geo, path):
    """Row-major cell table ``(n_h, n_v, group_id, ssr, selected)``."""
    N = geo.N
    gid = plan.group_of(N)
    sel = plan.selection.t if plan.selection is not None else np.zeros(N, int)
    rows = []
    for n in range(N):
        n_h, n_v = map_index_to_grid(n, geo.grid_dims[1], geo.grid_dims[0])
        g = int(gid[n])
        rows.append(dict(n_h=n_h, n_v=n_v, group_id=g,
                         ssr=float(plan.ssr[g]) if g >= 0 else None, selected=int(sel[n])))
    write_rows(path, ("n_h", "n_v", "group_id", "ssr", "selected"), rows)
    return rows
