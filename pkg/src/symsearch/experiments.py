"""Experiment drivers behind the command line: solve, bench, noise sweeps and ablations.

Reports are plain dicts that validate against ``schemas/report.schema.json``.
Wall-clock figures never enter a report (they would break byte-level
reproducibility); they go to a separate timing dict instead.
"""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources

import numpy as np

from . import __version__
from .benchmarks import (Dataset, Registry, add_noise, r_squared, recovery_rate, sample_dataset,
                         symbolically_equivalent)
from .config import build
from .expr import Vocabulary, build_tree, evaluate
from .selfsearch import run_search, substream

REPORT_SCHEMA_VERSION = 1
ABLATIONS = ("entropy", "constraints", "snrmse")


class DataError(ValueError):
    pass


def read_csv(path) -> Dataset:
    """Load ``x1,...,xm,y`` data; diagnostics name the offending row and column."""
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise DataError(f"{path}: cannot open ({e.strerror})") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    m = len(header) - 1
    expected = [f"x{j}" for j in range(1, m + 1)] + ["y"]
    if m < 1 or header != expected:
        raise DataError(f"{path}: row 1: header must be {','.join(expected) if m >= 1 else 'x1,...,xm,y'}"
                        f", got {','.join(header)!r}")
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {r}: expected {len(header)} fields, got {len(row)}")
        vals = []
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {r}, column {header[c]}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: row {r}, column {header[c]}: non-finite value {cell!r}")
            vals.append(v)
        data.append(vals)
    if len(data) < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {len(data)}")
    arr = np.array(data)
    return Dataset(arr[:, :-1], arr[:, -1], {"source": str(path)})


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode_index", "reward", "running_best", "wall_seconds"])
        for ep, z, best, wall in trace:
            w.writerow([ep, repr(float(z)), repr(float(best)), f"{wall:.6f}"])


def apply_ablation(cfg: dict, disable) -> dict:
    """Config with the named components switched off."""
    disable = set(disable)
    bad = disable - set(ABLATIONS)
    if "feasibility" in bad:
        raise ValueError("feasibility masking cannot be disabled: it guarantees termination")
    if bad:
        raise ValueError(f"unknown ablation {sorted(bad)}; choose from {', '.join(ABLATIONS)}")
    cfg = json.loads(json.dumps(cfg))
    if "entropy" in disable:
        cfg["model"]["entropy_term_enabled"] = False
    if "constraints" in disable:
        for k in ("forbid_inverse_chain", "forbid_nested_trig", "forbid_negative_into_log_sqrt"):
            cfg["constraints"][k] = False
    if "snrmse" in disable:
        cfg["objective"]["lam"] = 0.0
    return cfg


def _best_expression(result):
    if result.best_traversal is None:
        return None, None
    return build_tree(result.best_traversal), result.best_constants


def _run_seed(seed, bench_index, run):
    return int(np.random.SeedSequence([seed, bench_index, run]).generate_state(1)[0])


def run_one(cfg: dict, bench_name: str, bench_index: int, run: int, seed: int, noise=0.0):
    """One (benchmark, run) cell: sample, search, check equivalence.  Returns (row, timing)."""
    spec = Registry.load()[bench_name]
    rseed = _run_seed(seed, bench_index, run)
    ds = sample_dataset(spec, rng=substream(rseed, "dataset"))
    clean = ds.y
    if noise:
        ds = Dataset(ds.X, add_noise(ds.y, noise, substream(rseed, "noise")), ds.provenance)
    vocab = spec.vocabulary()
    run_cfg, model_cfg = build(cfg, rseed, len(vocab))
    t0 = time.perf_counter()
    res = run_search(ds, run_cfg, model_cfg, vocab=vocab)
    wall = time.perf_counter() - t0
    tree, consts = _best_expression(res)
    recovered, r2 = False, None
    if tree is not None:
        recovered = symbolically_equivalent((tree, consts), spec.target(), substream(rseed, "probe"),
                                            box=spec.box, n_variables=spec.n_variables)
        y_hat, ok = evaluate(tree, ds.X, consts)
        if ok:
            r2 = r_squared(clean, y_hat)
    row = {"benchmark": spec.name, "run": run, "seed": rseed, "noise": noise,
           "recovered": bool(recovered), "best_infix": res.best_infix,
           "reward": float(res.best_reward), "r2": r2, "episodes": res.episodes,
           "stop_reason": res.stop_reason}
    return row, {"benchmark": spec.name, "run": run, "wall_seconds": wall}


def _run_cell(args):
    return run_one(*args)


def aggregate(rows) -> dict:
    if not rows:
        return {"runs": 0, "recovery_rate": None, "mean_r2": None}
    r2 = [r["r2"] for r in rows if r["r2"] is not None]
    return {"runs": len(rows), "recovery_rate": recovery_rate(r["recovered"] for r in rows),
            "mean_r2": float(np.mean(r2)) if r2 else None}


def _group(label, settings, rows):
    names = list(dict.fromkeys(r["benchmark"] for r in rows))
    per = [{"benchmark": n, **aggregate([r for r in rows if r["benchmark"] == n])} for n in names]
    return {"label": label, "settings": settings, "rows": rows, "per_benchmark": per,
            "aggregate": aggregate(rows)}


def _cells(cfg, suite, runs, seed, noise, jobs):
    reg = Registry.load()
    specs = reg.suite(suite)
    work = [(cfg, s.name, i, r, seed, noise) for i, s in enumerate(specs) if s.supported
            for r in range(runs)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            out = list(ex.map(_run_cell, work))
    else:
        out = [_run_cell(w) for w in work]
    return [o[0] for o in out], [o[1] for o in out]


def manifest(command, cfg, **extra) -> dict:
    return {"command": command, "config": cfg,
            "versions": {"symsearch": __version__, "numpy": np.__version__},
            "report_schema_version": REPORT_SCHEMA_VERSION, **extra}


def _timing(timings):
    return {"started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "cells": timings,
            "mean_wall_seconds": float(np.mean([t["wall_seconds"] for t in timings])) if timings else None}


def bench(cfg, suite, runs, seed, jobs=1):
    """Every supported benchmark of ``suite`` ``runs`` times.  Returns (report, timing)."""
    if runs < 0:
        raise ValueError("runs must be >= 0")
    rows, timings = _cells(cfg, suite, runs, seed, 0.0, jobs)
    rep = {"manifest": manifest("bench", cfg, suite=suite, runs=runs, seed=seed),
           "groups": [_group("baseline", {"noise": 0.0, "disabled": []}, rows)]}
    return rep, _timing(timings)


def noise_sweep(cfg, suite, levels, runs, seed, jobs=1):
    levels = [float(x) for x in levels]
    for lv in levels:
        if not 0 <= lv <= 0.1:
            raise ValueError(f"noise level must lie in [0, 0.1], got {lv}")
    groups, timings = [], []
    for lv in levels:
        rows, t = _cells(cfg, suite, runs, seed, lv, jobs)
        groups.append(_group(f"noise={lv:g}", {"noise": lv, "disabled": []}, rows))
        timings += t
    rep = {"manifest": manifest("noise", cfg, suite=suite, runs=runs, seed=seed, levels=levels),
           "groups": groups}
    return rep, _timing(timings)


def ablate(cfg, disable, suite, runs, seed, jobs=1):
    disable = sorted(set(disable))
    ablated_cfg = apply_ablation(cfg, disable)
    rows, timings = _cells(cfg, suite, runs, seed, 0.0, jobs)
    groups = [_group("baseline", {"noise": 0.0, "disabled": []}, rows)]
    if disable:
        rows2, t2 = _cells(ablated_cfg, suite, runs, seed, 0.0, jobs)
        groups.append(_group("ablated", {"noise": 0.0, "disabled": disable}, rows2))
        timings += t2
    rep = {"manifest": manifest("ablate", cfg, suite=suite, runs=runs, seed=seed, disabled=disable,
                                ablated_config=ablated_cfg),
           "groups": groups}
    return rep, _timing(timings)


def solve(cfg, ds: Dataset, seed, extensions=("const",)):
    """Search on user data.  Returns (report, result)."""
    vocab = Vocabulary.from_library(ds.n_variables, extensions)
    run_cfg, model_cfg = build(cfg, seed, len(vocab))
    res = run_search(ds, run_cfg, model_cfg, vocab=vocab)
    tree, consts = _best_expression(res)
    r2 = None
    if tree is not None:
        y_hat, ok = evaluate(tree, ds.X, consts)
        if ok:
            r2 = r_squared(ds.y, y_hat)
    row = {"benchmark": str(ds.provenance.get("source", "data")), "run": 0, "seed": seed,
           "noise": 0.0, "recovered": bool(res.solved), "best_infix": res.best_infix,
           "reward": float(res.best_reward), "r2": r2, "episodes": res.episodes,
           "stop_reason": res.stop_reason}
    rep = {"manifest": manifest("solve", cfg, seed=seed, library=list(extensions),
                                data=row["benchmark"], rows=int(ds.X.shape[0])),
           "groups": [_group("solve", {"noise": 0.0, "disabled": []}, [row])]}
    return rep, res


def report_schema() -> dict:
    return json.loads(resources.files("symsearch.schemas").joinpath("report.schema.json").read_text())


def validate_report(rep: dict):
    import jsonschema
    jsonschema.validate(rep, report_schema())


def dump_report(rep: dict) -> str:
    return json.dumps(rep, indent=2, sort_keys=True) + "\n"
