"""Run resolved scenario configs, write RunRecords, execute sweeps."""

import hashlib
import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from .. import __version__
from ..tomography import jsonable
from .config import OUTPUT_ROOT_ENV, config_hash, resolve_config, sweep_cells
from .scenarios import METRIC_COLUMNS, SCENARIO_FUNCS, OutputDir

RECORD_NAME = "run_record.json"


class ScenarioError(RuntimeError):
    """Runtime or numeric failure inside a scenario, with context."""


@dataclass
class RunRecord:
    config: dict
    config_hash: str
    version: str
    duration_s: float
    manifest: list
    status: str = "ok"
    metrics: dict = field(default_factory=dict)
    error: str = ""

    def to_json(self):
        return json.dumps(jsonable(asdict(self)), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


def default_output_dir(cfg):
    root = os.environ.get(OUTPUT_ROOT_ENV) or "runs"
    return os.path.join(root, f"{cfg['scenario']}-{config_hash(cfg)[:12]}")


def output_dir_for(cfg, out=None):
    return out or cfg.get("output_dir") or default_output_dir(cfg)


def _write_record(root, record):
    with open(os.path.join(root, RECORD_NAME), "w", encoding="utf-8") as fh:
        fh.write(record.to_json())


def run_scenario(cfg, out_dir):
    """Run one non-sweep scenario; returns its :class:`RunRecord`.

    ``cfg`` must already be resolved. Module errors are re-raised as
    :class:`ScenarioError` naming the scenario; the partial record is
    still written.
    """
    start = time.perf_counter()
    out = OutputDir(out_dir)
    func = SCENARIO_FUNCS[cfg["scenario"]]
    try:
        metrics = func(cfg, out)
    except Exception as exc:
        record = RunRecord(cfg, config_hash(cfg), __version__, time.perf_counter() - start, out.manifest,
                           "failed", {}, f"{type(exc).__name__}: {exc}")
        _write_record(out_dir, record)
        raise ScenarioError(f"scenario {cfg['scenario']} failed: {type(exc).__name__}: {exc}") from exc
    record = RunRecord(cfg, config_hash(cfg), __version__, time.perf_counter() - start, out.manifest,
                       "ok", metrics)
    _write_record(out_dir, record)
    return record


def _run_cell(args):
    cell_cfg, cell_dir = args
    try:
        record = run_scenario(resolve_config(cell_cfg), cell_dir)
        return {"status": "ok", "metrics": record.metrics, "error": ""}
    except Exception as exc:  # recorded per cell; the sweep continues
        cause = exc.__cause__ or exc
        return {"status": "failed", "metrics": {}, "error": f"{type(cause).__name__}: {cause}",
                "trace": traceback.format_exc(limit=3)}


def run_sweep(cfg, out_dir, workers=1):
    """Cartesian sweep; one directory per cell, one summary CSV.

    Returns ``(RunRecord, n_failed)``.
    """
    start = time.perf_counter()
    out = OutputDir(out_dir)
    cells = list(sweep_cells(cfg))
    jobs = [(c, os.path.join(out_dir, f"cell_{i:04d}")) for i, (c, _) in enumerate(cells)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(job) for job in jobs]

    axes = list(cfg["sweep"]["axes"])
    rows = []
    for i, ((_, assignment), res) in enumerate(zip(cells, results)):
        m = res["metrics"]
        rows.append([i, *(assignment[a] for a in axes), res["status"],
                     *(m.get(c, "") for c in METRIC_COLUMNS), res["error"]])
    out.csv("summary.csv", ["cell", *axes, "status", *METRIC_COLUMNS, "error"], rows)
    # cell outputs belong to this run as well
    for i, job in enumerate(jobs):
        rec_path = os.path.join(job[1], RECORD_NAME)
        if os.path.exists(rec_path):
            for entry in RunRecord.load(rec_path).manifest:
                out.manifest.append({**entry, "path": f"cell_{i:04d}/{entry['path']}"})
            with open(rec_path, "rb") as fh:
                data = fh.read()
            out.manifest.append({"path": f"cell_{i:04d}/{RECORD_NAME}",
                                 "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
    n_failed = sum(r["status"] != "ok" for r in results)
    status = "ok" if n_failed == 0 else "partial"
    record = RunRecord(cfg, config_hash(cfg), __version__, time.perf_counter() - start, out.manifest, status,
                       {"cells": len(results), "failed": n_failed},
                       "" if not n_failed else f"{n_failed} of {len(results)} cells failed")
    _write_record(out_dir, record)
    return record, n_failed


def verify_manifest(run_dir):
    """``(record, problems)``: missing files or hash mismatches in the manifest."""
    record = RunRecord.load(os.path.join(run_dir, RECORD_NAME))
    problems = []
    for entry in record.manifest:
        path = os.path.join(run_dir, entry["path"])
        if not os.path.exists(path):
            problems.append(f"missing {entry['path']}")
            continue
        with open(path, "rb") as fh:
            if hashlib.sha256(fh.read()).hexdigest() != entry["sha256"]:
                problems.append(f"hash mismatch {entry['path']}")
    return record, problems
