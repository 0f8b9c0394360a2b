"""Run registered experiments, persist results, and emit plot data.

Data files are CSV with one ``# config=<json>`` comment line followed by
the header row; JSON documents carry the same echo under ``"config"``.
Floats are written with ``repr`` so reruns are byte-identical. The manifest
is written last and atomically.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..core import derive_seed
from .config import ExperimentConfig
from .experiments import REGISTRY, Document, Table

WORKERS_ENV = "ENGRAMLAB_WORKERS"
MANIFEST_NAME = "manifest.json"
PLOT_COLUMNS = ("x", "y", "series")


@dataclass(frozen=True)
class ResultManifest:
    experiment: str
    version: str
    config: dict
    seeds: list
    files: list
    duration_s: float
    path: str | None = None

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "version": self.version, "config": self.config,
                "seeds": self.seeds, "files": self.files, "duration_s": self.duration_s}

    @classmethod
    def load(cls, path) -> "ResultManifest":
        with open(path) as fh:
            d = json.load(fh)
        return cls(d["experiment"], d["version"], d["config"], d["seeds"], d["files"],
                   d["duration_s"], str(path))

    @property
    def output_dir(self) -> Path:
        return Path(self.path).parent if self.path else Path(self.config["output_dir"])


def trial_seeds(cfg: ExperimentConfig) -> list[int]:
    return [derive_seed(cfg.seed, i) for i in range(cfg.trials)]


def worker_count(cfg: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is None:
        return cfg.workers
    try:
        n = int(env)
    except ValueError:
        n = 0
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
    return n


def _call_trial(name, params, index, seed):
    return seed, REGISTRY[name].trial(params, index, seed)


def run_trials(cfg: ExperimentConfig, order=None, workers: int = 1) -> list:
    """Trial results sorted by trial seed. ``order`` permutes execution only."""
    seeds = trial_seeds(cfg)
    order = range(len(seeds)) if order is None else list(order)
    if sorted(order) != list(range(len(seeds))):
        raise ValueError("order must be a permutation of the trial indices")
    args = [(cfg.experiment, cfg.params, i, seeds[i]) for i in order]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_call_trial, *zip(*args)))
    else:
        done = [_call_trial(*a) for a in args]
    done.sort(key=lambda sr: sr[0])
    return [r for _, r in done]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _config_line(echo: dict) -> str:
    return "# config=" + json.dumps(echo, sort_keys=True, separators=(",", ":"))


def write_table(path, table: Table, echo: dict):
    with open(path, "w", newline="") as fh:
        fh.write(_config_line(echo) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            if len(row) != len(table.columns):
                raise ValueError(f"{table.name}: row width {len(row)} != {len(table.columns)}")
            w.writerow([_cell(v) for v in row])


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else None
    return v


def write_document(path, doc: Document, echo: dict):
    body = dict(_jsonable(doc.content))
    body["config"] = echo
    with open(path, "w") as fh:
        fh.write(json.dumps(body, indent=2, sort_keys=True) + "\n")


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(cfg: ExperimentConfig, outputs, out_dir: Path) -> list[dict]:
    echo = dict(cfg.data_echo(), version=__version__)
    files = []
    for item in outputs:
        if isinstance(item, Table):
            path = out_dir / f"{item.name}.csv"
            write_table(path, item, echo)
        else:
            path = out_dir / f"{item.name}.json"
            write_document(path, item, echo)
        files.append({"name": path.name, "sha256": _sha256(path)})
    return files


def run(cfg: ExperimentConfig, order=None) -> ResultManifest:
    """Execute an experiment, write its data files, then the manifest."""
    exp = REGISTRY[cfg.experiment]
    t0 = time.perf_counter()
    results = run_trials(cfg, order, worker_count(cfg))
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = write_outputs(cfg, exp.merge(cfg.params, results), out_dir)
    manifest = ResultManifest(cfg.experiment, __version__, cfg.to_dict(), trial_seeds(cfg), files,
                              round(time.perf_counter() - t0, 3), str(out_dir / MANIFEST_NAME))
    _atomic_write(out_dir / MANIFEST_NAME, json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    return manifest


def emit_plot_data(manifest) -> Path:
    """Write ``plot_data.csv`` (x, y, series) next to the manifest's outputs.

    ``manifest`` is a :class:`ResultManifest` or a path to ``manifest.json``.
    Raises FileNotFoundError if any listed output is missing.
    """
    if not isinstance(manifest, ResultManifest):
        manifest = ResultManifest.load(manifest)
    out = manifest.output_dir
    missing = [f["name"] for f in manifest.files if not (out / f["name"]).exists()]
    if missing:
        raise FileNotFoundError(f"missing outputs in {out}: {', '.join(missing)}")
    exp = REGISTRY[manifest.experiment]
    params = manifest.config["params"]
    rows = exp.plot(params, out)
    echo = {k: manifest.config[k] for k in ("experiment", "seed", "trials", "params")}
    echo["version"] = manifest.version
    path = out / "plot_data.csv"
    write_table(path, Table("plot_data", PLOT_COLUMNS, [(float(x), float(y), s) for x, y, s in rows]), echo)
    return path
