"""Registered experiments.

Each experiment splits into independent trials. A trial receives the resolved
parameters, its index and its own seed, and returns plain picklable data.
``merge`` turns the trial results, sorted by trial seed, into output tables
and JSON documents. ``plot`` reads those outputs back as long-format
(x, y, series) rows.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .. import assoc_memory as am
from .. import engram_gate as eg
from .. import plasticity as pl
from .. import regularizers as rg
from .. import stdp_snn as sn
from ..core import BIPOLAR, Pattern, Rng, flip_bits, random_dense_bits, random_pattern_set
from ..errors import ConfigError, EngramLabError
from ..sdm import SdmStore


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple
    rows: list


@dataclass(frozen=True)
class Document:
    name: str
    content: dict


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    defaults: dict
    trials: int
    trial: Callable
    merge: Callable
    plot: Callable
    validate: Callable | None = None


def read_table(path) -> list[dict]:
    """Rows of a data file written by the harness (comment lines skipped)."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def _positive(params, *names):
    for n in names:
        v = params[n]
        for x in v if isinstance(v, list) else [v]:
            if not x > 0:
                raise ConfigError("must be positive", f"params.{n}")


def _fractions(params, name):
    for x in params[name]:
        if not 0 < x <= 1:
            raise ConfigError("entries must lie in (0, 1]", f"params.{name}")


# spass-convergence --------------------------------------------------------

SPASS_COLUMNS = ("u", "v_target", "kappa", "w_final", "w_star", "rel_err", "w0", "seed")


def _spass_trial(p, index, seed):
    g = Rng(seed).generator
    rows = []
    for u in p["u"]:
        for vt in p["v_target"]:
            for kappa in p["kappa"]:
                params = pl.PlasticityParams.from_kappa(kappa, vt, gamma=p["gamma"])
                w_star = pl.spass_fixed_point_weight(u, params)
                w0 = w_star * g.uniform(p["w0_low"], p["w0_high"])
                traj = pl.integrate(pl.SPASS, pl.SynapseState(w0, u), params, p["dt"], p["t_max"],
                                    linear_neuron=True, record_every=10 ** 9)
                rows.append((u, vt, kappa, traj.w_final, w_star,
                             abs(traj.w_final - w_star) / w_star, w0, seed))
    return rows


def _spass_merge(p, results):
    return [Table("spass_convergence", SPASS_COLUMNS, [r for res in results for r in res])]


def _spass_plot(p, out: Path):
    return [(r["kappa"], r["rel_err"], f"u={r['u']},v_target={r['v_target']},seed={r['seed']}")
            for r in read_table(out / "spass_convergence.csv")]


def _spass_validate(p):
    _positive(p, "u", "v_target", "kappa", "gamma", "dt", "t_max", "w0_low", "w0_high")
    if p["w0_low"] > p["w0_high"]:
        raise ConfigError("w0_low must not exceed w0_high", "params.w0_low")


# hopfield-capacity --------------------------------------------------------

CAPACITY_SUMMARY_COLUMNS = ("N", "coding", "a", "M_max", "seed")


def _sparse_level(N: int) -> float:
    return float(np.log2(N) / N)


def _capacity_trial(p, index, seed):
    rng = Rng(seed)
    summary, curve = [], []
    for k, N in enumerate(p["N"]):
        for j, (coding, a) in enumerate((("dense", 0.5), ("sparse", _sparse_level(N)))):
            res = am.measure_capacity(rng.split(2 * k + j), N, a, criterion=p["criterion"],
                                      trials=p["probe_trials"])
            summary.append((N, coding, a, res.M_max, seed))
            curve.extend(res.curve)
    return summary, curve


def _capacity_merge(p, results):
    return [Table("capacity", CAPACITY_SUMMARY_COLUMNS, [r for s, _ in results for r in s]),
            Table("capacity_curve", am.CAPACITY_COLUMNS, [r for _, c in results for r in c])]


def _capacity_plot(p, out):
    return [(r["N"], r["M_max"], r["coding"]) for r in read_table(out / "capacity.csv")]


def _capacity_validate(p):
    for N in p["N"]:
        if N < 8:
            raise ConfigError("N must be at least 8", "params.N")
    if not 0 <= p["criterion"] < 0.5:
        raise ConfigError("must lie in [0, 0.5)", "params.criterion")
    _positive(p, "probe_trials")


# sdm-recall ---------------------------------------------------------------

SDM_COLUMNS = ("seed", "corruption", "flipped_bits", "converged", "recovered", "iterations",
               "final_distance")
SDM_SUMMARY_COLUMNS = ("corruption", "trials", "recovered", "success_rate")


def _sdm_trial(p, index, seed):
    rng = Rng(seed)
    n = p["n"]
    store = SdmStore.random(rng.split(0), n, p["H"],
                            activation_probability=p["activation_probability"])
    data_rng = rng.split(1)
    pats = [Pattern(random_dense_bits(data_rng, n)) for _ in range(p["M"])]
    for x in pats:
        store.write(x, x)
    rows = []
    for k, c in enumerate(p["corruption"]):
        flips = int(round(c * n))
        cue = flip_bits(rng.split(2 + k), pats[0], flips)
        res = store.read_iterative(cue, p["max_iters"])
        dist = int(np.count_nonzero(res.pattern.bits != pats[0].bits))
        rows.append((seed, c, flips, int(res.converged), int(res.converged and dist == 0),
                     res.iterations, dist))
    return rows


def _sdm_merge(p, results):
    rows = [r for res in results for r in res]
    summary = []
    for c in p["corruption"]:
        hits = [r[4] for r in rows if r[1] == c]
        summary.append((c, len(hits), sum(hits), sum(hits) / len(hits)))
    return [Table("sdm_recall", SDM_COLUMNS, rows),
            Table("sdm_summary", SDM_SUMMARY_COLUMNS, summary)]


def _sdm_plot(p, out):
    series = f"n={p['n']},H={p['H']},M={p['M']}"
    return [(r["corruption"], r["success_rate"], series) for r in read_table(out / "sdm_summary.csv")]


def _sdm_validate(p):
    _positive(p, "n", "H", "M", "max_iters", "activation_probability")
    for c in p["corruption"]:
        if not 0 <= c <= 1:
            raise ConfigError("entries must lie in [0, 1]", "params.corruption")
    if p["activation_probability"] > 1:
        raise ConfigError("must lie in (0, 1]", "params.activation_probability")


# sparsity-sweep -----------------------------------------------------------

SPARSITY_COLUMNS = ("beta", "seed", "recon_loss", "baseline", "mean_activation", "mean_cosine",
                    "capacity_proxy")


def mean_pairwise_cosine(H) -> float:
    """Mean cosine similarity over distinct pairs of rows."""
    H = np.asarray(H, dtype=np.float64)
    U = H / np.maximum(np.linalg.norm(H, axis=1, keepdims=True), 1e-300)
    C = U @ U.T
    n = H.shape[0]
    return float((C.sum() - np.trace(C)) / (n * (n - 1)))


def capacity_proxy(recon: float, baseline: float, cosine: float) -> float:
    """Reconstruction quality times code decorrelation:
    ``(1 - recon/baseline) * (1 - mean pairwise cosine)``."""
    return (1.0 - recon / baseline) * (1.0 - cosine)


def _sparsity_trial(p, index, seed):
    rng = Rng(seed)
    X = rg.synthetic_patches(rng.split(0), count=p["patches"])
    base = rg.mean_output_baseline(X)
    sample = X[: p["cosine_sample"]]
    rows = []
    for beta in p["beta"]:
        cfg = rg.SaeConfig(hidden=p["hidden"], rho=p["rho"], beta=beta, lr=p["lr"])
        model, hist = rg.train_sparse_autoencoder(rng.split(1), X, cfg, epochs=p["epochs"],
                                                  log_every=p["epochs"])
        _, recon, _, act = hist.final
        cos = mean_pairwise_cosine(model.encode(sample))
        rows.append((beta, seed, recon, base, act, cos, capacity_proxy(recon, base, cos)))
    return rows


def _sparsity_merge(p, results):
    return [Table("sparsity_sweep", SPARSITY_COLUMNS, [r for res in results for r in res])]


def _sparsity_plot(p, out):
    rows = read_table(out / "sparsity_sweep.csv")
    return [(beta, float(np.mean([float(r["capacity_proxy"]) for r in rows if float(r["beta"]) == beta])),
             "capacity_proxy") for beta in p["beta"]]


def _sparsity_validate(p):
    _positive(p, "hidden", "rho", "lr", "epochs", "patches", "cosine_sample")
    if any(b < 0 for b in p["beta"]):
        raise ConfigError("entries must be non-negative", "params.beta")
    if p["rho"] >= 1:
        raise ConfigError("must lie in (0, 1)", "params.rho")
    if p["cosine_sample"] < 2 or p["cosine_sample"] > p["patches"]:
        raise ConfigError("must lie in [2, patches]", "params.cosine_sample")


# gating-continual ---------------------------------------------------------

GATING_ACCURACY_COLUMNS = ("gate_mode",) + eg.ACCURACY_COLUMNS
GATING_RETENTION_COLUMNS = ("seed", "gate_mode", "gated_flag", "retention", "mean_gate_activity")
_GATING_NET_KEYS = ("hidden", "epochs", "batch_size", "lr", "meta", "gate_lr", "l0_lambda")


def _suite(p, seed):
    if p["suite"] == "blobs":
        return eg.gaussian_blob_suite(Rng(seed), n_tasks=p["n_tasks"])
    return eg.permuted_digit_suite(Rng(seed), n_tasks=p["n_tasks"])


def _gating_trial(p, index, seed):
    suite = _suite(p, seed)
    base = eg.ContinualConfig(**{k: p[k] for k in _GATING_NET_KEYS})
    runs = [("none", eg.run_continual(seed, suite, replace(base, gated=False)))]
    for mode in p["gate_modes"]:
        runs.append((mode, eg.run_continual(seed, suite, replace(base, gated=True, gate_mode=mode))))
    acc = [(mode,) + row for mode, res in runs for row in res.rows()]
    ret = [(seed, mode, int(res.gated), res.retention(0), float(np.mean(res.mean_gate_activity)))
           for mode, res in runs]
    return acc, ret


def _gating_merge(p, results):
    return [Table("gating_accuracy", GATING_ACCURACY_COLUMNS, [r for a, _ in results for r in a]),
            Table("gating_retention", GATING_RETENTION_COLUMNS, [r for _, t in results for r in t])]


def _gating_plot(p, out):
    rows = [r for r in read_table(out / "gating_accuracy.csv") if r["eval_task"] == "0"]
    pts = []
    for mode in ["none"] + p["gate_modes"]:
        series = "control" if mode == "none" else f"gated-{mode}"
        for t in range(p["n_tasks"]):
            acc = [float(r["accuracy"]) for r in rows if r["gate_mode"] == mode and r["after_task"] == str(t)]
            pts.append((t, float(np.mean(acc)), series))
    return pts


def _gating_validate(p):
    if p["suite"] not in ("blobs", "digits"):
        raise ConfigError("must be 'blobs' or 'digits'", "params.suite")
    for m in p["gate_modes"]:
        if m not in (eg.FROZEN, eg.TRAINED):
            raise ConfigError(f"entries must be {eg.FROZEN!r} or {eg.TRAINED!r}", "params.gate_modes")
    if p["n_tasks"] < 2:
        raise ConfigError("need at least two tasks", "params.n_tasks")
    _positive(p, "hidden", "epochs", "batch_size", "lr")
    for k in ("meta", "gate_lr", "l0_lambda"):
        if p[k] < 0:
            raise ConfigError("must be non-negative", f"params.{k}")


# stdp-assembly ------------------------------------------------------------

ASSEMBLY_SUMMARY_COLUMNS = ("seed", "variant", "modularity", "selectivity", "recall_in", "recall_out",
                            "recall_whole", "rest_rate_exc", "rest_rate_inh", "rest_correlation",
                            "rest_cv")
TRACE_COLUMNS = ("seed", "variant", "time_ms", "modularity")
_RULE_KEYS = ("a_plus", "a_minus", "tau_plus", "tau_minus")
_ASSEMBLY_SKIP = ("ee_rule", "inh_rule", "anti_hebbian", "snapshot_every_ms")


def _assembly_defaults() -> dict:
    d = {f.name: f.default for f in fields(sn.AssemblyConfig) if f.name not in _ASSEMBLY_SKIP}
    cfg = sn.AssemblyConfig()
    d.update({k: getattr(cfg.ee_rule, k) for k in _RULE_KEYS})
    d["ee_w_max"] = cfg.ee_rule.w_max
    d["inh_w_max"] = cfg.inh_rule.w_max
    d["ablation"] = True
    d["write_raster"] = True
    return d


def assembly_config(p) -> sn.AssemblyConfig:
    """AssemblyConfig from flat harness parameters (one STDP window shared by all plastic synapses)."""
    rule = {k: p[k] for k in _RULE_KEYS}
    kw = {f.name: p[f.name] for f in fields(sn.AssemblyConfig) if f.name not in _ASSEMBLY_SKIP}
    return sn.AssemblyConfig(ee_rule=sn.StdpRule(w_max=p["ee_w_max"], **rule),
                             inh_rule=sn.StdpRule(w_max=p["inh_w_max"], **rule), **kw)


def _assembly_trial(p, index, seed):
    cfg = assembly_config(p)
    variants = [("full", cfg)] + ([("ablated", sn.ablate_anti_hebbian(cfg))] if p["ablation"] else [])
    out = []
    for name, c in variants:
        rep = sn.run_assembly_experiment(Rng(seed), c)
        raster = (rep.raster_steps, rep.raster_ids) if p["write_raster"] else None
        out.append((name, rep.to_dict(), raster))
    return seed, out


def _summary_row(seed, name, d):
    flat = dict(d, rest_rate_exc=d["rates"]["rest_exc_hz"], rest_rate_inh=d["rates"]["rest_inh_hz"],
                seed=seed, variant=name)
    return tuple(flat[k] for k in ASSEMBLY_SUMMARY_COLUMNS)


def _assembly_merge(p, results):
    summary, trace, outputs = [], [], []
    for seed, variants in results:
        for name, d, raster in variants:
            summary.append(_summary_row(seed, name, d))
            trace.extend((seed, name, t, m) for t, m in d["modularity_trace"])
            outputs.append(Document(f"assembly_{seed}_{name}", d))
            if raster is not None:
                steps, ids = raster
                times = (steps * p["dt"]).round(6).tolist()
                outputs.append(Table(f"raster_{seed}_{name}", sn.RASTER_COLUMNS,
                                     list(zip(ids.tolist(), times))))
    return [Table("assembly_summary", ASSEMBLY_SUMMARY_COLUMNS, summary),
            Table("modularity_trace", TRACE_COLUMNS, trace)] + outputs


def _assembly_plot(p, out):
    return [(r["time_ms"], r["modularity"], f"seed={r['seed']},{r['variant']}")
            for r in read_table(out / "modularity_trace.csv")]


def _assembly_validate(p):
    try:
        assembly_config(p)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"params.{exc.field}") from exc
    except EngramLabError as exc:
        raise ConfigError(str(exc), "params") from exc


# engram-lifecycle ---------------------------------------------------------

LIFECYCLE_COLUMNS = ("stage", "fraction", "successes", "trials", "success_rate")
LIFECYCLE_TRIAL_COLUMNS = ("seed", "stage", "fraction", "success")
PRE, POST = "pre_prune", "post_prune"


def lifecycle_trial(p, seed):
    """Encode sparse patterns, prune, and recall one of them from nested partial cues.

    Returns ``{stage: [success per fraction]}`` with success meaning exact
    retrieval of the target pattern.
    """
    rng = Rng(seed)
    ps = random_pattern_set(rng.split(0), p["patterns"], p["N"], p["coding_level"], BIPOLAR)
    mem = am.store_patterns(ps, centered=True, threshold_fraction=p["threshold_fraction"])
    pruned = am.consolidate_prune(mem, p["prune_quantile"])
    rc = am.RecallConfig(max_iterations=p["max_iterations"])
    target = ps[0]
    out = {PRE: [], POST: []}
    for f in p["fractions"]:
        cue = am.partial_cue(rng.split(1), target, f)  # same stream each time: nested cues
        out[PRE].append(int(am.recall(mem, cue, rc).pattern == target))
        out[POST].append(int(am.recall(pruned, cue, rc).pattern == target))
    return out


def _lifecycle_trial(p, index, seed):
    return seed, lifecycle_trial(p, seed)


def _lifecycle_merge(p, results):
    per_trial, summary = [], []
    for stage in (PRE, POST):
        for k, f in enumerate(p["fractions"]):
            wins = [res[stage][k] for _, res in results]
            summary.append((stage, f, sum(wins), len(wins), sum(wins) / len(wins)))
    for seed, res in results:
        for stage in (PRE, POST):
            per_trial.extend((seed, stage, f, s) for f, s in zip(p["fractions"], res[stage]))
    return [Table("lifecycle", LIFECYCLE_COLUMNS, summary),
            Table("lifecycle_trials", LIFECYCLE_TRIAL_COLUMNS, per_trial)]


def _lifecycle_plot(p, out):
    return [(r["fraction"], r["success_rate"], r["stage"]) for r in read_table(out / "lifecycle.csv")]


def _lifecycle_validate(p):
    _positive(p, "N", "patterns", "max_iterations")
    _fractions(p, "fractions")
    if sorted(p["fractions"]) != p["fractions"]:
        raise ConfigError("must be increasing", "params.fractions")
    if not 0 < p["coding_level"] < 0.5:
        raise ConfigError("must lie in (0, 0.5)", "params.coding_level")
    if not 0 < p["prune_quantile"] < 1:
        raise ConfigError("must lie in (0, 1)", "params.prune_quantile")


# registry -----------------------------------------------------------------

REGISTRY = {e.name: e for e in (
    Experiment("spass-convergence",
               "Integrate synaptic scaling on a (u, v_target, kappa) grid and compare with the fixed point",
               dict(u=[0.5, 1.0, 2.0], v_target=[0.5, 1.0, 2.0], kappa=[0.5, 1.0, 2.0], gamma=1.0,
                    dt=1e-3, t_max=500.0, w0_low=0.25, w0_high=1.75),
               1, _spass_trial, _spass_merge, _spass_plot, _spass_validate),
    Experiment("hopfield-capacity",
               "Largest error-free pattern count for dense and sparse coding",
               dict(N=[128, 256, 512], criterion=0.01, probe_trials=5),
               1, _capacity_trial, _capacity_merge, _capacity_plot, _capacity_validate),
    Experiment("sdm-recall",
               "Iterative SDM reading from corrupted cues",
               dict(n=256, H=2000, M=20, corruption=[0.05, 0.1, 0.15, 0.2, 0.25, 0.3], max_iters=20,
                    activation_probability=0.01),
               50, _sdm_trial, _sdm_merge, _sdm_plot, _sdm_validate),
    Experiment("sparsity-sweep",
               "Sparse autoencoder over penalty weights beta with a capacity proxy",
               dict(beta=[0.0, 0.3, 1.0, 3.0, 10.0], hidden=64, rho=0.05, lr=1.0, epochs=1000,
                    patches=2000, cosine_sample=500),
               1, _sparsity_trial, _sparsity_merge, _sparsity_plot, _sparsity_validate),
    Experiment("gating-continual",
               "Two-task continual learning with and without engram gating",
               dict(suite="blobs", n_tasks=2, gate_modes=[eg.FROZEN, eg.TRAINED], hidden=128, epochs=10,
                    batch_size=32, lr=0.05, meta=1.0, gate_lr=0.05, l0_lambda=0.0),
               5, _gating_trial, _gating_merge, _gating_plot, _gating_validate),
    Experiment("stdp-assembly",
               "Assembly formation in an E/I spiking network with inhibitory STDP",
               _assembly_defaults(),
               1, _assembly_trial, _assembly_merge, _assembly_plot, _assembly_validate),
    Experiment("engram-lifecycle",
               "Encode, prune and recall from partial cues",
               dict(N=256, coding_level=0.05, patterns=16, fractions=[0.2, 0.4, 0.6, 0.8, 1.0],
                    prune_quantile=0.5, threshold_fraction=0.5, max_iterations=100),
               200, _lifecycle_trial, _lifecycle_merge, _lifecycle_plot, _lifecycle_validate),
)}
