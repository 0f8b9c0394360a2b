"""Leaky integrate-and-fire network with spike-timing-dependent plasticity.

Membrane potentials are in threshold units and integrated with forward
Euler, ``dv/dt = (v_rest - v)/tau_m + I``. Synapses are current jumps
delivered one step after the presynaptic spike. Weights are stored as
non-negative magnitudes ``W[post, pre]`` and signed by the presynaptic type,
so Dale's law holds by construction.

Plastic synapses follow one rule each, identified per presynaptic neuron and
applied only onto excitatory targets:

* pair STDP with nearest-neighbour pairing and hard bounds, Hebbian or
  anti-Hebbian (the anti-Hebbian window is the exact negation);
* a calcium-threshold rule (an alternative to STDP, never combined with it).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numba
import numpy as np

from .core import Rng
from .errors import ConfigError, InputError, InstabilityError

HEBBIAN = "hebbian"
ANTI_HEBBIAN = "anti_hebbian"
RASTER_COLUMNS = ("neuron_id", "time_ms")
MAX_MEAN_RATE_HZ = 500.0

_NEVER = -1e12  # "no spike yet" time stamp


# plasticity rules -------------------------------------------------------

@dataclass(frozen=True)
class StdpRule:
    a_plus: float = 0.01
    a_minus: float = 0.012
    tau_plus: float = 20.0
    tau_minus: float = 20.0
    polarity: str = HEBBIAN
    w_min: float = 0.0
    w_max: float = 1.0

    def __post_init__(self):
        if not (self.tau_plus > 0 and self.tau_minus > 0):
            raise ConfigError("STDP time constants must be positive", "tau_plus/tau_minus")
        if self.polarity not in (HEBBIAN, ANTI_HEBBIAN):
            raise ConfigError(f"polarity must be {HEBBIAN!r} or {ANTI_HEBBIAN!r}", "polarity")
        if not 0 <= self.w_min <= self.w_max:
            raise ConfigError("need 0 <= w_min <= w_max (weights are magnitudes)", "w_min/w_max")
        if self.a_plus < 0 or self.a_minus < 0:
            raise ConfigError("STDP amplitudes must be non-negative", "a_plus/a_minus")

    @property
    def sign(self) -> float:
        return 1.0 if self.polarity == HEBBIAN else -1.0

    def reversed(self) -> "StdpRule":
        return replace(self, polarity=ANTI_HEBBIAN if self.polarity == HEBBIAN else HEBBIAN)


def stdp_delta(rule: StdpRule, dt_spike) -> np.ndarray | float:
    """Weight change for spike lag ``dt_spike = t_post - t_pre`` (ms).

    A zero lag gives no change.
    """
    d = np.asarray(dt_spike, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise InputError("spike lag must be finite")
    with np.errstate(over="ignore"):
        ltp = rule.a_plus * np.exp(-np.abs(d) / rule.tau_plus)
        ltd = -rule.a_minus * np.exp(-np.abs(d) / rule.tau_minus)
    out = rule.sign * np.where(d > 0, ltp, np.where(d < 0, ltd, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CalciumRule:
    theta_ltd: float = 1.0
    theta_ltp: float = 2.0
    rate_ltd: float = 1e-4  # per ms
    rate_ltp: float = 2e-4  # per ms
    ca_pre: float = 0.6
    ca_post: float = 1.0
    tau_ca: float = 20.0
    w_min: float = 0.0
    w_max: float = 1.0

    def __post_init__(self):
        if not self.theta_ltd < self.theta_ltp:
            raise ConfigError("calcium thresholds need theta_ltd < theta_ltp", "theta_ltd")
        if self.tau_ca <= 0:
            raise ConfigError("calcium decay constant must be positive", "tau_ca")
        if min(self.rate_ltd, self.rate_ltp, self.ca_pre, self.ca_post) < 0:
            raise ConfigError("calcium rates and increments must be non-negative", "rate_ltd")
        if not 0 <= self.w_min <= self.w_max:
            raise ConfigError("need 0 <= w_min <= w_max", "w_min/w_max")


def calcium_update(rule: CalciumRule, ca, w, dt: float):
    """Drift of ``w`` over ``dt`` ms at calcium level ``ca``, clipped to bounds."""
    ca = np.asarray(ca, dtype=np.float64)
    if np.any(ca < 0):
        raise InputError("calcium concentration must be non-negative")
    drift = np.where(ca >= rule.theta_ltp, rule.rate_ltp,
                     np.where(ca >= rule.theta_ltd, -rule.rate_ltd, 0.0))
    out = np.clip(np.asarray(w, dtype=np.float64) + drift * dt, rule.w_min, rule.w_max)
    return float(out) if out.ndim == 0 else out


# neurons ----------------------------------------------------------------

@dataclass(frozen=True)
class LifNeuron:
    """Parameters of one LIF population (potentials in threshold units)."""

    v_rest: float = 0.0
    v_thresh: float = 1.0
    v_reset: float = 0.0
    tau_m: float = 20.0
    t_ref: float = 2.0

    def __post_init__(self):
        if not self.v_reset <= self.v_rest < self.v_thresh:
            raise ConfigError("need v_reset <= v_rest < v_thresh", "v_reset")
        if self.tau_m <= 0 or self.t_ref < 0:
            raise ConfigError("need tau_m > 0 and t_ref >= 0", "tau_m")

    def isi(self, current: float) -> float:
        """Closed-form inter-spike interval under constant drive (inf if subthreshold)."""
        v_inf = self.v_rest + current * self.tau_m
        if v_inf <= self.v_thresh:
            return math.inf
        return self.t_ref + self.tau_m * math.log((v_inf - self.v_reset) / (v_inf - self.v_thresh))


# simulation kernel ------------------------------------------------------

_STDP, _CALCIUM = 1, 2


@numba.njit(cache=True)
def _kernel(n_steps, t0_step, dt, v, ref, last_spike, pending, W, conn, sign,
            v_rest, v_thresh, v_reset, tau_m, t_ref, current, ext, w_ext,
            R, r_kind, r_ap, r_am, r_tp, r_tm, r_sign, r_wmin, r_wmax,
            ca, ca_params, plastic, out_step, out_id):
    N = v.shape[0]
    n_out = 0
    spiked = np.zeros(N, dtype=np.bool_)
    has_calcium = False
    for r in range(r_kind.shape[0]):
        if r_kind[r] == _CALCIUM:
            has_calcium = True
    decay_ca = math.exp(-dt / ca_params[6])
    syn = np.zeros(N)
    for s in range(n_steps):
        t = (t0_step + s) * dt
        # synaptic input from last step's spikes
        syn[:] = 0.0
        for j in range(N):
            if pending[j]:
                sj = sign[j]
                for i in range(N):
                    if conn[i, j]:
                        syn[i] += sj * W[i, j]
        for i in range(N):
            spiked[i] = False
            if ref[i] > 0.0:
                ref[i] -= dt
                if ref[i] < 1e-9:
                    ref[i] = 0.0
                continue
            v[i] += dt * ((v_rest[i] - v[i]) / tau_m[i] + current[i]) + syn[i] + ext[s, i] * w_ext[i]
            if v[i] >= v_thresh[i]:
                spiked[i] = True
                v[i] = v_reset[i]
                ref[i] = t_ref[i]
        if plastic:
            # nearest-neighbour pairing; a partner spiking in the same step has zero lag
            for i in range(N):
                if not spiked[i]:
                    continue
                for j in range(N):  # i as postsynaptic
                    r = R[i, j]
                    if r >= 0 and r_kind[r] == _STDP and not spiked[j] and last_spike[j] > -1e11:
                        lag = t - last_spike[j]
                        w = W[i, j] + r_sign[r] * r_ap[r] * math.exp(-lag / r_tp[r])
                        W[i, j] = min(max(w, r_wmin[r]), r_wmax[r])
                for k in range(N):  # i as presynaptic
                    r = R[k, i]
                    if r >= 0 and r_kind[r] == _STDP and not spiked[k] and last_spike[k] > -1e11:
                        lag = t - last_spike[k]
                        w = W[k, i] - r_sign[r] * r_am[r] * math.exp(-lag / r_tm[r])
                        W[k, i] = min(max(w, r_wmin[r]), r_wmax[r])
            if has_calcium:
                # ca_params: theta_ltd, theta_ltp, rate_ltd, rate_ltp, ca_pre, ca_post, tau_ca, w_min, w_max
                for i in range(N):
                    for j in range(N):
                        r = R[i, j]
                        if r < 0 or r_kind[r] != _CALCIUM:
                            continue
                        c = ca[i, j] * decay_ca
                        if spiked[j]:
                            c += ca_params[4]
                        if spiked[i]:
                            c += ca_params[5]
                        ca[i, j] = c
                        w = W[i, j]
                        if c >= ca_params[1]:
                            w += ca_params[3] * dt
                        elif c >= ca_params[0]:
                            w -= ca_params[2] * dt
                        W[i, j] = min(max(w, ca_params[7]), ca_params[8])
        for i in range(N):
            pending[i] = spiked[i]
            if spiked[i]:
                last_spike[i] = t
                if n_out < out_step.shape[0]:
                    out_step[n_out] = t0_step + s
                    out_id[n_out] = i
                n_out += 1
    return n_out


# network ----------------------------------------------------------------

@dataclass
class SpikingNet:
    """State and parameters of an E/I LIF network.

    ``W`` holds synaptic magnitudes indexed ``[post, pre]``; the effective
    weight is ``sign[pre] * W``. ``rule_index[post, pre]`` names the entry of
    ``rules`` that governs a synapse, or -1 for a static one. At most one
    :class:`CalciumRule` may appear in ``rules``.
    """

    n_exc: int
    n_inh: int
    W: np.ndarray
    conn: np.ndarray
    exc: LifNeuron = LifNeuron()
    inh: LifNeuron = LifNeuron(tau_m=10.0, t_ref=1.0)
    rules: tuple = ()
    rule_index: np.ndarray | None = None
    w_ext: np.ndarray | None = None
    dt: float = 0.1
    plastic: bool = True
    v: np.ndarray = field(default=None)
    ref: np.ndarray = field(default=None)
    last_spike: np.ndarray = field(default=None)
    pending: np.ndarray = field(default=None)
    ca: np.ndarray = field(default=None)
    step_count: int = 0

    def __post_init__(self):
        N = self.n_exc + self.n_inh
        if not 0 < self.dt <= 1.0:
            raise InputError("dt must lie in (0, 1] ms")
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.conn = np.ascontiguousarray(self.conn, dtype=np.bool_)
        if self.W.shape != (N, N) or self.conn.shape != (N, N):
            raise InputError("weight and connectivity matrices must be N x N")
        if np.any(self.W < 0):
            raise InputError("weights are stored as non-negative magnitudes")
        self.W[~self.conn] = 0.0
        if self.rule_index is None:
            self.rule_index = np.full((N, N), -1, dtype=np.int64)
        self.rule_index = np.ascontiguousarray(self.rule_index, dtype=np.int64)
        if self.rule_index.shape != (N, N) or self.rule_index.max() >= len(self.rules):
            raise InputError("rule_index must be N x N with entries in [-1, len(rules))")
        self.rule_index[~self.conn] = -1
        if sum(isinstance(r, CalciumRule) for r in self.rules) > 1:
            raise ConfigError("at most one calcium rule per network", "rules")
        if self.w_ext is None:
            self.w_ext = np.full(N, 0.1)
        self.w_ext = np.broadcast_to(np.asarray(self.w_ext, dtype=np.float64), (N,)).copy()
        if self.v is None:
            self.v = np.array([self.exc.v_rest] * self.n_exc + [self.inh.v_rest] * self.n_inh)
        if self.ref is None:
            self.ref = np.zeros(N)
        if self.last_spike is None:
            self.last_spike = np.full(N, _NEVER)
        if self.pending is None:
            self.pending = np.zeros(N, dtype=np.bool_)
        if self.ca is None:
            self.ca = np.zeros((N, N))

    @property
    def N(self) -> int:
        return self.n_exc + self.n_inh

    @property
    def sign(self) -> np.ndarray:
        return np.concatenate([np.ones(self.n_exc), -np.ones(self.n_inh)])

    def effective_weights(self) -> np.ndarray:
        return np.where(self.conn, self.W * self.sign[None, :], 0.0)

    def _pop(self, attr):
        return np.array([getattr(self.exc, attr)] * self.n_exc + [getattr(self.inh, attr)] * self.n_inh)

    def _tables(self):
        rules = self.rules or (StdpRule(),)
        kind = np.array([_CALCIUM if isinstance(r, CalciumRule) else _STDP for r in rules], dtype=np.int64)
        get = lambda a, d=0.0: np.array([getattr(r, a, d) for r in rules], dtype=np.float64)
        sgn = np.array([r.sign if isinstance(r, StdpRule) else 1.0 for r in rules])
        c = next((r for r in rules if isinstance(r, CalciumRule)), CalciumRule())
        ca_params = np.array([c.theta_ltd, c.theta_ltp, c.rate_ltd, c.rate_ltp, c.ca_pre,
                              c.ca_post, c.tau_ca, c.w_min, c.w_max])
        return (kind, get("a_plus"), get("a_minus"), get("tau_plus", 1.0), get("tau_minus", 1.0),
                sgn, get("w_min"), get("w_max"), ca_params)

    def advance(self, ext_counts, current=None, max_spikes: int | None = None):
        """Run ``len(ext_counts)`` steps; returns (step indices, neuron ids) of spikes.

        ``ext_counts[s, i]`` external input spikes arrive at neuron ``i`` on
        step ``s``, each adding ``w_ext[i]``. ``current`` is a constant drive
        per neuron in threshold units per ms.
        """
        ext = np.ascontiguousarray(ext_counts, dtype=np.int32)
        if ext.ndim != 2 or ext.shape[1] != self.N:
            raise InputError("external input must be an n_steps x N array")
        cur = np.zeros(self.N) if current is None else np.broadcast_to(
            np.asarray(current, dtype=np.float64), (self.N,)).copy()
        n = ext.shape[0]
        cap = max_spikes or self.N * (n // 5 + 1)
        out_step = np.empty(cap, dtype=np.int64)
        out_id = np.empty(cap, dtype=np.int64)
        kind, ap, am, tp, tm, sgn, wmin, wmax, ca_params = self._tables()
        count = _kernel(n, self.step_count, self.dt, self.v, self.ref, self.last_spike,
                        self.pending, self.W, self.conn, self.sign,
                        self._pop("v_rest"), self._pop("v_thresh"), self._pop("v_reset"),
                        self._pop("tau_m"), self._pop("t_ref"), cur, ext, self.w_ext,
                        self.rule_index, kind, ap, am, tp, tm, sgn, wmin, wmax, self.ca,
                        ca_params, self.plastic, out_step, out_id)
        if count > cap:
            raise InstabilityError(f"{count} spikes in {n} steps overflowed the spike buffer")
        self.step_count += n
        return out_step[:count].copy(), out_id[:count].copy()


def step(net: SpikingNet, dt: float | None = None, input_currents=None, ext_counts=None) -> list:
    """Advance one time step; returns the ids of neurons that spiked."""
    if dt is not None and dt != net.dt:
        if not 0 < dt <= 1.0:
            raise InputError("dt must lie in (0, 1] ms")
        net.dt = dt
    ext = np.zeros((1, net.N), dtype=np.int32) if ext_counts is None else \
        np.asarray(ext_counts, dtype=np.int32).reshape(1, net.N)
    _, ids = net.advance(ext, input_currents)
    return ids.tolist()


def dale_ok(net: SpikingNet) -> bool:
    """Every neuron's outgoing effective weights share its type's sign."""
    We = net.effective_weights()
    return bool(np.all(We[:, :net.n_exc] >= 0) and np.all(We[:, net.n_exc:] <= 0))


def write_raster_csv(path, steps, ids, dt: float):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RASTER_COLUMNS)
        decimals = max(1, -math.floor(math.log10(dt)))
        for s, i in zip(steps.tolist(), ids.tolist()):
            w.writerow((i, f"{s * dt:.{decimals}f}"))


# assembly formation experiment -------------------------------------------

@dataclass(frozen=True)
class AssemblyConfig:
    """Desk-scale assembly experiment.

    Rates are Poisson input spikes per ms per neuron, each spike adding
    ``w_ext`` to the membrane. Half of the inhibitory population carries
    Hebbian and half anti-Hebbian STDP on its synapses onto excitatory cells.
    Recall presents ``cue_fraction`` of an assembly and counts how many of the
    remaining (uncued) members fire above their resting count by
    ``recall_z`` Poisson standard deviations.
    """

    n_exc: int = 200
    n_inh: int = 50
    n_assemblies: int = 4
    p_connect: float = 0.2
    w_ee: float = 0.05
    w_ei: float = 0.1
    w_ie: float = 0.7
    w_ii: float = 0.3
    ee_rule: StdpRule = StdpRule(w_max=1.0)
    inh_rule: StdpRule = StdpRule(w_max=1.0)
    w_ext: float = 0.2
    background_rate: float = 0.16
    stimulus_rate: float = 2.0
    train_ms: float = 45000.0
    block_ms: float = 200.0
    gap_ms: float = 100.0
    rest_ms: float = 5000.0
    cue_ms: float = 1000.0
    settle_ms: float = 300.0
    cue_fraction: float = 0.5
    recall_z: float = 3.0
    bin_ms: float = 50.0
    min_isi_spikes: int = 6
    anti_hebbian: bool = True
    trace_every_ms: float = 3000.0
    snapshot_every_ms: float = 0.0
    dt: float = 0.1

    def __post_init__(self):
        for name in ("n_exc", "n_inh", "n_assemblies", "min_isi_spikes"):
            if getattr(self, name) < 1:
                raise ConfigError("must be a positive integer", name)
        if self.n_exc % self.n_assemblies:
            raise ConfigError("n_exc must be a multiple of n_assemblies", "n_assemblies")
        if self.n_inh < 2:
            raise ConfigError("need at least one Hebbian and one anti-Hebbian interneuron", "n_inh")
        if not 0 < self.p_connect <= 1:
            raise ConfigError("must lie in (0, 1]", "p_connect")
        if not 0 < self.cue_fraction < 1:
            raise ConfigError("must lie in (0, 1)", "cue_fraction")
        for name in ("w_ee", "w_ei", "w_ie", "w_ii", "w_ext", "background_rate", "stimulus_rate",
                     "train_ms", "trace_every_ms", "snapshot_every_ms"):
            if getattr(self, name) < 0:
                raise ConfigError("must be non-negative", name)
        for name in ("block_ms", "gap_ms", "rest_ms", "cue_ms", "settle_ms", "bin_ms", "recall_z"):
            if getattr(self, name) <= 0:
                raise ConfigError("must be positive", name)
        if not 0 < self.dt <= 1.0:
            raise ConfigError("must lie in (0, 1] ms", "dt")
        if self.rest_ms < 2 * self.bin_ms:
            raise ConfigError("rest period needs at least two count bins", "rest_ms")
        if self.inh_rule.polarity != HEBBIAN:
            raise ConfigError("give the Hebbian form; the anti-Hebbian half uses its negation",
                              "inh_rule")

    @property
    def assembly_size(self) -> int:
        return self.n_exc // self.n_assemblies

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AssemblyReport:
    seed: int
    config: dict
    modularity: float
    within_weight: float
    between_weight: float
    selectivity: float
    selectivity_per_neuron: np.ndarray
    recall_in: float
    recall_out: float
    recall_whole: float
    rest_rate_exc: float
    rest_rate_inh: float
    rest_correlation: float
    rest_cv: float
    modularity_trace: list
    raster_steps: np.ndarray
    raster_ids: np.ndarray
    weight_snapshots: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "modularity": self.modularity,
            "within_weight": self.within_weight,
            "between_weight": self.between_weight,
            "selectivity": self.selectivity,
            "recall_in": self.recall_in,
            "recall_out": self.recall_out,
            "recall_whole": self.recall_whole,
            "rates": {"rest_exc_hz": self.rest_rate_exc, "rest_inh_hz": self.rest_rate_inh},
            "rest_correlation": self.rest_correlation,
            "rest_cv": self.rest_cv,
            "modularity_trace": [[t, m] for t, m in self.modularity_trace],
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_json(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    def write_raster(self, path):
        write_raster_csv(path, self.raster_steps, self.raster_ids, self.config["dt"])


def assembly_labels(cfg: AssemblyConfig) -> np.ndarray:
    return np.repeat(np.arange(cfg.n_assemblies), cfg.assembly_size)


def modularity(net: SpikingNet, labels) -> tuple:
    """(within / between, within, between) mean excitatory-to-excitatory weight."""
    nE = net.n_exc
    W, C = net.W[:nE, :nE], net.conn[:nE, :nE]
    same = labels[:, None] == labels[None, :]
    within, between = W[C & same], W[C & ~same]
    if within.size == 0 or between.size == 0:
        raise InputError("need both within- and between-assembly connections")
    w_in, w_out = float(within.mean()), float(between.mean())
    ratio = w_in / w_out if w_out > 0 else math.inf
    return ratio, w_in, w_out


def build_assembly_net(rng: Rng, cfg: AssemblyConfig) -> SpikingNet:
    g = rng.generator
    nE, nI = cfg.n_exc, cfg.n_inh
    N = nE + nI
    conn = g.random((N, N)) < cfg.p_connect
    np.fill_diagonal(conn, False)
    W = np.zeros((N, N))
    W[:nE, :nE] = cfg.w_ee
    W[nE:, :nE] = cfg.w_ei
    W[:nE, nE:] = cfg.w_ie
    W[nE:, nE:] = cfg.w_ii
    R = np.full((N, N), -1)
    R[:nE, :nE] = 0
    R[:nE, nE:nE + nI // 2] = 1
    R[:nE, nE + nI // 2:] = 2 if cfg.anti_hebbian else -1
    rules = (cfg.ee_rule, cfg.inh_rule, cfg.inh_rule.reversed())
    return SpikingNet(nE, nI, W * conn, conn, rules=rules, rule_index=R, w_ext=cfg.w_ext, dt=cfg.dt)


def _counts(ids, n, ms):
    return np.bincount(ids, minlength=n)[:n] / (ms / 1000.0)


def resting_statistics(steps, ids, n, ms, dt, bin_ms=50.0, min_spikes=6):
    """Mean pairwise correlation of binned counts and mean ISI CV over ``n`` neurons.

    Silent neurons are left out of the correlation; the CV averages neurons
    with at least ``min_spikes`` spikes. Returns NaN where nothing qualifies.
    """
    sel = ids < n
    s, i = steps[sel], ids[sel]
    n_bins = int(ms // bin_ms)
    b = ((s - s.min()) * dt // bin_ms).astype(np.int64) if s.size else s
    keep = b < n_bins
    counts = np.zeros((n, n_bins))
    np.add.at(counts, (i[keep], b[keep]), 1)
    active = counts.std(axis=1) > 0
    if active.sum() >= 2:
        C = np.corrcoef(counts[active])
        corr = float(C[np.triu_indices(C.shape[0], 1)].mean())
    else:
        corr = math.nan
    cvs = []
    order = np.lexsort((s, i))
    s, i = s[order], i[order]
    bounds = np.searchsorted(i, np.arange(n + 1))
    for k in range(n):
        t = s[bounds[k]:bounds[k + 1]] * dt
        if t.size >= min_spikes:
            isi = np.diff(t)
            cvs.append(isi.std() / isi.mean())
    return corr, float(np.mean(cvs)) if cvs else math.nan


def selectivity_index(responses) -> np.ndarray:
    """Per-neuron (r_pref - mean r_other) / (r_pref + mean r_other) over stimuli.

    ``responses`` is (n_stimuli, n_neurons); a silent neuron scores 0.
    """
    r = np.asarray(responses, dtype=np.float64)
    pref = r.max(axis=0)
    other = (r.sum(axis=0) - pref) / (r.shape[0] - 1)
    denom = pref + other
    return np.where(denom > 0, (pref - other) / np.where(denom > 0, denom, 1.0), 0.0)


def run_assembly_experiment(rng: Rng, cfg: AssemblyConfig = AssemblyConfig()) -> AssemblyReport:
    """Imprint assemblies by alternating stimulation, then probe the network.

    Phases: training (plastic; stimulate each assembly for ``block_ms`` in
    turn, ``gap_ms`` of background between), then with plasticity frozen a
    resting period, partial-cue recall for every assembly and cue half, and a
    full presentation of each assembly for the selectivity index.
    """
    net = build_assembly_net(rng.split(0), cfg)
    g = rng.split(1).generator
    labels = assembly_labels(cfg)
    size, nA, nE, N = cfg.assembly_size, cfg.n_assemblies, cfg.n_exc, cfg.n_exc + cfg.n_inh
    base = np.full(N, cfg.background_rate)
    raster_s, raster_i = [], []

    def run(ms, rates):
        n = int(round(ms / cfg.dt))
        s, i = net.advance(g.poisson(rates * cfg.dt, size=(n, N)))
        if s.size / N / (ms / 1000.0) > MAX_MEAN_RATE_HZ:
            raise InstabilityError(
                f"mean rate {s.size / N / (ms / 1000.0):.0f} Hz exceeds {MAX_MEAN_RATE_HZ:.0f} Hz",
                config=cfg.to_dict())
        raster_s.append(s)
        raster_i.append(i)
        return s, i

    def stimulus(a, members):
        r = base.copy()
        r[a * size + members] += cfg.stimulus_rate
        return r

    trace = [(0.0, modularity(net, labels)[0])]
    snapshots = [(0.0, net.W.copy())] if cfg.snapshot_every_ms > 0 else []
    t, k = 0.0, 0
    next_trace, next_snap = cfg.trace_every_ms, cfg.snapshot_every_ms
    while t < cfg.train_ms:
        run(cfg.block_ms, stimulus(k, np.arange(size)))
        run(cfg.gap_ms, base)
        t += cfg.block_ms + cfg.gap_ms
        k = (k + 1) % nA
        if cfg.trace_every_ms > 0 and t >= next_trace:
            trace.append((t, modularity(net, labels)[0]))
            next_trace += cfg.trace_every_ms
        if cfg.snapshot_every_ms > 0 and t >= next_snap:
            snapshots.append((t, net.W.copy()))
            next_snap += cfg.snapshot_every_ms
    mod, w_in, w_out = modularity(net, labels)
    if not trace or trace[-1][0] != t:
        trace.append((t, mod))
    net.plastic = False

    s, i = run(cfg.rest_ms, base)
    corr, cv = resting_statistics(s, i, nE, cfg.rest_ms, cfg.dt, cfg.bin_ms, cfg.min_isi_spikes)
    rest = _counts(i, N, cfg.rest_ms)
    expected = rest[:nE] * cfg.cue_ms / 1000.0
    threshold = expected + cfg.recall_z * np.sqrt(np.maximum(expected, 1.0))

    n_cue = max(1, int(round(cfg.cue_fraction * size)))
    members = np.arange(size)
    splits = [members[:n_cue], members[size - n_cue:]]
    rec_in, rec_out, rec_whole = [], [], []
    for a in range(nA):
        for cued in splits:
            _, i = run(cfg.cue_ms, stimulus(a, cued))
            active = np.bincount(i, minlength=N)[:nE] > threshold
            uncued = a * size + np.setdiff1d(members, cued)
            rec_in.append(active[uncued].mean())
            rec_out.append(active[labels != a].mean())
            rec_whole.append(active[labels == a].mean())
            run(cfg.settle_ms, base)

    full = np.zeros((nA, nE))
    for a in range(nA):
        _, i = run(cfg.cue_ms, stimulus(a, members))
        full[a] = _counts(i, N, cfg.cue_ms)[:nE]
        run(cfg.settle_ms, base)
    sel = selectivity_index(full)

    return AssemblyReport(
        seed=rng.seed, config=cfg.to_dict(), modularity=mod, within_weight=w_in,
        between_weight=w_out, selectivity=float(sel.mean()), selectivity_per_neuron=sel,
        recall_in=float(np.mean(rec_in)), recall_out=float(np.mean(rec_out)),
        recall_whole=float(np.mean(rec_whole)), rest_rate_exc=float(rest[:nE].mean()),
        rest_rate_inh=float(rest[nE:].mean()), rest_correlation=corr, rest_cv=cv,
        modularity_trace=trace, raster_steps=np.concatenate(raster_s),
        raster_ids=np.concatenate(raster_i), weight_snapshots=snapshots)


def ablate_anti_hebbian(cfg: AssemblyConfig) -> AssemblyConfig:
    """Same experiment with anti-Hebbian inhibitory plasticity frozen at its initial weights."""
    return replace(cfg, anti_hebbian=False)
