"""Hopfield-style associative memory with Hebbian outer-product storage.

Patterns are held internally in bipolar form. Storage builds

    J_ij = (1/N) * sum_mu C^mu_i C^mu_j,   J_ii = 0,

where ``C = S - offset``. With the default ``offset = 0`` this is the plain
outer-product rule on the bipolar patterns. Sparse patterns (coding level
``a`` well below 1/2) are stored *centred*, ``offset = 2a - 1``, so the
common "mostly off" component shared by every sparse pattern does not swamp
the couplings.

Recall iterates ``s <- sign(J s - theta)`` with ties keeping the previous
state. Sparse memories can instead use k-winners-take-all inhibition, where
the threshold is re-set every sweep so that exactly ``round(a*N)`` units
with the largest fields are on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import BIPOLAR, BINARY, Pattern, PatternSet, Rng, WeightMatrix, active_count, derive_seed
from .errors import InputError

SYNCHRONOUS = "synchronous"
SEQUENTIAL = "sequential-random"

CAPACITY_COLUMNS = ("N", "a", "M", "bit_error_rate", "seed")


@dataclass(frozen=True, eq=False)
class AssocMemory:
    J: WeightMatrix
    stored: PatternSet
    offset: float = 0.0
    theta: float = 0.0
    retained_edge_fraction: float = 1.0

    @property
    def N(self) -> int:
        return self.J.n

    @property
    def coding_level(self) -> float:
        """Mean fraction of active units over the stored patterns."""
        return float(np.mean([p.sparsity() for p in self.stored]))

    @property
    def centered(self) -> bool:
        return self.offset != 0.0

    def energy(self, state: Pattern) -> float:
        s = state.to_bipolar().bits.astype(np.float64)
        return -0.5 * float(s @ self.J.w @ s)


@dataclass(frozen=True)
class RecallConfig:
    max_iterations: int = 100
    update_mode: str = SYNCHRONOUS
    reactivation_fraction: float = 1.0
    inhibition: str = "none"  # "none" or "kwta"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InputError("max_iterations must be positive")
        if self.update_mode not in (SYNCHRONOUS, SEQUENTIAL):
            raise InputError(f"unknown update mode {self.update_mode!r}")
        if not 0.0 < self.reactivation_fraction <= 1.0:
            raise InputError("reactivation_fraction must lie in (0, 1]")
        if self.inhibition not in ("none", "kwta"):
            raise InputError(f"unknown inhibition {self.inhibition!r}")


@dataclass(frozen=True)
class RecallResult:
    pattern: Pattern
    iterations: int
    converged: bool


def sparse_threshold(a: float, fraction: float = 0.5) -> float:
    """Threshold placed ``fraction`` of the way from the expected field of an
    inactive unit to that of an active unit, for a centred memory recalled
    from an exact stored pattern. ``fraction=0.5`` is the midpoint, which is
    0 for dense (a = 1/2) coding.
    """
    inactive = -8.0 * a * a * (1.0 - a)
    active = 8.0 * a * (1.0 - a) ** 2
    return inactive + fraction * (active - inactive)


def store_patterns(ps: PatternSet, *, centered: bool = False, theta: float | None = None,
                   threshold_fraction: float = 0.5) -> AssocMemory:
    """Build the coupling matrix from bipolar patterns.

    ``centered`` subtracts the set's mean bipolar activity before the outer
    products. ``theta`` defaults to 0 for uncentred storage and to
    :func:`sparse_threshold` of the coding level otherwise.
    """
    if ps.M == 0:
        raise InputError("cannot store an empty pattern set")
    if ps.coding != BIPOLAR:
        raise InputError("store_patterns expects bipolar patterns; convert with to_bipolar()")
    S = ps.matrix()
    a = float(np.mean(S > 0))
    offset = 2.0 * a - 1.0 if centered else 0.0
    C = S - offset
    J = C.T @ C / ps.N
    if theta is None:
        theta = sparse_threshold(a, threshold_fraction) if centered else 0.0
    return AssocMemory(WeightMatrix(J), ps, offset=offset, theta=float(theta))


def _kwta(h: np.ndarray, k: int) -> np.ndarray:
    """Rows of +1/-1 with +1 at the k largest entries; ties go to lower index."""
    order = np.argsort(-h, axis=-1, kind="stable")[..., :k]
    out = -np.ones_like(h)
    np.put_along_axis(out, order, 1.0, axis=-1)
    return out


def _sign_keep(h: np.ndarray, prev: np.ndarray) -> np.ndarray:
    return np.where(h > 0, 1.0, np.where(h < 0, -1.0, prev))


def recall(m: AssocMemory, cue: Pattern, cfg: RecallConfig = RecallConfig(),
           rng: Rng | None = None) -> RecallResult:
    """Run the recall dynamics from ``cue`` until a fixed point or the
    iteration limit. ``iterations`` counts update sweeps, including the final
    sweep that changed nothing."""
    if cue.n != m.N:
        raise InputError(f"cue dimension {cue.n} does not match memory size {m.N}")
    s = cue.to_bipolar().bits.astype(np.float64)
    W = m.J.w
    k = active_count(m.N, m.coding_level) if cfg.inhibition == "kwta" else None
    if cfg.update_mode == SEQUENTIAL and rng is None:
        raise InputError("sequential-random updates need an Rng")

    for it in range(1, cfg.max_iterations + 1):
        if cfg.update_mode == SYNCHRONOUS:
            h = W @ s - m.theta
            new = _kwta(h, k) if k is not None else _sign_keep(h, s)
        else:
            new = s.copy()
            if k is not None:
                raise InputError("k-winners-take-all is a global rule; use synchronous updates")
            for i in rng.generator.permutation(m.N):
                hi = W[i] @ new - m.theta
                if hi > 0:
                    new[i] = 1.0
                elif hi < 0:
                    new[i] = -1.0
        if np.array_equal(new, s):
            return RecallResult(_out(s, cue), it, True)
        s = new
    return RecallResult(_out(s, cue), cfg.max_iterations, False)


def _out(s: np.ndarray, like: Pattern) -> Pattern:
    p = Pattern(s.astype(np.int8), BIPOLAR)
    return p.to_binary() if like.coding == BINARY else p


def recall_batch(m: AssocMemory, cues: np.ndarray, inhibition: str = "none",
                 max_iterations: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Synchronous recall of many bipolar cues at once (rows of ``cues``).

    Returns final states and a per-row converged flag. Each row follows
    exactly the trajectory :func:`recall` would give it.
    """
    S = np.array(cues, dtype=np.float64)
    W = m.J.w
    k = active_count(m.N, m.coding_level) if inhibition == "kwta" else None
    done = np.zeros(S.shape[0], dtype=bool)
    for _ in range(max_iterations):
        live = ~done
        if not live.any():
            break
        cur = S[live]
        h = cur @ W - m.theta  # W symmetric
        new = _kwta(h, k) if k is not None else _sign_keep(h, cur)
        same = np.all(new == cur, axis=1)
        idx = np.flatnonzero(live)
        done[idx[same]] = True
        S[idx[~same]] = new[~same]
    return S, done


def partial_cue(rng: Rng, p: Pattern, fraction: float) -> Pattern:
    """Keep ``round(fraction * #active)`` of the active units; switch the
    rest off (0 in binary, -1 in bipolar).

    Kept units are a prefix of one random permutation, so two calls with
    equal seeds give nested cues as ``fraction`` grows.
    """
    if not 0.0 < fraction <= 1.0:
        raise InputError("fraction must lie in (0, 1]")
    active = np.flatnonzero(p.active)
    keep = int(round(fraction * active.size))
    if keep == 0:
        raise InputError(f"fraction {fraction} keeps no active unit of {active.size}")
    order = rng.generator.permutation(active)
    bits = p.bits.copy()
    off = 0 if p.coding == BINARY else -1
    bits[order[keep:]] = off
    return Pattern(bits, p.coding)


def consolidate_prune(m: AssocMemory, weight_quantile: float) -> AssocMemory:
    """Zero the weakest couplings.

    Edges are the nonzero off-diagonal pairs i<j ranked by ``|J_ij|``. The
    ``round(q * n_edges)`` smallest are cut; edges tied with the smallest
    survivor are kept. Symmetry is preserved.
    """
    if not 0.0 < weight_quantile < 1.0:
        raise InputError("weight_quantile must lie in (0, 1)")
    W = m.J.w
    iu = np.triu_indices(m.N, 1)
    mags = np.abs(W[iu])
    nz = mags > 0
    n_edges = int(nz.sum())
    pruned = np.array(W)
    if n_edges == 0:
        return replace(m, J=WeightMatrix(pruned), retained_edge_fraction=0.0)
    n_remove = int(math.floor(weight_quantile * n_edges + 0.5))
    if n_remove == 0:
        return replace(m, J=WeightMatrix(pruned), retained_edge_fraction=m.retained_edge_fraction)
    ranked = np.sort(mags[nz])
    cutoff = ranked[n_remove] if n_remove < n_edges else np.inf
    cut = nz & (mags < cutoff)
    rows, cols = iu[0][cut], iu[1][cut]
    pruned[rows, cols] = 0.0
    pruned[cols, rows] = 0.0
    retained = (n_edges - int(cut.sum())) / n_edges
    return replace(m, J=WeightMatrix(pruned),
                   retained_edge_fraction=m.retained_edge_fraction * retained)


@dataclass
class CapacityResult:
    N: int
    a: float
    M_max: int
    criterion: float
    curve: list = field(default_factory=list)  # rows (N, a, M, bit_error_rate, seed)

    def probed(self) -> dict:
        """Worst bit-error rate seen at each probed M."""
        worst: dict[int, float] = {}
        for _, _, M, ber, _ in self.curve:
            worst[M] = max(worst.get(M, 0.0), ber)
        return dict(sorted(worst.items()))


def _trial_seed(base: int, M: int, trial: int) -> int:
    return derive_seed(derive_seed(base, M), trial)


def capacity_trial(seed: int, N: int, a: float, M: int, inhibition: str) -> float:
    """Store M random patterns and return the worst per-pattern bit-error
    rate after recall from the exact patterns."""
    rng = Rng(seed)
    S = np.zeros((M, N), dtype=np.float64)
    k = active_count(N, a)
    for mu in range(M):
        S[mu, rng.generator.choice(N, size=k, replace=False)] = 1.0
    S = 2.0 * S - 1.0
    ps = PatternSet(tuple(Pattern(row.astype(np.int8), BIPOLAR) for row in S))
    mem = store_patterns(ps, centered=(k * 2 != N))
    out, _ = recall_batch(mem, S, inhibition=inhibition)
    return float(np.max(np.mean(out != S, axis=1)))


def measure_capacity(rng: Rng, N: int, a: float, criterion: float = 0.01, trials: int = 5,
                     inhibition: str | None = None, max_patterns: int | None = None) -> CapacityResult:
    """Largest M whose stored patterns all come back from exact cues with
    bit-error rate <= ``criterion`` in every one of ``trials`` seeded trials.

    Search doubles M from 1 until a failure, then bisects. Each (M, trial)
    probe is seeded from ``rng.seed``, M and the trial index only, so the
    result does not depend on probe order. ``inhibition`` defaults to k-WTA
    for sparse coding (a < 1/2) and plain thresholding otherwise.
    """
    if N < 2:
        raise InputError("N must be at least 2")
    k = active_count(N, a)
    if inhibition is None:
        inhibition = "none" if 2 * k == N else "kwta"
    if max_patterns is None:
        max_patterns = 8 * N
    result = CapacityResult(N, a, 0, criterion)

    def ok(M):
        passed = True
        for t in range(trials):
            seed = _trial_seed(rng.seed, M, t)
            ber = capacity_trial(seed, N, a, M, inhibition)
            result.curve.append((N, a, M, ber, seed))
            passed = passed and ber <= criterion
        return passed

    if not ok(1):
        return result
    lo, hi = 1, None
    while hi is None:
        nxt = min(2 * lo, max_patterns)
        if nxt == lo:
            break
        if ok(nxt):
            lo = nxt
        else:
            hi = nxt
    if hi is not None:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                lo = mid
            else:
                hi = mid
    result.M_max = lo
    return result
