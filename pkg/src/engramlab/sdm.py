"""Kanerva Sparse Distributed Memory and a Top-K / L2-normalised layer.

A store holds ``H`` random hard-location addresses in {0,1}^n and one row of
saturating integer counters per location. Writing at an address touches
every location within Hamming radius ``r``: counter ``j`` goes up by one for
a 1 in the data and down by one for a 0. Reading sums the counter rows of
the activated locations column-wise and thresholds at zero (a zero sum reads
as 0).
"""
from __future__ import annotations

import io
import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .core import BINARY, Pattern, Rng
from .errors import EmptyActivationError, InputError

SNAPSHOT_MAGIC = b"SDM1"
_HEADER = struct.Struct("<4sQQQQQ")  # magic, n, H, radius, counter_limit, seed

DEFAULT_ACTIVATION_PROBABILITY = 0.01
DEFAULT_COUNTER_LIMIT = 127


class EmptyWriteWarning(UserWarning):
    """A write activated no hard location and was stored nowhere."""


def radius_for_probability(n: int, p_target: float) -> int:
    """Smallest radius whose binomial(n, 1/2) lower tail reaches ``p_target``.

    A uniform random address is within that radius of a given hard location
    with probability about ``p_target``.
    """
    if not 0.0 < p_target <= 1.0:
        raise InputError("activation probability must lie in (0, 1]")
    total = 0
    scale = 2 ** n
    for r in range(n + 1):
        total += math.comb(n, r)
        if total / scale >= p_target:
            return r
    return n


def expected_activation(n: int, H: int, r: int) -> float:
    return H * sum(math.comb(n, i) for i in range(r + 1)) / 2 ** n


def _bits(p) -> np.ndarray:
    if isinstance(p, Pattern):
        if p.coding != BINARY:
            p = p.to_binary()
        return p.bits.astype(np.uint8)
    arr = np.asarray(p)
    if not np.isin(arr, (0, 1)).all():
        raise InputError("SDM addresses and data must be binary")
    return arr.astype(np.uint8)


@dataclass(frozen=True)
class WriteResult:
    locations: np.ndarray

    @property
    def stored(self) -> bool:
        return self.locations.size > 0


@dataclass(frozen=True)
class ReadResult:
    pattern: Pattern
    sums: np.ndarray
    locations: np.ndarray

    @property
    def degenerate(self) -> bool:
        """True when some bit was decided by the zero-sum tie rule."""
        return bool(np.any(self.sums == 0))


@dataclass(frozen=True)
class IterativeReadResult:
    pattern: Pattern
    iterations: int
    converged: bool
    oscillation: tuple | None = None
    history: tuple = ()

    @property
    def distance_from_cue(self) -> int:
        """Hamming distance travelled from the starting cue to the final state."""
        return int(np.count_nonzero(self.history[0].bits != self.pattern.bits))


class SdmStore:
    def __init__(self, addresses, radius: int, counter_limit: int = DEFAULT_COUNTER_LIMIT,
                 seed: int = 0, counters=None):
        addresses = np.asarray(addresses, dtype=np.uint8)
        if addresses.ndim != 2:
            raise InputError("addresses must be an H x n array")
        if not np.isin(addresses, (0, 1)).all():
            raise InputError("addresses must be binary")
        if not 0 <= radius <= addresses.shape[1]:
            raise InputError("radius must lie in [0, n]")
        if counter_limit < 1:
            raise InputError("counter_limit must be positive")
        addresses = addresses.copy()
        addresses.setflags(write=False)
        self.addresses = addresses
        self.radius = int(radius)
        self.counter_limit = int(counter_limit)
        self.seed = int(seed)
        if counters is None:
            counters = np.zeros(addresses.shape, dtype=np.int32)
        else:
            counters = np.array(counters, dtype=np.int32)
            if counters.shape != addresses.shape:
                raise InputError("counter block shape must match the address block")
        self.counters = counters

    @classmethod
    def random(cls, rng: Rng, n: int, H: int, radius: int | None = None,
               counter_limit: int = DEFAULT_COUNTER_LIMIT,
               activation_probability: float = DEFAULT_ACTIVATION_PROBABILITY) -> "SdmStore":
        """Store with ``H`` hard locations drawn uniformly from {0,1}^n."""
        if radius is None:
            radius = radius_for_probability(n, activation_probability)
        addresses = rng.generator.integers(0, 2, size=(H, n), dtype=np.uint8)
        return cls(addresses, radius, counter_limit, seed=rng.seed)

    @property
    def n(self) -> int:
        return self.addresses.shape[1]

    @property
    def H(self) -> int:
        return self.addresses.shape[0]

    def distances(self, addr) -> np.ndarray:
        a = _bits(addr)
        if a.shape[0] != self.n:
            raise InputError(f"address dimension {a.shape[0]} does not match store dimension {self.n}")
        return np.count_nonzero(self.addresses != a, axis=1)

    def activate(self, addr) -> np.ndarray:
        """Indices of hard locations within the radius (sorted, possibly empty)."""
        return np.flatnonzero(self.distances(addr) <= self.radius)

    def write(self, addr, data) -> WriteResult:
        d = _bits(data)
        if d.shape[0] != self.n:
            raise InputError("data dimension does not match store dimension")
        locs = self.activate(addr)
        if locs.size == 0:
            warnings.warn("SDM write activated no hard location", EmptyWriteWarning, stacklevel=2)
            return WriteResult(locs)
        delta = 2 * d.astype(np.int32) - 1
        rows = self.counters[locs] + delta
        np.clip(rows, -self.counter_limit, self.counter_limit, out=rows)
        self.counters[locs] = rows
        return WriteResult(locs)

    def read_with_info(self, addr) -> ReadResult:
        locs = self.activate(addr)
        if locs.size == 0:
            raise EmptyActivationError(_bits(addr))
        sums = self.counters[locs].sum(axis=0, dtype=np.int64)
        return ReadResult(Pattern((sums > 0).astype(np.int8), BINARY), sums, locs)

    def read(self, addr) -> Pattern:
        return self.read_with_info(addr).pattern

    def read_iterative(self, cue, max_iters: int = 20) -> IterativeReadResult:
        """Feed each read back in as the next address (autoassociative use).

        Stops at a fixed point, at a period-2 cycle (reported in
        ``oscillation``), at an empty activation, or after ``max_iters``.
        """
        if max_iters < 1:
            raise InputError("max_iters must be positive")
        state = Pattern(_bits(cue).astype(np.int8), BINARY)
        history = [state]
        for it in range(1, max_iters + 1):
            try:
                nxt = self.read(state)
            except EmptyActivationError:
                return IterativeReadResult(state, it, False, None, tuple(history))
            history.append(nxt)
            if nxt == state:
                return IterativeReadResult(nxt, it, True, None, tuple(history))
            if len(history) >= 3 and nxt == history[-3]:
                return IterativeReadResult(nxt, it, False, (history[-2], nxt), tuple(history))
            state = nxt
        return IterativeReadResult(state, max_iters, False, None, tuple(history))

    # snapshot codec ------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Header (magic, n, H, r, counter_limit, seed as little-endian u64),
        then the address block as little-endian bit-packed rows, then the
        counter block as little-endian int32."""
        buf = io.BytesIO()
        buf.write(_HEADER.pack(SNAPSHOT_MAGIC, self.n, self.H, self.radius,
                               self.counter_limit, self.seed))
        buf.write(np.packbits(self.addresses, axis=1, bitorder="little").tobytes())
        buf.write(self.counters.astype("<i4").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SdmStore":
        magic, n, H, r, limit, seed = _HEADER.unpack_from(blob, 0)
        if magic != SNAPSHOT_MAGIC:
            raise InputError("not an SDM snapshot")
        row_bytes = (n + 7) // 8
        off = _HEADER.size
        packed = np.frombuffer(blob, dtype=np.uint8, count=H * row_bytes, offset=off)
        addresses = np.unpackbits(packed.reshape(H, row_bytes), axis=1, count=n, bitorder="little")
        off += H * row_bytes
        counters = np.frombuffer(blob, dtype="<i4", count=H * n, offset=off).reshape(H, n)
        if off + counters.nbytes != len(blob):
            raise InputError("snapshot length does not match its header")
        return cls(addresses, r, limit, seed=seed, counters=counters)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SdmStore":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def activate(s: SdmStore, addr) -> np.ndarray:
    return s.activate(addr)


def write(s: SdmStore, addr, data) -> WriteResult:
    return s.write(addr, data)


def read(s: SdmStore, addr) -> Pattern:
    return s.read(addr)


def read_iterative(s: SdmStore, cue, max_iters: int = 20) -> IterativeReadResult:
    return s.read_iterative(cue, max_iters)


# Top-K layer ------------------------------------------------------------

def _unit_rows(W: np.ndarray) -> np.ndarray:
    return W / np.linalg.norm(W, axis=1, keepdims=True)


def top_k_indices(y: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries; ties at the boundary go to the lowest index."""
    return np.sort(np.argsort(-y, kind="stable")[:k])


@dataclass
class TopKLayer:
    weights: np.ndarray
    k: int

    def __post_init__(self):
        W = np.array(self.weights, dtype=np.float64)
        if W.ndim != 2:
            raise InputError("weights must be an m x n matrix")
        if not 1 <= self.k <= W.shape[0]:
            raise InputError(f"k must lie in [1, {W.shape[0]}]")
        if np.any(np.linalg.norm(W, axis=1) == 0):
            raise InputError("weight rows must be nonzero")
        self.weights = _unit_rows(W)

    @classmethod
    def random(cls, rng: Rng, m: int, n: int, k: int) -> "TopKLayer":
        return cls(rng.generator.standard_normal((m, n)), k)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.weights.shape[1],):
            raise InputError("input dimension does not match layer")
        y = self.weights @ x
        out = np.zeros_like(y)
        idx = top_k_indices(y, self.k)
        out[idx] = y[idx]
        return out

    def winners(self, x) -> np.ndarray:
        return top_k_indices(self.weights @ np.asarray(x, dtype=np.float64), self.k)

    def hebbian_update(self, x, lr: float) -> np.ndarray:
        """Pull the k winning rows toward ``x`` and renormalise them."""
        x = np.asarray(x, dtype=np.float64)
        norm = np.linalg.norm(x)
        if norm == 0:
            raise InputError("zero input vector")
        if abs(norm - 1.0) > 1e-9:
            raise InputError(f"input must have unit norm, got {norm}")
        win = self.winners(x)
        rows = self.weights[win] + lr * (x - self.weights[win])
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        # a row exactly opposite x with lr = 1 would vanish; keep it in place then
        safe = norms[:, 0] > 0
        self.weights[win[safe]] = rows[safe] / norms[safe]
        return win

    def reconstruct(self, x) -> np.ndarray:
        """Unit-norm readback ``W^T y`` through the masked code."""
        r = self.weights.T @ self.forward(x)
        n = np.linalg.norm(r)
        return r / n if n > 0 else r


def topk_forward(layer: TopKLayer, x) -> np.ndarray:
    return layer.forward(x)


def topk_hebbian_update(layer: TopKLayer, x, lr: float) -> TopKLayer:
    layer.hebbian_update(x, lr)
    return layer
