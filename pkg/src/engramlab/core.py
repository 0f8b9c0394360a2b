"""Deterministic primitives: seeded random streams, activity patterns, metrics.

Every stochastic function in the package takes an :class:`Rng` explicitly.
Patterns come in two alphabets: ``binary`` ({0, 1}) and ``bipolar`` ({-1, +1}).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

BINARY = "binary"
BIPOLAR = "bipolar"
_MODES = (BINARY, BIPOLAR)
_UINT64 = (1 << 64) - 1


def derive_seed(base_seed: int, index: int) -> int:
    """Child seed for trial ``index``: first 8 bytes (little-endian) of
    SHA-256 over the ASCII string ``"<base_seed>:<index>"``."""
    digest = hashlib.sha256(f"{int(base_seed)}:{int(index)}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """Seeded random stream backed by numpy's PCG64.

    PCG64 output is specified bit-for-bit, so a seed reproduces the same draws
    on every platform.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed <= _UINT64:
            raise InputError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.generator = np.random.Generator(np.random.PCG64(seed))

    def split(self, index: int) -> "Rng":
        """Independent stream for sub-task ``index``; does not consume draws."""
        return Rng(derive_seed(self.seed, index))

    def __repr__(self):
        return f"Rng(seed={self.seed})"


def as_rng(rng) -> Rng:
    if isinstance(rng, Rng):
        return rng
    return Rng(rng)


@dataclass(frozen=True, eq=False)
class Pattern:
    bits: np.ndarray
    coding: str = BINARY

    def __post_init__(self):
        if self.coding not in _MODES:
            raise InputError(f"unknown coding mode {self.coding!r}")
        bits = np.asarray(self.bits)
        if bits.ndim != 1:
            raise InputError("pattern bits must be one-dimensional")
        allowed = (0, 1) if self.coding == BINARY else (-1, 1)
        if not np.isin(bits, allowed).all():
            raise InputError(f"{self.coding} pattern contains values outside {allowed}")
        bits = bits.astype(np.int8)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def active(self) -> np.ndarray:
        """Boolean mask of active units (1 in binary mode, +1 in bipolar)."""
        return self.bits == 1

    def sparsity(self) -> float:
        return float(self.active.sum()) / self.n

    def to_bipolar(self) -> "Pattern":
        if self.coding == BIPOLAR:
            return self
        return Pattern(2 * self.bits - 1, BIPOLAR)

    def to_binary(self) -> "Pattern":
        if self.coding == BINARY:
            return self
        return Pattern((self.bits + 1) // 2, BINARY)

    def __eq__(self, other):
        if not isinstance(other, Pattern):
            return NotImplemented
        return self.coding == other.coding and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.coding, self.bits.tobytes()))

    def __neg__(self):
        if self.coding == BIPOLAR:
            return Pattern(-self.bits, BIPOLAR)
        return Pattern(1 - self.bits, BINARY)

    def __repr__(self):
        return f"Pattern({self.to_string()!r}, {self.coding!r})"

    def to_string(self) -> str:
        return "".join("1" if b == 1 else "0" for b in self.bits)

    @classmethod
    def from_string(cls, s: str, coding: str = BINARY) -> "Pattern":
        bits = np.array([int(c) for c in s], dtype=np.int8)
        p = cls(bits, BINARY)
        return p if coding == BINARY else p.to_bipolar()


@dataclass(frozen=True)
class PatternSet:
    patterns: tuple

    def __post_init__(self):
        pats = tuple(self.patterns)
        if pats:
            n, mode = pats[0].n, pats[0].coding
            for p in pats:
                if p.n != n or p.coding != mode:
                    raise InputError("all patterns in a set must share dimension and coding")
        object.__setattr__(self, "patterns", pats)

    @property
    def M(self) -> int:
        return len(self.patterns)

    @property
    def N(self) -> int:
        return self.patterns[0].n if self.patterns else 0

    @property
    def coding(self) -> str | None:
        return self.patterns[0].coding if self.patterns else None

    def matrix(self) -> np.ndarray:
        """M x N array of pattern bits (float64)."""
        return np.array([p.bits for p in self.patterns], dtype=np.float64).reshape(self.M, self.N)

    def __iter__(self):
        return iter(self.patterns)

    def __len__(self):
        return self.M

    def __getitem__(self, i):
        return self.patterns[i]


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    w: np.ndarray
    self_coupling: bool = False

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise InputError("weight matrix must be square")
        if not self.self_coupling:
            np.fill_diagonal(w, 0.0)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.w, self.w.T))


def _check_pair(a: Pattern, b: Pattern):
    if a.n != b.n:
        raise InputError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.coding != b.coding:
        raise InputError(f"coding mismatch: {a.coding} vs {b.coding}")


def hamming_distance(a: Pattern, b: Pattern) -> int:
    _check_pair(a, b)
    return int(np.count_nonzero(a.bits != b.bits))


def overlap(a: Pattern, b: Pattern) -> float:
    """Normalised dot product (1/n) sum a_i b_i of two bipolar patterns."""
    _check_pair(a, b)
    if a.coding != BIPOLAR:
        raise InputError("overlap is defined for bipolar patterns")
    return float(np.dot(a.bits.astype(np.int64), b.bits.astype(np.int64))) / a.n


def active_count(n: int, a: float) -> int:
    if not 0.0 < a < 1.0:
        raise InputError(f"coding level must lie in (0, 1), got {a}")
    if n < 1:
        raise InputError("dimension must be positive")
    k = int(round(a * n))
    if k == 0:
        raise InputError(f"coding level {a} activates no unit at n={n}")
    return k


def random_sparse_pattern(rng: Rng, n: int, a: float, coding: str = BINARY) -> Pattern:
    """Pattern with exactly ``round(a*n)`` active units drawn without replacement."""
    k = active_count(n, a)
    bits = np.zeros(n, dtype=np.int8)
    bits[rng.generator.choice(n, size=k, replace=False)] = 1
    p = Pattern(bits, BINARY)
    return p if coding == BINARY else p.to_bipolar()


def random_pattern_set(rng: Rng, m: int, n: int, a: float, coding: str = BIPOLAR) -> PatternSet:
    return PatternSet(tuple(random_sparse_pattern(rng, n, a, coding) for _ in range(m)))


def random_dense_bits(rng: Rng, n: int) -> np.ndarray:
    """Uniform i.i.d. {0,1} bits (no cardinality constraint)."""
    return rng.generator.integers(0, 2, size=n, dtype=np.int8)


def flip_bits(rng: Rng, p: Pattern, count: int) -> Pattern:
    """Copy of ``p`` with ``count`` distinct positions inverted."""
    if not 0 <= count <= p.n:
        raise InputError(f"cannot flip {count} of {p.n} bits")
    bits = p.bits.copy()
    idx = rng.generator.choice(p.n, size=count, replace=False)
    if p.coding == BIPOLAR:
        bits[idx] = -bits[idx]
    else:
        bits[idx] = 1 - bits[idx]
    return Pattern(bits, p.coding)
