"""Sparsity penalties with analytic gradients, and a small sparse autoencoder.

Penalties: exact L0 count, a relaxed (differentiable) L0 over stochastic
gates, L1, and the Bernoulli KL penalty on mean hidden activations. All
logarithms are natural.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import expit

from .core import Rng
from .errors import InputError, TrainingError

KL_CLAMP = 1e-6
HISTORY_COLUMNS = ("epoch", "recon_loss", "penalty", "mean_activation")


# L0 ---------------------------------------------------------------------

def l0_norm(theta) -> int:
    """Number of entries that are not exactly zero."""
    return int(np.count_nonzero(np.abs(np.asarray(theta)) > 0))


def l0_norm_thresholded(theta, tau: float) -> int:
    return int(np.count_nonzero(np.abs(np.asarray(theta)) > tau))


@dataclass
class GateDistribution:
    """Stretched-sigmoid ("hard concrete") gates.

    Each gate's pre-clamp variable is a logistic sample with location
    ``log_alpha`` and temperature ``temperature``, squashed and stretched to
    ``(zeta_low, zeta_high)``, then clamped to [0, 1]. ``P(d_j <= 0)`` is the
    probability the clamp lands on zero, i.e. the gate is closed.
    """

    log_alpha: np.ndarray
    temperature: float = 2.0 / 3.0
    zeta_low: float = -0.1
    zeta_high: float = 1.1

    def __post_init__(self):
        self.log_alpha = np.asarray(self.log_alpha, dtype=np.float64)
        if not self.zeta_low < 0 < self.zeta_high:
            raise InputError("need zeta_low < 0 < zeta_high")
        if not self.temperature > 0:
            raise InputError("temperature must be positive")

    @property
    def _shift(self) -> float:
        return self.temperature * math.log(-self.zeta_low / self.zeta_high)

    def prob_closed(self) -> np.ndarray:
        return expit(self._shift - self.log_alpha)

    def prob_open(self) -> np.ndarray:
        return expit(self.log_alpha - self._shift)

    def sample(self, rng: Rng) -> np.ndarray:
        u = rng.generator.uniform(1e-12, 1 - 1e-12, size=self.log_alpha.shape)
        s = expit((np.log(u) - np.log1p(-u) + self.log_alpha) / self.temperature)
        return np.clip(s * (self.zeta_high - self.zeta_low) + self.zeta_low, 0.0, 1.0)


def l0_relaxed_loss(g: GateDistribution) -> float:
    return float(np.sum(g.prob_open()))


def l0_relaxed_grad(g: GateDistribution) -> np.ndarray:
    """Gradient of :func:`l0_relaxed_loss` with respect to ``log_alpha``."""
    p = g.prob_open()
    return p * (1.0 - p)


# L1 ---------------------------------------------------------------------

def l1_penalty(w) -> float:
    return float(np.sum(np.abs(np.asarray(w, dtype=np.float64))))


def l1_subgradient(w) -> np.ndarray:
    return np.sign(np.asarray(w, dtype=np.float64))


def l1_objective(loss: float, w, alpha: float) -> float:
    if alpha < 0:
        raise InputError("alpha must be non-negative")
    return loss + alpha * l1_penalty(w)


def soft_threshold(c, alpha: float):
    """Minimiser of ``(w - c)**2 + alpha*|w|``."""
    c = np.asarray(c, dtype=np.float64)
    return np.sign(c) * np.maximum(np.abs(c) - alpha / 2.0, 0.0)


# KL ---------------------------------------------------------------------

def kl_bernoulli(rho, rho_hat):
    """KL divergence between Bernoulli(rho) and Bernoulli(rho_hat)."""
    rho = np.asarray(rho, dtype=np.float64)
    rho_hat = np.asarray(rho_hat, dtype=np.float64)
    for name, v in (("rho", rho), ("rho_hat", rho_hat)):
        if np.any((v <= 0) | (v >= 1)):
            raise InputError(f"{name} must lie strictly inside (0, 1); clamp activations first")
    out = rho * np.log(rho / rho_hat) + (1 - rho) * np.log((1 - rho) / (1 - rho_hat))
    return float(out) if out.ndim == 0 else out


def kl_bernoulli_grad(rho, rho_hat):
    """Derivative of :func:`kl_bernoulli` with respect to ``rho_hat``."""
    rho_hat = np.asarray(rho_hat, dtype=np.float64)
    return -rho / rho_hat + (1 - rho) / (1 - rho_hat)


def kl_penalty(rho: float, rho_hat, beta: float) -> float:
    """``beta * sum_j KL(rho || rho_hat_j)`` with clamped activations."""
    rh = np.clip(np.asarray(rho_hat, dtype=np.float64), KL_CLAMP, 1 - KL_CLAMP)
    return float(beta * np.sum(kl_bernoulli(rho, rh)))


def kl_penalty_grad(rho: float, rho_hat, beta: float) -> np.ndarray:
    raw = np.asarray(rho_hat, dtype=np.float64)
    rh = np.clip(raw, KL_CLAMP, 1 - KL_CLAMP)
    g = beta * kl_bernoulli_grad(rho, rh)
    return np.where((raw > KL_CLAMP) & (raw < 1 - KL_CLAMP), g, 0.0)


# composed objective -----------------------------------------------------

L0_EXACT, L0_RELAXED, L1, KL = "l0_exact", "l0_relaxed", "l1", "kl"


@dataclass
class RegularizedObjective:
    """``total(theta) = base_loss(theta) + lam * R(theta)``.

    ``lam`` plays the role of alpha for L1 and beta for KL. For ``kl`` the
    argument of R is the vector of mean activations and ``rho`` is the target;
    for ``l0_relaxed`` it is the gates' ``log_alpha``.
    """

    base_loss: Callable[[np.ndarray], float]
    penalty: str
    lam: float
    rho: float = 0.05
    base_grad: Callable[[np.ndarray], np.ndarray] | None = None
    gate_kwargs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lam < 0:
            raise InputError("regularisation factor must be non-negative")
        if self.penalty not in (L0_EXACT, L0_RELAXED, L1, KL):
            raise InputError(f"unknown penalty {self.penalty!r}")

    def regularizer(self, theta) -> float:
        if self.penalty == L0_EXACT:
            return float(l0_norm(theta))
        if self.penalty == L0_RELAXED:
            return l0_relaxed_loss(GateDistribution(theta, **self.gate_kwargs))
        if self.penalty == L1:
            return l1_penalty(theta)
        return kl_penalty(self.rho, theta, 1.0)

    def regularizer_grad(self, theta) -> np.ndarray:
        if self.penalty == L0_EXACT:
            raise InputError("the exact L0 count has no useful gradient")
        if self.penalty == L0_RELAXED:
            return l0_relaxed_grad(GateDistribution(theta, **self.gate_kwargs))
        if self.penalty == L1:
            return l1_subgradient(theta)
        return kl_penalty_grad(self.rho, theta, 1.0)

    def total(self, theta) -> float:
        return self.base_loss(theta) + self.lam * self.regularizer(theta)

    def grad(self, theta) -> np.ndarray:
        if self.base_grad is None:
            raise InputError("objective has no base gradient")
        return self.base_grad(theta) + self.lam * self.regularizer_grad(theta)


def minimize_l1_quadratic(c: float, alpha: float, lr: float = 1e-3, steps: int = 20000,
                          w0: float = 0.0) -> float:
    """Subgradient descent on ``(w - c)**2 + alpha*|w|`` with a decaying step."""
    w = w0
    for t in range(steps):
        g = 2.0 * (w - c) + alpha * np.sign(w)
        w -= lr / math.sqrt(1.0 + t / 100.0) * g
    return float(w)


# sparse autoencoder -----------------------------------------------------

@dataclass
class SparseAutoencoder:
    """Sigmoid encoder and decoder trained on rows scaled to [0, 1].

    ``J = (1/2m) sum ||y - x||^2 + beta * sum_j KL(rho || rho_hat_j)``
    (+ optional L2 weight decay), where ``rho_hat_j`` is the batch mean of
    hidden unit ``j``.
    """

    W1: np.ndarray  # hidden x visible
    b1: np.ndarray
    W2: np.ndarray  # visible x hidden
    b2: np.ndarray
    rho: float = 0.05
    beta: float = 3.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise InputError("rho must lie in (0, 1)")
        if self.beta < 0 or self.weight_decay < 0:
            raise InputError("penalty weights must be non-negative")

    @classmethod
    def init(cls, rng: Rng, visible: int, hidden: int, **kw) -> "SparseAutoencoder":
        r = math.sqrt(6.0 / (visible + hidden + 1))
        g = rng.generator
        return cls(g.uniform(-r, r, (hidden, visible)), np.zeros(hidden),
                   g.uniform(-r, r, (visible, hidden)), np.zeros(visible), **kw)

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def encode(self, X) -> np.ndarray:
        return expit(np.asarray(X) @ self.W1.T + self.b1)

    def forward(self, X):
        A = self.encode(X)
        return A, expit(A @ self.W2.T + self.b2)

    def loss_terms(self, X) -> dict:
        X = np.asarray(X, dtype=np.float64)
        m = X.shape[0]
        A, Y = self.forward(X)
        rho_hat = A.mean(axis=0)
        recon = 0.5 * float(np.sum((Y - X) ** 2)) / m
        penalty = kl_penalty(self.rho, rho_hat, self.beta)
        decay = 0.5 * self.weight_decay * float(np.sum(self.W1 ** 2) + np.sum(self.W2 ** 2))
        return {"recon": recon, "penalty": penalty, "decay": decay,
                "total": recon + penalty + decay, "rho_hat": rho_hat}

    def loss(self, X) -> float:
        return self.loss_terms(X)["total"]

    def gradients(self, X) -> dict:
        X = np.asarray(X, dtype=np.float64)
        m = X.shape[0]
        A, Y = self.forward(X)
        rho_hat = A.mean(axis=0)
        d_out = (Y - X) * Y * (1 - Y) / m
        gW2 = d_out.T @ A + self.weight_decay * self.W2
        gb2 = d_out.sum(axis=0)
        sparse = kl_penalty_grad(self.rho, rho_hat, self.beta) / m
        d_hid = (d_out @ self.W2 + sparse) * A * (1 - A)
        gW1 = d_hid.T @ X + self.weight_decay * self.W1
        gb1 = d_hid.sum(axis=0)
        return {"W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2}

    # flat parameter vector helpers, used by gradient checks
    _NAMES = ("W1", "b1", "W2", "b2")

    def get_flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, k).ravel() for k in self._NAMES])

    def set_flat(self, theta) -> None:
        i = 0
        for k in self._NAMES:
            arr = getattr(self, k)
            setattr(self, k, np.asarray(theta[i:i + arr.size], dtype=np.float64).reshape(arr.shape))
            i += arr.size

    def flat_gradient(self, X) -> np.ndarray:
        g = self.gradients(X)
        return np.concatenate([g[k].ravel() for k in self._NAMES])


@dataclass(frozen=True)
class SaeConfig:
    hidden: int = 64
    rho: float = 0.05
    beta: float = 3.0
    lr: float = 1.0
    weight_decay: float = 0.0


@dataclass
class TrainingHistory:
    rows: list = field(default_factory=list)  # (epoch, recon, penalty, mean_activation)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_COLUMNS)
            w.writerows(self.rows)

    @property
    def final(self):
        return self.rows[-1]


def train_sparse_autoencoder(rng: Rng, data, cfg: SaeConfig = SaeConfig(), epochs: int = 2000,
                             log_every: int = 100) -> tuple[SparseAutoencoder, TrainingHistory]:
    """Full-batch gradient descent with a fixed step."""
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.min() < 0 or X.max() > 1:
        raise InputError("data must be a 2-D array scaled to [0, 1]")
    model = SparseAutoencoder.init(rng, X.shape[1], cfg.hidden, rho=cfg.rho, beta=cfg.beta,
                                   weight_decay=cfg.weight_decay)
    history = TrainingHistory()
    for epoch in range(epochs + 1):
        if epoch % log_every == 0 or epoch == epochs:
            t = model.loss_terms(X)
            if not math.isfinite(t["total"]):
                raise TrainingError("non-finite loss", epoch)
            history.rows.append((epoch, t["recon"], t["penalty"], float(t["rho_hat"].mean())))
        if epoch == epochs:
            break
        g = model.gradients(X)
        for k in SparseAutoencoder._NAMES:
            setattr(model, k, getattr(model, k) - cfg.lr * g[k])
        if not np.isfinite(model.W1).all():
            raise TrainingError("non-finite parameters", epoch)
    return model, history


def mean_output_baseline(X) -> float:
    """Reconstruction loss of always outputting the per-feature data mean."""
    X = np.asarray(X, dtype=np.float64)
    return 0.5 * float(np.sum((X - X.mean(axis=0)) ** 2)) / X.shape[0]


def synthetic_patches(rng: Rng, count: int = 2000, size: int = 8, images: int = 10,
                      image_size: int = 64, smoothing: float = 2.0) -> np.ndarray:
    """Patches cut from Gaussian-smoothed noise images, rescaled to [0.1, 0.9].

    Each patch has its mean removed, is clipped at three global standard
    deviations, and is mapped linearly into [0.1, 0.9].
    """
    g = rng.generator
    imgs = [gaussian_filter(g.standard_normal((image_size, image_size)), smoothing)
            for _ in range(images)]
    out = np.empty((count, size * size))
    for i in range(count):
        im = imgs[g.integers(images)]
        r, c = g.integers(0, image_size - size + 1, size=2)
        out[i] = im[r:r + size, c:c + size].ravel()
    out -= out.mean(axis=1, keepdims=True)
    s = 3.0 * out.std()
    out = np.clip(out, -s, s) / s
    return (out + 1.0) * 0.4 + 0.1
