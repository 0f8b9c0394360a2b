"""Stochastic engram gating over a binarised two-layer task network.

A one-hot task identifier goes through a small two-layer encoder into a
latent vector, which is projected to one real gate logit ``W_h`` per hidden
neuron. Gate probabilities are ``sigmoid(W_h)`` and each training step draws
a Bernoulli mask ``W_s`` that multiplies the hidden activations, so only the
sampled ensemble takes part in the forward pass and in learning.

Task layers use ``sign(shadow)`` weights with a straight-through gradient.
Shadow updates that shrink ``|w|`` are scaled by ``1/(1 + |m*w|)`` so large
shadows, which have been reinforced for a long time, resist sign flips.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .core import Rng
from .errors import InputError, TrainingError
from .regularizers import GateDistribution, l0_relaxed_grad

P_CLAMP = 1e-12
ACCURACY_COLUMNS = ("after_task", "eval_task", "accuracy", "seed", "gated_flag")
FROZEN, TRAINED = "frozen", "trained"


def gate_probabilities(W_h) -> np.ndarray:
    return np.clip(expit(np.asarray(W_h, dtype=np.float64)), P_CLAMP, 1.0 - P_CLAMP)


def sample_gates(rng: Rng, p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any((p < 0) | (p > 1)):
        raise InputError("gate probabilities must lie in [0, 1]")
    return (rng.generator.random(p.shape) < p).astype(np.int8)


def expected_mask(p) -> np.ndarray:
    """Deterministic evaluation mask: open where ``p >= 0.5``."""
    return (np.asarray(p) >= 0.5).astype(np.int8)


def mask_to_bits(mask) -> str:
    return "".join("1" if b else "0" for b in np.asarray(mask).ravel())


def bits_to_mask(s: str) -> np.ndarray:
    if set(s) - {"0", "1"}:
        raise InputError("mask strings may only contain 0 and 1")
    return np.array([c == "1" for c in s], dtype=np.int8)


def jaccard(a, b) -> float:
    a, b = np.asarray(a, dtype=bool), np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    return 1.0 if union == 0 else np.count_nonzero(a & b) / union


@dataclass
class GateLayer:
    W_h: np.ndarray
    last_sample: np.ndarray | None = None

    @property
    def p(self) -> np.ndarray:
        return gate_probabilities(self.W_h)

    def sample(self, rng: Rng) -> np.ndarray:
        self.last_sample = sample_gates(rng, self.p)
        return self.last_sample


# tasks ------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    name: str
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    n_classes: int

    def majority_baseline(self) -> float:
        return float(np.bincount(self.y_test, minlength=self.n_classes).max() / self.y_test.size)


@dataclass(frozen=True)
class TaskSuite:
    tasks: tuple

    def __post_init__(self):
        if len(self.tasks) < 2:
            raise InputError("a task suite needs at least two tasks")
        dims = {t.X_train.shape[1] for t in self.tasks}
        if len(dims) != 1:
            raise InputError("all tasks must share the input dimension")

    @property
    def dim(self) -> int:
        return self.tasks[0].X_train.shape[1]

    @property
    def n_classes(self) -> int:
        return max(t.n_classes for t in self.tasks)

    def __len__(self):
        return len(self.tasks)


def gaussian_blob_suite(rng: Rng, n_tasks: int = 2, dim: int = 20, n_train: int = 1000,
                        n_test: int = 500, separation: float = 1.5, noise: float = 1.0) -> TaskSuite:
    """Two-class tasks: class means at +/- ``separation`` along a random
    direction per task, isotropic Gaussian noise. Label 1 is the + side."""
    g = rng.generator
    tasks = []
    for k in range(n_tasks):
        mu = g.standard_normal(dim)
        mu *= separation / np.linalg.norm(mu)

        def draw(n):
            y = g.integers(0, 2, n)
            return (2 * y - 1)[:, None] * mu + noise * g.standard_normal((n, dim)), y

        Xtr, ytr = draw(n_train)
        Xte, yte = draw(n_test)
        tasks.append(Task(f"blobs-{k}", Xtr, ytr, Xte, yte, 2))
    return TaskSuite(tuple(tasks))


_GLYPHS = (  # 5x7 bitmaps, rows top to bottom
    "01110 10001 10011 10101 11001 10001 01110",
    "00100 01100 00100 00100 00100 00100 01110",
    "01110 10001 00001 00010 00100 01000 11111",
    "11111 00010 00100 00010 00001 10001 01110",
    "00010 00110 01010 10010 11111 00010 00010",
    "11111 10000 11110 00001 00001 10001 01110",
    "00110 01000 10000 11110 10001 10001 01110",
    "11111 00001 00010 00100 01000 01000 01000",
    "01110 10001 10001 01110 10001 10001 01110",
    "01110 10001 10001 01111 00001 00010 01100",
)


def digit_images(rng: Rng, n: int, noise: float = 0.15) -> tuple[np.ndarray, np.ndarray]:
    """8x8 renderings of a small 5x7 digit font at random offsets with pixel noise."""
    g = rng.generator
    glyphs = [np.array([[c == "1" for c in row] for row in s.split()], dtype=np.float64)
              for s in _GLYPHS]
    y = g.integers(0, 10, n)
    X = np.zeros((n, 8, 8))
    offs = g.integers(0, 2, size=(n, 2))
    for i in range(n):
        r, c = int(offs[i, 0]), int(offs[i, 1] * 3)
        X[i, r:r + 7, c:c + 5] = glyphs[y[i]]
    X += noise * g.standard_normal(X.shape)
    return X.reshape(n, 64), y


def permuted_digit_suite(rng: Rng, n_tasks: int = 2, n_train: int = 2000,
                         n_test: int = 500) -> TaskSuite:
    """Task 0 uses raw pixels; every later task applies its own fixed pixel permutation."""
    g = rng.generator
    tasks = []
    for k in range(n_tasks):
        perm = np.arange(64) if k == 0 else g.permutation(64)
        Xtr, ytr = digit_images(rng, n_train)
        Xte, yte = digit_images(rng, n_test)
        tasks.append(Task(f"digits-perm-{k}", Xtr[:, perm], ytr, Xte[:, perm], yte, 10))
    return TaskSuite(tuple(tasks))


# network ----------------------------------------------------------------

@dataclass(frozen=True)
class ContinualConfig:
    hidden: int = 128
    latent: int = 16
    encoder_hidden: int = 32
    epochs: int = 10
    batch_size: int = 32
    lr: float = 0.05
    meta: float = 1.0
    gated: bool = True
    gate_mode: str = FROZEN
    gate_lr: float = 0.05
    l0_lambda: float = 0.0
    gate_scale: float = 3.0
    gate_bias: float = -1.0
    init_scale: float = 0.01

    def __post_init__(self):
        if self.gate_mode not in (FROZEN, TRAINED):
            raise InputError(f"gate_mode must be {FROZEN!r} or {TRAINED!r}")
        for name in ("hidden", "latent", "encoder_hidden", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be positive")
        for name in ("lr", "gate_lr", "l0_lambda", "meta", "init_scale"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be non-negative")


@dataclass
class TaskEncoder:
    """One-hot task id -> tanh -> tanh latent -> linear gate logits."""

    E1: np.ndarray
    c1: np.ndarray
    E2: np.ndarray
    c2: np.ndarray
    P: np.ndarray
    bias: np.ndarray

    @classmethod
    def random(cls, rng: Rng, n_tasks: int, cfg: ContinualConfig) -> "TaskEncoder":
        g = rng.generator
        return cls(g.standard_normal((cfg.encoder_hidden, n_tasks)),
                   np.zeros(cfg.encoder_hidden),
                   g.standard_normal((cfg.latent, cfg.encoder_hidden)) / math.sqrt(cfg.encoder_hidden),
                   np.zeros(cfg.latent),
                   cfg.gate_scale * g.standard_normal((cfg.hidden, cfg.latent)) / math.sqrt(cfg.latent),
                   np.full(cfg.hidden, cfg.gate_bias))

    def forward(self, task_repr):
        e = np.tanh(self.E1 @ task_repr + self.c1)
        z = np.tanh(self.E2 @ e + self.c2)
        return e, z, self.P @ z + self.bias

    def latent(self, task_repr) -> np.ndarray:
        return self.forward(task_repr)[1]

    def gate_logits(self, task_repr) -> np.ndarray:
        return self.forward(task_repr)[2]

    def step(self, task_repr, d_logits, lr: float):
        e, z, _ = self.forward(task_repr)
        dz = (self.P.T @ d_logits) * (1 - z * z)
        de = (self.E2.T @ dz) * (1 - e * e)
        self.P -= lr * np.outer(d_logits, z)
        self.bias -= lr * d_logits
        self.E2 -= lr * np.outer(dz, e)
        self.c2 -= lr * dz
        self.E1 -= lr * np.outer(de, task_repr)
        self.c1 -= lr * de


def _meta_update(w: np.ndarray, grad: np.ndarray, lr: float, m: float) -> None:
    step = -lr * grad
    shrinking = np.sign(step) == -np.sign(w)
    w += np.where(shrinking, step / (1.0 + np.abs(m * w)), step)


@dataclass
class GatedBinaryNet:
    encoder: TaskEncoder
    W1: np.ndarray  # shadow weights, hidden x dim
    b1: np.ndarray
    W2: np.ndarray  # shadow weights, classes x hidden
    b2: np.ndarray
    n_tasks: int
    meta: float = 1.0
    gate: GateLayer = field(default=None)

    @classmethod
    def random(cls, rng: Rng, dim: int, n_classes: int, n_tasks: int,
               cfg: ContinualConfig = ContinualConfig()) -> "GatedBinaryNet":
        enc = TaskEncoder.random(rng, n_tasks, cfg)
        g = rng.generator
        s = cfg.init_scale
        return cls(enc, g.uniform(-s, s, (cfg.hidden, dim)), np.zeros(cfg.hidden),
                   g.uniform(-s, s, (n_classes, cfg.hidden)), np.zeros(n_classes),
                   n_tasks, cfg.meta, GateLayer(np.zeros(cfg.hidden)))

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def task_repr(self, task) -> np.ndarray:
        if np.ndim(task) == 0:
            if not 0 <= int(task) < self.n_tasks:
                raise InputError(f"task index {task} out of range")
            v = np.zeros(self.n_tasks)
            v[int(task)] = 1.0
            return v
        v = np.asarray(task, dtype=np.float64)
        if v.shape != (self.n_tasks,):
            raise InputError("task representation has the wrong length")
        return v

    def gate_probabilities(self, task) -> np.ndarray:
        self.gate.W_h = self.encoder.gate_logits(self.task_repr(task))
        return self.gate.p

    def expected_mask(self, task) -> np.ndarray:
        return expected_mask(self.gate_probabilities(task))

    def hidden_activity(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.W1.shape[1]:
            raise InputError("input dimension does not match network")
        return np.tanh(X @ np.sign(self.W1).T / math.sqrt(X.shape[1]) + self.b1)

    def forward(self, X, gates) -> np.ndarray:
        h = self.hidden_activity(X)
        return (h * gates) @ np.sign(self.W2).T / math.sqrt(self.hidden) + self.b2

    def accuracy(self, task: Task, gates) -> float:
        scores = self.forward(task.X_test, gates)[:, :task.n_classes]
        return float(np.mean(scores.argmax(axis=1) == task.y_test))

    def train_step(self, X, y, task, gates, lr: float, n_classes: int | None = None,
                   gate_lr: float = 0.0, l0_lambda: float = 0.0) -> float:
        """One SGD step on a batch under a fixed gate vector; returns the loss.

        With ``gate_lr > 0`` the encoder also learns, with the sampled gate
        treated as the identity of its probability in the backward pass.
        """
        X = np.asarray(X, dtype=np.float64)
        d, H = X.shape[1], self.hidden
        k = n_classes or self.W2.shape[0]
        gates = np.asarray(gates, dtype=np.float64)
        h = self.hidden_activity(X)
        hg = h * gates
        scores = (hg @ np.sign(self.W2).T / math.sqrt(H) + self.b2)[:, :k]
        loss = -float(np.mean(log_softmax(scores, axis=1)[np.arange(len(y)), y]))
        if not math.isfinite(loss):
            raise TrainingError("non-finite loss", None)
        delta = softmax(scores, axis=1)
        delta[np.arange(len(y)), y] -= 1.0
        delta /= len(y)
        sW2 = np.sign(self.W2[:k])
        d_hg = delta @ sW2 / math.sqrt(H)
        d_a1 = d_hg * gates * (1 - h * h)
        gW2 = delta.T @ hg / math.sqrt(H)
        gW1 = d_a1.T @ X / math.sqrt(d)
        if gate_lr > 0:
            tr = self.task_repr(task)
            W_h = self.encoder.gate_logits(tr)
            p = gate_probabilities(W_h)
            d_logits = (d_hg * h).sum(axis=0) * p * (1 - p)
            if l0_lambda > 0:
                d_logits = d_logits + l0_lambda * l0_relaxed_grad(GateDistribution(W_h))
            self.encoder.step(tr, d_logits, gate_lr)
        _meta_update(self.W2[:k], gW2, lr, self.meta)
        _meta_update(self.W1, gW1, lr, self.meta)
        self.b2[:k] -= lr * delta.sum(axis=0)
        self.b1 -= lr * d_a1.sum(axis=0)
        return loss


def gated_forward(net: GatedBinaryNet, task_repr, x, rng: Rng | None = None, gates=None) -> np.ndarray:
    """Scores for ``x`` under freshly sampled gates (``rng``), explicit
    ``gates``, or, when neither is given, the task's expected mask."""
    if gates is None:
        p = net.gate_probabilities(task_repr)
        gates = sample_gates(rng, p) if rng is not None else expected_mask(p)
    return net.forward(x, gates)


# continual learning -----------------------------------------------------

@dataclass
class ContinualResult:
    accuracy: np.ndarray  # accuracy[i, j]: task j after finishing task i
    gated: bool
    seed: int
    masks: tuple
    mean_gate_activity: tuple
    losses: list

    def retention(self, task: int = 0, after: int | None = None) -> float:
        after = self.accuracy.shape[0] - 1 if after is None else after
        return float(self.accuracy[after, task] / self.accuracy[task, task])

    def rows(self):
        T = self.accuracy.shape[0]
        for i in range(T):
            for j in range(T):
                yield (i, j, float(self.accuracy[i, j]), self.seed, int(self.gated))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ACCURACY_COLUMNS)
            w.writerows(self.rows())


def train_continual(net: GatedBinaryNet, suite: TaskSuite, cfg: ContinualConfig,
                    rng: Rng) -> ContinualResult:
    """Train on the tasks strictly in order and fill the accuracy matrix.

    Ungated control runs (``cfg.gated`` False) hold every gate at 1 during
    both training and evaluation. Batch order and gate samples come from
    separate streams, so gated and control runs see the same batches.
    """
    T = len(suite)
    if net.n_tasks != T:
        raise InputError("network was built for a different number of tasks")
    g = rng.split(0).generator
    gate_rng = rng.split(1)
    ones = np.ones(net.hidden, dtype=np.int8)
    A = np.zeros((T, T))
    losses = []
    trained = cfg.gated and cfg.gate_mode == TRAINED
    for t, task in enumerate(suite.tasks):
        m = task.y_train.size
        for epoch in range(cfg.epochs):
            order = g.permutation(m)
            for s in range(0, m, cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                if cfg.gated:
                    net.gate_probabilities(t)
                    gates = net.gate.sample(gate_rng)
                else:
                    gates = ones
                try:
                    loss = net.train_step(task.X_train[idx], task.y_train[idx], t, gates, cfg.lr,
                                          task.n_classes,
                                          gate_lr=cfg.gate_lr if trained else 0.0,
                                          l0_lambda=cfg.l0_lambda)
                except TrainingError as err:
                    raise TrainingError(f"task {t}: {err}", epoch) from None
            losses.append((t, epoch, loss))
        for j, other in enumerate(suite.tasks):
            gates = net.expected_mask(j) if cfg.gated else ones
            A[t, j] = net.accuracy(other, gates)
    masks = tuple(net.expected_mask(j) if cfg.gated else ones for j in range(T))
    activity = tuple(float(net.gate_probabilities(j).mean()) if cfg.gated else 1.0 for j in range(T))
    return ContinualResult(A, cfg.gated, rng.seed, masks, activity, losses)


def run_continual(seed: int, suite: TaskSuite, cfg: ContinualConfig = ContinualConfig()) -> ContinualResult:
    """Build a network from ``seed`` and train it; gated and control runs with
    the same seed share the initial weights, encoder and batch order."""
    rng = Rng(seed)
    net = GatedBinaryNet.random(rng.split(2), suite.dim, suite.n_classes, len(suite), cfg)
    return train_continual(net, suite, cfg, rng)


def paired_retention(seed: int, suite: TaskSuite, cfg: ContinualConfig = ContinualConfig()):
    """(gated retention, ungated retention) of task 0 after the last task."""
    gated = run_continual(seed, suite, replace(cfg, gated=True))
    control = run_continual(seed, suite, replace(cfg, gated=False))
    return gated.retention(0), control.retention(0), gated, control
