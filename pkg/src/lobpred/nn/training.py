from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Model
from .tensor import NonFiniteError


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    model: Model
    epoch_losses: list[float] = field(default_factory=list)


def train(model: Model, x, labels: np.ndarray, config: TrainConfig,
          progress=None) -> TrainResult:
    """Mini-batch Adam on mean cross-entropy.

    ``x`` is anything indexable by an integer array that returns a
    (batch, time, width) block (an ndarray or a WindowArray).  Shuffling and
    dropout masks both derive from ``config.seed``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n == 0 or len(x) != n:
        raise ValueError(f"need matching, non-empty samples ({len(x)} windows, {n} labels)")
    rng = np.random.default_rng(config.seed)
    model.reseed_dropout(config.seed)
    opt = Adam(model.params(), config.learning_rate, config.beta1, config.beta2, config.eps)
    result = TrainResult(model)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = np.sort(order[start : start + config.batch_size])
            try:
                loss, _ = model.loss_and_gradients(x[idx], labels[idx], training=True)
            except NonFiniteError as exc:
                exc.args = (f"epoch {epoch}, batch {b}: {exc}",)
                raise
            opt.step()
            total += loss * len(idx)
        result.epoch_losses.append(total / n)
        if progress is not None:
            progress(epoch, result.epoch_losses[-1])
    return result


def accuracy(model: Model, x, labels) -> float:
    return float((model.predict_labels(x) == np.asarray(labels)).mean())
