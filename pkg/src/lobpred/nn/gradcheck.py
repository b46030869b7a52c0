"""Central finite-difference checks for layers and whole models.

Piecewise-linear layers (LeakyReLU, max-pool) have kinks where the
derivative jumps.  A central difference whose two evaluations land on
different linear pieces measures the jump, not the gradient.  Each entry is
therefore compared only when both perturbed passes keep the activation
pattern of the unperturbed pass (every LeakyReLU sign and every pooling
argmax); entries that cross a kink are counted in ``n_skipped``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .layers import Inception, Layer, LeakyReLU, MaxPool, Sequential
from .model import Model

STEP = 1e-5
RTOL = 1e-4
ATOL = 1e-8


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    n_checked: int
    ok: bool
    n_skipped: int = 0


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    # relative error with an absolute floor for entries that are ~0 in both
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ATOL / RTOL)


def _leaves(layers):
    for layer in layers:
        if isinstance(layer, Sequential):
            yield from _leaves(layer.layers)
        elif isinstance(layer, Inception):
            yield from _leaves(layer.branches)
        else:
            yield layer


def activation_pattern(layers) -> bytes:
    """Digest of which linear piece every kinked layer used in the last pass."""
    h = hashlib.sha256()
    for layer in _leaves(layers):
        if isinstance(layer, LeakyReLU):
            h.update(np.packbits(layer._pos).tobytes())
        elif isinstance(layer, MaxPool):
            h.update(np.ascontiguousarray(layer._arg).tobytes())
    return h.digest()


def _numeric(f, arr: np.ndarray, idx, pattern=None):
    """Central difference at ``arr[idx]``; None if a kink lies between the two probes."""
    base = pattern() if pattern else None
    old = arr[idx]
    arr[idx] = old + STEP
    up = f()
    same = pattern is None or pattern() == base
    arr[idx] = old - STEP
    down = f()
    same = same and (pattern is None or pattern() == base)
    arr[idx] = old
    f()  # leave cached activations as they were
    return (up - down) / (2 * STEP) if same else None


def _compare(pairs, loss, pattern, rng, max_entries):
    worst, n, skipped = 0.0, 0, 0
    for arr, grad in pairs:
        for idx in _indices(arr, rng, max_entries):
            num = _numeric(loss, arr, idx, pattern)
            if num is None:
                skipped += 1
                continue
            worst = max(worst, float(_rel_err(np.asarray(grad[idx]), np.asarray(num))))
            n += 1
    return worst, n, skipped


def check_layer(layer: Layer, x: np.ndarray, rng: np.random.Generator,
                name: str = "", max_entries: int | None = None) -> CheckResult:
    """Compare ``backward`` with finite differences of L = sum(forward(x) * R).

    Checks every input entry and every parameter entry (or a random subset
    of ``max_entries`` per array).
    """
    x = np.array(x, dtype=np.float64)
    r = rng.standard_normal(layer.forward(x).shape)

    def loss():
        return float((layer.forward(x) * r).sum())

    for p in layer.params():
        p.zero_grad()
    layer.forward(x)
    dx = layer.backward(r)
    pairs = [(x, dx)] + [(p.data, p.grad.copy()) for p in layer.params()]
    worst, n, skipped = _compare(pairs, loss, lambda: activation_pattern([layer]), rng, max_entries)
    return CheckResult(name or type(layer).__name__, worst, n, worst <= RTOL and n > 0, skipped)


def check_model(model: Model, x: np.ndarray, labels: np.ndarray, rng: np.random.Generator,
                max_entries: int | None = None) -> CheckResult:
    """Finite-difference check of ``loss_and_gradients`` over every parameter."""
    def loss():
        return model.loss_and_gradients(x, labels)[0]

    _, grads = model.loss_and_gradients(x, labels)
    pairs = [(p.data, g) for p, g in zip(model.params(), grads)]
    worst, n, skipped = _compare(pairs, loss, lambda: activation_pattern(model.layers), rng, max_entries)
    return CheckResult(model.spec.name, worst, n, worst <= RTOL and n > 0, skipped)


def _indices(arr: np.ndarray, rng, max_entries):
    all_idx = list(np.ndindex(arr.shape))
    if max_entries is None or len(all_idx) <= max_entries:
        return all_idx
    pick = rng.choice(len(all_idx), size=max_entries, replace=False)
    return [all_idx[i] for i in sorted(pick)]
