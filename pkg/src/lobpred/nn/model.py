"""Declarative architectures, the three presets, and the Model wrapper."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from ..labeling import Label
from .layers import (
    LSTM,
    Conv2D,
    Dense,
    Dropout,
    Inception,
    Layer,
    LeakyReLU,
    MaxPool,
    Sequential,
    ToSequence,
    softmax,
    softmax_cross_entropy,
)
from .tensor import NonFiniteActivation, NonFiniteGradient, ShapeMismatch, Tensor

LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    padding: str = "valid"
    leaky_slope: float = LEAKY_SLOPE
    type: str = "conv"


@dataclass(frozen=True)
class PoolSpec:
    kernel: tuple[int, int]
    padding: str = "zero"
    type: str = "maxpool"


@dataclass(frozen=True)
class InceptionSpec:
    branches: tuple[tuple[Union[ConvSpec, PoolSpec], ...], ...]
    type: str = "inception"


@dataclass(frozen=True)
class DropoutSpec:
    rate: float
    type: str = "dropout"


@dataclass(frozen=True)
class LSTMSpec:
    units: int
    type: str = "lstm"


@dataclass(frozen=True)
class DenseSpec:
    units: int
    activation: str = "softmax"
    type: str = "dense"


LayerSpec = Union[ConvSpec, PoolSpec, InceptionSpec, DropoutSpec, LSTMSpec, DenseSpec]


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    time: int
    width: int
    layers: tuple[LayerSpec, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        return cls(d["name"], d["time"], d["width"], tuple(_layer_from_dict(x) for x in d["layers"]))


def _layer_from_dict(d: dict) -> LayerSpec:
    d = dict(d)
    kind = d.pop("type")
    if kind == "conv":
        return ConvSpec(d["filters"], tuple(d["kernel"]), tuple(d["stride"]), d["padding"], d["leaky_slope"])
    if kind == "maxpool":
        return PoolSpec(tuple(d["kernel"]), d["padding"])
    if kind == "inception":
        return InceptionSpec(tuple(tuple(_layer_from_dict(x) for x in br) for br in d["branches"]))
    if kind == "dropout":
        return DropoutSpec(d["rate"])
    if kind == "lstm":
        return LSTMSpec(d["units"])
    if kind == "dense":
        return DenseSpec(d["units"], d["activation"])
    raise ValueError(f"unknown layer type {kind!r}")


def inception(filters: int = 64) -> InceptionSpec:
    return InceptionSpec((
        (ConvSpec(filters, (1, 1), padding="zero"), ConvSpec(filters, (3, 1), padding="zero")),
        (ConvSpec(filters, (1, 1), padding="zero"), ConvSpec(filters, (5, 1), padding="zero")),
        (PoolSpec((3, 1)), ConvSpec(filters, (1, 1), padding="zero")),
    ))


def _reduce(filters: int) -> ConvSpec:
    return ConvSpec(filters, (1, 2), (1, 2))


def _time_convs(filters: int, n: int = 2) -> list[ConvSpec]:
    return [ConvSpec(filters, (4, 1), padding="zero") for _ in range(n)]


def _head(inception_filters, lstm_units, dropout):
    return [inception(inception_filters), DropoutSpec(dropout), LSTMSpec(lstm_units), DenseSpec(3)]


def deeplob_full(time: int = 100, width: int = 40, conv_filters: int = 32,
                 inception_filters: int = 64, lstm_units: int = 64,
                 dropout: float = 0.2) -> ArchitectureSpec:
    """Full-book network: (px,sz) pairs, then ask/bid pairs, then all levels merged."""
    f = conv_filters
    layers = [_reduce(f), *_time_convs(f), _reduce(f), *_time_convs(f),
              ConvSpec(f, (1, width // 4)), *_time_convs(f)]
    return ArchitectureSpec("deeplob_full", time, width,
                            tuple(layers + _head(inception_filters, lstm_units, dropout)))


def level1(time: int = 100, width: int = 4, conv_filters: int = 32,
           inception_filters: int = 64, lstm_units: int = 64,
           dropout: float = 0.2) -> ArchitectureSpec:
    """Level-1 network: two stride-2 width reductions, 4 -> 2 -> 1."""
    f = conv_filters
    layers = [_reduce(f), *_time_convs(f), _reduce(f), *_time_convs(f)]
    return ArchitectureSpec("level1", time, width,
                            tuple(layers + _head(inception_filters, lstm_units, dropout)))


def slim(time: int = 100, width: int = 2, conv_filters: int = 32,
         inception_filters: int = 64, lstm_units: int = 64,
         dropout: float = 0.2) -> ArchitectureSpec:
    """Single-family network: one stride-1 (1x2) conv then two time convs."""
    f = conv_filters
    layers = [ConvSpec(f, (1, 2)), *_time_convs(f)]
    return ArchitectureSpec("slim", time, width,
                            tuple(layers + _head(inception_filters, lstm_units, dropout)))


PRESETS = {"deeplob_full": deeplob_full, "level1": level1, "slim": slim}


def preset(name: str, width: int | None = None, **kw) -> ArchitectureSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if width is not None:
        kw["width"] = width
    return factory(**kw)


def infer_shapes(spec: ArchitectureSpec) -> list[tuple]:
    """Shape after every top-level layer (without batch axis); validates the spec."""
    _validate(spec)
    _, shapes = _build(spec, np.random.default_rng(0))
    return shapes


def _validate(spec: ArchitectureSpec) -> None:
    if not spec.layers or not isinstance(spec.layers[-1], DenseSpec) or spec.layers[-1].units != 3:
        raise ShapeMismatch(len(spec.layers) - 1, "final layer must be Dense(3, softmax)")
    if spec.layers[-1].activation != "softmax":
        raise ShapeMismatch(len(spec.layers) - 1, "final activation must be softmax")

    def walk(layers):
        for layer in layers:
            if isinstance(layer, ConvSpec) and layer.leaky_slope != LEAKY_SLOPE:
                raise ValueError("every convolution is followed by LeakyReLU(0.01)")
            if isinstance(layer, InceptionSpec):
                for br in layer.branches:
                    walk(br)

    walk(spec.layers)


def _make(ls: LayerSpec, shape: tuple, rng) -> tuple[list[Layer], tuple]:
    if isinstance(ls, ConvSpec):
        conv = Conv2D(shape[2], ls.filters, ls.kernel, ls.stride, ls.padding, rng)
        return [conv, LeakyReLU(ls.leaky_slope)], conv.output_shape(shape)
    if isinstance(ls, PoolSpec):
        pool = MaxPool(ls.kernel, ls.padding)
        return [pool], pool.output_shape(shape)
    if isinstance(ls, InceptionSpec):
        branches = []
        for br in ls.branches:
            layers, s = [], shape
            for sub in br:
                made, s = _make(sub, s, rng)
                layers += made
            branches.append(Sequential(layers))
        inc = Inception(branches)
        return [inc], inc.output_shape(shape)
    if isinstance(ls, DropoutSpec):
        return [Dropout(ls.rate)], shape
    if isinstance(ls, LSTMSpec):
        layers = []
        if len(shape) == 3:
            seq = ToSequence()
            layers.append(seq)
            shape = seq.output_shape(shape)
        lstm = LSTM(shape[1], ls.units, rng)
        return layers + [lstm], lstm.output_shape(shape)
    if isinstance(ls, DenseSpec):
        if len(shape) != 1:
            raise ValueError(f"Dense needs a flat input, got {shape}")
        dense = Dense(shape[0], ls.units, rng)
        return [dense], (ls.units,)
    raise TypeError(f"unknown layer spec {ls!r}")


def _build(spec: ArchitectureSpec, rng) -> tuple[list[Layer], list[tuple]]:
    shape = (spec.time, spec.width, 1)
    layers, shapes = [], []
    for idx, ls in enumerate(spec.layers):
        if isinstance(ls, DropoutSpec) and len(shape) == 3:
            # dropout sits on the LSTM input, i.e. after flattening to a sequence
            seq = ToSequence()
            layers.append(seq)
            shape = seq.output_shape(shape)
        try:
            made, shape = _make(ls, shape, rng)
        except ValueError as exc:
            raise ShapeMismatch(idx, str(exc)) from exc
        layers += made
        shapes.append(shape)
    return layers, shapes


class Model:
    """A built network: ``forward`` maps (B, time, width) to class probabilities."""

    def __init__(self, spec: ArchitectureSpec, seed: int = 0):
        _validate(spec)
        self.spec = spec
        self.seed = seed
        self.layers, self.shapes = _build(spec, np.random.default_rng(seed))
        self.reseed_dropout(seed)

    def reseed_dropout(self, seed: int) -> None:
        rng = np.random.default_rng([seed, 1])
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = rng

    def params(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params()]

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        n = sum(p.size for p in self.params())
        if flat.shape != (n,):
            raise ValueError(f"expected {n} parameters, got {flat.shape}")
        pos = 0
        for p in self.params():
            p.data[...] = flat[pos : pos + p.size].reshape(p.shape)
            pos += p.size

    def logits(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1:] != (self.spec.time, self.spec.width):
            raise ShapeMismatch(0, f"input {x.shape} does not match (B, {self.spec.time}, {self.spec.width})")
        h = x[..., None]
        for i, layer in enumerate(self.layers):
            h = layer.forward(h, training)
            if not np.isfinite(h).all():
                raise NonFiniteActivation(i, type(layer).__name__)
        return h

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        return softmax(self.logits(x, training))

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        g = dlogits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def loss_and_gradients(self, x: np.ndarray, labels: np.ndarray,
                           training: bool = False) -> tuple[float, list[np.ndarray]]:
        """Mean cross-entropy and a gradient array per parameter (in ``params()`` order)."""
        self.zero_grad()
        logits = self.logits(x, training)
        loss, dlogits = softmax_cross_entropy(logits, np.asarray(labels, dtype=np.int64))
        self.backward(dlogits)
        grads = []
        for p in self.params():
            if not np.isfinite(p.grad).all():
                raise NonFiniteGradient(f"non-finite gradient in {p.name}")
            grads.append(p.grad.copy())
        return loss, grads

    def predict_proba(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        n = len(x)
        out = np.empty((n, 3))
        for start in range(0, n, batch_size):
            idx = np.arange(start, min(n, start + batch_size))
            out[idx] = self.forward(x[idx], training=False)
        return out

    def predict_labels(self, x, batch_size: int = 256) -> np.ndarray:
        return self.predict_proba(x, batch_size).argmax(axis=1).astype(np.int8)


def build_model(spec: ArchitectureSpec, seed: int = 0) -> Model:
    return Model(spec, seed)


def predict(model: Model, window: np.ndarray) -> tuple[Label, np.ndarray]:
    """Class for one (time, width) window; ties resolve UP < DOWN < STABLE."""
    probs = model.forward(np.asarray(window, dtype=np.float64)[None], training=False)[0]
    return Label(int(np.argmax(probs))), probs
