"""Modified returns, class labels and windowed samples.

With ``m`` the standardized mid-price series,

    p_k(t) = mean(m[t-k+1 .. t])        f_k(t) = mean(m[t+1 .. t+k])
    r_{k,k'}(t) = (f_{k'}(t) - p_k(t)) / p_k(t)

``TargetKind.RKK`` uses the policy's ``k`` as the past horizon;
``TargetKind.R1K`` bases the return on the current price (past horizon 1).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .features import StandardizedSeries

EPS = 1e-8
# differences of two averages smaller than this many ulps are rounding, not price moves
RESOLUTION_ULPS = 64


class LabelingError(ValueError):
    pass


class IndexOutOfRange(LabelingError, IndexError):
    pass


class ZeroDenominator(LabelingError, ZeroDivisionError):
    pass


class EmptyInput(LabelingError):
    pass


class DayTooShort(LabelingError):
    pass


class Label(enum.IntEnum):
    UP = 0
    DOWN = 1
    STABLE = 2


class TargetKind(str, enum.Enum):
    RKK = "rkk"
    R1K = "r1k"


@dataclass(frozen=True)
class LabelingPolicy:
    k: int = 20
    k_prime: int = 20
    alpha: float | None = None
    target_kind: TargetKind = TargetKind.R1K
    window: int = 100
    stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "target_kind", TargetKind(self.target_kind))
        if self.k < 1 or self.k_prime < 1 or self.window < 1 or self.stride < 1:
            raise ValueError(f"invalid labeling policy {self}")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    @property
    def past_horizon(self) -> int:
        return 1 if self.target_kind is TargetKind.R1K else self.k

    @property
    def min_day_length(self) -> int:
        return self.window + self.k + self.k_prime


@dataclass(frozen=True)
class LabeledSample:
    window: np.ndarray
    y: float
    label: Label
    t: int
    day: date | None = None


def _values(m) -> np.ndarray:
    return m.m if isinstance(m, StandardizedSeries) else np.asarray(m, dtype=np.float64)


def past_avg(m, t: int, k: int) -> float:
    m = _values(m)
    if k < 1 or t - k + 1 < 0 or t >= len(m):
        raise IndexOutOfRange(f"p_{k}({t}) needs m[{t - k + 1}..{t}], series length {len(m)}")
    return float(np.mean(m[t - k + 1 : t + 1]))


def future_avg(m, t: int, k: int) -> float:
    m = _values(m)
    if k < 1 or t < 0 or t + k > len(m) - 1:
        raise IndexOutOfRange(f"f_{k}({t}) needs m[{t + 1}..{t + k}], series length {len(m)}")
    return float(np.mean(m[t + 1 : t + k + 1]))


def _excess(f, p):
    """f - p, with rounding-level differences set to exactly 0.

    Averages of identical prices need not reproduce the price bit for bit;
    without this, windows with no price move get |y| ~ 1e-16 and alpha could
    end up splitting rounding noise.
    """
    diff = np.subtract(f, p)
    tol = RESOLUTION_ULPS * np.finfo(np.float64).eps * np.maximum(np.abs(f), np.abs(p))
    return np.where(np.abs(diff) <= tol, 0.0, diff)


def modified_return(m, t: int, k: int, k_prime: int) -> float:
    p = past_avg(m, t, k)
    if abs(p) < EPS:
        raise ZeroDenominator(f"|p_{k}({t})| = {abs(p):.3g} < {EPS}")
    return float(_excess(future_avg(m, t, k_prime), p) / p)


def modified_return_series(m, k: int, k_prime: int) -> np.ndarray:
    """r_{k,k'}(t) for every t, NaN where either average is out of range."""
    m = _values(m)
    n = len(m)
    out = np.full(n, np.nan)
    lo, hi = k - 1, n - 1 - k_prime
    if hi < lo:
        return out
    past = sliding_window_view(m, k).mean(axis=1)  # past[i] = p_k(i + k - 1)
    fut = sliding_window_view(m, k_prime).mean(axis=1)  # fut[i] = f_k'(i - 1)
    p = past[lo - (k - 1) : hi - (k - 1) + 1]
    f = fut[lo + 1 : hi + 2]
    if np.any(np.abs(p) < EPS):
        bad = lo + int(np.argmax(np.abs(p) < EPS))
        raise ZeroDenominator(f"|p_{k}({bad})| < {EPS}")
    out[lo : hi + 1] = _excess(f, p) / p
    return out


def choose_alpha(targets: Sequence[float]) -> float:
    """Class-balancing threshold: the 1/3 quantile of |y| (linear interpolation)."""
    y = np.asarray(targets, dtype=np.float64)
    y = y[np.isfinite(y)]
    if len(y) < 3:
        raise EmptyInput(f"need at least 3 finite targets, got {len(y)}")
    alpha = float(np.percentile(np.abs(y), 100.0 / 3.0))
    if alpha <= 0:
        raise LabelingError("over a third of the targets are exactly zero; alpha would be 0")
    return alpha


def classify(y: float, alpha: float) -> Label:
    if y > alpha:
        return Label.UP
    if y < -alpha:
        return Label.DOWN
    return Label.STABLE


def classify_array(y: np.ndarray, alpha: float) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    out = np.full(y.shape, int(Label.STABLE), dtype=np.int8)
    out[y > alpha] = Label.UP
    out[y < -alpha] = Label.DOWN
    return out


@dataclass
class DaySamples:
    """Sample anchors of one day before labels are attached."""

    features: np.ndarray  # (N, M)
    m: np.ndarray  # (N,)
    anchors: np.ndarray  # (S,) event indices t
    y: np.ndarray  # (S,) targets at the anchors
    window: int
    day: date | None = None

    def __len__(self) -> int:
        return len(self.anchors)


def sample_anchors(n: int, policy: LabelingPolicy, stride: int | None = None) -> np.ndarray:
    """First anchor is ``window - 1 + k``, last is ``n - 1 - k_prime``."""
    if n < policy.min_day_length:
        raise DayTooShort(f"day has {n} observations, need {policy.min_day_length}")
    first = policy.window - 1 + policy.k
    last = n - 1 - policy.k_prime
    return np.arange(first, last + 1, stride or policy.stride, dtype=np.int64)


def day_samples(features: np.ndarray, m, policy: LabelingPolicy, day: date | None = None,
                stride: int | None = None) -> DaySamples:
    m = _values(m)
    features = np.asarray(features, dtype=np.float64)
    if len(features) != len(m):
        raise LabelingError(f"features ({len(features)}) and m ({len(m)}) are not aligned")
    anchors = sample_anchors(len(m), policy, stride)
    r = modified_return_series(m, policy.past_horizon, policy.k_prime)
    return DaySamples(features, m, anchors, r[anchors], policy.window, day)


def build_samples(features, m, policy: LabelingPolicy, day: date | None = None) -> list[LabeledSample]:
    if policy.alpha is None:
        raise LabelingError("policy.alpha must be set to label samples")
    ds = day_samples(features, m, policy, day)
    windows = sliding_window_view(ds.features, policy.window, axis=0)  # (N-w+1, M, w)
    return [
        LabeledSample(windows[t - policy.window + 1].T, float(y), classify(y, policy.alpha), int(t), day)
        for t, y in zip(ds.anchors, ds.y)
    ]


class WindowArray:
    """Lazy stack of (window, M) matrices drawn from several days.

    ``wa[idx]`` gathers the windows for an index array into a new
    (len(idx), window, M) array; nothing is materialised up front.
    """

    def __init__(self, days: Sequence[DaySamples]):
        if not days:
            raise EmptyInput("no days")
        self.window = days[0].window
        self._rows = np.concatenate([d.features for d in days])
        offsets = np.cumsum([0] + [len(d.features) for d in days[:-1]])
        self._ends = np.concatenate([d.anchors + off for d, off in zip(days, offsets)])
        self._steps = np.arange(-self.window + 1, 1)

    def __len__(self) -> int:
        return len(self._ends)

    @property
    def width(self) -> int:
        return self._rows.shape[1]

    def __getitem__(self, idx) -> np.ndarray:
        ends = self._ends[idx]
        return self._rows[np.asarray(ends)[..., None] + self._steps]


# -- labeled-sample archive ---------------------------------------------------

ARCHIVE_MAGIC = b"LOBSAMP1"
_ARCHIVE_HEAD = struct.Struct("<8sHIIQIIdBI")
_KINDS = {TargetKind.RKK: 0, TargetKind.R1K: 1}


def write_archive(fh: BinaryIO, samples: Sequence[LabeledSample], policy: LabelingPolicy) -> None:
    """Write labeled samples; layout is documented in docs/formats.md."""
    if policy.alpha is None:
        raise LabelingError("archive needs a policy with alpha")
    count = len(samples)
    width = samples[0].window.shape[1] if count else 0
    fh.write(_ARCHIVE_HEAD.pack(ARCHIVE_MAGIC, 1, width, policy.window, count, policy.k,
                                policy.k_prime, policy.alpha, _KINDS[policy.target_kind],
                                policy.stride))
    if count:
        fh.write(np.stack([s.window for s in samples]).astype("<f8").tobytes())
    fh.write(np.asarray([s.label for s in samples], dtype="i1").tobytes())
    fh.write(np.asarray([s.y for s in samples], dtype="<f8").tobytes())
    fh.write(np.asarray([s.t for s in samples], dtype="<i8").tobytes())


def read_archive(fh: BinaryIO) -> tuple[LabelingPolicy, list[LabeledSample]]:
    head = fh.read(_ARCHIVE_HEAD.size)
    if len(head) < _ARCHIVE_HEAD.size:
        raise LabelingError("truncated archive header")
    magic, version, width, window, count, k, k_prime, alpha, kind, stride = _ARCHIVE_HEAD.unpack(head)
    if magic != ARCHIVE_MAGIC or version != 1:
        raise LabelingError(f"not a labeled-sample archive (magic {magic!r}, version {version})")
    kind = {v: key for key, v in _KINDS.items()}[kind]
    policy = LabelingPolicy(k, k_prime, alpha, kind, window, stride)

    def take(dtype, n):
        size = np.dtype(dtype).itemsize * n
        buf = fh.read(size)
        if len(buf) != size:
            raise LabelingError("truncated archive body")
        return np.frombuffer(buf, dtype=dtype)

    windows = take("<f8", count * window * width).reshape(count, window, width)
    labels = take("i1", count)
    ys = take("<f8", count)
    ts = take("<i8", count)
    samples = [LabeledSample(windows[i], float(ys[i]), Label(int(labels[i])), int(ts[i]))
               for i in range(count)]
    return policy, samples


def save_archive(path: str | Path, samples, policy: LabelingPolicy) -> None:
    with open(path, "wb") as fh:
        write_archive(fh, samples, policy)


def load_archive(path: str | Path):
    with open(path, "rb") as fh:
        return read_archive(fh)
