"""Naive baseline for the overlapping target r_{k,k'}.

At time t the last fully observable value of the target is r_{k,k'}(t - k');
for t - k' < s < t only the first t - s future prices of r_{k,k'}(s) are
known, giving the truncated series

    x_{k,k'}(s) = r_{k,k'}(s)          if s <= t - k'
                = r_{k,t-s}(s)         if t - k' < s < t

The baseline predicts ``classify(x_{k,k'}(t - 1), alpha)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .features import StandardizedSeries
from .labeling import (
    EPS,
    IndexOutOfRange,
    Label,
    LabelingPolicy,
    TargetKind,
    ZeroDenominator,
    _excess,
    _values,
    classify,
    classify_array,
    modified_return,
)


@dataclass(frozen=True)
class NaiveState:
    policy: LabelingPolicy
    m: StandardizedSeries

    def __post_init__(self):
        if self.policy.target_kind is not TargetKind.RKK:
            raise ValueError("the naive baseline targets r_k (TargetKind.RKK)")
        if self.policy.alpha is None:
            raise ValueError("naive baseline needs alpha")

    def predict(self, t: int) -> Label:
        return naive_predict(self.m, t, self.policy)


def truncated_series(m, s: int, t: int, k: int, k_prime: int) -> float:
    if s >= t:
        raise IndexOutOfRange(f"s={s} must precede t={t}")
    if s <= t - k_prime:
        return modified_return(m, s, k, k_prime)
    return modified_return(m, s, k, t - s)


def naive_predict(m, t: int, policy: LabelingPolicy) -> Label:
    x = truncated_series(m, t - 1, t, policy.k, policy.k_prime)
    return classify(x, policy.alpha)


def naive_predict_array(m, anchors: np.ndarray, policy: LabelingPolicy) -> np.ndarray:
    """Vectorised ``naive_predict`` over many anchors t (labels as int8)."""
    m = _values(m)
    anchors = np.asarray(anchors, dtype=np.int64)
    k = policy.k
    if len(anchors) and (anchors.min() - k < 0 or anchors.max() >= len(m)):
        raise IndexOutOfRange("anchor outside the range where x(t-1) is defined")
    past = sliding_window_view(m, k).mean(axis=1)
    p = past[anchors - 1 - (k - 1)]  # p_k(t-1)
    if np.any(np.abs(p) < EPS):
        raise ZeroDenominator("p_k(t-1) too close to zero")
    # x(t-1) = r_{k,1}(t-1) under either branch: only m(t) lies beyond t-1
    x = _excess(m[anchors], p) / p
    return classify_array(x, policy.alpha)
