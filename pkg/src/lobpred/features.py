"""Standardized feature matrices from snapshot arrays.

Snapshots travel as (N, 41) integer arrays in the CSV column order (see
:mod:`lobpred.book`).  Prices are converted from 1/10000 USD to dollars here
and nowhere else.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from .book import DEPTH, BookSnapshot

PRICE_SCALE = 10_000.0

ASK_PX = np.arange(1, 4 * DEPTH + 1, 4)
ASK_SZ = ASK_PX + 1
BID_PX = ASK_PX + 2
BID_SZ = ASK_PX + 3
PRICE_COLS = np.sort(np.concatenate([ASK_PX, BID_PX]))
VOLUME_COLS = np.sort(np.concatenate([ASK_SZ, BID_SZ]))


class FeatureError(ValueError):
    pass


class InsufficientHistory(FeatureError):
    pass


class DegenerateStd(FeatureError):
    pass


class InsufficientDepth(FeatureError):
    pass


class Variant(str, enum.Enum):
    FULL_LOB = "full_lob"
    LEVEL1 = "level1"
    PRICES_ONLY = "prices_only"
    VOLUMES_ONLY = "volumes_only"
    PRICES_IMBALANCE = "prices_imbalance"

    @property
    def width(self) -> int:
        return _WIDTHS[self]

    @property
    def required_depth(self) -> int:
        return DEPTH if self is Variant.FULL_LOB else 1


_WIDTHS = {
    Variant.FULL_LOB: 4 * DEPTH,
    Variant.LEVEL1: 4,
    Variant.PRICES_ONLY: 2,
    Variant.VOLUMES_ONLY: 2,
    Variant.PRICES_IMBALANCE: 3,
}


@dataclass(frozen=True)
class Scaler:
    """Pooled z-score parameters: one pair for all prices (USD), one for all volumes."""

    price_mean: float
    price_std: float
    volume_mean: float
    volume_std: float
    fitted_over: tuple[date, ...] = ()

    def check_applicable(self, day: date, n_days: int = 5) -> None:
        if len(self.fitted_over) != n_days or any(d >= day for d in self.fitted_over):
            raise InsufficientHistory(
                f"scaler fitted over {self.fitted_over} cannot transform {day}"
            )


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    variant: Variant
    ts_ns: int


@dataclass(frozen=True)
class StandardizedSeries:
    m: np.ndarray
    source_day: date | None = None

    def __len__(self) -> int:
        return len(self.m)


def as_array(snaps) -> np.ndarray:
    if isinstance(snaps, np.ndarray):
        return snaps
    if isinstance(snaps, BookSnapshot):
        return np.asarray([snaps.to_row()], dtype=np.int64)
    return np.asarray([s.to_row() for s in snaps], dtype=np.int64).reshape(-1, 4 * DEPTH + 1)


def fit_scaler(prior_days: Sequence, dates: Sequence[date] | None = None,
               n_days: int = 5) -> Scaler:
    """Pool every price entry and every volume entry of the prior days.

    Population standard deviation (ddof=0).  Sentinel-padded levels
    (volume 0) are excluded from both pools.
    """
    if len(prior_days) < n_days:
        raise InsufficientHistory(f"need {n_days} prior days, got {len(prior_days)}")
    prior_days = list(prior_days)[-n_days:]
    prices, volumes = [], []
    for day in prior_days:
        arr = as_array(day)
        if len(arr) == 0:
            raise InsufficientHistory("empty prior day")
        sizes = arr[:, VOLUME_COLS]
        px = arr[:, PRICE_COLS]
        valid = sizes > 0
        prices.append(px[valid] / PRICE_SCALE)
        volumes.append(sizes[valid].astype(np.float64))
    prices = np.concatenate(prices)
    volumes = np.concatenate(volumes)
    p_std, v_std = prices.std(), volumes.std()
    if p_std == 0 or v_std == 0:
        raise DegenerateStd(f"price std {p_std}, volume std {v_std}")
    fitted = tuple(dates[-n_days:]) if dates is not None else ()
    return Scaler(float(prices.mean()), float(p_std), float(volumes.mean()), float(v_std), fitted)


def valid_depth(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Populated levels per side, counted from the top until the first empty one."""
    def leading(sizes):
        return np.cumprod(sizes > 0, axis=1).sum(axis=1)

    return leading(arr[:, ASK_SZ]), leading(arr[:, BID_SZ])


def usable_rows(arr: np.ndarray, variant: Variant) -> np.ndarray:
    """Boolean mask of snapshots deep enough for ``variant``."""
    ask_depth, bid_depth = valid_depth(arr)
    need = Variant(variant).required_depth
    return (ask_depth >= need) & (bid_depth >= need)


def imbalance_array(arr: np.ndarray) -> np.ndarray:
    bid = arr[:, BID_SZ[0]].astype(np.float64)
    ask = arr[:, ASK_SZ[0]].astype(np.float64)
    if np.any(bid <= 0) or np.any(ask <= 0):
        raise InsufficientDepth("imbalance needs both Level-1 volumes > 0")
    return (bid - ask) / (bid + ask)


def imbalance(snap) -> float:
    """Level-1 volume imbalance, positive when the bid side is heavier."""
    return float(imbalance_array(as_array(snap))[0])


def standardize_array(arr: np.ndarray, scaler: Scaler, variant: Variant) -> np.ndarray:
    """Vectorised ``standardize``: (N, 41) snapshots -> (N, M) features."""
    variant = Variant(variant)
    arr = as_array(arr)
    if not usable_rows(arr, variant).all():
        raise InsufficientDepth(f"{variant.value} needs {variant.required_depth} level(s) per side")
    z = np.empty((len(arr), 4 * DEPTH), dtype=np.float64)
    body = arr[:, 1:]
    z[:, 0::2] = (body[:, 0::2] / PRICE_SCALE - scaler.price_mean) / scaler.price_std
    z[:, 1::2] = (body[:, 1::2] - scaler.volume_mean) / scaler.volume_std
    # z columns: ask_px_1, ask_sz_1, bid_px_1, bid_sz_1, ...
    if variant is Variant.FULL_LOB:
        return z
    if variant is Variant.LEVEL1:
        return z[:, :4].copy()
    if variant is Variant.PRICES_ONLY:
        return z[:, [0, 2]]
    if variant is Variant.VOLUMES_ONLY:
        return z[:, [1, 3]]
    return np.column_stack([z[:, 0], z[:, 2], imbalance_array(arr)])


def standardize(snap, scaler: Scaler, variant: Variant) -> FeatureVector:
    arr = as_array(snap)
    return FeatureVector(standardize_array(arr, scaler, variant)[0], Variant(variant), int(arr[0, 0]))


def mid_array(arr: np.ndarray, scaler: Scaler) -> np.ndarray:
    arr = as_array(arr)
    if np.any(arr[:, ASK_SZ[0]] <= 0) or np.any(arr[:, BID_SZ[0]] <= 0):
        raise InsufficientDepth("mid-price needs a two-sided book")
    mid = (arr[:, ASK_PX[0]] + arr[:, BID_PX[0]]) / (2 * PRICE_SCALE)
    return (mid - scaler.price_mean) / scaler.price_std


def mid_series(snaps, scaler: Scaler, day: date | None = None) -> StandardizedSeries:
    return StandardizedSeries(mid_array(as_array(snaps), scaler), day)
