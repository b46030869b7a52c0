"""Synthetic snapshot streams with known ground truth.

Each event is one top-of-book update.  With probability ``activity`` (or the
current regime's activity) the mid moves one tick; the move is up with
probability ``logistic(signal_beta * imbalance)``, where ``imbalance`` is
the Level-1 volume imbalance displayed in the snapshot just before the
move.  The imbalance follows a mean-reverting latent process
``z -> phi*z + sqrt(1-phi^2)*s*eps`` mapped through ``tanh``, and is redrawn
from its stationary law whenever the price moves (the depleted queue is
replaced by a fresh one).  Past moves therefore carry no information about
the current imbalance, so price history alone has no directional edge.

Each day opens ``overnight_gap`` ticks above the previous day's open.  With
prices standardized by the previous five days this keeps the standardized
mid-price well away from zero, which the relative-return targets need.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .book import DEPTH, MARKET_CLOSE_NS, MARKET_OPEN_NS, write_snapshot_csv
from .features import PRICE_SCALE


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class VolRegimes:
    low: float = 0.05
    high: float = 0.3
    switch_prob: float = 0.002


@dataclass(frozen=True)
class VolumeLaw:
    mean: float = 400.0
    dispersion: float = 0.5


@dataclass(frozen=True)
class SynthConfig:
    n_days: int = 26
    events_per_day: int = 5000
    seed: int = 0
    mid0: float = 150.0
    tick: float = 0.01
    signal_beta: float = 0.0
    activity: float = 0.1
    vol_regimes: VolRegimes | None = None
    volume_law: VolumeLaw = field(default_factory=VolumeLaw)
    depth: int = DEPTH
    imbalance_persistence: float = 0.98
    imbalance_scale: float = 1.0
    overnight_gap: int = 50
    start_date: date = date(2022, 1, 3)
    min_events: int = 140

    def __post_init__(self):
        if isinstance(self.vol_regimes, dict):
            object.__setattr__(self, "vol_regimes", VolRegimes(**self.vol_regimes))
        if isinstance(self.volume_law, dict):
            object.__setattr__(self, "volume_law", VolumeLaw(**self.volume_law))
        if isinstance(self.start_date, str):
            object.__setattr__(self, "start_date", date.fromisoformat(self.start_date))
        self.validate()

    def validate(self) -> None:
        probs = [self.activity, self.imbalance_persistence]
        if self.vol_regimes is not None:
            probs += [self.vol_regimes.low, self.vol_regimes.high, self.vol_regimes.switch_prob]
        problems = []
        if self.n_days < 1:
            problems.append("n_days must be >= 1")
        if self.events_per_day < self.min_events:
            problems.append(f"events_per_day must be >= {self.min_events}")
        if not self.tick > 0:
            problems.append("tick must be > 0")
        if any(not 0 <= p <= 1 for p in probs):
            problems.append("probabilities must lie in [0, 1]")
        if self.depth < 1 or self.depth > DEPTH:
            problems.append(f"depth must be in 1..{DEPTH}")
        if self.volume_law.mean < 2 or self.volume_law.dispersion <= 0:
            problems.append("volume law needs mean >= 2 and dispersion > 0")
        if self.imbalance_scale <= 0:
            problems.append("imbalance_scale must be > 0")
        if self.mid0 <= self.tick * (self.depth + 1):
            problems.append("mid0 too close to zero for the book depth")
        if problems:
            raise ConfigInvalid("; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start_date"] = self.start_date.isoformat()
        return d


def trading_dates(start: date, n: int) -> list[date]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += timedelta(days=1)
    return out


def _split_level1(total, imb):
    """Split total Level-1 volume into (bid, ask) so that bid/ask tilt with ``imb``."""
    bid = np.maximum(np.rint(total * (1.0 + imb) / 2.0), 1.0)
    ask = np.maximum(np.rint(total - bid), 1.0)
    return bid, ask


def _gamma_volumes(rng, law: VolumeLaw, size):
    shape = 1.0 / law.dispersion
    return rng.gamma(shape, law.mean / shape, size=size)


def generate_day(cfg: SynthConfig, day_index: int) -> np.ndarray:
    """One day of snapshots as an (events_per_day, 41) int64 array.

    Depends only on (cfg, day_index): days can be generated independently.
    """
    rng = np.random.default_rng([cfg.seed, day_index])
    n = cfg.events_per_day
    tick = int(round(cfg.tick * PRICE_SCALE))
    open_level = int(round(cfg.mid0 * PRICE_SCALE / tick)) + day_index * cfg.overnight_gap
    phi = cfg.imbalance_persistence
    innov = float(np.sqrt(1.0 - phi * phi) * cfg.imbalance_scale)

    u_move = rng.random(n)
    u_dir = rng.random(n)
    eps = rng.standard_normal(n)
    fresh = cfg.imbalance_scale * rng.standard_normal(n)
    u_switch = rng.random(n)
    start_high = rng.random() < 0.5
    totals = np.maximum(_gamma_volumes(rng, cfg.volume_law, n), 2.0)
    deep_init = np.maximum(np.rint(_gamma_volumes(rng, cfg.volume_law, (2, cfg.depth))), 1)
    deep_cell = rng.integers(0, 2 * cfg.depth, size=n)
    deep_vol = np.maximum(np.rint(_gamma_volumes(rng, cfg.volume_law, n)), 1)

    # activity per event (regime switching is independent of everything else)
    if cfg.vol_regimes is None:
        activity = np.full(n, cfg.activity)
    else:
        flips = np.cumsum(u_switch < cfg.vol_regimes.switch_prob) % 2
        high = (flips == 1) ^ start_high
        activity = np.where(high, cfg.vol_regimes.high, cfg.vol_regimes.low)
    moves = u_move < activity
    moves[0] = False

    # sequential part: latent imbalance, displayed volumes, and price level
    beta = cfg.signal_beta
    tanh, exp = math.tanh, math.exp
    level = np.empty(n, dtype=np.int64)
    bid1 = np.empty(n)
    ask1 = np.empty(n)
    lvl, z, shown = open_level, float(fresh[0]), 0.0
    for t in range(n):
        if moves[t]:
            p_up = 1.0 / (1.0 + exp(-beta * shown))
            lvl += 1 if u_dir[t] < p_up else -1
            z = float(fresh[t])
        elif t:
            z = phi * z + innov * float(eps[t])
        imb = tanh(z)
        total = float(totals[t])
        b = max(float(round(total * (1.0 + imb) / 2.0)), 1.0)
        a = max(float(round(total - b)), 1.0)
        bid1[t], ask1[t], level[t] = b, a, lvl
        shown = (b - a) / (b + a)

    # deeper levels: each event refreshes one (side, level) cell; forward-fill
    deep = np.empty((n, 2, cfg.depth))
    idx = np.arange(n)
    for cell in range(2 * cfg.depth):
        side, k = divmod(cell, cfg.depth)
        hit = np.where(deep_cell == cell, idx, -1)
        last = np.maximum.accumulate(hit)
        deep[:, side, k] = np.where(last >= 0, deep_vol[np.maximum(last, 0)], deep_init[side, k])

    out = np.zeros((n, 1 + 4 * DEPTH), dtype=np.int64)
    out[:, 0] = MARKET_OPEN_NS + (
        (np.arange(n) + 0.5) * (MARKET_CLOSE_NS - MARKET_OPEN_NS) / n
    ).astype(np.int64)
    lv = np.arange(cfg.depth)
    stop = 4 * cfg.depth + 1
    out[:, 1:stop:4] = (level[:, None] + 1 + lv) * tick
    out[:, 3:stop:4] = (level[:, None] - lv) * tick
    out[:, 2:stop:4] = deep[:, 1]
    out[:, 4:stop:4] = deep[:, 0]
    out[:, 2] = ask1
    out[:, 4] = bid1
    return out


def generate(cfg: SynthConfig) -> list[tuple[date, np.ndarray]]:
    dates = trading_dates(cfg.start_date, cfg.n_days)
    return [(d, generate_day(cfg, i)) for i, d in enumerate(dates)]


def write_days(cfg: SynthConfig, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for d, arr in generate(cfg):
        path = out_dir / f"{d.isoformat()}.csv"
        write_snapshot_csv(path, arr)
        paths.append(path)
    return paths


def planted_ceiling(cfg: SynthConfig, n_trials: int = 100_000) -> float:
    """Monte Carlo Bayes directional accuracy: E[max(p_up, 1 - p_up)] over
    displayed imbalances drawn from the generator's own law.
    """
    if n_trials < 10_000:
        raise ConfigInvalid("planted_ceiling needs n_trials >= 10_000")
    rng = np.random.default_rng([cfg.seed, 2**31 - 1])
    z = cfg.imbalance_scale * rng.standard_normal(n_trials)
    totals = np.maximum(_gamma_volumes(rng, cfg.volume_law, n_trials), 2.0)
    bid, ask = _split_level1(totals, np.tanh(z))
    shown = (bid - ask) / (bid + ask)
    p_up = 1.0 / (1.0 + np.exp(-cfg.signal_beta * shown))
    return float(np.maximum(p_up, 1.0 - p_up).mean())
