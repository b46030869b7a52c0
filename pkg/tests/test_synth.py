from dataclasses import replace

import numpy as np
import pytest

from lobpred.book import MARKET_CLOSE_NS, MARKET_OPEN_NS, read_snapshot_csv
from lobpred.features import PRICE_SCALE
from lobpred.synth import (
    ConfigInvalid,
    SynthConfig,
    VolRegimes,
    generate,
    generate_day,
    planted_ceiling,
    trading_dates,
    write_days,
)

SMALL = SynthConfig(n_days=3, events_per_day=4000)
TICK = int(round(SMALL.tick * PRICE_SCALE))


def moves(arr):
    """(direction of each mid move in ticks, displayed imbalance just before it)."""
    mid2 = arr[:, 1] + arr[:, 3]
    step = np.diff(mid2) // (2 * TICK)
    shown = (arr[:, 4] - arr[:, 2]) / (arr[:, 4] + arr[:, 2])
    hit = step != 0
    return step[hit], shown[:-1][hit]


def test_deterministic_and_day_independent():
    a = generate_day(SMALL, 2)
    np.testing.assert_array_equal(a, generate_day(SMALL, 2))
    np.testing.assert_array_equal(a, generate_day(replace(SMALL, n_days=10), 2))
    assert not np.array_equal(a, generate_day(replace(SMALL, seed=1), 2))


def test_snapshot_layout_and_book_sanity():
    arr = generate_day(SMALL, 0)
    assert arr.shape == (4000, 41) and arr.dtype == np.int64
    ts = arr[:, 0]
    assert np.all(np.diff(ts) > 0) and ts[0] >= MARKET_OPEN_NS and ts[-1] < MARKET_CLOSE_NS
    ask_px, bid_px = arr[:, 1::4], arr[:, 3::4]
    assert np.all(arr[:, 2::4] > 0) and np.all(arr[:, 4::4] > 0)
    assert np.all(np.diff(ask_px, axis=1) == TICK) and np.all(np.diff(bid_px, axis=1) == -TICK)
    assert np.all(ask_px[:, 0] - bid_px[:, 0] == TICK)


def test_mid_moves_one_tick_at_a_time():
    step, _ = moves(generate_day(SMALL, 1))
    assert set(np.unique(step)) <= {-1, 1}
    # activity 0.1 over 3,999 transitions
    assert abs(len(step) / 3999 - 0.1) < 0.02


def test_overnight_gap():
    days = generate(replace(SMALL, overnight_gap=50))
    opens = [arr[0, 3] for _, arr in days]  # no move is allowed on the first event
    assert np.all(np.diff(opens) == 50 * TICK)
    assert opens[0] == round(SMALL.mid0 * PRICE_SCALE)


def test_trading_dates_skip_weekends():
    ds = trading_dates(SMALL.start_date, 6)
    assert all(d.weekday() < 5 for d in ds)
    assert (ds[-1] - ds[0]).days == 7


def test_no_signal_is_a_fair_coin():
    cfg = replace(SMALL, events_per_day=20_000)
    step, shown = moves(generate_day(cfg, 0))
    n = len(step)
    assert abs((step > 0).mean() - 0.5) < 4 * 0.5 / np.sqrt(n)
    # imbalance carries nothing either
    assert abs(np.corrcoef(step, shown)[0, 1]) < 4 / np.sqrt(n)


def test_planted_logistic_direction():
    beta = 2.15
    cfg = replace(SMALL, events_per_day=40_000, signal_beta=beta)
    steps, shown = zip(*(moves(generate_day(cfg, i)) for i in range(3)))
    step, shown = np.concatenate(steps), np.concatenate(shown)
    p_model = 1 / (1 + np.exp(-beta * shown))
    for lo, hi in [(-1, -0.5), (-0.5, 0), (0, 0.5), (0.5, 1)]:
        sel = (shown >= lo) & (shown < hi)
        k = sel.sum()
        assert k > 200
        got = (step[sel] > 0).mean()
        want = p_model[sel].mean()
        assert abs(got - want) < 4 * np.sqrt(want * (1 - want) / k)


def test_past_moves_carry_no_direction():
    cfg = replace(SMALL, events_per_day=40_000, signal_beta=2.15)
    step, _ = moves(generate_day(cfg, 0))
    assert abs(np.corrcoef(step[:-1], step[1:])[0, 1]) < 4 / np.sqrt(len(step))


def test_ceiling():
    assert planted_ceiling(SMALL) == 0.5
    ceilings = [planted_ceiling(replace(SMALL, signal_beta=b)) for b in (0.5, 1.0, 2.15, 5.0)]
    assert all(a < b for a, b in zip(ceilings, ceilings[1:])) and ceilings[-1] < 1
    with pytest.raises(ConfigInvalid):
        planted_ceiling(SMALL, n_trials=10)


def test_empirical_matches_ceiling():
    cfg = replace(SMALL, events_per_day=40_000, signal_beta=2.15)
    step, shown = moves(generate_day(cfg, 4))
    oracle = (np.sign(shown) == step).mean()
    assert abs(oracle - planted_ceiling(cfg)) < 4 * 0.5 / np.sqrt(len(step))


def test_regimes_change_activity():
    cfg = replace(SMALL, events_per_day=20_000, vol_regimes=VolRegimes(low=0.0, high=1.0, switch_prob=0.01))
    arr = generate_day(cfg, 0)
    moved = np.diff(arr[:, 1]) != 0
    runs = np.diff(np.flatnonzero(np.diff(moved.astype(int)) != 0))
    # regimes produce long stretches of all-move and no-move events
    assert moved.mean() == pytest.approx(0.5, abs=0.15)
    assert runs.mean() > 20


@pytest.mark.parametrize("bad", [
    dict(n_days=0), dict(events_per_day=10), dict(tick=0.0), dict(activity=1.5),
    dict(depth=11), dict(imbalance_scale=0.0), dict(mid0=0.05),
    dict(vol_regimes=dict(low=-0.1)),
])
def test_invalid_config(bad):
    with pytest.raises(ConfigInvalid):
        replace(SMALL, **bad)


def test_write_days_round_trip(tmp_path):
    cfg = replace(SMALL, n_days=2, events_per_day=500)
    paths = write_days(cfg, tmp_path)
    assert [p.name for p in paths] == ["2022-01-03.csv", "2022-01-04.csv"]
    np.testing.assert_array_equal(read_snapshot_csv(paths[1]), generate_day(cfg, 1))
