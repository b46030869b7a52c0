import json
from dataclasses import replace
from datetime import date

import numpy as np
import pytest
import yaml

from conftest import EventGen
from lobpred import cli, config
from lobpred.book import reconstruct, snapshots_to_array, write_snapshot_csv
from lobpred.config import ConfigError
from lobpred.features import InsufficientHistory
from lobpred.itch import encode_message, frame
from lobpred.runner import (
    ArraySource,
    CsvDirSource,
    DayCache,
    ItchDirSource,
    RunnerError,
    SynthSource,
    compare_variants,
    fit_day,
    load_reports,
    run_day,
    run_range,
)
from lobpred.synth import generate

RAW = {
    "data": {"synth": {"n_days": 7, "events_per_day": 600, "activity": 0.3}},
    "labels": {"k": 5, "k_prime": 5, "window": 10, "stride": 5, "eval_stride": 3},
    "model": {"options": {"conv_filters": 2, "inception_filters": 2, "lstm_units": 3}},
    "train": {"epochs": 1, "batch_size": 16},
    "train_days": 3,
    "scaler_days": 2,
}


def make_cfg(tmp_path, **over):
    raw = json.loads(json.dumps(RAW))
    for k, v in over.items():
        raw[k] = v
    raw["output_dir"] = str(tmp_path / "run")
    return config.from_dict(raw)


def naive_cfg(tmp_path):
    return make_cfg(tmp_path, model={"kind": "naive"},
                    labels={**RAW["labels"], "target": "rkk"})


def array_source(cfg):
    return ArraySource(dict(generate(cfg.data.synth)))


# -- configuration ---------------------------------------------------------------

def test_config_round_trip(tmp_path):
    cfg = make_cfg(tmp_path)
    again = config.from_dict(yaml.safe_load(config.dump(cfg)))
    assert again == cfg and again.digest() == cfg.digest()
    assert cfg.preset_name == "level1" and cfg.min_days == 6


def test_config_rejects_unknown_and_bad_values(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        config.from_dict({"labels": {"kk": 3}})
    with pytest.raises(ConfigError, match="unknown"):
        config.from_dict({"epochs": 3})
    with pytest.raises(ConfigError):
        config.from_dict({"model": {"kind": "naive"}})  # naive needs r_k targets
    with pytest.raises(ConfigError):
        config.from_dict({"variant": "level7"})
    with pytest.raises(ConfigError):
        config.from_dict({"version": 99})
    with pytest.raises(ConfigError):
        config.from_dict({"data": {"source": "csv"}})


def test_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"train": {"epochs": 4}}))
    cfg = config.load(path, ["train.epochs=2", "labels.k=7", "variant=prices_only", "start=2022-01-10"])
    assert cfg.train.epochs == 2 and cfg.labels.k == 7
    assert cfg.variant.value == "prices_only" and cfg.start == date(2022, 1, 10)
    assert cfg.preset_name == "slim"
    with pytest.raises(ConfigError):
        config.apply_overrides({}, ["novalue"])


# -- protocol --------------------------------------------------------------------

def test_insufficient_history(tmp_path):
    cfg = naive_cfg(tmp_path)
    source = SynthSource(cfg.data.synth)
    days = source.dates()
    with pytest.raises(InsufficientHistory):
        run_day(cfg, days[4], source)
    with pytest.raises(InsufficientHistory):
        DayCache(cfg, source).prepare(days[1])
    assert DayCache(cfg, source).eligible_days() == days[5:]


def test_training_window_is_strictly_earlier(tmp_path):
    cfg = make_cfg(tmp_path)
    source = SynthSource(cfg.data.synth)
    cache = DayCache(cfg, source)
    days = source.dates()
    assert cache.training_days(days[6]) == days[3:6]
    assert cache.inputs_for(days[6]) == days[1:7]


def test_day_isolation(tmp_path):
    cfg = make_cfg(tmp_path)
    days = dict(generate(cfg.data.synth))
    order = sorted(days)
    d = order[5]
    base = fit_day(cfg, d, DayCache(cfg, ArraySource(days)))
    rng = np.random.default_rng(0)
    perturbed = dict(days)
    for later in order[5:]:
        arr = days[later].copy()
        arr[:, 2::2] = rng.integers(1, 1000, size=arr[:, 2::2].shape)
        perturbed[later] = arr
    again = fit_day(cfg, d, DayCache(cfg, ArraySource(perturbed)))
    assert again.alpha == base.alpha
    np.testing.assert_array_equal(again.model.get_flat(), base.model.get_flat())


def test_failure_isolation(tmp_path):
    cfg = naive_cfg(tmp_path)
    days = dict(generate(cfg.data.synth))
    last = max(days)
    broken = days[last].copy()
    broken[:, 4::4] = 0  # no bids anywhere: every snapshot unusable
    days[last] = broken
    result = run_range(cfg, ArraySource(days))
    assert [r.day for r in result.reports] == [sorted(days)[5].isoformat()]
    assert list(result.failures) == [last.isoformat()]
    assert "failed days" in (tmp_path / "run" / "aggregate.txt").read_text()
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert list(manifest["failed"]) == [last.isoformat()]


def test_no_eligible_days(tmp_path):
    cfg = make_cfg(tmp_path, data={"synth": {"n_days": 5, "events_per_day": 600}})
    with pytest.raises(RunnerError):
        run_range(cfg)


# -- outputs ---------------------------------------------------------------------

def test_run_outputs_and_reload(tmp_path):
    cfg = naive_cfg(tmp_path)
    result = run_range(cfg)
    out = tmp_path / "run"
    for name in ("aggregate.txt", "aggregate.csv", "daily.csv", "accuracy.png", "manifest.json"):
        assert (out / name).exists(), name
    assert [r.day for r in load_reports(out)] == [r.day for r in result.reports]
    rep = result.reports[0]
    assert rep.extra["model"] == "naive" and rep.extra["alpha"] > 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_sha256"] == cfg.digest()
    assert len(manifest["inputs"]) == 7 and manifest["test_days"] == [r.day for r in result.reports]
    assert "Directional accuracy" in result.table


def test_nn_run_deterministic(tmp_path):
    a = run_range(make_cfg(tmp_path / "a"))
    b = run_range(make_cfg(tmp_path / "b"))
    assert a.reports and not a.failures
    for name in ("aggregate.csv", "daily.csv", "accuracy.png", "reports/" + a.reports[0].day + ".json"):
        assert (tmp_path / "a/run" / name).read_bytes() == (tmp_path / "b/run" / name).read_bytes(), name


def test_compare_variants(tmp_path):
    cfg = make_cfg(tmp_path)
    comp = compare_variants(cfg, ["level1", "prices_only"], array_source(cfg))
    assert set(comp.columns) == {"level1", "prices_only"}
    for name in ("comparison.txt", "comparison.csv", "comparison.png",
                 "level1/aggregate.txt", "prices_only/aggregate.txt"):
        assert (tmp_path / "run" / name).exists(), name
    assert "prices_only" in comp.table


# -- file sources ----------------------------------------------------------------

def test_csv_source_matches_arrays(tmp_path):
    cfg = naive_cfg(tmp_path)
    days = dict(generate(cfg.data.synth))
    data = tmp_path / "csv"
    data.mkdir()
    for d, arr in days.items():
        write_snapshot_csv(data / f"{d}.csv", arr)
    (data / "notes.csv").write_text("x\n")
    src = CsvDirSource(data)
    assert src.dates() == sorted(days)
    csv_cfg = replace(cfg, data=replace(cfg.data, source="csv", path=str(data)))
    via_csv = run_range(csv_cfg, write=False)
    via_arr = run_range(cfg, ArraySource(days), write=False)
    assert [r.confusion for r in via_csv.reports] == [r.confusion for r in via_arr.reports]


def test_itch_source(tmp_path):
    gen = EventGen(seed=21)
    msgs = [gen.next() for _ in range(400)]
    (tmp_path / "2022-03-01.itch").write_bytes(b"".join(frame(encode_message(m)) for m in msgs))
    src = ItchDirSource(tmp_path, "AAPL")
    assert src.dates() == [date(2022, 3, 1)]
    np.testing.assert_array_equal(src.load(date(2022, 3, 1)),
                                  snapshots_to_array(reconstruct(msgs, "AAPL")))
    assert len(src.checksum(date(2022, 3, 1))) == 64


# -- command line ----------------------------------------------------------------

def test_cli_end_to_end(tmp_path, capsys):
    data = tmp_path / "days"
    assert cli.main(["synth", "--out", str(data), "--set", "n_days=7",
                     "--set", "events_per_day=600", "--set", "activity=0.3"]) == 0
    cfg_path = tmp_path / "exp.yaml"
    raw = {k: v for k, v in RAW.items() if k != "data"}
    raw.update(data={"source": "csv", "path": str(data)}, model={"kind": "naive"},
               labels={**RAW["labels"], "target": "rkk"}, output_dir=str(tmp_path / "run"))
    cfg_path.write_text(yaml.safe_dump(raw))
    assert cli.main(["run", "-c", str(cfg_path)]) == 0
    assert "Volatility accuracy" in capsys.readouterr().out
    assert cli.main(["report", str(tmp_path / "run"), "--title", "again"]) == 0
    assert capsys.readouterr().out.startswith("again")
    out = tmp_path / "labels"
    assert cli.main(["label", "-c", str(cfg_path), "--day", "2022-01-11", "--out", str(out)]) == 0
    stem = "2022-01-11.level1"
    for suffix in (".lobs", ".labels.csv", ".png"):
        assert (out / (stem + suffix)).exists()
    assert "training window" in capsys.readouterr().out


def test_cli_bad_config_exit_code(tmp_path):
    assert cli.main(["run", "--set", "labels.kk=3"]) == 2
    assert cli.main(["report", str(tmp_path)]) == 1
