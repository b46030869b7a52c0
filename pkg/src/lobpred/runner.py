"""Rolling per-day protocol: 5-day scalers, 20-day training windows, daily tests.

Every artifact used to score day d (each day's scaler, alpha, the model)
is computed from days strictly before d; the test day itself is loaded only
when evaluating.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from . import __version__, plotting
from .book import read_snapshot_csv, reconstruct, snapshots_to_array
from .config import ExperimentConfig
from .features import (
    InsufficientHistory,
    Scaler,
    Variant,
    fit_scaler,
    mid_array,
    standardize_array,
    usable_rows,
)
from .itch import stream_messages
from .labeling import DaySamples, WindowArray, choose_alpha, classify_array, day_samples
from .metrics import (
    Aggregate,
    EvaluationReport,
    aggregate_daily,
    confusion,
    render_comparison,
    render_table,
)
from .naive import naive_predict_array
from .nn.model import Model, build_model, preset
from .nn.training import train
from .synth import generate_day, trading_dates

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


class RunnerError(RuntimeError):
    pass


# -- data sources ---------------------------------------------------------------

class DataSource(Protocol):
    def dates(self) -> list[date]: ...
    def load(self, day: date) -> np.ndarray: ...
    def checksum(self, day: date) -> str: ...


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class ArraySource:
    """In-memory days, keyed by date."""

    def __init__(self, days: Mapping[date, np.ndarray]):
        self._days = {d: np.asarray(a, dtype=np.int64) for d, a in sorted(days.items())}

    def dates(self) -> list[date]:
        return list(self._days)

    def load(self, day: date) -> np.ndarray:
        return self._days[day]

    def checksum(self, day: date) -> str:
        return _sha256(np.ascontiguousarray(self._days[day]).tobytes())


class SynthSource:
    def __init__(self, synth_cfg):
        self.cfg = synth_cfg
        self._dates = trading_dates(synth_cfg.start_date, synth_cfg.n_days)
        self._index = {d: i for i, d in enumerate(self._dates)}
        self._cache: dict[date, np.ndarray] = {}

    def dates(self) -> list[date]:
        return list(self._dates)

    def load(self, day: date) -> np.ndarray:
        if day not in self._cache:
            self._cache[day] = generate_day(self.cfg, self._index[day])
        return self._cache[day]

    def checksum(self, day: date) -> str:
        return _sha256(self.load(day).tobytes())


class _FileSource:
    suffix = ""

    def __init__(self, path: str | Path):
        self.root = Path(path)
        if not self.root.is_dir():
            raise RunnerError(f"{self.root} is not a directory")
        self._files = {}
        for f in sorted(self.root.glob(f"*{self.suffix}")):
            try:
                self._files[date.fromisoformat(f.name[: -len(self.suffix)])] = f
            except ValueError:
                log.warning("ignoring %s: name is not YYYY-MM-DD%s", f.name, self.suffix)
        self._cache: dict[date, np.ndarray] = {}

    def dates(self) -> list[date]:
        return list(self._files)

    def load(self, day: date) -> np.ndarray:
        if day not in self._cache:
            self._cache[day] = self._read(self._files[day])
        return self._cache[day]

    def checksum(self, day: date) -> str:
        return _sha256(self._files[day].read_bytes())

    def _read(self, path: Path) -> np.ndarray:
        raise NotImplementedError


class CsvDirSource(_FileSource):
    suffix = ".csv"

    def _read(self, path: Path) -> np.ndarray:
        return read_snapshot_csv(path)


class ItchDirSource(_FileSource):
    suffix = ".itch"

    def __init__(self, path: str | Path, symbol: str):
        super().__init__(path)
        self.symbol = symbol

    def _read(self, path: Path) -> np.ndarray:
        with open(path, "rb") as fh:
            return snapshots_to_array(reconstruct(stream_messages(fh), self.symbol))


def open_source(cfg: ExperimentConfig) -> DataSource:
    data = cfg.data
    if data.source == "synth":
        return SynthSource(data.synth)
    if data.source == "csv":
        return CsvDirSource(data.path)
    return ItchDirSource(data.path, data.symbol)


# -- per-day preparation --------------------------------------------------------

@dataclass
class PreparedDay:
    day: date
    features: np.ndarray  # (N, M) for the configured variant
    m: np.ndarray  # (N,)
    scaler: Scaler
    dropped: int  # snapshots too thin for the variant


class DayCache:
    """Scaler, features and mid series per day, computed once per run."""

    def __init__(self, cfg: ExperimentConfig, source: DataSource):
        self.cfg = cfg
        self.source = source
        self.days = source.dates()
        self._index = {d: i for i, d in enumerate(self.days)}
        self._prepared: dict[date, PreparedDay] = {}

    def index(self, day: date) -> int:
        try:
            return self._index[day]
        except KeyError:
            raise RunnerError(f"{day} is not in the data source") from None

    def prepare(self, day: date) -> PreparedDay:
        if day in self._prepared:
            return self._prepared[day]
        i = self.index(day)
        n = self.cfg.scaler_days
        if i < n:
            raise InsufficientHistory(f"{day}: needs {n} earlier days for its scaler, has {i}")
        prior = self.days[i - n : i]
        scaler = fit_scaler([self.source.load(d) for d in prior], prior, n_days=n)
        arr = self.source.load(day)
        keep = usable_rows(arr, self.cfg.variant)
        arr = arr[keep]
        prepared = PreparedDay(day, standardize_array(arr, scaler, self.cfg.variant),
                               mid_array(arr, scaler), scaler, int((~keep).sum()))
        self._prepared[day] = prepared
        return prepared

    def training_days(self, day: date) -> list[date]:
        i = self.index(day)
        first = self.cfg.scaler_days + self.cfg.train_days
        if i < first:
            raise InsufficientHistory(
                f"{day}: needs {first} earlier days ({self.cfg.scaler_days} scaler + "
                f"{self.cfg.train_days} training), has {i}")
        return self.days[i - self.cfg.train_days : i]

    def eligible_days(self) -> list[date]:
        first = self.cfg.scaler_days + self.cfg.train_days
        out = self.days[first:]
        if self.cfg.start:
            out = [d for d in out if d >= self.cfg.start]
        if self.cfg.end:
            out = [d for d in out if d <= self.cfg.end]
        return out

    def inputs_for(self, day: date) -> list[date]:
        i = self.index(day)
        return self.days[max(0, i - self.cfg.train_days - self.cfg.scaler_days) : i + 1]


# -- fitting and evaluation -----------------------------------------------------

@dataclass
class FittedDay:
    """Everything learned for one test day, from strictly earlier data."""

    day: date
    alpha: float
    train_days: list[date]
    n_train: int
    model: Model | None
    epoch_losses: list[float] = field(default_factory=list)


def model_spec(cfg: ExperimentConfig):
    return preset(cfg.preset_name, width=cfg.variant.width, time=cfg.labels.window,
                  **cfg.model.options)


def fit_day(cfg: ExperimentConfig, day: date, cache: DayCache) -> FittedDay:
    train_days = cache.training_days(day)
    policy = cfg.policy()
    samples: list[DaySamples] = []
    for d in train_days:
        p = cache.prepare(d)
        samples.append(day_samples(p.features, p.m, policy, d))
    y = np.concatenate([s.y for s in samples])
    alpha = choose_alpha(y)
    if cfg.model.kind == "naive":
        return FittedDay(day, alpha, train_days, len(y), None)
    model = build_model(model_spec(cfg), seed=cfg.train.seed)
    result = train(model, WindowArray(samples), classify_array(y, alpha), cfg.train,
                   progress=lambda e, loss: log.info("%s epoch %d loss %.5f", day, e + 1, loss))
    return FittedDay(day, alpha, train_days, len(y), model, result.epoch_losses)


def evaluate_day(cfg: ExperimentConfig, fitted: FittedDay, cache: DayCache) -> EvaluationReport:
    policy = cfg.policy(fitted.alpha)
    test = cache.prepare(fitted.day)
    ds = day_samples(test.features, test.m, policy, fitted.day, stride=cfg.labels.eval_stride)
    truths = classify_array(ds.y, fitted.alpha)
    if fitted.model is None:
        preds = naive_predict_array(test.m, ds.anchors, policy)
    else:
        preds = fitted.model.predict_labels(WindowArray([ds]))
    cm = confusion(preds, truths)
    extra = {
        "alpha": fitted.alpha,
        "model": "naive" if fitted.model is None else cfg.preset_name,
        "variant": cfg.variant.value,
        "target": cfg.labels.target,
        "train_first": fitted.train_days[0].isoformat(),
        "train_last": fitted.train_days[-1].isoformat(),
        "n_train": fitted.n_train,
        "epoch_losses": list(fitted.epoch_losses),
        "dropped_snapshots": test.dropped,
        "scaler": {**asdict(test.scaler),
                   "fitted_over": [d.isoformat() for d in test.scaler.fitted_over]},
    }
    return EvaluationReport.from_confusion(cm, fitted.day.isoformat(),
                                           cfg.directional_denominator, extra)


def run_day(cfg: ExperimentConfig, day: date, source: DataSource | None = None,
            cache: DayCache | None = None) -> EvaluationReport:
    cache = cache or DayCache(cfg, source or open_source(cfg))
    try:
        return evaluate_day(cfg, fit_day(cfg, day, cache), cache)
    except Exception as exc:
        head = str(exc.args[0]) if exc.args else ""
        if not head.startswith(str(day)):
            exc.args = (f"{day}: {head}",) + exc.args[1:]
        raise


# -- ranges, reports and comparisons --------------------------------------------

@dataclass
class RangeResult:
    reports: list[EvaluationReport]
    failures: dict[str, str]
    aggregate: dict[str, Aggregate] | None
    table: str


def _run_one(cfg: ExperimentConfig, day: date):
    # worker entry point: each process opens its own source
    try:
        return day, run_day(cfg, day), None
    except Exception as exc:  # noqa: BLE001 - failures are recorded, not fatal
        return day, None, f"{type(exc).__name__}: {exc}"


def run_range(cfg: ExperimentConfig, source: DataSource | None = None,
              write: bool = True, progress: Callable[[date, EvaluationReport | None], None] | None = None
              ) -> RangeResult:
    """Evaluate every eligible day; failed days are recorded and skipped."""
    source = source or open_source(cfg)
    cache = DayCache(cfg, source)
    days = cache.eligible_days()
    if not days:
        raise RunnerError(f"no eligible test days: need more than "
                          f"{cfg.scaler_days + cfg.train_days} days of data in range")
    outcomes = []
    if cfg.workers > 1 and not isinstance(source, ArraySource):
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_run_one, [cfg] * len(days), days))
    else:
        for day in days:
            try:
                outcomes.append((day, run_day(cfg, day, cache=cache), None))
            except Exception as exc:  # noqa: BLE001
                outcomes.append((day, None, f"{type(exc).__name__}: {exc}"))
            if progress is not None:
                progress(day, outcomes[-1][1])
    reports = [r for _, r, _ in outcomes if r is not None]
    failures = {d.isoformat(): err for d, _, err in outcomes if err is not None}
    for d, err in failures.items():
        log.error("day %s failed: %s", d, err)
    aggregate = aggregate_daily(reports) if reports else None
    title = f"{cfg.variant.value} / {cfg.model.kind if cfg.model.kind == 'naive' else cfg.preset_name}"
    table = render_table(aggregate, title) if aggregate else "no successful days\n"
    result = RangeResult(reports, failures, aggregate, table)
    if write:
        out = Path(cfg.output_dir)
        write_reports(out, reports, failures, title)
        write_manifest(out, cfg, cache, days, failures)
    return result


def write_reports(out_dir: str | Path, reports: Sequence[EvaluationReport],
                  failures: Mapping[str, str] | None = None, title: str = "") -> None:
    """Per-day JSON plus aggregate.txt, aggregate.csv and accuracy.png."""
    out = Path(out_dir)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    for r in reports:
        (out / "reports" / f"{r.day}.json").write_text(r.to_json())
    render_aggregate(out, reports, failures, title)


def render_aggregate(out_dir: str | Path, reports: Sequence[EvaluationReport],
                     failures: Mapping[str, str] | None = None, title: str = "") -> str:
    out = Path(out_dir)
    failures = dict(failures or {})
    if not reports:
        text = "no successful days\n"
    else:
        agg = aggregate_daily(reports)
        text = render_table(agg, title)
        with open(out / "aggregate.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "mean", "std", "n_days", "excluded"])
            for name, a in agg.items():
                w.writerow([name, "" if a.mean is None else repr(a.mean),
                            "" if a.std is None else repr(a.std), a.n_days, a.excluded])
        with open(out / "daily.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["day", "n_samples", "overall_accuracy", "volatility_accuracy",
                        "directional_accuracy"])
            for r in reports:
                w.writerow([r.day, r.n_samples] + ["" if v is None else repr(v) for v in
                           (r.overall_accuracy, r.volatility_accuracy, r.directional_accuracy)])
        plotting.daily_accuracy(reports, out / "accuracy.png", title)
    if failures:
        text += "failed days:\n" + "".join(f"  {d}: {e}\n" for d, e in sorted(failures.items()))
    (out / "aggregate.txt").write_text(text)
    return text


def write_manifest(out_dir: str | Path, cfg: ExperimentConfig, cache: DayCache,
                   days: Sequence[date], failures: Mapping[str, str]) -> None:
    used = sorted({d for day in days for d in cache.inputs_for(day)})
    manifest = {
        "version": MANIFEST_VERSION,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.train.seed,
        "versions": {"lobpred": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "inputs": {d.isoformat(): cache.source.checksum(d) for d in used},
        "test_days": [d.isoformat() for d in days],
        "failed": dict(sorted(failures.items())),
    }
    Path(out_dir, "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_reports(run_dir: str | Path) -> list[EvaluationReport]:
    files = sorted(Path(run_dir, "reports").glob("*.json"))
    return [EvaluationReport.from_json(f.read_text()) for f in files]


@dataclass
class Comparison:
    results: dict[str, RangeResult]
    table: str

    @property
    def columns(self) -> dict[str, dict[str, Aggregate]]:
        return {name: r.aggregate for name, r in self.results.items() if r.aggregate}


def compare_variants(cfg: ExperimentConfig, variants: Sequence[Variant | str],
                     source: DataSource | None = None, write: bool = True) -> Comparison:
    """Same data, labels and training budget; one run per input variant."""
    if not variants:
        raise RunnerError("no variants to compare")
    source = source or open_source(cfg)
    results = {}
    for v in variants:
        v = Variant(v)
        sub = replace(cfg, variant=v, output_dir=str(Path(cfg.output_dir) / v.value))
        results[v.value] = run_range(sub, source, write=write)
    comp = Comparison(results, "")
    comp.table = render_comparison(comp.columns, "Accuracy by input variant")
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.txt").write_text(comp.table)
        with open(out / "comparison.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variant", "metric", "mean", "std", "n_days", "excluded"])
            for name, agg in comp.columns.items():
                for key in ("overall_accuracy", "directional_accuracy", "volatility_accuracy"):
                    a = agg[key]
                    w.writerow([name, key, "" if a.mean is None else repr(a.mean),
                                "" if a.std is None else repr(a.std), a.n_days, a.excluded])
        plotting.comparison(comp.columns, out / "comparison.png", "Accuracy by input variant")
    return comp
