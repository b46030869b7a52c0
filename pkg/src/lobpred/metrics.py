"""Confusion matrices and the volatility/directional accuracy split.

Class order everywhere is (UP, DOWN, STABLE); rows are true classes and
columns predicted classes.  DIVERGE means UP or DOWN.  Undefined rates
(empty denominators) are ``None``, never 0.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .labeling import EmptyInput, Label

CLASSES = (Label.UP, Label.DOWN, Label.STABLE)
CLASS_NAMES = tuple(c.name for c in CLASSES)
DIVERGE = [Label.UP, Label.DOWN]
REPORT_VERSION = 1


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (3, 3) or np.any(c < 0):
            raise ValueError("confusion counts must be a non-negative 3x3 matrix")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


def confusion(preds: Sequence[int], truths: Sequence[int]) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if len(preds) != len(truths):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truths)} truths")
    if len(preds) == 0:
        raise EmptyInput("no samples")
    counts = np.zeros((3, 3), dtype=np.int64)
    np.add.at(counts, (truths, preds), 1)
    return ConfusionMatrix(counts)


def _ratio(num: float, den: float) -> float | None:
    return None if den == 0 else float(num) / float(den)


def class_metrics(cm: ConfusionMatrix) -> dict[str, dict[str, float | None]]:
    c = cm.counts
    out = {}
    for i, name in enumerate(CLASS_NAMES):
        precision = _ratio(c[i, i], c[:, i].sum())
        recall = _ratio(c[i, i], c[i, :].sum())
        if precision is None or recall is None:
            f1 = None
        elif precision + recall == 0:
            f1 = 0.0
        else:
            f1 = 2 * precision * recall / (precision + recall)
        out[name] = {"precision": precision, "recall": recall, "f1": f1}
    return out


def overall_accuracy(cm: ConfusionMatrix) -> float | None:
    return _ratio(np.trace(cm.counts), cm.total)


def volatility_accuracy(cm: ConfusionMatrix) -> float | None:
    c = cm.counts
    both_diverge = c[np.ix_(DIVERGE, DIVERGE)].sum()
    return _ratio(c[Label.STABLE, Label.STABLE] + both_diverge, cm.total)


def directional_accuracy(cm: ConfusionMatrix, denominator: str = "both_diverge") -> float | None:
    """Direction hit rate among samples correctly called DIVERGE.

    ``denominator="true_diverge"`` instead divides by every truly diverging
    sample, whatever was predicted.
    """
    c = cm.counts
    hits = c[Label.UP, Label.UP] + c[Label.DOWN, Label.DOWN]
    if denominator == "both_diverge":
        den = c[np.ix_(DIVERGE, DIVERGE)].sum()
    elif denominator == "true_diverge":
        den = c[DIVERGE, :].sum()
    else:
        raise ValueError(f"unknown directional denominator {denominator!r}")
    return _ratio(hits, den)


@dataclass
class EvaluationReport:
    day: str
    confusion: list[list[int]]
    per_class: dict
    overall_accuracy: float | None
    volatility_accuracy: float | None
    directional_accuracy: float | None
    sizes: dict[str, int]
    n_samples: int
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, day: str, denominator: str = "both_diverge",
                       extra: dict | None = None) -> "EvaluationReport":
        return cls(
            day=str(day),
            confusion=cm.counts.tolist(),
            per_class=class_metrics(cm),
            overall_accuracy=overall_accuracy(cm),
            volatility_accuracy=volatility_accuracy(cm),
            directional_accuracy=directional_accuracy(cm, denominator),
            sizes={n: int(cm.counts[i].sum()) for i, n in enumerate(CLASS_NAMES)},
            n_samples=cm.total,
            extra=dict(extra or {}),
        )

    def to_json(self) -> str:
        payload = {"version": REPORT_VERSION, **asdict(self)}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        payload = json.loads(text)
        payload.pop("version", None)
        return cls(**payload)

    def metric_values(self) -> dict[str, float | None]:
        """Flat metric name -> value, the rows aggregated across days."""
        vals = {
            "overall_accuracy": self.overall_accuracy,
            "volatility_accuracy": self.volatility_accuracy,
            "directional_accuracy": self.directional_accuracy,
        }
        for cls_name, d in self.per_class.items():
            for m, v in d.items():
                vals[f"{cls_name}.{m}"] = v
        for cls_name, n in self.sizes.items():
            vals[f"{cls_name}.size"] = float(n)
        return vals


@dataclass(frozen=True)
class Aggregate:
    mean: float | None
    std: float | None
    n_days: int
    excluded: int


def aggregate_daily(reports: Sequence[EvaluationReport]) -> dict[str, Aggregate]:
    """Unweighted daily mean and population std per metric; undefined days excluded."""
    if not reports:
        raise EmptyInput("no reports to aggregate")
    names = list(reports[0].metric_values())
    out = {}
    for name in names:
        vals = [r.metric_values().get(name) for r in reports]
        defined = np.asarray([v for v in vals if v is not None], dtype=np.float64)
        excluded = len(vals) - len(defined)
        if len(defined) == 0:
            out[name] = Aggregate(None, None, 0, excluded)
        else:
            out[name] = Aggregate(float(defined.mean()), float(defined.std()), len(defined), excluded)
    return out


def fmt(agg: Aggregate, digits: int = 3) -> str:
    if agg.mean is None:
        return "n/a"
    return f"{agg.mean:.{digits}f}({agg.std:.{digits}f})"


def render_table(agg: dict[str, Aggregate], title: str = "") -> str:
    """Per-class precision/recall/F1 with sizes, then the three accuracies."""
    lines = []
    if title:
        lines.append(title)
    header = f"{'':<22}{'Precision':>16}{'Recall':>16}{'F1-Score':>16}{'Size':>10}"
    rule = "-" * len(header)
    lines += [rule, header, rule]
    for name in CLASS_NAMES:
        size = agg[f"{name}.size"]
        size_txt = "n/a" if size.mean is None else f"{size.mean:,.0f}"
        lines.append(
            f"{name:<22}{fmt(agg[name + '.precision']):>16}{fmt(agg[name + '.recall']):>16}"
            f"{fmt(agg[name + '.f1']):>16}{size_txt:>10}"
        )
    lines.append(rule)
    for label, key in (("Overall accuracy", "overall_accuracy"),
                       ("Directional accuracy", "directional_accuracy"),
                       ("Volatility accuracy", "volatility_accuracy")):
        note = f"  [{agg[key].excluded} day(s) undefined]" if agg[key].excluded else ""
        lines.append(f"{label:<22}{fmt(agg[key]):>16}{note}")
    lines.append(rule)
    return "\n".join(lines) + "\n"


def render_comparison(columns: dict[str, dict[str, Aggregate]], title: str = "") -> str:
    """Overall/directional/volatility rows, one column per input variant."""
    names = list(columns)
    width = max(16, *(len(n) + 2 for n in names))
    lines = [title] if title else []
    header = f"{'Accuracy':<14}" + "".join(f"{n:>{width}}" for n in names)
    rule = "-" * len(header)
    lines += [rule, header, rule]
    for label, key in (("Overall", "overall_accuracy"),
                       ("Directional", "directional_accuracy"),
                       ("Volatility", "volatility_accuracy")):
        lines.append(f"{label:<14}" + "".join(f"{fmt(columns[n][key]):>{width}}" for n in names))
    lines.append(rule)
    return "\n".join(lines) + "\n"


def merge(matrices: Iterable[ConfusionMatrix]) -> ConfusionMatrix:
    total = ConfusionMatrix(np.zeros((3, 3), dtype=np.int64))
    for cm in matrices:
        total = total + cm
    return total

