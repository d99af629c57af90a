"""Classification and regression evaluation with repeat aggregation.

Per-class metrics are one-vs-rest; zero-denominator precision/recall report
0 with a flag rather than NaN. MAPE excludes truths below a floor speed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

N_CLASSES = 3
LABEL_NAMES = ("No Congestion", "Light Congestion", "Heavy Congestion")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are truth, columns are prediction."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)


@dataclass(frozen=True)
class ClassificationReport:
    confusion: ConfusionMatrix
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    accuracy: float
    zero_pred_classes: tuple[int, ...]   # precision denominators that were 0
    zero_true_classes: tuple[int, ...]   # recall denominators that were 0

    kind = "classification"

    def metric_values(self) -> dict[str, float]:
        out = {"accuracy": self.accuracy}
        for c, name in enumerate(LABEL_NAMES):
            out[f"precision[{name}]"] = self.precision[c]
            out[f"recall[{name}]"] = self.recall[c]
            out[f"f1[{name}]"] = self.f1[c]
        return out

    def to_jsonable(self) -> dict:
        return {
            "kind": self.kind,
            "confusion": self.counts_list(),
            "accuracy": self.accuracy,
            "per_class": [
                {
                    "label": name,
                    "precision": self.precision[c],
                    "recall": self.recall[c],
                    "f1": self.f1[c],
                }
                for c, name in enumerate(LABEL_NAMES)
            ],
            "zero_pred_classes": list(self.zero_pred_classes),
            "zero_true_classes": list(self.zero_true_classes),
        }

    def counts_list(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.confusion.counts]


@dataclass(frozen=True)
class RegressionReport:
    rmse: float
    mae: float
    mape: float | None
    n_evaluated: int
    n_excluded: int

    kind = "regression"

    def metric_values(self) -> dict[str, float]:
        out = {"rmse": self.rmse, "mae": self.mae}
        if self.mape is not None:
            out["mape"] = self.mape
        return out

    def to_jsonable(self) -> dict:
        return {
            "kind": self.kind,
            "rmse": self.rmse,
            "mae": self.mae,
            "mape": self.mape,
            "n_evaluated": self.n_evaluated,
            "n_excluded": self.n_excluded,
        }


@dataclass(frozen=True)
class AggregatedReport:
    """Mean +- population std of each metric across experiment repeats."""

    kind: str
    n_repeats: int
    mean: dict[str, float]
    std: dict[str, float]

    def to_jsonable(self) -> dict:
        return {"kind": self.kind, "n_repeats": self.n_repeats,
                "mean": dict(self.mean), "std": dict(self.std)}

    def summary(self, name: str) -> str:
        return f"{self.mean[name]:.3f} +- {self.std[name]:.3f}"


def classification_report(truth, preds) -> ClassificationReport:
    truth = np.asarray(truth, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if truth.shape != preds.shape:
        raise ValidationError("truth and prediction lengths differ")
    if truth.size == 0:
        raise ValidationError("cannot evaluate an empty prediction set")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(counts, (truth, preds), 1)
    precision, recall, f1 = [], [], []
    zero_pred, zero_true = [], []
    for c in range(N_CLASSES):
        tp = counts[c, c]
        pred_c = counts[:, c].sum()
        true_c = counts[c, :].sum()
        if pred_c == 0:
            zero_pred.append(c)
            p = 0.0
        else:
            p = tp / pred_c
        if true_c == 0:
            zero_true.append(c)
            r = 0.0
        else:
            r = tp / true_c
        precision.append(float(p))
        recall.append(float(r))
        f1.append(0.0 if p + r == 0 else float(2 * p * r / (p + r)))
    cm = ConfusionMatrix(counts=counts)
    return ClassificationReport(
        confusion=cm,
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        accuracy=cm.accuracy,
        zero_pred_classes=tuple(zero_pred),
        zero_true_classes=tuple(zero_true),
    )


def regression_report(truth, preds, mape_floor: float = 1.0) -> RegressionReport:
    truth = np.asarray(truth, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    if truth.shape != preds.shape:
        raise ValidationError("truth and prediction lengths differ")
    if truth.size == 0:
        raise ValidationError("cannot evaluate an empty prediction set")
    err = truth - preds
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mae = float(np.mean(np.abs(err)))
    keep = truth >= mape_floor
    n_excluded = int((~keep).sum())
    if keep.any():
        mape = float(np.mean(np.abs(err[keep]) / truth[keep]) * 100.0)
    else:
        mape = None
    return RegressionReport(rmse=rmse, mae=mae, mape=mape,
                            n_evaluated=int(truth.size), n_excluded=n_excluded)


def aggregate_repeats(reports: list) -> AggregatedReport:
    """Arithmetic mean and population std of each metric over >= 2 repeats."""
    if len(reports) < 2:
        raise ValidationError("aggregation needs at least 2 reports")
    kinds = {r.kind for r in reports}
    if len(kinds) != 1:
        raise ValidationError(f"cannot aggregate mixed report kinds {sorted(kinds)}")
    metric_lists: dict[str, list[float]] = {}
    for r in reports:
        for name, value in r.metric_values().items():
            metric_lists.setdefault(name, []).append(value)
    mean = {}
    std = {}
    for name, values in metric_lists.items():
        if len(values) == len(reports):
            arr = np.asarray(values)
            mean[name] = float(arr.mean())
            std[name] = float(arr.std())
    return AggregatedReport(kind=kinds.pop(), n_repeats=len(reports),
                            mean=mean, std=std)


def filter_by_window(records: list, t_start, t_end, key=lambda r: r.timestamp) -> list:
    """Records with timestamp in [t_start, t_end)."""
    if t_end <= t_start:
        raise ValidationError("t_end must be after t_start")
    return [r for r in records if t_start <= key(r) < t_end]


def classification_table(aggregated: AggregatedReport, model_name: str) -> str:
    """Plain-text block shaped like the long-term results table."""
    lines = [f"{'Model':<8}{'Label':<20}{'Precision':<16}{'Recall':<16}"
             f"{'F1 score':<16}{'Accuracy':<16}"]
    for i, label in enumerate(LABEL_NAMES):
        acc = aggregated.summary("accuracy") if i == 0 else ""
        lines.append(
            f"{model_name if i == 0 else '':<8}{label:<20}"
            f"{aggregated.summary(f'precision[{label}]'):<16}"
            f"{aggregated.summary(f'recall[{label}]'):<16}"
            f"{aggregated.summary(f'f1[{label}]'):<16}"
            f"{acc:<16}"
        )
    return "\n".join(lines)


def regression_table(per_horizon: dict[int, AggregatedReport], model_name: str) -> str:
    """Plain-text block shaped like the short-term results table."""
    lines = [f"{'Model':<12}{'Horizon (hour)':<16}{'RMSE (mi/h)':<18}"
             f"{'MAE (mi/h)':<18}{'MAPE (%)':<18}"]
    for i, (horizon, agg) in enumerate(sorted(per_horizon.items())):
        mape = agg.summary("mape") if "mape" in agg.mean else "undefined"
        lines.append(
            f"{model_name if i == 0 else '':<12}{horizon:<16}"
            f"{agg.summary('rmse'):<18}{agg.summary('mae'):<18}{mape:<18}"
        )
    return "\n".join(lines)


def report_to_json(obj) -> str:
    return json.dumps(obj.to_jsonable(), indent=2, sort_keys=True)
