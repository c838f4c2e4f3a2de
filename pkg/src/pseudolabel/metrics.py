"""Classification metrics over the four risk levels."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .domain import LEVELS, NUM_CLASSES, RiskLevel
from .errors import EmptyInputError, LengthMismatchError


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    """Confusion matrix (rows true, columns predicted) and derived scores."""

    confusion: np.ndarray
    per_class: dict[RiskLevel, ClassScores]
    accuracy: float
    macro_f1: float
    weighted_f1: float

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {
            "labels": [lv.value for lv in LEVELS],
            "confusion": self.confusion.tolist(),
            "per_class": {
                lv.value: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for lv, s in self.per_class.items()
            },
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def format_report(self, digits: int = 2) -> str:
        """Text table: per-class rows, then accuracy, macro avg and weighted avg."""
        scores = list(self.per_class.values())
        support = np.array([s.support for s in scores], dtype=float)
        w = support / support.sum() if support.sum() else np.zeros(NUM_CLASSES)

        def avg(attr, weights):
            return float(np.dot([getattr(s, attr) for s in scores], weights))

        uniform = np.full(NUM_CLASSES, 1.0 / NUM_CLASSES)
        width = max(len("weighted avg"), *(len(lv.value) for lv in LEVELS))
        fmt = f"{{:>{digits + 7}.{digits}f}}"
        head = f"{'':>{width}}" + "".join(
            f"{h:>{digits + 7}}" for h in ("precision", "recall", "f1-score", "support")
        )
        lines = [head, ""]
        for lv, s in self.per_class.items():
            lines.append(
                f"{lv.value.capitalize():>{width}}"
                + fmt.format(s.precision) + fmt.format(s.recall) + fmt.format(s.f1)
                + f"{s.support:>{digits + 7}d}"
            )
        lines.append("")
        blank = " " * (digits + 7)
        lines.append(f"{'accuracy':>{width}}" + blank * 2 + fmt.format(self.accuracy) + f"{self.n:>{digits + 7}d}")
        for name, weights, f1 in (
            ("macro avg", uniform, self.macro_f1),
            ("weighted avg", w, self.weighted_f1),
        ):
            lines.append(
                f"{name:>{width}}" + fmt.format(avg("precision", weights))
                + fmt.format(avg("recall", weights)) + fmt.format(f1)
                + f"{self.n:>{digits + 7}d}"
            )
        return "\n".join(lines) + "\n"


def confusion_matrix(preds: Sequence[RiskLevel], truths: Sequence[RiskLevel]) -> np.ndarray:
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    t = np.fromiter((RiskLevel.parse(x).rank for x in truths), dtype=np.int64)
    p = np.fromiter((RiskLevel.parse(x).rank for x in preds), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    return out


def evaluate(preds: Sequence[RiskLevel], truths: Sequence[RiskLevel]) -> MetricsReport:
    """One-vs-rest precision/recall/F1 per class plus accuracy, macro and weighted F1.

    Zero denominators give 0. Macro F1 averages over all four classes.
    """
    if len(preds) != len(truths):
        raise LengthMismatchError(f"{len(preds)} predictions vs {len(truths)} labels")
    if not truths:
        raise EmptyInputError("nothing to evaluate")
    cm = confusion_matrix(preds, truths)
    tp = np.diag(cm).astype(float)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = _safe_div(tp, predicted.astype(float))
    recall = _safe_div(tp, support.astype(float))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    n = int(support.sum())
    per_class = {
        lv: ClassScores(float(precision[i]), float(recall[i]), float(f1[i]), int(support[i]))
        for i, lv in enumerate(LEVELS)
    }
    return MetricsReport(
        confusion=cm,
        per_class=per_class,
        accuracy=float(tp.sum() / n),
        macro_f1=float(f1.mean()),
        weighted_f1=float(np.dot(support / n, f1)),
    )


@dataclass(frozen=True)
class AgreementMatrix:
    """Pairwise raw match rate between models' predictions (not a correlation)."""

    names: tuple[str, ...]
    values: np.ndarray

    def to_csv(self, digits: int = 4) -> str:
        buf = io.StringIO()
        buf.write("model," + ",".join(self.names) + "\n")
        for name, row in zip(self.names, self.values):
            buf.write(name + "," + ",".join(f"{x:.{digits}f}" for x in row) + "\n")
        return buf.getvalue()


def agreement_matrix(model_preds: Mapping[str, Sequence[RiskLevel]]) -> AgreementMatrix:
    names = tuple(model_preds)
    lengths = {len(v) for v in model_preds.values()}
    if len(lengths) > 1:
        raise LengthMismatchError(f"prediction lists differ in length: {sorted(lengths)}")
    ranks = np.array(
        [[RiskLevel.parse(x).rank for x in model_preds[n]] for n in names], dtype=np.int64
    ).reshape(len(names), -1)
    k = len(names)
    values = np.eye(k)
    if ranks.shape[1]:
        for i in range(k):
            for j in range(i + 1, k):
                values[i, j] = values[j, i] = float(np.mean(ranks[i] == ranks[j]))
    return AgreementMatrix(names, values)
