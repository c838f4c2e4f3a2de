"""Fold-probability averaging and weighted majority voting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .domain import LEVELS, NUM_CLASSES, ProbabilityVector, RiskLevel
from .errors import EmptyInputError, EnsembleError, MissingMemberError

# prompted Qwen2-72B-Instruct counts twice, the four fine-tuned models once
DEFAULT_MEMBERS = (
    ("qwen2-72b-instruct", 2.0),
    ("llama3-8b-1", 1.0),
    ("llama3-8b-2", 1.0),
    ("llama3.1-8b", 1.0),
    ("gemma2-9b", 1.0),
)


@dataclass(frozen=True)
class EnsembleConfig:
    members: tuple[tuple[str, float], ...]

    def __post_init__(self):
        members = tuple((str(m), float(w)) for m, w in self.members)
        if not members:
            raise EnsembleError("ensemble needs at least one member")
        ids = [m for m, _ in members]
        if len(set(ids)) != len(ids):
            raise EnsembleError(f"duplicate member ids in {ids}")
        for m, w in members:
            if not math.isfinite(w) or w <= 0:
                raise EnsembleError(f"weight for {m!r} must be finite and > 0, got {w}")
        object.__setattr__(self, "members", members)

    @classmethod
    def default(cls) -> EnsembleConfig:
        return cls(DEFAULT_MEMBERS)

    @property
    def weights(self) -> dict[str, float]:
        return dict(self.members)

    def to_json(self) -> str:
        data = {"members": [{"id": m, "weight": w} for m, w in self.members]}
        return json.dumps(data, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data) -> EnsembleConfig:
        if isinstance(data, dict) and "members" in data:
            data = data["members"]
        if isinstance(data, dict):
            return cls(tuple(data.items()))
        return cls(tuple((m["id"], m["weight"]) for m in data))

    @classmethod
    def load(cls, path: str | Path) -> EnsembleConfig:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise EnsembleError(f"ensemble config not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise EnsembleError(f"{path}: {exc}") from None
        try:
            return cls.from_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise EnsembleError(f"{path}: malformed ensemble config ({exc})") from None


def cv_average(fold_outputs: Sequence[ProbabilityVector]) -> ProbabilityVector:
    """Componentwise mean of the fold models' probability vectors."""
    if not fold_outputs:
        raise EmptyInputError("no fold outputs to average")
    n = len(fold_outputs)
    mean = [math.fsum(v[c] for v in fold_outputs) / n for c in range(NUM_CLASSES)]
    return ProbabilityVector(tuple(min(1.0, max(0.0, x)) for x in mean))


def _pick(scores: Sequence) -> RiskLevel:
    # strict > while scanning most-severe first: ties go to the higher rank
    best = NUM_CLASSES - 1
    for c in range(NUM_CLASSES - 2, -1, -1):
        if scores[c] > scores[best]:
            best = c
    return LEVELS[best]


def argmax_class(p: ProbabilityVector | Sequence[float]) -> RiskLevel:
    return _pick(list(p))


def weighted_vote(predictions: Mapping[str, RiskLevel], config: EnsembleConfig) -> RiskLevel:
    """Class with the largest summed member weight; ties go to the more severe class."""
    ids = set(config.weights)
    missing = ids - predictions.keys()
    if missing:
        raise MissingMemberError(missing)
    extra = predictions.keys() - ids
    if extra:
        raise EnsembleError(f"predictions from unknown members: {', '.join(sorted(extra))}")
    # exact rational sums so ties are detected without rounding noise
    scores = [Fraction(0)] * NUM_CLASSES
    for member, weight in config.members:
        scores[RiskLevel.parse(predictions[member]).rank] += Fraction(weight)
    return _pick(scores)


def member_label(prediction) -> RiskLevel:
    """Reduce a member's output to a class.

    Accepts a label, a single probability vector, or a list of per-fold
    probability vectors (averaged first).
    """
    if isinstance(prediction, (RiskLevel, str)):
        return RiskLevel.parse(prediction)
    if isinstance(prediction, ProbabilityVector):
        return argmax_class(prediction)
    items = list(prediction)
    if items and isinstance(items[0], (int, float)):
        return argmax_class(ProbabilityVector(tuple(items)))
    vectors = [v if isinstance(v, ProbabilityVector) else ProbabilityVector(tuple(v)) for v in items]
    return argmax_class(cv_average(vectors))
