"""Label, post and annotation types shared across the pipeline."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional


class RiskLevel(enum.Enum):
    """Four suicide-risk classes, declared in increasing order of severity."""

    INDICATOR = "indicator"
    IDEATION = "ideation"
    BEHAVIOUR = "behaviour"
    ATTEMPT = "attempt"

    @classmethod
    def parse(cls, value: str | RiskLevel) -> RiskLevel:
        if isinstance(value, RiskLevel):
            return value
        key = str(value).strip().lower()
        if key == "behavior":
            key = "behaviour"
        elif key == "attempts":
            key = "attempt"
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown risk level: {value!r}") from None

    @property
    def rank(self) -> int:
        return _RANK[self]

    def __str__(self) -> str:
        return self.value

    def __lt__(self, other: RiskLevel) -> bool:
        if not isinstance(other, RiskLevel):
            return NotImplemented
        return self.rank < other.rank


LEVELS: tuple[RiskLevel, ...] = tuple(RiskLevel)
_RANK = {level: i for i, level in enumerate(LEVELS)}
NUM_CLASSES = len(LEVELS)


def severity_rank(level: RiskLevel) -> int:
    return _RANK[level]


def level_from_rank(rank: int) -> RiskLevel:
    return LEVELS[rank]


class YesNo(enum.Enum):
    YES = "Yes"
    NO = "No"

    @classmethod
    def parse(cls, value: str | bool | YesNo) -> YesNo:
        if isinstance(value, YesNo):
            return value
        if isinstance(value, bool):
            return cls.YES if value else cls.NO
        key = str(value).strip().lower()
        if key == "yes":
            return cls.YES
        if key == "no":
            return cls.NO
        raise ValueError(f"not a Yes/No answer: {value!r}")

    def __bool__(self) -> bool:
        return self is YesNo.YES

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class AnswerTriple:
    """Yes/No answers to the (ideation, behaviour, attempt) questions."""

    ideation: YesNo
    behaviour: YesNo
    attempt: YesNo

    def __post_init__(self):
        for name in ("ideation", "behaviour", "attempt"):
            object.__setattr__(self, name, YesNo.parse(getattr(self, name)))

    @classmethod
    def of(cls, *answers) -> AnswerTriple:
        if len(answers) == 1 and not isinstance(answers[0], (str, bool, YesNo)):
            answers = tuple(answers[0])
        if len(answers) != 3:
            raise ValueError(f"expected 3 answers, got {len(answers)}")
        return cls(*answers)

    def as_tuple(self) -> tuple[YesNo, YesNo, YesNo]:
        return (self.ideation, self.behaviour, self.attempt)

    def to_list(self) -> list[str]:
        return [a.value for a in self.as_tuple()]

    def __str__(self) -> str:
        return "{" + ", ".join(self.to_list()) + "}"


@dataclass(frozen=True)
class Post:
    post_id: str
    text: str
    gold_label: Optional[RiskLevel] = None

    def __post_init__(self):
        if not isinstance(self.post_id, str) or not self.post_id:
            raise ValueError("post_id must be a non-empty string")
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError(f"post {self.post_id!r} has empty text")
        if self.gold_label is not None and not isinstance(self.gold_label, RiskLevel):
            object.__setattr__(self, "gold_label", RiskLevel.parse(self.gold_label))


@dataclass(frozen=True)
class Annotation:
    post_id: str
    annotator_id: str
    label: RiskLevel
    triple: Optional[AnswerTriple] = None
    refined: bool = False

    def __post_init__(self):
        if not isinstance(self.label, RiskLevel):
            object.__setattr__(self, "label", RiskLevel.parse(self.label))
        if self.triple is not None:
            # local import: annotator depends on domain
            from .annotator import triple_to_label

            expected = triple_to_label(self.triple)
            if expected is not self.label:
                raise ValueError(
                    f"label {self.label} inconsistent with triple {self.triple} ({expected})"
                )

    def to_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "annotator_id": self.annotator_id,
            "label": self.label.value,
            "triple": self.triple.to_list() if self.triple else None,
            "refined": self.refined,
        }

    @classmethod
    def from_dict(cls, row: dict) -> Annotation:
        triple = row.get("triple")
        return cls(
            post_id=str(row["post_id"]),
            annotator_id=str(row["annotator_id"]),
            label=RiskLevel.parse(row["label"]),
            triple=AnswerTriple.of(triple) if triple else None,
            refined=bool(row.get("refined", False)),
        )


PROB_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ProbabilityVector:
    """Class probabilities in severity order."""

    p: tuple[float, float, float, float]

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if len(p) != NUM_CLASSES:
            raise ValueError(f"expected {NUM_CLASSES} components, got {len(p)}")
        if any(not math.isfinite(x) or x < 0.0 or x > 1.0 for x in p):
            raise ValueError(f"components must lie in [0, 1]: {p}")
        if abs(math.fsum(p) - 1.0) > PROB_TOLERANCE:
            raise ValueError(f"components sum to {math.fsum(p)!r}, not 1")
        object.__setattr__(self, "p", p)

    @classmethod
    def one_hot(cls, level: RiskLevel) -> ProbabilityVector:
        p = [0.0] * NUM_CLASSES
        p[level.rank] = 1.0
        return cls(tuple(p))

    def __iter__(self):
        return iter(self.p)

    def __getitem__(self, i):
        return self.p[i]


def count_labels(labels: Iterable[RiskLevel]) -> dict[RiskLevel, int]:
    counts = {level: 0 for level in LEVELS}
    for label in labels:
        counts[label] += 1
    return counts
