"""Unanimity filtering of multi-annotator labels and training-set assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .datasplit import GOLD, PSEUDO, Dataset, Row
from .domain import LEVELS, Annotation, Post, RiskLevel
from .errors import DuplicateAnnotationError, FormatError, OverlapError, UnknownPostError


@dataclass(frozen=True)
class ConsensusReport:
    total_posts: int
    agreed_posts: int
    per_class_counts: dict[RiskLevel, int]

    @property
    def coverage(self) -> float:
        return self.agreed_posts / self.total_posts if self.total_posts else 0.0

    def to_dict(self) -> dict:
        return {
            "total_posts": self.total_posts,
            "agreed_posts": self.agreed_posts,
            "coverage": self.coverage,
            "per_class_counts": {lv.value: self.per_class_counts[lv] for lv in LEVELS},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def unanimous_filter(
    annotations: Iterable[Annotation],
    required_annotators: Iterable[str],
    post_ids: Optional[Iterable[str]] = None,
) -> tuple[list[tuple[str, RiskLevel]], ConsensusReport]:
    """Keep posts on which every required annotator gave the same label.

    A post missing any required annotator's label is discarded. ``post_ids``
    fixes the universe of posts (and the output order); by default it is every
    post id seen in ``annotations``, sorted.
    """
    required = set(required_annotators)
    if not required:
        raise ValueError("at least one required annotator")
    votes: dict[str, dict[str, RiskLevel]] = {}
    for ann in annotations:
        per_post = votes.setdefault(ann.post_id, {})
        if ann.annotator_id in per_post:
            raise DuplicateAnnotationError(
                f"two annotations of post {ann.post_id!r} by {ann.annotator_id!r}"
            )
        per_post[ann.annotator_id] = ann.label

    universe = list(dict.fromkeys(post_ids)) if post_ids is not None else sorted(votes)
    kept: list[tuple[str, RiskLevel]] = []
    counts = {level: 0 for level in LEVELS}
    for pid in universe:
        per_post = votes.get(pid, {})
        if not required <= per_post.keys():
            continue
        labels = {per_post[a] for a in required}
        if len(labels) == 1:
            label = labels.pop()
            kept.append((pid, label))
            counts[label] += 1
    return kept, ConsensusReport(len(universe), len(kept), counts)


def assemble_training_set(
    gold: Iterable[Post],
    pseudo: Iterable[tuple[str, RiskLevel]],
    post_store: Mapping[str, Post] | Dataset,
) -> Dataset:
    """Gold posts followed by pseudo-labelled posts, tagged by provenance."""
    if isinstance(post_store, Dataset):
        post_store = post_store.post_map()
    rows: list[Row] = []
    gold_ids = set()
    for post in gold:
        if post.gold_label is None:
            raise FormatError(f"gold post {post.post_id!r} has no label")
        gold_ids.add(post.post_id)
        rows.append(Row(post, GOLD))
    for pid, label in pseudo:
        if pid in gold_ids:
            raise OverlapError(f"pseudo-labelled post {pid!r} is also in the gold set")
        if pid not in post_store:
            raise UnknownPostError(f"no text for pseudo-labelled post {pid!r}")
        source = post_store[pid]
        rows.append(Row(Post(pid, source.text, label), PSEUDO))
    return Dataset(rows)


def read_annotations(path: str | Path) -> tuple[list[Annotation], list[str]]:
    """Read annotation JSONL; rows with a null label are failures, returned by post id."""
    annotations, failed = [], []
    with open(path, encoding="utf-8") as handle:
        for n, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if row.get("label") is None:
                    failed.append(str(row["post_id"]))
                else:
                    annotations.append(Annotation.from_dict(row))
            except (ValueError, KeyError, TypeError) as exc:
                raise FormatError(str(exc), n, path) from None
    return annotations, failed
