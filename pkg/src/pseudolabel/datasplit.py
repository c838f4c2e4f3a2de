"""Dataset IO, stratified folds and token-budget middle truncation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Protocol, Sequence

import numpy as np

from .domain import LEVELS, Post, RiskLevel, count_labels
from .errors import BudgetError, DuplicateIdError, FormatError, InsufficientClassError

GOLD = "gold"
PSEUDO = "pseudo"
UNLABELED = "unlabeled"
PROVENANCES = (GOLD, PSEUDO, UNLABELED)

FIELDS = ("post_id", "text", "label", "provenance")


@dataclass(frozen=True)
class Row:
    post: Post
    provenance: str

    @property
    def label(self) -> Optional[RiskLevel]:
        return self.post.gold_label

    def to_dict(self) -> dict:
        return {
            "post_id": self.post.post_id,
            "text": self.post.text,
            "label": self.label.value if self.label else None,
            "provenance": self.provenance,
        }


@dataclass
class Dataset:
    rows: list[Row] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            if row.provenance not in PROVENANCES:
                raise FormatError(f"bad provenance {row.provenance!r} for {row.post.post_id}")
            if row.provenance != UNLABELED and row.label is None:
                raise FormatError(f"{row.provenance} row {row.post.post_id} has no label")
            if row.post.post_id in seen:
                raise DuplicateIdError(f"duplicate post_id {row.post.post_id!r}")
            seen.add(row.post.post_id)

    @classmethod
    def from_posts(cls, posts: Iterable[Post], provenance: str | None = None) -> Dataset:
        rows = []
        for post in posts:
            prov = provenance or (GOLD if post.gold_label is not None else UNLABELED)
            rows.append(Row(post, prov))
        return cls(rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[Row]:
        return iter(self.rows)

    @property
    def posts(self) -> list[Post]:
        return [r.post for r in self.rows]

    @property
    def class_counts(self) -> dict[RiskLevel, int]:
        return count_labels(r.label for r in self.rows if r.label is not None)

    def by_provenance(self, provenance: str) -> list[Row]:
        return [r for r in self.rows if r.provenance == provenance]

    def post_map(self) -> dict[str, Post]:
        return {r.post.post_id: r.post for r in self.rows}

    def class_distribution(self) -> dict[str, dict]:
        counts = self.class_counts
        total = sum(counts.values())
        return {
            level.value: {
                "count": counts[level],
                "percent": round(100.0 * counts[level] / total, 1) if total else 0.0,
            }
            for level in LEVELS
        }


# --- ingestion ---------------------------------------------------------------


def _row_from_record(record: dict, line: int, path) -> Row:
    if not isinstance(record, dict):
        raise FormatError("row is not an object", line, path)
    for key in ("post_id", "text"):
        if key not in record or record[key] is None:
            raise FormatError(f"missing field {key!r}", line, path)
    raw_label = record.get("label")
    label = None
    if raw_label not in (None, ""):
        try:
            label = RiskLevel.parse(raw_label)
        except ValueError as exc:
            raise FormatError(str(exc), line, path) from None
    provenance = record.get("provenance") or (GOLD if label else UNLABELED)
    if provenance not in PROVENANCES:
        raise FormatError(f"bad provenance {provenance!r}", line, path)
    if provenance != UNLABELED and label is None:
        raise FormatError(f"{provenance} row without a label", line, path)
    try:
        post = Post(str(record["post_id"]), str(record["text"]), label)
    except ValueError as exc:
        raise FormatError(str(exc), line, path) from None
    return Row(post, provenance)


def _build(records: Iterable[tuple[int, dict]], path) -> Dataset:
    rows, seen = [], set()
    for line, record in records:
        row = _row_from_record(record, line, path)
        if row.post.post_id in seen:
            raise DuplicateIdError(f"duplicate post_id {row.post.post_id!r}", line, path)
        seen.add(row.post.post_id)
        rows.append(row)
    return Dataset(rows)


def _jsonl_records(handle, path) -> Iterator[tuple[int, dict]]:
    for n, line in enumerate(handle, 1):
        if not line.strip():
            continue
        try:
            yield n, json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", n, path) from None


def _csv_records(handle, path) -> Iterator[tuple[int, dict]]:
    reader = csv.DictReader(handle)
    if reader.fieldnames is None or not {"post_id", "text"} <= set(reader.fieldnames):
        raise FormatError("CSV header must include post_id and text", 1, path)
    start = reader.line_num + 1
    for record in reader:
        yield start, record
        start = reader.line_num + 1


def ingest(path: str | Path, format: str | None = None) -> Dataset:
    """Load a dataset from JSONL or CSV (format inferred from the suffix)."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in ("jsonl", "csv"):
        raise FormatError(f"unsupported format {fmt!r}", path=path)
    try:
        with open(path, encoding="utf-8", newline="") as handle:
            records = _jsonl_records(handle, path) if fmt == "jsonl" else _csv_records(handle, path)
            return _build(records, path)
    except FileNotFoundError:
        raise FormatError("file not found", path=path) from None
    except UnicodeDecodeError as exc:
        raise FormatError(f"not UTF-8: {exc}", path=path) from None


def dumps_jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in rows)


def write_jsonl(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps_jsonl(r.to_dict() for r in dataset), encoding="utf-8")


def write_csv(dataset: Dataset, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\r\n")
    writer.writeheader()
    for row in dataset:
        record = row.to_dict()
        record["label"] = record["label"] or ""
        writer.writerow(record)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(buf.getvalue())


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    if Path(path).suffix.lower() == ".csv":
        write_csv(dataset, path)
    else:
        write_jsonl(dataset, path)


# --- folds -----------------------------------------------------------------


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: dict[str, int]

    def fold(self, index: int) -> list[str]:
        return [pid for pid, f in self.assignment.items() if f == index]

    def folds(self) -> list[list[str]]:
        return [self.fold(i) for i in range(self.k)]

    def split(self, dataset: Dataset, index: int) -> tuple[list[Row], list[Row]]:
        """(train, validation) rows for one fold.

        Validation holds only the gold rows of ``index``; training takes the
        other gold folds plus every pseudo-labelled row.
        """
        train, val = [], []
        for row in dataset:
            if row.provenance == PSEUDO:
                train.append(row)
            elif row.post.post_id in self.assignment:
                (val if self.assignment[row.post.post_id] == index else train).append(row)
        return train, val

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "assignment": self.assignment}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> FoldAssignment:
        data = json.loads(text)
        return cls(int(data["k"]), {str(k): int(v) for k, v in data["assignment"].items()})


def stratified_folds(dataset: Dataset, k: int, seed: int) -> FoldAssignment:
    """Assign gold rows to ``k`` folds, preserving class proportions.

    Each class is shuffled with ``seed`` and dealt round-robin; the dealing
    position carries over between classes so overall fold sizes also differ
    by at most one.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    by_class: dict[RiskLevel, list[str]] = {level: [] for level in LEVELS}
    for row in dataset.by_provenance(GOLD):
        by_class[row.label].append(row.post.post_id)
    for level in LEVELS:
        if len(by_class[level]) < k:
            raise InsufficientClassError(level, len(by_class[level]), k)

    rng = np.random.default_rng(seed)
    assignment: dict[str, int] = {}
    cursor = 0
    for level in LEVELS:
        ids = sorted(by_class[level])
        for i in rng.permutation(len(ids)):
            assignment[ids[i]] = cursor % k
            cursor += 1
    return FoldAssignment(k, assignment)


# --- truncation ------------------------------------------------------------


class Tokenizer(Protocol):
    def encode(self, text: str) -> list: ...

    def decode(self, tokens: Sequence) -> str: ...


class WhitespaceTokenizer:
    """Tokens are maximal runs of non-whitespace; decode joins with single spaces."""

    def encode(self, text: str) -> list[str]:
        return text.split()

    def decode(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens)

    def spans(self, text: str) -> list[tuple[int, int]]:
        spans, i, n = [], 0, len(text)
        while i < n:
            while i < n and text[i].isspace():
                i += 1
            if i >= n:
                break
            j = i
            while j < n and not text[j].isspace():
                j += 1
            spans.append((i, j))
            i = j
        return spans


TRUNCATION_MARKER = "..."
DEFAULT_BUDGET = 2500


def truncate_middle(
    text: str,
    tokenizer: Tokenizer | None = None,
    budget: int = DEFAULT_BUDGET,
    marker: str | None = TRUNCATION_MARKER,
) -> str:
    """Cut the middle of ``text`` so it fits in ``budget`` tokens.

    Keeps the first ceil((budget - m) / 2) and last floor((budget - m) / 2)
    tokens around a marker of m tokens. Tokenizers exposing ``spans`` get
    the kept head and tail copied verbatim from the input.
    """
    tokenizer = tokenizer or WhitespaceTokenizer()
    marker_tokens = tokenizer.encode(marker) if marker else []
    m = len(marker_tokens)
    if budget < 2 + m:
        raise BudgetError(f"budget {budget} below minimum {2 + m}")
    tokens = tokenizer.encode(text)
    if len(tokens) <= budget:
        return text
    keep = budget - m
    head, tail = math.ceil(keep / 2), keep // 2
    spans = getattr(tokenizer, "spans", None)
    if spans is not None:
        offsets = spans(text)
        left = text[: offsets[head - 1][1]]
        right = text[offsets[len(offsets) - tail][0]:]
        return f"{left} {marker} {right}" if marker else f"{left} {right}"
    return tokenizer.decode(list(tokens[:head]) + marker_tokens + list(tokens[len(tokens) - tail:]))


def count_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    return len((tokenizer or WhitespaceTokenizer()).encode(text))
