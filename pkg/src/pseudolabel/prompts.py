"""Few-shot prompt templates for the classification and move-on questions.

Templates live in plain UTF-8 text files split into sections::

    ### INSTRUCTION
    free text
    ### QUESTIONS            (classification only, exactly three lines)
    ### EXAMPLE              (repeated; see below)
    ### QUERY
    free text containing {{POST}} exactly once

A classification example is ``Post: ...`` followed by ``Answer 1:`` ..
``Answer 3:`` (each starting with Yes or No, then a rationale) and a
``Final answer: {Yes, No, No}`` line. A move-on example is ``Post: ...``
followed by ``Answer: Yes`` or ``Answer: No``. Lines starting with ``%%``
are comments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Literal, Union

from .domain import AnswerTriple, Post, YesNo
from .errors import TemplateError

PLACEHOLDER = "{{POST}}"
DEFAULT_NUM_EXEMPLARS = 6

CLASSIFICATION = "classification"
MOVEON = "moveon"

_SECTION = re.compile(r"^###\s+(INSTRUCTION|QUESTIONS|EXAMPLE|QUERY)\s*$")
_POST_LINE = re.compile(r"^Post:\s?(.*)$")
_NUMBERED_ANSWER = re.compile(r"^Answer\s+([123]):\s*(yes|no)\b[\s.,:;-]*(.*)$", re.IGNORECASE)
_PLAIN_ANSWER = re.compile(r"^Answer:\s*(yes|no)\b[\s.,:;-]*(.*)$", re.IGNORECASE)
_FINAL = re.compile(r"^Final answer:\s*\{(.*)\}\s*$", re.IGNORECASE)
_EXAMPLE_HEADER = "Example {}:"


@dataclass(frozen=True)
class Exemplar:
    """Worked classification example: a post, three reasoned answers, the compiled triple."""

    post_text: str
    responses: tuple[tuple[YesNo, str], ...]
    compiled: AnswerTriple | None = None

    def __post_init__(self):
        responses = tuple((YesNo.parse(a), str(r)) for a, r in self.responses)
        if len(responses) != 3:
            raise TemplateError(f"exemplar needs 3 responses, got {len(responses)}")
        heads = AnswerTriple.of(tuple(a for a, _ in responses))
        if self.compiled is None:
            object.__setattr__(self, "compiled", heads)
        elif self.compiled != heads:
            raise TemplateError(
                f"compiled answer {self.compiled} disagrees with responses {heads}"
            )
        object.__setattr__(self, "responses", responses)
        if not self.post_text.strip():
            raise TemplateError("exemplar post text is empty")


@dataclass(frozen=True)
class MoveOnExemplar:
    post_text: str
    answer: YesNo
    rationale: str = ""

    def __post_init__(self):
        object.__setattr__(self, "answer", YesNo.parse(self.answer))
        if not self.post_text.strip():
            raise TemplateError("exemplar post text is empty")


@dataclass(frozen=True)
class PromptTemplate:
    kind: Literal["classification", "moveon"]
    instruction: str
    exemplars: tuple[Union[Exemplar, MoveOnExemplar], ...]
    query: str
    questions: tuple[str, ...] = ()
    placeholder_token: str = PLACEHOLDER

    def __post_init__(self):
        object.__setattr__(self, "exemplars", tuple(self.exemplars))
        object.__setattr__(self, "questions", tuple(self.questions))
        if self.kind not in (CLASSIFICATION, MOVEON):
            raise TemplateError(f"unknown template kind {self.kind!r}")
        if not self.exemplars:
            raise TemplateError(f"{self.kind} template has no exemplars")
        want = Exemplar if self.kind == CLASSIFICATION else MoveOnExemplar
        for ex in self.exemplars:
            if not isinstance(ex, want):
                raise TemplateError(f"{self.kind} template got a {type(ex).__name__}")
        if self.kind == CLASSIFICATION and len(self.questions) != 3:
            raise TemplateError("classification template needs exactly 3 questions")
        if self.kind == MOVEON and self.questions:
            raise TemplateError("move-on template takes no question list")
        n = self.body().count(self.placeholder_token)
        if n != 1:
            raise TemplateError(
                f"template must contain {self.placeholder_token} exactly once, found {n}"
            )
        if self.query.count(self.placeholder_token) != 1:
            raise TemplateError(f"{self.placeholder_token} must appear in the query section")

    def body(self) -> str:
        """Everything a rendered prompt contains, with the placeholder unsubstituted."""
        parts = [self.instruction.strip()]
        for i, ex in enumerate(self.exemplars, 1):
            parts.append(self._render_exemplar(i, ex))
        parts.append(self.query.strip())
        return "\n\n".join(parts) + "\n"

    def _render_exemplar(self, index: int, ex) -> str:
        lines = [_EXAMPLE_HEADER.format(index), f"Post: {ex.post_text.strip()}"]
        if isinstance(ex, Exemplar):
            for n, (question, (answer, why)) in enumerate(zip(self.questions, ex.responses), 1):
                lines.append(f"Question {n}: {question}")
                lines.append(f"Answer {n}: {answer.value}. {why}".rstrip())
            lines.append(f"Final answer: {ex.compiled}")
        else:
            lines.append(f"Answer: {ex.answer.value}. {ex.rationale}".rstrip())
        return "\n".join(lines)

    def with_exemplars(self, n: int) -> PromptTemplate:
        """Copy keeping only the first ``n`` exemplars."""
        return PromptTemplate(
            kind=self.kind,
            instruction=self.instruction,
            exemplars=self.exemplars[:n],
            query=self.query,
            questions=self.questions,
            placeholder_token=self.placeholder_token,
        )


def _render(post: Post, template: PromptTemplate, kind: str) -> str:
    if template.kind != kind:
        raise TemplateError(f"expected a {kind} template, got {template.kind}")
    text = post.text
    if not text.strip():
        raise TemplateError(f"post {post.post_id} has empty text")
    body = template.body()
    # placeholder is validated to occur once, so a single split is exact
    head, tail = body.split(template.placeholder_token)
    return head + text + tail


def render_classification_prompt(post: Post, template: PromptTemplate) -> str:
    return _render(post, template, CLASSIFICATION)


def render_moveon_prompt(post: Post, template: PromptTemplate) -> str:
    return _render(post, template, MOVEON)


def count_exemplar_blocks(prompt: str) -> int:
    return len(re.findall(r"^Example \d+:$", prompt, flags=re.MULTILINE))


# --- file format -----------------------------------------------------------


def parse_template(text: str, kind: str) -> PromptTemplate:
    sections: list[tuple[str, list[str]]] = []
    for raw in text.splitlines():
        if raw.startswith("%%"):
            continue
        m = _SECTION.match(raw)
        if m:
            sections.append((m.group(1), []))
        elif sections:
            sections[-1][1].append(raw)
        elif raw.strip():
            raise TemplateError(f"text before first section: {raw!r}")

    instruction, query, questions, exemplars = None, None, [], []
    for name, lines in sections:
        block = "\n".join(lines).strip()
        if name == "INSTRUCTION":
            instruction = block
        elif name == "QUERY":
            if query is not None:
                raise TemplateError("duplicate QUERY section")
            query = block
        elif name == "QUESTIONS":
            questions = [ln.strip() for ln in lines if ln.strip()]
        else:
            exemplars.append(_parse_example(lines, kind))
    if instruction is None:
        raise TemplateError("missing INSTRUCTION section")
    if query is None:
        raise TemplateError("missing QUERY section")
    return PromptTemplate(
        kind=kind, instruction=instruction, exemplars=tuple(exemplars),
        query=query, questions=tuple(questions),
    )


def _parse_example(lines: list[str], kind: str):
    post_lines: list[str] = []
    answers: dict[int, list] = {}
    final = None
    current = None
    in_post = False
    for line in lines:
        pm = _POST_LINE.match(line)
        if pm and not post_lines and not answers:
            post_lines.append(pm.group(1))
            in_post = True
            continue
        nm = _NUMBERED_ANSWER.match(line) if kind == CLASSIFICATION else None
        am = _PLAIN_ANSWER.match(line) if kind == MOVEON else None
        fm = _FINAL.match(line) if kind == CLASSIFICATION else None
        if nm:
            idx = int(nm.group(1))
            if idx in answers:
                raise TemplateError(f"duplicate Answer {idx} in exemplar")
            answers[idx] = [YesNo.parse(nm.group(2)), nm.group(3).strip()]
            current, in_post = idx, False
        elif am:
            answers[0] = [YesNo.parse(am.group(1)), am.group(2).strip()]
            current, in_post = 0, False
        elif fm:
            tokens = [t.strip().strip("\"'") for t in fm.group(1).split(",")]
            try:
                final = AnswerTriple.of(tuple(tokens))
            except ValueError as exc:
                raise TemplateError(f"bad Final answer line: {line!r}") from exc
            current, in_post = None, False
        elif in_post:
            post_lines.append(line)
        elif current is not None and line.strip():
            answers[current][1] = (answers[current][1] + " " + line.strip()).strip()
        elif line.strip():
            raise TemplateError(f"unexpected line in exemplar: {line!r}")

    post_text = "\n".join(post_lines).strip()
    if not post_text:
        raise TemplateError("exemplar without a Post: line")
    if kind == CLASSIFICATION:
        if sorted(answers) != [1, 2, 3]:
            raise TemplateError(f"exemplar needs Answer 1..3, found {sorted(answers)}")
        responses = tuple((answers[i][0], answers[i][1]) for i in (1, 2, 3))
        return Exemplar(post_text=post_text, responses=responses, compiled=final)
    if 0 not in answers:
        raise TemplateError("move-on exemplar without an Answer: line")
    return MoveOnExemplar(post_text=post_text, answer=answers[0][0], rationale=answers[0][1])


def load_template(path: str | Path, kind: str) -> PromptTemplate:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise TemplateError(f"template file not found: {path}") from None
    try:
        return parse_template(text, kind)
    except TemplateError as exc:
        raise TemplateError(f"{path}: {exc}") from None


def default_template(kind: str) -> PromptTemplate:
    name = {CLASSIFICATION: "classification.txt", MOVEON: "moveon.txt"}[kind]
    text = resources.files("pseudolabel").joinpath("templates", name).read_text(encoding="utf-8")
    return parse_template(text, kind)


@dataclass(frozen=True)
class TemplatePair:
    classification: PromptTemplate = field(default_factory=lambda: default_template(CLASSIFICATION))
    moveon: PromptTemplate = field(default_factory=lambda: default_template(MOVEON))
