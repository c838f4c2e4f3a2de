"""Turn LLM completions into risk-level annotations."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar, Union

from .domain import AnswerTriple, Annotation, Post, RiskLevel, YesNo
from .errors import (
    AnnotationError,
    BudgetError,
    ParseError,
    PreconditionError,
    ProtocolError,
    TransportError,
)
from .gateway import DecodingConfig, LLMClient
from .prompts import TemplatePair, render_classification_prompt, render_moveon_prompt

log = logging.getLogger(__name__)

T = TypeVar("T")

_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_BRACE_GROUP = re.compile(r"[{\[]([^{}\[\]]*)[}\]]")
_COMMA_RUN = re.compile(r"\b(?:yes|no)\b(?:[\s\"'*]*,[\s\"'*]*\b(?:yes|no)\b)+", re.IGNORECASE)
_ANSWER_LINE = re.compile(r"^\W*Answer\s*([123])\s*:\s*(.*)$", re.IGNORECASE)
_STRIP = " \t\"'*`."


@dataclass(frozen=True)
class ParsedCompletion:
    triple: AnswerTriple
    raw_answers: tuple[str, str, str]
    compiled_line: str


def _brace_tokens(line: str) -> list[str] | None:
    """Items of the last brace/bracket group on the line that mentions Yes/No."""
    found = None
    for m in _BRACE_GROUP.finditer(line):
        if _YES_NO.search(m.group(1)):
            found = [item.strip(_STRIP) for item in m.group(1).split(",")]
    return found


def _find_compiled(lines: list[str]) -> tuple[str, list[str]] | None:
    for line in reversed(lines):
        tokens = _brace_tokens(line)
        if tokens is not None:
            return line, tokens
    for line in reversed(lines):
        runs = _COMMA_RUN.findall(line)
        if runs:
            return line, [t.strip(_STRIP) for t in runs[-1].split(",")]
    return None


def parse_answer_triple(completion_text: str) -> ParsedCompletion:
    """Extract the (ideation, behaviour, attempt) answers from the compiled line.

    The compiled line is the last line holding a brace-delimited list of
    Yes/No tokens, falling back to the last comma-separated run of at least
    two Yes/No tokens. It must hold exactly three tokens.
    """
    lines = completion_text.splitlines()
    found = _find_compiled(lines)
    if found is None:
        raise ParseError("no compiled Yes/No answer line found")
    line, tokens = found
    if len(tokens) != 3:
        raise ParseError(f"compiled line has {len(tokens)} answers, expected 3: {line.strip()!r}")
    try:
        answers = [YesNo.parse(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"compiled line {line.strip()!r}: {exc}") from None

    rationales = ["", "", ""]
    for raw in lines:
        m = _ANSWER_LINE.match(raw)
        if m:
            rationales[int(m.group(1)) - 1] = m.group(2).strip()
    return ParsedCompletion(AnswerTriple(*answers), tuple(rationales), line.strip())


def triple_to_label(triple: AnswerTriple) -> RiskLevel:
    # read right to left; the first Yes decides
    for answer, level in (
        (triple.attempt, RiskLevel.ATTEMPT),
        (triple.behaviour, RiskLevel.BEHAVIOUR),
        (triple.ideation, RiskLevel.IDEATION),
    ):
        if answer is YesNo.YES:
            return level
    return RiskLevel.INDICATOR


def parse_moveon(completion_text: str) -> YesNo:
    m = _YES_NO.search(completion_text)
    if m is None:
        raise ParseError(f"no Yes/No answer in move-on completion: {completion_text[:80]!r}")
    return YesNo.parse(m.group(1))


def refine_attempt(triple: AnswerTriple, moveon: YesNo) -> AnswerTriple:
    if triple.attempt is not YesNo.YES:
        raise PreconditionError(f"refinement only applies to Attempt answers, got {triple}")
    if YesNo.parse(moveon) is YesNo.YES:
        return AnswerTriple(triple.ideation, triple.behaviour, YesNo.NO)
    return triple


@dataclass(frozen=True)
class AnnotationPolicy:
    """How hard to try before giving up on a post.

    ``reprompts`` extra identical requests are made when a completion cannot
    be parsed. ``moveon_to_indicator`` enables the discarded variant that
    relabels moved-on Attempt posts as Indicator instead of flipping the
    attempt answer.
    """

    reprompts: int = 1
    moveon_to_indicator: bool = False


@dataclass
class Annotator:
    """One prompted LLM acting as an annotator."""

    annotator_id: str
    client: LLMClient
    config: DecodingConfig = field(default_factory=DecodingConfig)
    templates: TemplatePair = field(default_factory=TemplatePair)
    policy: AnnotationPolicy = field(default_factory=AnnotationPolicy)

    def annotate(self, post: Post) -> Annotation:
        return annotate_post(
            post, self.client, self.templates, self.policy,
            config=self.config, annotator_id=self.annotator_id,
        )

    def annotate_all(
        self, posts: Sequence[Post], parallelism: int = 1
    ) -> list[Union[Annotation, AnnotationError]]:
        return annotate_posts(posts, self, parallelism)


def _ask(client, prompt, config, parse: Callable[[str], T], attempts: int) -> T:
    error: Exception | None = None
    for attempt in range(attempts):
        try:
            result = client.complete(prompt, config)
            return parse(result.text)
        except (ParseError, ProtocolError, BudgetError) as exc:
            error = exc
            log.info("unusable completion (attempt %d/%d): %s", attempt + 1, attempts, exc)
    assert error is not None
    raise error


def annotate_post(
    post: Post,
    gateway: LLMClient,
    templates: TemplatePair | None = None,
    policy: AnnotationPolicy | None = None,
    *,
    config: DecodingConfig | None = None,
    annotator_id: str = "llm",
) -> Annotation:
    templates = templates or TemplatePair()
    policy = policy or AnnotationPolicy()
    config = config or DecodingConfig()
    attempts = 1 + max(0, policy.reprompts)
    try:
        parsed = _ask(
            gateway, render_classification_prompt(post, templates.classification),
            config, parse_answer_triple, attempts,
        )
        triple = parsed.triple
        if triple_to_label(triple) is not RiskLevel.ATTEMPT:
            return Annotation(post.post_id, annotator_id, triple_to_label(triple), triple)
        moveon = _ask(
            gateway, render_moveon_prompt(post, templates.moveon),
            config, parse_moveon, attempts,
        )
    except (ParseError, ProtocolError, BudgetError, TransportError) as exc:
        raise AnnotationError(post.post_id, annotator_id, exc) from exc

    if moveon is YesNo.NO:
        return Annotation(post.post_id, annotator_id, RiskLevel.ATTEMPT, triple)
    if policy.moveon_to_indicator:
        return Annotation(post.post_id, annotator_id, RiskLevel.INDICATOR, None, refined=True)
    refined = refine_attempt(triple, moveon)
    return Annotation(post.post_id, annotator_id, triple_to_label(refined), refined, refined=True)


def annotate_posts(
    posts: Sequence[Post], annotator: Annotator, parallelism: int = 1
) -> list[Union[Annotation, AnnotationError]]:
    """Annotate posts in input order; failed posts yield their AnnotationError in-slot."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(post):
        try:
            return annotator.annotate(post)
        except AnnotationError as exc:
            log.warning("%s", exc)
            return exc

    if parallelism == 1:
        return [one(p) for p in posts]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, posts))
