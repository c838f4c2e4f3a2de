import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_post
from oracles import TRIPLE_TABLE
from pseudolabel.annotator import (
    AnnotationPolicy,
    Annotator,
    annotate_post,
    annotate_posts,
    parse_answer_triple,
    parse_moveon,
    refine_attempt,
    triple_to_label,
)
from pseudolabel.domain import AnswerTriple, RiskLevel, YesNo
from pseudolabel.errors import AnnotationError, ParseError, PreconditionError, ProtocolError

MOVEON = r"moved on from"


def completion(triple):
    a, b, c = triple
    return (
        f"Answer 1: {a}. reasons\nAnswer 2: {b}. more reasons\n"
        f"Answer 3: {c}. final reasons\nFinal answer: {{{a}, {b}, {c}}}"
    )


@pytest.mark.parametrize("triple, label", sorted(TRIPLE_TABLE.items()))
def test_triple_table(triple, label):
    assert triple_to_label(AnswerTriple.of(triple)) is RiskLevel.parse(label)


@pytest.mark.parametrize("triple", sorted(TRIPLE_TABLE))
def test_parse_round_trip(triple):
    parsed = parse_answer_triple(completion(triple))
    assert parsed.triple == AnswerTriple.of(triple)
    assert parsed.raw_answers[0].startswith(triple[0])
    assert parsed.compiled_line.startswith("Final answer:")


@pytest.mark.parametrize(
    "text, expected",
    [
        ("Final answer: {Yes, No, No}", ("Yes", "No", "No")),
        ("blah\n**Final Answer:** {yes, YES, no}.", ("Yes", "Yes", "No")),
        ("Final answer: [No, No, Yes]", ("No", "No", "Yes")),
        ('Final answer: {"Yes", "No", "Yes"}', ("Yes", "No", "Yes")),
        ("Answers compiled: Yes, Yes, No", ("Yes", "Yes", "No")),
        # the last compiled line wins over an earlier one
        ("Final answer: {No, No, No}\nCorrection. Final answer: {Yes, No, No}", ("Yes", "No", "No")),
        # braces win over a later prose run
        ("Final answer: {No, Yes, No}\nSo yes, no to the rest", ("No", "Yes", "No")),
    ],
)
def test_parse_variants(text, expected):
    assert parse_answer_triple(text).triple == AnswerTriple.of(expected)


@pytest.mark.parametrize(
    "text",
    [
        "I cannot help with that.",
        "Final answer: {Yes, No}",
        "Final answer: {Yes, No, No, Yes}",
        "Final answer: {Yes, Maybe, No}",
        "",
    ],
)
def test_parse_failures(text):
    with pytest.raises(ParseError):
        parse_answer_triple(text)


@pytest.mark.parametrize(
    "text, expected",
    [("Yes. They are glad to be alive.", YesNo.YES), ("no, still struggling", YesNo.NO),
     ("Answer: No. Yesterday was hard", YesNo.NO), ("  YES", YesNo.YES)],
)
def test_parse_moveon(text, expected):
    assert parse_moveon(text) is expected


def test_parse_moveon_failure():
    with pytest.raises(ParseError):
        parse_moveon("Perhaps. Yesterday they felt nothing.")


@given(st.tuples(st.booleans(), st.booleans()))
def test_refinement_flips_only_attempt(head):
    triple = AnswerTriple.of(tuple("Yes" if b else "No" for b in head) + ("Yes",))
    refined = refine_attempt(triple, YesNo.YES)
    assert refined.attempt is YesNo.NO
    assert (refined.ideation, refined.behaviour) == (triple.ideation, triple.behaviour)
    assert refine_attempt(triple, YesNo.NO) == triple
    assert triple_to_label(refined) is not RiskLevel.ATTEMPT


def test_refine_requires_attempt():
    with pytest.raises(PreconditionError):
        refine_attempt(AnswerTriple.of(("Yes", "No", "No")), YesNo.YES)


def test_refine_worked_example():
    refined = refine_attempt(AnswerTriple.of(("Yes", "No", "Yes")), YesNo.YES)
    assert refined == AnswerTriple.of(("Yes", "No", "No"))
    assert triple_to_label(refined) is RiskLevel.IDEATION


def test_annotate_ideation_no_moveon(mock_llm):
    server, client, config = mock_llm({"default": completion(("Yes", "No", "No"))})
    ann = annotate_post(make_post(1), client, config=config, annotator_id="m1")
    assert ann.label is RiskLevel.IDEATION
    assert not ann.refined
    assert ann.annotator_id == "m1" and ann.post_id == "p001"
    assert len(server.requests) == 1


def test_annotate_attempt_moved_on(mock_llm):
    script = {"rules": [{"match": MOVEON, "responses": ["Yes. Grateful to have survived."]}],
              "default": completion(("Yes", "No", "Yes"))}
    server, client, config = mock_llm(script)
    ann = annotate_post(make_post(2), client, config=config)
    assert ann.label is RiskLevel.IDEATION
    assert ann.refined
    assert ann.triple == AnswerTriple.of(("Yes", "No", "No"))
    assert len(server.requests) == 2
    assert "POSTID-002" in server.requests[1]["prompt"]


def test_annotate_attempt_not_moved_on(mock_llm):
    script = {"rules": [{"match": MOVEON, "responses": ["No. Still wants to try again."]}],
              "default": completion(("No", "No", "Yes"))}
    server, client, config = mock_llm(script)
    ann = annotate_post(make_post(3), client, config=config)
    assert ann.label is RiskLevel.ATTEMPT
    assert not ann.refined


def test_rejected_variant_relabels_to_indicator(mock_llm):
    script = {"rules": [{"match": MOVEON, "responses": ["Yes."]}],
              "default": completion(("Yes", "Yes", "Yes"))}
    _, client, config = mock_llm(script)
    policy = AnnotationPolicy(moveon_to_indicator=True)
    ann = annotate_post(make_post(4), client, policy=policy, config=config)
    assert ann.label is RiskLevel.INDICATOR and ann.refined


@pytest.mark.parametrize("triple", sorted(TRIPLE_TABLE))
def test_moveon_asked_only_for_attempt(mock_llm, triple):
    script = {"rules": [{"match": MOVEON, "responses": ["No."]}], "default": completion(triple)}
    server, client, config = mock_llm(script)
    annotate_post(make_post(5), client, config=config)
    moveon_asked = any("moved on from" in p for p in server.prompts())
    assert moveon_asked == (TRIPLE_TABLE[triple] == "attempt")


def test_garbage_twice_fails_after_one_reprompt(mock_llm):
    server, client, config = mock_llm({"default": "I would rather not say."})
    with pytest.raises(AnnotationError) as info:
        annotate_post(make_post(6), client, config=config, annotator_id="m2")
    assert isinstance(info.value.cause, ParseError)
    assert info.value.post_id == "p006" and info.value.annotator_id == "m2"
    assert len(server.requests) == 2


def test_reprompt_recovers(mock_llm):
    script = {"rules": [{"match": "POSTID", "responses": ["unsure", completion(("No", "Yes", "No"))]}]}
    server, client, config = mock_llm(script)
    ann = annotate_post(make_post(7), client, config=config)
    assert ann.label is RiskLevel.BEHAVIOUR
    assert len(server.requests) == 2


def test_protocol_failure_wrapped(mock_llm):
    _, client, config = mock_llm({"default": {"raw": "<<garbage>>"}})
    with pytest.raises(AnnotationError) as info:
        annotate_post(make_post(8), client, config=config)
    assert isinstance(info.value.cause, ProtocolError)


def test_annotate_posts_in_order_with_failures(mock_llm):
    script = {"rules": [{"match": "POSTID-003", "responses": ["no idea"]}],
              "default": completion(("No", "No", "No"))}
    _, client, config = mock_llm(script)
    annotator = Annotator("m", client, config)
    posts = [make_post(i) for i in range(6)]
    results = annotate_posts(posts, annotator, parallelism=3)
    assert [getattr(r, "post_id", None) for r in results] == [p.post_id for p in posts]
    assert isinstance(results[3], AnnotationError)
    assert all(r.label is RiskLevel.INDICATOR for i, r in enumerate(results) if i != 3)
