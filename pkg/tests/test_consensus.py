import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_post
from pseudolabel.consensus import assemble_training_set, read_annotations, unanimous_filter
from pseudolabel.datasplit import GOLD, PSEUDO
from pseudolabel.domain import LEVELS, Annotation, Post, RiskLevel
from pseudolabel.errors import DuplicateAnnotationError, OverlapError, UnknownPostError

IDEATION, BEHAVIOUR = RiskLevel.IDEATION, RiskLevel.BEHAVIOUR
ANNOTATORS = ("a", "b", "c")


def votes(post_id, *labels):
    return [Annotation(post_id, name, label) for name, label in zip(ANNOTATORS, labels)]


def test_unanimous_post_kept():
    kept, report = unanimous_filter(votes("x", IDEATION, IDEATION, IDEATION), ANNOTATORS)
    assert kept == [("x", IDEATION)]
    assert report.coverage == 1.0


def test_disagreement_discarded():
    kept, report = unanimous_filter(votes("x", IDEATION, IDEATION, BEHAVIOUR), ANNOTATORS)
    assert kept == [] and report.agreed_posts == 0


def test_missing_annotation_vetoes():
    anns = votes("x", IDEATION, IDEATION)
    kept, report = unanimous_filter(anns, ANNOTATORS, post_ids=["x"])
    assert kept == [] and report.total_posts == 1


def test_ten_posts_six_unanimous():
    anns = []
    for i in range(10):
        third = IDEATION if i < 6 else BEHAVIOUR
        anns += votes(f"p{i}", IDEATION, IDEATION, third)
    kept, report = unanimous_filter(anns, ANNOTATORS)
    assert report.coverage == 0.6
    assert report.total_posts == 10 and report.agreed_posts == 6
    assert report.per_class_counts[IDEATION] == 6
    assert sum(report.per_class_counts.values()) == report.agreed_posts


def test_universe_includes_unannotated_posts():
    anns = votes("p1", IDEATION, IDEATION, IDEATION)
    _, report = unanimous_filter(anns, ANNOTATORS, post_ids=["p0", "p1", "p2", "p3"])
    assert report.coverage == 0.25


def test_duplicate_annotation_rejected():
    anns = votes("x", IDEATION, IDEATION, IDEATION) + [Annotation("x", "a", BEHAVIOUR)]
    with pytest.raises(DuplicateAnnotationError):
        unanimous_filter(anns, ANNOTATORS)


def test_report_json():
    _, report = unanimous_filter(votes("x", IDEATION, IDEATION, IDEATION), ANNOTATORS)
    data = json.loads(report.to_json())
    assert data["coverage"] == 1.0
    assert list(data["per_class_counts"]) == [lv.value for lv in LEVELS]


annotation_sets = st.lists(
    st.tuples(st.integers(0, 7), st.sampled_from(["a", "b", "c", "d"]), st.sampled_from(LEVELS)),
    max_size=40,
    unique_by=lambda t: (t[0], t[1]),
).map(lambda rows: [Annotation(f"p{i}", a, lv) for i, a, lv in rows])


@given(annotation_sets, st.randoms(use_true_random=False))
def test_permutation_invariant(anns, rnd):
    shuffled = list(anns)
    rnd.shuffle(shuffled)
    ids = [f"p{i}" for i in range(8)]
    assert unanimous_filter(anns, "abc", ids) == unanimous_filter(shuffled, "abc", ids)


@given(annotation_sets)
def test_kept_set_shrinks_with_more_annotators(anns):
    ids = [f"p{i}" for i in range(8)]
    previous = None
    for required in ("a", "ab", "abc", "abcd"):
        kept = {pid for pid, _ in unanimous_filter(anns, required, ids)[0]}
        if previous is not None:
            assert kept <= previous
        previous = kept


def _gold(counts):
    posts, n = [], 0
    for level, count in zip(LEVELS, counts):
        for _ in range(count):
            posts.append(make_post(n, label=level))
            n += 1
    return posts


def test_assemble_1402():
    gold = _gold((129, 190, 140, 41))
    store = {f"u{i}": Post(f"u{i}", f"unlabeled text {i}") for i in range(1500)}
    pseudo = [(f"u{i}", LEVELS[i % 4]) for i in range(902)]
    dataset = assemble_training_set(gold, pseudo, store)
    assert len(dataset) == 1402
    assert len(dataset.by_provenance(GOLD)) == 500
    assert len(dataset.by_provenance(PSEUDO)) == 902
    gold_counts = {lv: 0 for lv in LEVELS}
    for row in dataset.by_provenance(GOLD):
        gold_counts[row.label] += 1
    assert gold_counts[RiskLevel.ATTEMPT] == 41
    assert dataset.rows[500].post.text == "unlabeled text 0"


def test_assemble_empty_pseudo_is_gold():
    gold = _gold((5, 5, 5, 5))
    dataset = assemble_training_set(gold, [], {})
    assert [r.post for r in dataset] == gold
    assert {r.provenance for r in dataset} == {GOLD}


def test_assemble_overlap():
    gold = _gold((1, 0, 0, 0))
    with pytest.raises(OverlapError):
        assemble_training_set(gold, [(gold[0].post_id, IDEATION)], {gold[0].post_id: gold[0]})


def test_assemble_unknown_post():
    with pytest.raises(UnknownPostError):
        assemble_training_set([], [("ghost", IDEATION)], {})


def test_read_annotations(tmp_path):
    path = tmp_path / "ann.jsonl"
    rows = [
        Annotation("p1", "a", IDEATION).to_dict(),
        {"post_id": "p2", "annotator_id": "a", "label": None, "error": "parse failure"},
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    anns, failed = read_annotations(path)
    assert [a.post_id for a in anns] == ["p1"]
    assert failed == ["p2"]
