import json

import pytest

from fleet import ANNOTATOR_IDS, fleet_scripts, write_jsonl, write_workspace
from pseudolabel.cli import length_histogram, main
from pseudolabel.mockserver import MockLLMServer

LABELS = ["indicator", "ideation", "behaviour", "attempt", "ideation"] * 2
DISAGREE = {1, 4, 6, 9}


@pytest.fixture
def workspace(tmp_path):
    servers = [MockLLMServer(s).start() for s in fleet_scripts(LABELS, DISAGREE)]
    config = write_workspace(tmp_path, [s.url for s in servers], LABELS)
    yield tmp_path, config, servers
    for s in servers:
        s.stop()


def run(*argv):
    return main([str(a) for a in argv])


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_annotate_and_consensus(workspace, capsys):
    root, config, servers = workspace
    assert run("annotate", "--config", config) == 0
    rows = read_jsonl(root / "out" / "annotations.jsonl")
    assert len(rows) == 30
    assert {r["annotator_id"] for r in rows} == set(ANNOTATOR_IDS)
    assert all(r["label"] is not None for r in rows)
    assert any(r["refined"] for r in rows)
    assert all(s.max_in_flight <= 4 for s in servers)
    assert "parse_failures=0" in capsys.readouterr().out

    assert run("consensus", "--config", config) == 0
    report = json.loads((root / "out" / "consensus_report.json").read_text())
    assert report["coverage"] == 0.6
    assert report["training_set"]["size"] == 24 + 6
    train = read_jsonl(root / "out" / "train_set.jsonl")
    assert [r["provenance"] for r in train].count("pseudo") == 6


def test_annotate_failures_are_recorded_not_fatal(workspace, capsys):
    root, config, servers = workspace
    servers[0].script.rules[-1].responses = [{"text": "no idea"}]
    assert run("annotate", "--config", config) == 0
    rows = read_jsonl(root / "out" / "annotations.jsonl")
    failed = [r for r in rows if r["label"] is None]
    assert len(failed) == 1 and failed[0]["annotator_id"] == "alpha"
    assert "parse_failures=1" in capsys.readouterr().out


def test_missing_template_exits_without_output(workspace, capsys):
    root, config, _ = workspace
    text = config.read_text().replace('model = "alpha-model"', 'model = "alpha-model"\nclassification_template = "nope.txt"')
    config.write_text(text)
    assert run("annotate", "--config", config) == 1
    assert not (root / "out" / "annotations.jsonl").exists()
    assert "nope.txt" in capsys.readouterr().err


def test_api_key_in_config_rejected(workspace):
    root, config, _ = workspace
    config.write_text(config.read_text().replace('model = "beta-model"', 'model = "beta-model"\napi_key = "x"'))
    assert run("annotate", "--config", config) == 1


def test_split_is_idempotent(workspace):
    root, config, _ = workspace
    assert run("annotate", "--config", config) == 0
    assert run("consensus", "--config", config) == 0
    outputs = []
    for _ in range(2):
        assert run("split", "--config", config) == 0
        outputs.append(((root / "out" / "folds.json").read_bytes(),
                        (root / "out" / "train_set_truncated.jsonl").read_bytes()))
    assert outputs[0] == outputs[1]
    folds = json.loads(outputs[0][0])
    assert folds["k"] == 5 and len(folds["assignment"]) == 24
    truncated = read_jsonl(root / "out" / "train_set_truncated.jsonl")
    assert all(len(r["text"].split()) <= 8 for r in truncated)
    assert run("split", "--config", config, "--seed", 4) == 0
    assert (root / "out" / "folds.json").read_bytes() != outputs[0][0]


def test_split_with_too_few_per_class(tmp_path, capsys):
    write_jsonl(tmp_path / "t.jsonl", [{"post_id": f"p{i}", "text": "x", "label": "ideation"} for i in range(9)])
    assert run("split", "--input", tmp_path / "t.jsonl", "--out", tmp_path / "f.json") == 1
    assert "indicator" in capsys.readouterr().err


def default_member_rows(post_ids, label="behaviour"):
    members = ["qwen2-72b-instruct", "llama3-8b-1", "llama3-8b-2", "llama3.1-8b", "gemma2-9b"]
    rows = []
    for pid in post_ids:
        rows.append({"post_id": pid, "member": members[0], "label": "ideation"})
        rows.append({"post_id": pid, "member": members[1], "label": label})
        rows.append({"post_id": pid, "member": members[2], "probs": [[0.1, 0.2, 0.6, 0.1], [0.1, 0.1, 0.7, 0.1]]})
        rows.append({"post_id": pid, "member": members[3], "label": "indicator"})
        rows.append({"post_id": pid, "member": members[4], "probs": [0.1, 0.6, 0.2, 0.1]})
    return rows


def test_ensemble_default_weights(tmp_path, capsys):
    write_jsonl(tmp_path / "preds.jsonl", default_member_rows(["a", "b"]))
    out = tmp_path / "ens.jsonl"
    assert run("ensemble", "--predictions", tmp_path / "preds.jsonl", "--out", out) == 0
    first = capsys.readouterr().out.splitlines()[0]
    weights = json.loads(first.split(": ", 1)[1])
    assert weights["qwen2-72b-instruct"] == 2
    assert sorted(v for k, v in weights.items() if k != "qwen2-72b-instruct") == [1, 1, 1, 1]
    assert read_jsonl(out) == [{"label": "ideation", "post_id": "a"}, {"label": "ideation", "post_id": "b"}]


def test_ensemble_missing_member(tmp_path, capsys):
    rows = [r for r in default_member_rows(["a"]) if r["member"] != "gemma2-9b"]
    write_jsonl(tmp_path / "preds.jsonl", rows)
    assert run("ensemble", "--predictions", tmp_path / "preds.jsonl", "--out", tmp_path / "e.jsonl") == 1
    assert "gemma2-9b" in capsys.readouterr().err


def test_ensemble_custom_weights_file(tmp_path):
    write_jsonl(tmp_path / "preds.jsonl", [
        {"post_id": "a", "member": "x", "label": "indicator"},
        {"post_id": "a", "member": "y", "label": "attempt"},
    ])
    (tmp_path / "w.json").write_text(json.dumps({"x": 3, "y": 1}))
    out = tmp_path / "e.jsonl"
    assert run("ensemble", "--predictions", tmp_path / "preds.jsonl", "--weights", tmp_path / "w.json", "--out", out) == 0
    assert read_jsonl(out)[0]["label"] == "indicator"


def test_evaluate_perfect(tmp_path):
    truth = [{"post_id": f"p{i}", "text": "t", "label": lv}
             for i, lv in enumerate(["indicator", "ideation", "behaviour", "attempt", "ideation"])]
    write_jsonl(tmp_path / "truth.jsonl", truth)
    write_jsonl(tmp_path / "preds.jsonl", [{"post_id": r["post_id"], "label": r["label"]} for r in truth])
    out = tmp_path / "report.json"
    assert run("evaluate", "--preds", tmp_path / "preds.jsonl", "--truth", tmp_path / "truth.jsonl", "--out", out) == 0
    report = json.loads(out.read_text())
    assert report["weighted_f1"] == 1.0 and report["accuracy"] == 1.0


def test_evaluate_members_with_agreement(tmp_path, capsys):
    truth = [{"post_id": f"p{i}", "text": "t", "label": "ideation"} for i in range(4)]
    write_jsonl(tmp_path / "truth.jsonl", truth)
    preds = [{"post_id": f"p{i}", "member": "m1", "label": "ideation"} for i in range(4)]
    preds += [{"post_id": f"p{i}", "member": "m2", "label": "ideation" if i else "attempt"} for i in range(4)]
    write_jsonl(tmp_path / "preds.jsonl", preds)
    out = tmp_path / "report.json"
    assert run("evaluate", "--preds", tmp_path / "preds.jsonl", "--truth", tmp_path / "truth.jsonl", "--out", out) == 0
    report = json.loads(out.read_text())
    assert report["m2"]["accuracy"] == 0.75
    assert report["agreement_match_rate"]["matrix"][0][1] == 0.75


def test_evaluate_missing_prediction(tmp_path):
    write_jsonl(tmp_path / "truth.jsonl", [{"post_id": "a", "text": "t", "label": "ideation"}])
    write_jsonl(tmp_path / "preds.jsonl", [{"post_id": "b", "label": "ideation"}])
    assert run("evaluate", "--preds", tmp_path / "preds.jsonl", "--truth", tmp_path / "truth.jsonl",
               "--out", tmp_path / "r.json") == 1


def test_train_toy_outputs(tmp_path):
    out = tmp_path / "toy"
    assert run("train-toy", "--epochs", 40, "--seed", 2, "--out", out) == 0
    first = (out / "metrics.json").read_bytes()
    curve = (out / "curve.csv").read_text().splitlines()
    assert curve[0] == "epoch,loss" and len(curve) == 41
    assert run("train-toy", "--epochs", 40, "--seed", 2, "--out", out) == 0
    assert (out / "metrics.json").read_bytes() == first
    assert json.loads(first)["config"]["loss"] == "soft_f1"


def test_train_toy_bad_features(tmp_path):
    (tmp_path / "f.csv").write_text("label,x\nideation,1\n")
    assert run("train-toy", "--features", tmp_path / "f.csv", "--out", tmp_path / "o") == 1


def test_stats_histogram_covers_longest_post(tmp_path):
    rows = [{"post_id": f"p{i}", "text": " ".join(["word"] * ((i * 37) % 2600 + 1))} for i in range(2000)]
    write_jsonl(tmp_path / "posts.jsonl", rows)
    out = tmp_path / "hist.csv"
    assert run("stats", "--input", tmp_path / "posts.jsonl", "--bin-width", 250, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "bin_start,bin_end,words,tokens"
    longest = max(len(r["text"].split()) for r in rows)
    last = [int(x) for x in lines[-1].split(",")]
    assert last[0] <= longest < last[1]
    assert sum(int(line.split(",")[3]) for line in lines[1:]) == 2000
    before = out.read_bytes()
    assert run("stats", "--input", tmp_path / "posts.jsonl", "--bin-width", 250, "--out", out) == 0
    assert out.read_bytes() == before


def test_length_histogram_counts_words_and_tokens():
    # words: 1, 2, 3; whitespace tokens: 1, 2, 4
    rows = length_histogram(["one", "it's fine", "a - b c"], bin_width=2)
    assert rows == [
        {"bin_start": 0, "bin_end": 2, "words": 1, "tokens": 1},
        {"bin_start": 2, "bin_end": 4, "words": 2, "tokens": 1},
        {"bin_start": 4, "bin_end": 6, "words": 0, "tokens": 1},
    ]


def test_usage_error_exit_code(capsys):
    assert pytest.raises(SystemExit, main, ["split", "--k", "notanint"]).value.code == 1
    assert pytest.raises(SystemExit, main, []).value.code == 1


def test_runtime_error_exit_code(tmp_path):
    write_jsonl(tmp_path / "posts.jsonl", [{"post_id": "a", "text": "x"}])
    (tmp_path / "taken").mkdir()
    assert run("stats", "--input", tmp_path / "posts.jsonl", "--out", tmp_path / "taken") == 2


def test_missing_input_is_user_error(tmp_path):
    assert run("stats", "--input", tmp_path / "absent.jsonl", "--out", tmp_path / "h.csv") == 1


def test_bad_config_key(tmp_path):
    (tmp_path / "c.toml").write_text("sede = 1\n")
    assert run("stats", "--config", tmp_path / "c.toml") == 1
