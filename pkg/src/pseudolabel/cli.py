"""Command-line front end: annotate, consensus, split, ensemble, evaluate, train-toy, stats.

Exit codes: 0 success, 1 user error (bad config, missing or malformed
input), 2 runtime error (e.g. an unreachable LLM endpoint).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
import tempfile
from collections import Counter
from pathlib import Path

from . import __version__
from .annotator import AnnotationPolicy, Annotator, annotate_posts
from .config import ConfigError, PipelineConfig
from .consensus import assemble_training_set, read_annotations, unanimous_filter
from .datasplit import (
    Row,
    WhitespaceTokenizer,
    dumps_jsonl,
    ingest,
    stratified_folds,
    truncate_middle,
)
from .domain import LEVELS, Post, RiskLevel
from .ensemble import EnsembleConfig, member_label, weighted_vote
from .errors import AnnotationError, FormatError, PipelineError, UserError
from .gateway import DecodingConfig, LLMClient
from .metrics import agreement_matrix, evaluate
from .prompts import CLASSIFICATION, MOVEON, TemplatePair, default_template, load_template
from .softf1 import CROSS_ENTROPY, SOFT_F1, ToyConfig, load_features, make_blobs, train_toy

log = logging.getLogger("pseudolabel")

EXIT_OK, EXIT_USER, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config(args) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.load(args.config)
    else:
        cfg = PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "parallelism", None) is not None:
        if args.parallelism < 1:
            raise ConfigError("--parallelism must be >= 1")
        cfg.parallelism = args.parallelism
    return cfg


def _counts_line(labels) -> str:
    counts = Counter(labels)
    return ", ".join(f"{lv.value}={counts.get(lv, 0)}" for lv in LEVELS)


# --- annotate --------------------------------------------------------------


def _build_annotator(entry, client) -> Annotator:
    if entry.classification_template:
        classification = load_template(entry.classification_template, CLASSIFICATION)
    else:
        classification = default_template(CLASSIFICATION)
    if entry.exemplars is not None:
        classification = classification.with_exemplars(entry.exemplars)
    if entry.moveon_template:
        moveon = load_template(entry.moveon_template, MOVEON)
    else:
        moveon = default_template(MOVEON)
    return Annotator(
        annotator_id=entry.id,
        client=client,
        config=DecodingConfig(
            model_name=entry.model,
            endpoint_url=entry.endpoint_url,
            temperature=entry.temperature,
            max_new_tokens=entry.max_new_tokens,
        ),
        templates=TemplatePair(classification, moveon),
        policy=AnnotationPolicy(entry.reprompts, entry.moveon_to_indicator),
    )


def cmd_annotate(args) -> int:
    cfg = _load_config(args)
    if not cfg.annotators:
        raise ConfigError("no [[annotators]] configured")
    dataset = ingest(cfg.path("unlabeled"))
    posts = [r.post for r in dataset]
    out = Path(args.out) if args.out else cfg.path("annotations")

    clients, annotators = [], []
    try:
        for entry in cfg.annotators:
            client = LLMClient(
                retries=entry.retries, backoff=entry.backoff,
                timeout=entry.timeout, api_key_env=entry.api_key_env,
            )
            clients.append(client)
            annotators.append(_build_annotator(entry, client))

        rows = []
        for annotator in annotators:
            results = annotate_posts(posts, annotator, cfg.parallelism)
            labels, failures = [], 0
            for post, result in zip(posts, results):
                if isinstance(result, AnnotationError):
                    failures += 1
                    rows.append({
                        "post_id": post.post_id, "annotator_id": annotator.annotator_id,
                        "label": None, "triple": None, "refined": False,
                        "error": str(result.cause),
                    })
                else:
                    labels.append(result.label)
                    rows.append(result.to_dict())
            print(
                f"{annotator.annotator_id}: {_counts_line(labels)}; "
                f"refined={sum(1 for r in results if getattr(r, 'refined', False))}; "
                f"parse_failures={failures}"
            )
    finally:
        for client in clients:
            client.close()
    _write_atomic(out, dumps_jsonl(rows))
    print(f"wrote {len(rows)} annotation rows to {out}")
    return EXIT_OK


# --- consensus -------------------------------------------------------------


def cmd_consensus(args) -> int:
    cfg = _load_config(args)
    files = [Path(p) for p in args.annotations] if args.annotations else [cfg.path("annotations")]
    files += cfg.extra_annotations
    annotations = []
    for f in files:
        try:
            anns, _failed = read_annotations(f)
        except FileNotFoundError:
            raise FormatError("annotations file not found", path=f) from None
        annotations += anns

    store = ingest(cfg.path("unlabeled"))
    universe = [r.post.post_id for r in store]

    required = cfg.required_annotators or sorted({a.annotator_id for a in annotations})
    kept, report = unanimous_filter(annotations, required, universe)
    gold = [r.post for r in ingest(cfg.path("gold")) if r.label is not None]
    train = assemble_training_set(gold, kept, store)

    out = Path(args.out) if args.out else cfg.path("train_set")
    report_data = report.to_dict()
    report_data["required_annotators"] = list(required)
    report_data["training_set"] = {
        "size": len(train),
        "gold": len(gold),
        "pseudo": len(kept),
        "class_distribution": train.class_distribution(),
    }
    _write_atomic(cfg.path("consensus_report"), json.dumps(report_data, indent=2) + "\n")
    _write_atomic(out, dumps_jsonl(r.to_dict() for r in train))
    print(
        f"agreed {report.agreed_posts}/{report.total_posts} posts "
        f"(coverage {report.coverage:.3f}); training set {len(train)} rows -> {out}"
    )
    print(f"class counts: {_counts_line(r.label for r in train)}")
    return EXIT_OK


# --- split -----------------------------------------------------------------


def cmd_split(args) -> int:
    cfg = _load_config(args)
    source = Path(args.input) if args.input else cfg.path("train_set")
    dataset = ingest(source)
    k = args.k or cfg.k
    folds = stratified_folds(dataset, k, cfg.seed)
    out = Path(args.out) if args.out else cfg.path("folds")
    _write_atomic(out, folds.to_json())

    budget = args.budget or cfg.token_budget
    tokenizer = WhitespaceTokenizer()
    truncated_rows, cut = [], 0
    for row in dataset:
        text = truncate_middle(row.post.text, tokenizer, budget)
        cut += text != row.post.text
        truncated_rows.append(Row(Post(row.post.post_id, text, row.label), row.provenance))
    _write_atomic(cfg.path("split_dataset"), dumps_jsonl(r.to_dict() for r in truncated_rows))

    posts = dataset.post_map()
    for i, members in enumerate(folds.folds()):
        labels = [posts[pid].gold_label for pid in members]
        print(f"fold {i}: {len(members)} gold posts ({_counts_line(labels)})")
    print(f"truncated {cut} posts to {budget} tokens; folds -> {out}")
    return EXIT_OK


# --- ensemble --------------------------------------------------------------


def _ensemble_config(cfg: PipelineConfig, args) -> EnsembleConfig:
    if args.weights:
        return EnsembleConfig.load(args.weights)
    if cfg.ensemble_weights:
        return EnsembleConfig.load(cfg.ensemble_weights)
    if cfg.ensemble_members:
        return EnsembleConfig(tuple(cfg.ensemble_members.items()))
    return EnsembleConfig.default()


def _read_member_predictions(path: Path) -> dict[str, dict[str, RiskLevel]]:
    """post_id -> member -> label, from rows carrying ``label`` or ``probs``."""
    table: dict[str, dict[str, RiskLevel]] = {}
    try:
        handle = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise FormatError("predictions file not found", path=path) from None
    with handle:
        for n, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                member = row.get("member") or row["annotator_id"]
                value = row["label"] if row.get("label") is not None else row["probs"]
                label = member_label(value)
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad prediction row: {exc}", n, path) from None
            per_post = table.setdefault(str(row["post_id"]), {})
            if member in per_post:
                raise FormatError(f"duplicate prediction by {member}", n, path)
            per_post[member] = label
    return table


def cmd_ensemble(args) -> int:
    cfg = _load_config(args)
    config = _ensemble_config(cfg, args)
    print("weights: " + json.dumps(config.weights, sort_keys=False))
    source = Path(args.predictions) if args.predictions else cfg.path("predictions")
    table = _read_member_predictions(source)
    rows = []
    for pid, preds in table.items():
        rows.append({"post_id": pid, "label": weighted_vote(preds, config).value})
    out = Path(args.out) if args.out else cfg.path("ensemble_predictions")
    _write_atomic(out, dumps_jsonl(rows))
    print(f"{len(rows)} ensemble predictions ({_counts_line(RiskLevel(r['label']) for r in rows)}) -> {out}")
    return EXIT_OK


# --- evaluate --------------------------------------------------------------


def _read_predictions(path: Path) -> dict[str, dict[str, RiskLevel]]:
    """member -> post_id -> label; rows without a member go under 'predictions'."""
    by_member: dict[str, dict[str, RiskLevel]] = {}
    try:
        handle = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise FormatError("predictions file not found", path=path) from None
    with handle:
        for n, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                member = row.get("member") or row.get("annotator_id") or "predictions"
                value = row["label"] if row.get("label") is not None else row["probs"]
                by_member.setdefault(member, {})[str(row["post_id"])] = member_label(value)
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad prediction row: {exc}", n, path) from None
    return by_member


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    truth_path = Path(args.truth) if args.truth else cfg.path("gold")
    truths = {r.post.post_id: r.label for r in ingest(truth_path) if r.label is not None}
    pred_path = Path(args.preds) if args.preds else cfg.path("ensemble_predictions")
    by_member = _read_predictions(pred_path)

    result, aligned = {}, {}
    for member, preds in by_member.items():
        missing = sorted(set(truths) - set(preds))
        if missing:
            raise FormatError(f"{member} has no prediction for {len(missing)} posts, e.g. {missing[0]}", path=pred_path)
        ids = list(truths)
        aligned[member] = [preds[i] for i in ids]
        report = evaluate(aligned[member], [truths[i] for i in ids])
        result[member] = report.to_dict()
        print(f"== {member} ==")
        print(report.format_report(), end="")
    if len(aligned) > 1:
        agreement = agreement_matrix(aligned)
        result["agreement_match_rate"] = {
            "models": list(agreement.names),
            "matrix": agreement.values.tolist(),
        }
        print("pairwise agreement (raw match rate):")
        print(agreement.to_csv(), end="")
    out = Path(args.out) if args.out else cfg.path("report")
    payload = result[next(iter(result))] if len(by_member) == 1 else result
    _write_atomic(out, json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


# --- train-toy -------------------------------------------------------------


def cmd_train_toy(args) -> int:
    cfg = _load_config(args)
    seed = cfg.seed
    if args.features:
        X, labels = load_features(args.features)
    else:
        X, labels = make_blobs(args.n, args.d, seed=seed, spread=args.spread)
    config = ToyConfig(loss=args.loss, lr=args.lr, epochs=args.epochs, seed=seed)
    history: list = []
    model, report = train_toy(X, labels, config, history=history)
    out = Path(args.out) if args.out else cfg.base_dir / "out" / "train_toy"
    payload = {
        "config": {"loss": config.loss, "lr": config.lr, "epochs": config.epochs,
                   "seed": config.seed, "weight_decay": config.weight_decay},
        "train_metrics": report.to_dict(),
        "W": model.W.tolist(),
        "b": model.b.tolist(),
    }
    _write_atomic(out / "metrics.json", json.dumps(payload, indent=2) + "\n")
    curve = io.StringIO()
    writer = csv.writer(curve, lineterminator="\n")
    writer.writerow(["epoch", "loss"])
    for epoch, loss in history:
        writer.writerow([epoch, repr(float(loss))])
    _write_atomic(out / "curve.csv", curve.getvalue())
    print(report.format_report(), end="")
    print(f"accuracy {report.accuracy:.4f}, macro F1 {report.macro_f1:.4f} -> {out}")
    return EXIT_OK


# --- stats -----------------------------------------------------------------

_WORD = re.compile(r"\w+(?:['’]\w+)*")


def length_histogram(texts, bin_width: int, tokenizer=None) -> list[dict]:
    """Rows ``bin_start, bin_end, words, tokens`` covering the longest text."""
    tokenizer = tokenizer or WhitespaceTokenizer()
    words = [len(_WORD.findall(t)) for t in texts]
    tokens = [len(tokenizer.encode(t)) for t in texts]
    top = max(words + tokens, default=0)
    nbins = top // bin_width + 1
    w_hist, t_hist = [0] * nbins, [0] * nbins
    for w in words:
        w_hist[w // bin_width] += 1
    for t in tokens:
        t_hist[t // bin_width] += 1
    return [
        {"bin_start": i * bin_width, "bin_end": (i + 1) * bin_width, "words": w_hist[i], "tokens": t_hist[i]}
        for i in range(nbins)
    ]


def cmd_stats(args) -> int:
    cfg = _load_config(args)
    source = Path(args.input) if args.input else cfg.path("unlabeled")
    dataset = ingest(source)
    if args.bin_width < 1:
        raise ConfigError("--bin-width must be >= 1")
    texts = [r.post.text for r in dataset]
    rows = length_histogram(texts, args.bin_width)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["bin_start", "bin_end", "words", "tokens"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    out = Path(args.out) if args.out else cfg.path("stats")
    _write_atomic(out, buf.getvalue())
    budget = args.budget or cfg.token_budget
    tokenizer = WhitespaceTokenizer()
    over = sum(1 for t in texts if len(tokenizer.encode(t)) > budget)
    print(f"{len(texts)} posts; {over} exceed {budget} tokens; histogram -> {out}")
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pseudolabel", description="LLM pseudo-labelling pipeline for suicide-risk posts.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=False, parallelism=False):
        p.add_argument("--config", help="pipeline TOML config")
        p.add_argument("--out", help="output path (overrides config)")
        if seed:
            p.add_argument("--seed", type=int)
        if parallelism:
            p.add_argument("--parallelism", type=int)
        return p

    p = common(sub.add_parser("annotate", help="label unlabeled posts with the LLM annotators"), parallelism=True)
    p.set_defaults(func=cmd_annotate)

    p = common(sub.add_parser("consensus", help="keep unanimous labels and build the training set"))
    p.add_argument("--annotations", nargs="+", help="annotation JSONL files")
    p.set_defaults(func=cmd_consensus)

    p = common(sub.add_parser("split", help="stratified k-fold assignment and middle truncation"), seed=True)
    p.add_argument("--input", help="training set (JSONL or CSV)")
    p.add_argument("--k", type=int)
    p.add_argument("--budget", type=int, help="token budget per post")
    p.set_defaults(func=cmd_split)

    p = common(sub.add_parser("ensemble", help="weighted majority vote over member predictions"))
    p.add_argument("--predictions", help="member predictions JSONL")
    p.add_argument("--weights", help="ensemble weights JSON")
    p.set_defaults(func=cmd_ensemble)

    p = common(sub.add_parser("evaluate", help="metrics report for predictions against gold labels"))
    p.add_argument("--preds", help="predictions JSONL")
    p.add_argument("--truth", help="labelled dataset (JSONL or CSV)")
    p.set_defaults(func=cmd_evaluate)

    p = common(sub.add_parser("train-toy", help="train the linear soft-F1 / cross-entropy classifier"), seed=True)
    p.add_argument("--features", help="features CSV/JSONL (default: synthetic blobs)")
    p.add_argument("--loss", choices=[SOFT_F1, CROSS_ENTROPY], default=SOFT_F1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--n", type=int, default=200, help="synthetic sample count")
    p.add_argument("--d", type=int, default=8, help="synthetic feature dimension")
    p.add_argument("--spread", type=float, default=0.5, help="synthetic blob spread")
    p.set_defaults(func=cmd_train_toy)

    p = common(sub.add_parser("stats", help="word/token length histograms"))
    p.add_argument("--input", help="dataset (JSONL or CSV)")
    p.add_argument("--bin-width", type=int, default=100)
    p.add_argument("--budget", type=int)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (PipelineError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
