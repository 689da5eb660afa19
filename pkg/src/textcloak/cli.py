"""Command-line surface: train, attack, evaluate, transfer, advtrain, bench.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import classifier, harness, ngram
from .candidates import load_leet_map
from .corpus import RawRecord, TokenizedDocument, build_vocab, load_corpus, split, tokenize
from .embeddings import load_embeddings
from .harness import doc_seed
from .optimizer import STRATEGIES, AttackConfig, run_attack


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _data_args(parser):
    parser.add_argument("--data", required=True, help="corpus file (label<TAB>text or csv)")
    parser.add_argument("--format", choices=("tsv", "csv"), default="tsv")
    parser.add_argument("--max-len", type=int, default=250)


def _train_args(parser):
    parser.add_argument("--arch", choices=("boe", "cnn"), default="boe")
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--lr", type=float, default=0.5)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--l2", type=float, default=1e-4)
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--filters", type=int, default=32)
    parser.add_argument("--min-count", type=int, default=1)
    parser.add_argument("--train-ratio", type=float, default=0.8)


def _attack_args(parser):
    parser.add_argument("--config", help="JSON file with attack config fields")
    parser.add_argument("--strategy", choices=STRATEGIES)
    parser.add_argument("--population-size", type=int)
    parser.add_argument("--max-iterations", type=int)
    parser.add_argument("--epsilon-rate", type=float)
    parser.add_argument("--eta", type=float)
    parser.add_argument("--pool-size", type=int)
    parser.add_argument("--sample-fraction", type=float, default=0.5)
    parser.add_argument("--all", action="store_true", help="attack every correctly classified doc")
    parser.add_argument("--leet-map", help="JSON file overriding the number-substitution map")
    parser.add_argument("--cand-embeddings", help="embedding file for candidate search")
    parser.add_argument("--lm", help="bigram model sidecar (default: <model>.lm.json)")


def build_parser() -> _Parser:
    parser = _Parser(prog="textcloak", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[], help="train a surrogate attribute classifier")
    _data_args(p)
    _train_args(p)
    p.add_argument("--clf-embeddings", required=True, help="embedding file for the classifier")
    p.add_argument("--cand-embeddings", help="embedding file recorded for candidate search")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--lm-out", help="bigram sidecar path (default: <out>.lm.json)")

    p = sub.add_parser("attack", help="attack a test set and write report + per-instance csv")
    _data_args(p)
    _attack_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--clf-embeddings", help="override the embedding file recorded in the model")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="per-instance CSV path (default: <out>.csv)")

    p = sub.add_parser("evaluate", help="clean accuracy of a model on a dataset")
    _data_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--clf-embeddings")
    p.add_argument("--out", help="optional JSON output path")

    p = sub.add_parser("transfer", help="cross-model transferability matrix")
    _data_args(p)
    _attack_args(p)
    p.add_argument("--models", nargs="+", required=True, help="two or more model checkpoints")
    p.add_argument("--clf-embeddings")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("advtrain", help="adversarial retraining and before/after attack rates")
    _data_args(p)
    _train_args(p)
    _attack_args(p)
    p.add_argument("--model", required=True, help="trained checkpoint to harden")
    p.add_argument("--clf-embeddings")
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="retrained checkpoint path")
    p.add_argument("--report", help="JSON report path (default: <out>.report.json)")

    p = sub.add_parser("bench", help="run several strategies over the same docs")
    _data_args(p)
    _attack_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--clf-embeddings")
    p.add_argument("--strategies", default="adv4sg,genetic_random")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    return parser


def _read_records(args) -> list[RawRecord]:
    records, skipped = load_corpus(args.data, args.format)
    if skipped:
        print(f"skipped {skipped} malformed rows in {args.data}", file=sys.stderr)
    if not records:
        raise ValueError(f"no usable rows in {args.data}")
    return records


def _docs_with_labels(records, label_names, max_len):
    label_to_id = {name: i for i, name in enumerate(label_names)}
    docs = []
    for i, rec in enumerate(records):
        if rec.label not in label_to_id:
            raise ValueError(f"label {rec.label!r} not known to the model ({label_names})")
        tokens = tokenize(rec.text, max_len)
        if tokens:
            docs.append(TokenizedDocument(tokens, label_to_id[rec.label], origin_id=f"r{i:06d}"))
    return docs


def _checkpoint_meta(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _load_model_bundle(model_path, args):
    """Model + tables + lm, resolving paths recorded in the checkpoint."""
    meta = _checkpoint_meta(model_path)
    clf_path = getattr(args, "clf_embeddings", None) or meta.get("embeddings_path")
    if not clf_path:
        raise ValueError("no embedding file: pass --clf-embeddings or retrain the model")
    table = load_embeddings(clf_path)
    model, meta = classifier.load_model(model_path, table)
    cand_path = getattr(args, "cand_embeddings", None) or meta.get("cand_embeddings_path")
    cand_table = load_embeddings(cand_path) if cand_path and cand_path != clf_path else table
    return model, meta, table, cand_table


def _load_lm(args, model_path):
    lm_path = getattr(args, "lm", None) or f"{model_path}.lm.json"
    try:
        return ngram.load(lm_path)
    except FileNotFoundError:
        raise ValueError(
            f"bigram sidecar {lm_path} not found; pass --lm or retrain to regenerate it"
        ) from None


def _attack_config(args) -> AttackConfig:
    data = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    cfg = AttackConfig.from_dict(data)
    overrides = (
        "population_size",
        "max_iterations",
        "epsilon_rate",
        "eta",
        "pool_size",
        "seed",
        "strategy",
    )
    for name in overrides:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    return cfg


def _sample_fraction(args) -> float:
    return 1.0 if args.all else args.sample_fraction


def _leet(args):
    return load_leet_map(args.leet_map) if getattr(args, "leet_map", None) else None


def _train_config(args) -> classifier.TrainConfig:
    return classifier.TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        seed=args.seed if args.seed is not None else 0,
        l2=args.l2,
    )


def _build_fresh_model(args, table, n_classes):
    if args.arch == "boe":
        return classifier.BoeMlp(table, n_classes, hidden=args.hidden)
    return classifier.TextCnn(table, n_classes, filters=args.filters)


def _cmd_train(args) -> int:
    records = _read_records(args)
    label_names = sorted({r.label for r in records})
    docs = _docs_with_labels(records, label_names, args.max_len)
    vocab = build_vocab(docs, args.min_count, label_names)
    data_split = split(docs, args.train_ratio, args.seed)
    table = load_embeddings(args.clf_embeddings)
    model = _build_fresh_model(args, table, len(label_names))
    report = classifier.train(model, data_split, _train_config(args))
    classifier.save_model(
        model, args.out, vocab, args.clf_embeddings, args.cand_embeddings or args.clf_embeddings
    )
    lm = ngram.fit(data_split.train)
    ngram.save(lm, args.lm_out or f"{args.out}.lm.json")
    print(
        f"trained {args.arch} on {len(data_split.train)} docs: "
        f"train_acc={report.train_acc[-1]:.3f} test_acc={report.final_test_acc:.3f}"
    )
    return 0


def _cmd_attack(args) -> int:
    model, meta, _, cand_table = _load_model_bundle(args.model, args)
    lm = _load_lm(args, args.model)
    records = _read_records(args)
    docs = _docs_with_labels(records, meta["label_names"], args.max_len)
    cfg = _attack_config(args)
    report = harness.run_attack_batch(
        model, docs, cfg, lm, cand_table, _sample_fraction(args), _leet(args)
    )
    report.write_json(args.out)
    report.write_csv(args.csv or f"{args.out}.csv")
    print(
        f"attacked {report.n_attacked}/{report.n_correct} correct docs: "
        f"success_rate={report.success_rate:.3f} "
        f"accuracy {report.clean_accuracy:.3f} -> {report.post_attack_accuracy:.3f}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    model, meta, _, _ = _load_model_bundle(args.model, args)
    records = _read_records(args)
    docs = _docs_with_labels(records, meta["label_names"], args.max_len)
    acc = classifier.accuracy(model, docs)
    payload = {"n_docs": len(docs), "accuracy": acc, "labels": meta["label_names"]}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
    print(f"accuracy={acc:.4f} on {len(docs)} docs")
    return 0


def _cmd_transfer(args) -> int:
    if len(args.models) < 2:
        raise UsageError("transfer needs at least two --models")
    first_model, first_meta, table, cand_table = _load_model_bundle(args.models[0], args)
    named = [(args.models[0], first_model)]
    for path in args.models[1:]:
        model, meta = classifier.load_model(path, table, expected_vocab_hash=first_meta["vocab_hash"])
        named.append((path, model))
    lm = _load_lm(args, args.models[0])
    records = _read_records(args)
    docs = _docs_with_labels(records, first_meta["label_names"], args.max_len)
    cfg = _attack_config(args)
    matrix = harness.transfer_matrix(
        named, docs, cfg, lm, cand_table, _sample_fraction(args), _leet(args)
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(matrix.to_json_dict(), fh, indent=2)
    for name, row in zip(matrix.model_names, matrix.matrix):
        print(name, " ".join(f"{v:.3f}" for v in row))
    return 0


def _cmd_advtrain(args) -> int:
    records = _read_records(args)
    label_names = sorted({r.label for r in records})
    docs = _docs_with_labels(records, label_names, args.max_len)
    vocab = build_vocab(docs, args.min_count, label_names)
    meta = _checkpoint_meta(args.model)
    clf_path = args.clf_embeddings or meta.get("embeddings_path")
    table = load_embeddings(clf_path)
    model, meta = classifier.load_model(args.model, table, expected_vocab_hash=vocab.vocab_hash())
    cand_path = args.cand_embeddings or meta.get("cand_embeddings_path")
    cand_table = load_embeddings(cand_path) if cand_path and cand_path != clf_path else table
    lm = _load_lm(args, args.model)
    data_split = split(docs, args.train_ratio, args.seed if args.seed is not None else 0)
    cfg = _attack_config(args)

    def attack_one(doc):
        return run_attack(
            doc,
            doc.label_id,
            model,
            lm,
            replace(cfg, seed=doc_seed(cfg.seed, doc.origin_id)),
            cand_table,
            _leet(args),
        )

    before = harness.run_attack_batch(
        model, data_split.test, cfg, lm, cand_table, _sample_fraction(args), _leet(args)
    )
    retrained, adv_report = classifier.adversarial_retrain(
        model, data_split, attack_one, _train_config(args), args.fraction
    )
    after = harness.run_attack_batch(
        retrained, data_split.test, cfg, lm, cand_table, _sample_fraction(args), _leet(args)
    )
    classifier.save_model(retrained, args.out, vocab, clf_path, cand_path or clf_path)
    payload = {
        "fraction": args.fraction,
        "n_sampled": adv_report.n_sampled,
        "n_successful": adv_report.n_successful,
        "augmented_size": adv_report.augmented_size,
        "before": before.to_json_dict(),
        "after": after.to_json_dict(),
        "success_rate_before": before.success_rate,
        "success_rate_after": after.success_rate,
    }
    report_path = args.report or f"{args.out}.report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    print(
        f"adversarial retraining: success rate {before.success_rate:.3f} -> {after.success_rate:.3f}"
    )
    return 0


def _cmd_bench(args) -> int:
    model, meta, _, cand_table = _load_model_bundle(args.model, args)
    lm = _load_lm(args, args.model)
    records = _read_records(args)
    docs = _docs_with_labels(records, meta["label_names"], args.max_len)
    cfg = _attack_config(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in STRATEGIES:
            raise UsageError(f"unknown strategy {s!r}; pick from {STRATEGIES}")
    reports = harness.bench_strategies(
        model, docs, strategies, cfg, lm, cand_table, _sample_fraction(args), _leet(args)
    )
    payload = {name: report.to_json_dict() for name, report in reports.items()}
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    for name, report in reports.items():
        print(
            f"{name}: success_rate={report.success_rate:.3f} "
            f"mean_generations={report.mean_generations:.2f}"
        )
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "attack": _cmd_attack,
    "evaluate": _cmd_evaluate,
    "transfer": _cmd_transfer,
    "advtrain": _cmd_advtrain,
    "bench": _cmd_bench,
}


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())
