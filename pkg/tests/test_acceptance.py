"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

import statistics
import time
from dataclasses import replace

import numpy as np
import pytest

from oracle import oracle_feasible
from textcloak import planted
from textcloak.classifier import (
    BoeMlp,
    TextCnn,
    TrainConfig,
    adversarial_retrain,
    encode,
    train,
)
from textcloak.cli import cli
from textcloak.corpus import TokenizedDocument
from textcloak.embeddings import save_embeddings
from textcloak.harness import attack_docs, doc_seed, run_attack_batch, success_cdf
from textcloak.optimizer import (
    AttackConfig,
    adv4sg,
    genetic_random,
    greedy_attack,
    run_attack,
    word_importance,
)

from test_classifier import fd_input_gradients, random_doc, random_table


def report_line(n, ok, detail):
    print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {n}: {detail}"


@pytest.fixture(scope="module")
def attack_cfg():
    return AttackConfig(population_size=40, max_iterations=10, epsilon_rate=0.25, seed=0)


@pytest.fixture(scope="module")
def bench_cfg():
    return AttackConfig(population_size=6, max_iterations=12, epsilon_rate=0.25, seed=0)


def test_criterion_1_gradient_oracle():
    started = time.perf_counter()
    table = random_table(dim=4, n=24, seed=13)
    rng = np.random.default_rng(29)
    worst = 0.0
    checked = 0
    for arch in ("boe", "cnn"):
        for trial in range(20):
            if arch == "boe":
                model = BoeMlp(table, 3, hidden=6, seed=100 + trial)
            else:
                model = TextCnn(table, 3, filters=5, seed=100 + trial)
            doc = random_doc(table, int(rng.integers(1, 10)), rng)
            y = int(rng.integers(3))
            analytic = model.input_gradients(doc, y)
            fd = fd_input_gradients(model, encode(doc, table), y, step=1e-4)
            rel = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-10)
            worst = max(worst, rel)
            checked += 1
    elapsed = time.perf_counter() - started
    ok = worst < 1e-4 and elapsed < 30
    report_line(
        1, ok, f"{checked} triples, worst relative error {worst:.2e}, {elapsed:.1f}s (< 30s)"
    )


def test_criterion_2_probability_invariants(sharp_setup, sharp_model):
    import random as pyrandom

    table = random_table(dim=5, n=40, seed=3)
    rng = np.random.default_rng(17)
    models = [
        BoeMlp(table, 3, hidden=8, seed=0),
        BoeMlp(table, 5, hidden=8, seed=1),
        TextCnn(table, 3, filters=6, seed=2),
        TextCnn(table, 4, filters=6, seed=3),
    ]
    worst_pred = 0.0
    for i in range(1000):
        model = models[i % len(models)]
        doc = random_doc(table, int(rng.integers(1, 20)), rng)
        worst_pred = max(worst_pred, abs(float(model.scores(doc).sum()) - 1.0))

    vrng = pyrandom.Random(5)
    worst_sel = 0.0
    docs = sharp_setup.docs
    for i in range(1000):
        doc = docs[i % len(docs)]
        profile = word_importance(
            sharp_model, doc, doc.label_id, sharp_setup.table, rng=vrng
        )
        worst_sel = max(worst_sel, abs(float(profile.selection_probs.sum()) - 1.0))
    ok = worst_pred < 1e-9 and worst_sel < 1e-9
    report_line(
        2,
        ok,
        f"1000 prediction sums (worst dev {worst_pred:.1e}) and "
        f"1000 selection-prob sums (worst dev {worst_sel:.1e})",
    )


def test_criterion_3_toy_training(toy_setup):
    started = time.perf_counter()
    model = BoeMlp(toy_setup.clf_table, len(toy_setup.label_names), hidden=64)
    report = train(model, toy_setup.split, TrainConfig(epochs=50, lr=0.5, batch_size=32, seed=5))
    elapsed = time.perf_counter() - started
    first = next((i + 1 for i, acc in enumerate(report.test_acc) if acc >= 0.95), None)
    ok = first is not None and elapsed < 60
    report_line(
        3,
        ok,
        f"held-out accuracy {report.final_test_acc:.3f}, first >=0.95 at epoch {first}, "
        f"{elapsed:.1f}s (< 60s)",
    )


def test_criterion_4_attack_effectiveness(toy_setup, toy_model, attack_cfg):
    started = time.perf_counter()
    report = run_attack_batch(
        toy_model, toy_setup.split.test, attack_cfg, toy_setup.lm, toy_setup.table,
        sample_fraction=1.0,
    )
    elapsed = time.perf_counter() - started
    ok = (
        report.clean_accuracy >= 0.95
        and report.success_rate >= 0.90
        and report.post_attack_accuracy <= 0.10
        and elapsed < 300
    )
    report_line(
        4,
        ok,
        f"N=40 I=10 eps=0.25: success {report.success_rate:.3f} (>= 0.90), accuracy "
        f"{report.clean_accuracy:.3f} -> {report.post_attack_accuracy:.3f} (<= 0.10), "
        f"{elapsed:.0f}s (< 300s)",
    )


def test_criterion_5_oracle_equivalence():
    cfg = AttackConfig(population_size=8, max_iterations=6, epsilon_rate=0.5)
    tiny = planted.make_tiny_instances(n_instances=100, seed=23)
    false_successes = 0
    feasible = succeeded = 0
    for doc in tiny.docs:
        eps = cfg.epsilon_for(len(doc))
        fits = oracle_feasible(doc, tiny.model, tiny.table, eps)
        feasible += fits
        for seed in range(5):
            out = adv4sg(
                doc, doc.label_id, tiny.model, tiny.lm, replace(cfg, seed=seed), tiny.table
            )
            if out.success and not fits:
                false_successes += 1
            if fits and seed == 0:
                succeeded += out.success
    recall = succeeded / feasible
    ok = false_successes == 0 and recall >= 0.8 and feasible > 0
    report_line(
        5,
        ok,
        f"100 instances x 5 seeds: 0 expected false successes (got {false_successes}); "
        f"success on {succeeded}/{feasible} oracle-feasible instances ({recall:.0%} >= 80%)",
    )


def test_criterion_6_constraint_suite(toy_setup, toy_model, sharp_setup, sharp_model, bench_cfg):
    # The planted vocabulary contains no multi-character slang targets, so
    # every visual edit must preserve the first and last characters.
    eta = 0.5
    checked = 0
    violations = []

    def verify(original, outcome):
        nonlocal checked
        if not outcome.success or outcome.word_diff == 0:
            return
        adv = outcome.adversarial
        checked += 1
        if len(adv) != len(original):
            violations.append("token count changed")
        if outcome.word_diff >= outcome.epsilon:
            violations.append("edit budget exceeded")
        for pos in outcome.positions:
            old, new = original.tokens[pos], adv.tokens[pos]
            if adv.perturbed_mask[pos]:
                if not (new[0] == old[0] and new[-1] == old[-1]):
                    violations.append(f"visual edit broke edge chars: {old} -> {new}")
            else:
                if new not in sharp_setup.table and new not in toy_setup.table:
                    violations.append(f"semantic surface not in vocabulary: {new}")
                    continue
                table = toy_setup.table if new in toy_setup.table else sharp_setup.table
                if table.distance(old, new) > eta + 1e-12:
                    violations.append(f"semantic distance > eta: {old} -> {new}")

    correct = toy_setup.split.test[:60]
    for doc, outcome in zip(correct, attack_docs(toy_model, correct, bench_cfg, toy_setup.lm, toy_setup.table)):
        verify(doc, outcome)
    for strategy_fn in (greedy_attack, genetic_random):
        for doc in sharp_setup.docs[:40]:
            out = strategy_fn(
                doc, doc.label_id, sharp_model, sharp_setup.lm,
                replace(bench_cfg, seed=doc_seed(1, doc.origin_id)), sharp_setup.table,
            )
            verify(doc, out)
    ok = checked > 50 and not violations
    report_line(
        6,
        ok,
        f"{checked} adversarial texts checked, {len(violations)} violations"
        + (f" (first: {violations[0]})" if violations else ""),
    )


def test_criterion_7_efficiency_analogue(sharp_setup, sharp_model, bench_cfg):
    started = time.perf_counter()
    docs = sharp_setup.docs[:100]
    gens = {"adv4sg": [], "genetic_random": []}
    fails = {"adv4sg": 0, "genetic_random": 0}
    for seed in range(5):
        for doc in docs:
            cfg = replace(bench_cfg, seed=doc_seed(seed, doc.origin_id))
            for name, fn in (("adv4sg", adv4sg), ("genetic_random", genetic_random)):
                out = fn(doc, doc.label_id, sharp_model, sharp_setup.lm, cfg, sharp_setup.table)
                if out.success and out.word_diff > 0:
                    gens[name].append(out.generations)
                else:
                    fails[name] += 1
    mean_adv = statistics.fmean(gens["adv4sg"])
    mean_rnd = statistics.fmean(gens["genetic_random"])
    reduction = (mean_rnd - mean_adv) / mean_rnd
    elapsed = time.perf_counter() - started
    ok = mean_adv < mean_rnd and reduction >= 0.20 and elapsed < 600
    report_line(
        7,
        ok,
        f"paired 100x5: mean generations {mean_adv:.2f} (guided, {fails['adv4sg']} fails) vs "
        f"{mean_rnd:.2f} (random, {fails['genetic_random']} fails); reduction "
        f"{reduction:.1%} (>= 20%), {elapsed:.0f}s (< 600s)",
    )


def test_criterion_8_one_word_cdf(sharp_setup, sharp_model, bench_cfg):
    report = run_attack_batch(
        sharp_model, sharp_setup.docs[:150], bench_cfg, sharp_setup.lm, sharp_setup.table,
        sample_fraction=1.0,
    )
    cdf1 = dict(success_cdf(report, [1]))[1]
    ok = cdf1 >= 0.5
    report_line(8, ok, f"one-word success fraction {cdf1:.2f} (>= 0.50) on the keyword benchmark")


def test_criterion_9_adversarial_training(toy_setup, toy_model, attack_cfg):
    traincfg = TrainConfig(epochs=50, lr=0.5, batch_size=32, seed=5)
    before = run_attack_batch(
        toy_model, toy_setup.split.test, attack_cfg, toy_setup.lm, toy_setup.table,
        sample_fraction=1.0,
    )

    def attack_one(doc):
        cfg = replace(attack_cfg, seed=doc_seed(attack_cfg.seed, doc.origin_id))
        return run_attack(doc, doc.label_id, toy_model, toy_setup.lm, cfg, toy_setup.table)

    retrained, adv_report = adversarial_retrain(
        toy_model, toy_setup.split, attack_one, traincfg, fraction=0.5
    )
    after = run_attack_batch(
        retrained, toy_setup.split.test, attack_cfg, toy_setup.lm, toy_setup.table,
        sample_fraction=1.0,
    )
    drop = before.success_rate - after.success_rate
    ok = drop < 0.15
    report_line(
        9,
        ok,
        f"success rate {before.success_rate:.3f} -> {after.success_rate:.3f} after retraining on "
        f"{adv_report.n_successful} adversarial docs; drop {drop * 100:.1f}pp (< 15pp)",
    )


def test_criterion_10_determinism(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_cli")
    planted.write_corpus_tsv(
        planted.make_records(n_docs=240, doc_len=16, seed=3), str(root / "corpus.tsv")
    )
    save_embeddings(planted.make_table(), str(root / "cand.txt"))
    save_embeddings(planted.make_table(3.0, 1.5), str(root / "clf.txt"))
    assert (
        cli(
            [
                "train",
                "--data", str(root / "corpus.tsv"),
                "--clf-embeddings", str(root / "clf.txt"),
                "--cand-embeddings", str(root / "cand.txt"),
                "--epochs", "60", "--batch-size", "16", "--seed", "0",
                "--out", str(root / "model.json"),
            ]
        )
        == 0
    )
    for run in (1, 2):
        code = cli(
            [
                "attack",
                "--model", str(root / "model.json"),
                "--data", str(root / "corpus.tsv"),
                "--population-size", "8", "--max-iterations", "8", "--seed", "3",
                "--out", str(root / f"report{run}.json"),
                "--csv", str(root / f"rows{run}.csv"),
            ]
        )
        assert code == 0
    b1 = (root / "rows1.csv").read_bytes()
    b2 = (root / "rows2.csv").read_bytes()
    ok = b1 == b2 and len(b1) > 0
    report_line(10, ok, f"two identical attack runs: per-instance CSVs byte-identical ({len(b1)} bytes)")
