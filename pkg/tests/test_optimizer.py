import random
from dataclasses import replace

import numpy as np
import pytest

from oracle import oracle_feasible
from textcloak.classifier import margin, predicted_label
from textcloak.corpus import TokenizedDocument
from textcloak.optimizer import (
    AttackConfig,
    adv4sg,
    choose_target,
    crossover,
    genetic_random,
    greedy_attack,
    masked_softmax,
    run_attack,
    word_diff,
    word_importance,
)
from textcloak.planted import KEYWORDS, keyword_model, make_setup, make_tiny_instances


@pytest.fixture(scope="module")
def setup():
    return make_setup(n_docs=80, doc_len=12, seed=2, kw_scale=0.02, style_scale=0.01)


@pytest.fixture(scope="module")
def model(setup):
    return keyword_model(setup.table, doc_len=12)


def small_cfg(**kw):
    base = dict(population_size=6, max_iterations=12, epsilon_rate=0.25, seed=1)
    base.update(kw)
    return AttackConfig(**base)


class ScoreStub:
    def __init__(self, scores):
        self._scores = np.asarray(scores, dtype=float)
        self.n_classes = len(self._scores)

    def scores(self, doc):
        return self._scores


class TestAttackConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            AttackConfig(population_size=0).validate()
        with pytest.raises(ValueError):
            AttackConfig(max_iterations=0).validate()
        with pytest.raises(ValueError):
            AttackConfig(epsilon_rate=0.0).validate()
        with pytest.raises(ValueError):
            AttackConfig(epsilon_rate=1.5).validate()
        with pytest.raises(ValueError):
            AttackConfig(strategy="pso").validate()

    def test_epsilon_floor(self):
        cfg = AttackConfig(epsilon_rate=0.25)
        assert cfg.epsilon_for(12) == 3
        assert cfg.epsilon_for(2) == 1  # 25% of tiny texts still allows one edit

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            AttackConfig.from_dict({"pop": 3})

    def test_roundtrip(self):
        cfg = AttackConfig(population_size=5, strategy="greedy")
        assert AttackConfig.from_dict(cfg.to_dict()) == cfg


class TestWordImportance:
    def test_zero_gradient_uniform(self, setup):
        flat = keyword_model(setup.table, doc_len=12)
        flat.params["W2"][:] = 0.0
        doc = setup.docs[0]
        profile = word_importance(flat, doc, doc.label_id, setup.table)
        assert np.allclose(profile.saliency, 0.0)
        assert np.allclose(profile.selection_probs, 1.0 / len(doc))

    def test_single_unmasked_position(self, setup, model):
        doc = setup.docs[0].copy()
        for i in range(1, len(doc)):
            doc.perturbed_mask[i] = True
        profile = word_importance(model, doc, doc.label_id, setup.table)
        assert profile.selection_probs[0] == pytest.approx(1.0)
        assert np.all(profile.selection_probs[1:] == 0.0)

    def test_keyword_gets_highest_probability(self, setup, model):
        for doc in setup.docs[:6]:
            kw = KEYWORDS["north" if doc.label_id == 0 else "south"]
            pos = doc.tokens.index(kw)
            profile = word_importance(model, doc, doc.label_id, setup.table)
            assert int(np.argmax(profile.selection_probs)) == pos
            assert profile.selection_probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_masked_probability_zero(self, setup, model):
        doc = setup.docs[0].copy()
        doc.perturbed_mask[2] = True
        profile = word_importance(model, doc, doc.label_id, setup.table)
        assert profile.selection_probs[2] == 0.0

    def test_argmax_invariant_under_positive_scaling(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            r = rng.normal(size=10)
            mask = np.zeros(10, dtype=bool)
            base = masked_softmax(r, mask)
            scaled = masked_softmax(3.7 * r, mask)
            assert int(np.argmax(base)) == int(np.argmax(scaled))


class TestChooseTarget:
    def test_binary_other_class(self):
        stub = ScoreStub([0.2, 0.8])
        assert choose_target(stub, None, 1) == 0

    def test_runner_up(self):
        stub = ScoreStub([0.5, 0.3, 0.1, 0.1])
        assert choose_target(stub, None, 0) == 1

    def test_argmax_when_not_y(self):
        stub = ScoreStub([0.1, 0.2, 0.1, 0.6])
        assert choose_target(stub, None, 2) == 3

    def test_single_class_error(self):
        with pytest.raises(ValueError):
            choose_target(ScoreStub([1.0]), None, 0)


class TestCrossover:
    def _docs(self):
        a = TokenizedDocument(["a", "b", "c"], 0, "d", [True, False, False])
        b = TokenizedDocument(["a", "x", "c"], 0, "d", [False, False, True])
        return a, b

    def test_identical_parents(self):
        a, _ = self._docs()
        child = crossover(a, a.copy(), random.Random(0))
        assert child.tokens == a.tokens and child.perturbed_mask == a.perturbed_mask

    def test_single_difference_child_is_a_parent(self):
        a, b = self._docs()
        child = crossover(a, b, random.Random(1))
        assert child.tokens in (a.tokens, b.tokens)

    def test_mask_follows_chosen_parent(self):
        a, b = self._docs()
        for seed in range(10):
            child = crossover(a, b, random.Random(seed))
            for i in range(3):
                src = a if child.tokens[i] == a.tokens[i] else b
                if a.tokens[i] != b.tokens[i]:
                    assert child.perturbed_mask[i] == src.perturbed_mask[i]

    def test_diff_union_bound(self, setup):
        base = setup.docs[0]
        rng = random.Random(3)
        p1 = base.replace(0, "queso")
        p2 = base.replace(5, "cactus")
        for seed in range(10):
            child = crossover(p1, p2, random.Random(seed))
            assert word_diff(child, base) <= word_diff(p1, base) + word_diff(p2, base)

    def test_length_mismatch_error(self):
        a = TokenizedDocument(["a"], 0, "d")
        b = TokenizedDocument(["a", "b"], 0, "d")
        with pytest.raises(ValueError):
            crossover(a, b, random.Random(0))


class TestWordDiff:
    def test_identical(self, setup):
        assert word_diff(setup.docs[0], setup.docs[0].copy()) == 0

    def test_one_substitution(self, setup):
        assert word_diff(setup.docs[0], setup.docs[0].replace(3, "queso")) == 1

    def test_symmetric(self, setup):
        a = setup.docs[0]
        b = a.replace(1, "x").replace(4, "y")
        assert word_diff(a, b) == word_diff(b, a) == 2

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            word_diff(TokenizedDocument(["a"], 0, "d"), TokenizedDocument(["a", "b"], 0, "d"))


class TestAdv4sg:
    def test_succeeds_on_planted_doc(self, setup, model):
        doc = setup.docs[0]
        outcome = adv4sg(doc, doc.label_id, model, setup.lm, small_cfg(), setup.table)
        assert outcome.success
        assert outcome.word_diff < outcome.epsilon
        assert margin(model, outcome.adversarial, doc.label_id) < 0
        assert outcome.positions

    def test_already_misclassified_zero_perturbations(self, setup, model):
        doc = setup.docs[0].copy()
        doc.label_id = 1 - doc.label_id
        outcome = adv4sg(doc, doc.label_id, model, setup.lm, small_cfg(), setup.table)
        assert outcome.success and outcome.word_diff == 0 and outcome.generations == 0
        assert outcome.adversarial.tokens == doc.tokens

    def test_minimal_budget_immediate_failure(self, setup, model):
        doc = setup.docs[0]
        cfg = small_cfg(epsilon_rate=0.01)  # epsilon floors at 1: no edit survives
        outcome = adv4sg(doc, doc.label_id, model, setup.lm, cfg, setup.table)
        assert not outcome.success
        assert outcome.adversarial is None
        assert outcome.generations == 1

    def test_deterministic(self, setup, model):
        doc = setup.docs[2]
        cfg = small_cfg(seed=77)
        a = adv4sg(doc, doc.label_id, model, setup.lm, cfg, setup.table)
        b = adv4sg(doc, doc.label_id, model, setup.lm, cfg, setup.table)
        assert a.success == b.success
        assert a.word_diff == b.word_diff
        assert a.positions == b.positions
        assert a.generations == b.generations
        assert a.fitness_trace == b.fitness_trace
        assert np.allclose(a.scores, b.scores)
        if a.adversarial is not None:
            assert a.adversarial.tokens == b.adversarial.tokens

    def test_elite_fitness_monotone(self, setup, model):
        traces = []
        for doc in setup.docs[:12]:
            out = genetic_random(doc, doc.label_id, model, setup.lm, small_cfg(seed=5), setup.table)
            traces.append(out.fitness_trace)
        multi = [t for t in traces if len(t) >= 2]
        assert multi, "expected at least one multi-generation run"
        for trace in multi:
            assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]))

    def test_outcome_json_shape(self, setup, model):
        doc = setup.docs[0]
        out = adv4sg(doc, doc.label_id, model, setup.lm, small_cfg(), setup.table)
        payload = out.to_json_dict()
        assert set(payload) == {
            "origin_id",
            "success",
            "original",
            "adversarial",
            "positions",
            "word_diff",
            "generations",
            "scores",
            "ms",
        }


class TestGreedy:
    def test_forced_single_edit_success(self, setup, model):
        # only the keyword position is selectable, so the first subroutine
        # call applies the planted flip
        doc = setup.docs[0].copy()
        kw_pos = doc.tokens.index(KEYWORDS["north" if doc.label_id == 0 else "south"])
        for i in range(len(doc)):
            doc.perturbed_mask[i] = i != kw_pos
        outcome = greedy_attack(doc, doc.label_id, model, setup.lm, small_cfg(), setup.table)
        assert outcome.success and outcome.word_diff == 1 and outcome.generations == 1

    def test_minimal_budget_failure(self, setup, model):
        doc = setup.docs[0]
        outcome = greedy_attack(
            doc, doc.label_id, model, setup.lm, small_cfg(epsilon_rate=0.01), setup.table
        )
        assert not outcome.success

    def test_budget_contract(self, setup, model):
        for doc in setup.docs[:8]:
            out = greedy_attack(doc, doc.label_id, model, setup.lm, small_cfg(seed=3), setup.table)
            if out.success:
                assert out.word_diff < out.epsilon


class TestGeneticRandom:
    def test_succeeds_on_planted_doc(self, setup, model):
        doc = setup.docs[1]
        outcome = genetic_random(doc, doc.label_id, model, setup.lm, small_cfg(), setup.table)
        assert outcome.success
        assert margin(model, outcome.adversarial, doc.label_id) < 0

    def test_dispatch_by_strategy(self, setup, model):
        doc = setup.docs[1]
        for strategy in ("adv4sg", "genetic_random", "greedy"):
            cfg = small_cfg(strategy=strategy)
            out = run_attack(doc, doc.label_id, model, setup.lm, cfg, setup.table)
            assert out.success


class TestOracleAgreement:
    def test_no_false_successes_and_recall(self):
        tiny = make_tiny_instances(n_instances=30, seed=4)
        cfg = AttackConfig(population_size=8, max_iterations=6, epsilon_rate=0.5, seed=0)
        feasible = succeeded = 0
        for doc in tiny.docs:
            assert predicted_label(tiny.model.scores(doc)) == doc.label_id
            eps = cfg.epsilon_for(len(doc))
            ok = oracle_feasible(doc, tiny.model, tiny.table, eps)
            out = adv4sg(doc, doc.label_id, tiny.model, tiny.lm, cfg, tiny.table)
            if out.success:
                assert ok, f"false success on {doc.tokens}"
            if ok:
                feasible += 1
                succeeded += out.success
        assert feasible > 0
        assert succeeded / feasible >= 0.8
