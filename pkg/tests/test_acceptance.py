"""Acceptance gate: one test per shipping criterion.

Every test wraps its body in the `criterion` context manager, which prints a
single "[acceptance N] PASS/FAIL" line straight to the real stdout (so the
verdicts survive pytest's capture and land in logs) and fails the test when
the stated runtime budget is exceeded.
"""

import math
import random
import time
from contextlib import contextmanager
from pathlib import Path

import pytest
import torch
import torch.nn.functional as F

from clarity.augment import (
    AugmentationPlan,
    BalanceMode,
    balance_plan,
    eda_augment,
    random_delete,
    random_insert,
    random_swap,
    run_plan,
    synonym_replace,
)
from clarity.cli import EXIT_DATA, EXIT_OK, main
from clarity.data import Dataset, QAPair, Source, stratified_split, write_dataset
from clarity.evaluation import (
    confusion_matrix,
    macro_f1,
    pairwise_error_share,
    per_class_prf,
)
from clarity.model import ClarityClassifier, ModelConfig
from clarity.taxonomy import ClarityLabel
from clarity.train import (
    FocalLossConfig,
    TrainingConfig,
    ValidationIntegrityError,
    focal_loss,
    linear_lr_multiplier,
    llrd_param_groups,
    lr_multiplier,
    stratified_kfold,
    train_loop,
    training_step,
)

from toydata import toy_corpus


@pytest.fixture
def criterion(capfd):
    """Context-manager factory: time the criterion body, enforce its budget,
    and print one PASS/FAIL line outside pytest's output capture."""

    @contextmanager
    def run(number: int, budget_seconds: float | None = None):
        started = time.perf_counter()
        try:
            yield
        except BaseException:
            elapsed = time.perf_counter() - started
            with capfd.disabled():
                print(f"[acceptance {number}] FAIL ({elapsed:.2f}s)", flush=True)
            raise
        elapsed = time.perf_counter() - started
        if budget_seconds is not None and elapsed >= budget_seconds:
            with capfd.disabled():
                print(
                    f"[acceptance {number}] FAIL "
                    f"(budget {budget_seconds:g}s exceeded: {elapsed:.2f}s)",
                    flush=True,
                )
            pytest.fail(f"criterion {number} ran {elapsed:.2f}s, budget {budget_seconds:g}s")
        with capfd.disabled():
            print(f"[acceptance {number}] PASS ({elapsed:.2f}s)", flush=True)

    return run


def vectors_realizing(counts):
    """Gold/predicted label vectors whose confusion matrix equals ``counts``."""
    gold, predicted = [], []
    for g, row in enumerate(counts):
        for p, count in enumerate(row):
            gold.extend([g] * count)
            predicted.extend([p] * count)
    return gold, predicted


# Published full-run confusion matrices in label-code order (rows gold,
# columns predicted; codes 0=Clear Reply, 1=Ambivalent, 2=Clear Non-Reply).
EVAL_MATRIX = [[53, 23, 3], [58, 136, 12], [0, 6, 17]]
TEST_MATRIX = [[68, 16, 1], [20, 91, 6], [0, 12, 23]]


def test_criterion_1_metric_reproduction(criterion):
    with criterion(1, budget_seconds=1.0):
        gold, predicted = vectors_realizing(EVAL_MATRIX)
        matrix = confusion_matrix(gold, predicted, num_classes=3)
        assert abs(macro_f1(matrix) - 0.6364) <= 0.0005
        metrics = per_class_prf(matrix)
        assert abs(metrics[1].f1 - 0.733) <= 0.005  # Ambivalent
        assert abs(metrics[0].f1 - 0.558) <= 0.005  # Clear Reply
        assert abs(metrics[2].f1 - 0.618) <= 0.005  # Clear Non-Reply

        gold, predicted = vectors_realizing(TEST_MATRIX)
        held_out = confusion_matrix(gold, predicted, num_classes=3)
        assert held_out.support(int(ClarityLabel.AMBIVALENT)) == 117
        assert held_out.support(int(ClarityLabel.CLEAR_REPLY)) == 85
        assert held_out.support(int(ClarityLabel.CLEAR_NON_REPLY)) == 35

        # confusions between the two big classes, as a share of all errors;
        # the evaluation-split figure is quoted against 119 reported errors
        eval_share = pairwise_error_share(matrix, 0, 1, total_errors=119)
        assert abs(eval_share * 100 - 68.0) <= 1.0
        test_share = pairwise_error_share(held_out, 0, 1)
        assert abs(test_share * 100 - 65.0) <= 1.0


def test_criterion_2_balance_arithmetic(criterion):
    with criterion(2, budget_seconds=1.0):
        total = 2040 + 1052 + 356
        distribution = {
            ClarityLabel.AMBIVALENT: (2040, 2040 / total),
            ClarityLabel.CLEAR_REPLY: (1052, 1052 / total),
            ClarityLabel.CLEAR_NON_REPLY: (356, 356 / total),
        }
        full = balance_plan(distribution, BalanceMode.FULL_BALANCE)
        assert full == {
            ClarityLabel.AMBIVALENT: 0,
            ClarityLabel.CLEAR_REPLY: 988,
            ClarityLabel.CLEAR_NON_REPLY: 1684,
        }
        assert sum(full.values()) == 2672
        assert total + sum(full.values()) == 6120

        partial = balance_plan(
            distribution,
            BalanceMode.PARTIAL,
            {ClarityLabel.CLEAR_REPLY: 1498, ClarityLabel.CLEAR_NON_REPLY: 996},
        )
        assert partial == {
            ClarityLabel.AMBIVALENT: 0,
            ClarityLabel.CLEAR_REPLY: 446,
            ClarityLabel.CLEAR_NON_REPLY: 640,
        }
        assert sum(partial.values()) == 1086
        assert 1052 + partial[ClarityLabel.CLEAR_REPLY] == 1498
        assert 356 + partial[ClarityLabel.CLEAR_NON_REPLY] == 996
        assert total + sum(partial.values()) == 4534


def test_criterion_3_focal_loss_suite(criterion):
    with criterion(3, budget_seconds=10.0):
        # gamma = 0 reduces to cross entropy
        config = FocalLossConfig(gamma=0.0)
        for seed in range(100):
            gen = torch.Generator().manual_seed(seed)
            logits = torch.randn(8, 3, generator=gen, dtype=torch.float64)
            targets = torch.randint(0, 3, (8,), generator=gen)
            ours = float(focal_loss(logits, targets, config))
            reference = float(F.cross_entropy(logits, targets))
            assert abs(ours - reference) <= 1e-9

        # closed form at p_t = 0.5, gamma = 2, unit alpha
        logits = torch.zeros(1, 2, dtype=torch.float64)
        value = float(focal_loss(logits, torch.tensor([0]), FocalLossConfig(gamma=2.0)))
        assert abs(value - 0.25 * math.log(2.0)) <= 1e-9

        # gradients through the full tiny-encoder classifier
        model = ClarityClassifier(ModelConfig(model_id="tiny", max_length=64, seed=0))
        model.double().eval()
        records = list(toy_corpus(4, 3, 2, seed=5))
        batch = model.make_batch(records)
        features = batch.features.double()
        weights = batch.sample_weights.double()
        loss_config = FocalLossConfig(gamma=2.0, class_weights=(1.0, 1.3, 2.2))

        def loss_value():
            logits = model(batch.input_ids, batch.attention_mask, features)
            return focal_loss(logits, batch.labels, loss_config, sample_weights=weights)

        model.zero_grad()
        loss_value().backward()

        rng = random.Random(0)
        h = 1e-5
        checked = 0
        with torch.no_grad():
            for _, param in model.named_parameters():
                flat = param.data.view(-1)
                grad = param.grad.view(-1)
                for index in rng.sample(range(flat.numel()), k=min(4, flat.numel())):
                    original = float(flat[index])
                    flat[index] = original + h
                    upper = float(loss_value())
                    flat[index] = original - h
                    lower = float(loss_value())
                    flat[index] = original
                    numeric = (upper - lower) / (2 * h)
                    analytic = float(grad[index])
                    scale = max(abs(numeric), abs(analytic), 1e-5)
                    assert abs(numeric - analytic) / scale <= 1e-4
                    checked += 1
        assert checked >= 40


def test_criterion_4_llrd_and_schedule_suite(criterion):
    with criterion(4, budget_seconds=30.0):
        model = ClarityClassifier(ModelConfig(model_id="tiny", max_length=64, seed=0))
        groups = llrd_param_groups(model, base_lr=3e-5, decay=0.9)
        assert sorted(g["depth"] for g in groups) == [0, 1, 2]
        for group in groups:
            assert abs(group["lr"] - 3e-5 * 0.9 ** group["depth"]) <= 1e-12

        for multiplier in (lr_multiplier, linear_lr_multiplier):
            assert multiplier(0, 100, 12) == 0.0
            assert abs(multiplier(12, 100, 12) - 1.0) <= 1e-12
            assert multiplier(100, 100, 12) <= 1e-12

        # one optimizer step over batch 32 vs four accumulated micro-batches
        # of 8; SGD keeps the update proportional to the accumulated gradient
        records = list(toy_corpus(16, 10, 6, seed=13))
        loss_config = FocalLossConfig(gamma=2.0, class_weights=(1.0, 1.2, 1.5))
        states = []
        for chunk in (32, 8):
            step_model = ClarityClassifier(
                ModelConfig(model_id="tiny", max_length=64, seed=0, dropout=0.0)
            )
            optimizer = torch.optim.SGD(step_model.parameters(), lr=0.1)
            micro = [
                step_model.make_batch(records[i : i + chunk])
                for i in range(0, len(records), chunk)
            ]
            training_step(step_model, optimizer, micro, loss_config, clip_norm=1.0)
            states.append({k: v.detach().clone() for k, v in step_model.state_dict().items()})
        for key in states[0]:
            assert torch.allclose(states[0][key], states[1][key], atol=1e-5), key


def test_criterion_5_augmentation_property_suite(criterion, tmp_path):
    with criterion(5, budget_seconds=30.0):
        tokens = "We are reviewing many options around housing and weighing every side".split()

        # p = 0 leaves the input untouched for every operation
        for seed in range(25):
            rng = random.Random(seed)
            assert synonym_replace(tokens, 0.0, rng) == tokens
            assert random_insert(tokens, 0.0, rng) == tokens
            assert random_swap(tokens, 0.0, rng) == tokens
            assert random_delete(tokens, 0.0, rng) == tokens

        # deletion never empties the sentence and only removes tokens
        for seed in range(1000):
            out = random_delete(tokens, 0.99, random.Random(seed))
            assert out
            iterator = iter(tokens)
            assert all(any(token == candidate for candidate in iterator) for token in out)

        train = toy_corpus()
        marker = "zugzwang"
        planted = tuple(
            QAPair(
                question=f"Did the {marker} report surface {i}?",
                answer=f"The {marker} memo covers point {i}.",
                clarity=ClarityLabel.CLEAR_NON_REPLY,
                source=Source.GEMINI_SYNTHETIC,
            )
            for i in range(5)
        )
        train_with_decoys = Dataset(tuple(train) + planted, name="train")

        counts = {label: 0 for label in ClarityLabel}
        for pair in train_with_decoys:
            counts[pair.clarity] += 1

        frame_plan = AugmentationPlan(
            targets={ClarityLabel.CLEAR_NON_REPLY: counts[ClarityLabel.CLEAR_NON_REPLY] + 10},
            source=Source.GEMINI_SYNTHETIC,
            seed=7,
        )
        first = run_plan(train_with_decoys, frame_plan)
        second = run_plan(train_with_decoys, frame_plan)
        assert first == second  # seed determinism
        assert len(first) == 10
        for pair in first:
            assert pair.source == Source.GEMINI_SYNTHETIC
            assert pair.sample_weight == 0.7
            assert marker not in pair.question and marker not in pair.answer

        lexical_plan = AugmentationPlan(
            targets={ClarityLabel.AMBIVALENT: counts[ClarityLabel.AMBIVALENT] + 6},
            source=Source.CLAUDE_SYNTHETIC,
            seed=7,
        )
        paraphrased = run_plan(train_with_decoys, lexical_plan)
        assert len(paraphrased) == 6
        for pair in paraphrased:
            assert pair.source == Source.CLAUDE_SYNTHETIC
            assert pair.sample_weight == 0.5
            assert marker not in pair.answer

        sample = train[0]
        once = eda_augment(sample, lexical_plan, random.Random(3))
        again = eda_augment(sample, lexical_plan, random.Random(3))
        assert once == again

        # the command line refuses to augment from held-out-looking files
        heldout = tmp_path / "test.tsv"
        write_dataset(train, heldout)
        rc = main(["augment", "--train", str(heldout), "--out", str(tmp_path / "aug")])
        assert rc == EXIT_DATA


def _imbalanced_corpus():
    answers = {
        ClarityLabel.AMBIVALENT: "We are weighing several approaches to item {0} and it is early.",
        ClarityLabel.CLEAR_REPLY: "Yes, we will move forward on item {0} next quarter.",
        ClarityLabel.CLEAR_NON_REPLY: "I cannot comment on item {0} at this stage.",
    }
    counts = {
        ClarityLabel.AMBIVALENT: 2040,
        ClarityLabel.CLEAR_REPLY: 1052,
        ClarityLabel.CLEAR_NON_REPLY: 356,
    }
    records = []
    index = 0
    for label, count in counts.items():
        for _ in range(count):
            records.append(
                QAPair(
                    question=f"Will you address item {index}?",
                    answer=answers[label].format(index),
                    clarity=label,
                    meta={"id": str(index)},
                )
            )
            index += 1
    return Dataset(tuple(records), name="corpus")


def test_criterion_6_split_and_fold_suite(criterion):
    with criterion(6, budget_seconds=10.0):
        corpus = _imbalanced_corpus()
        assert len(corpus) == 3448
        train, dev = stratified_split(corpus, 0.2, seed=11)
        assert (len(train), len(dev)) == (2758, 690)
        dev_counts = {label: 0 for label in ClarityLabel}
        for pair in dev:
            dev_counts[pair.clarity] += 1
        for label, expected in (
            (ClarityLabel.AMBIVALENT, 2040),
            (ClarityLabel.CLEAR_REPLY, 1052),
            (ClarityLabel.CLEAR_NON_REPLY, 356),
        ):
            assert abs(dev_counts[label] - expected * 0.2) <= 1
        assert dev_counts == {
            ClarityLabel.AMBIVALENT: 408,
            ClarityLabel.CLEAR_REPLY: 211,
            ClarityLabel.CLEAR_NON_REPLY: 71,
        }

        folds = stratified_kfold(corpus, folds=5, seed=0)
        seen = [i for _, dev_idx in folds for i in dev_idx]
        assert sorted(seen) == list(range(len(corpus)))
        for train_idx, dev_idx in folds:
            assert set(train_idx).isdisjoint(dev_idx)
            assert len(train_idx) + len(dev_idx) == len(corpus)
        per_class = []
        for _, dev_idx in folds:
            fold_counts = {label: 0 for label in ClarityLabel}
            for i in dev_idx:
                fold_counts[corpus[i].clarity] += 1
            per_class.append(fold_counts)
        for label in ClarityLabel:
            sizes = [c[label] for c in per_class]
            assert max(sizes) - min(sizes) <= 1

        constant = Dataset(
            tuple(p for p in corpus if p.clarity == ClarityLabel.AMBIVALENT)[:8],
            name="constant",
        )
        model = ClarityClassifier(ModelConfig(model_id="tiny", max_length=32, seed=0))
        with pytest.raises(ValidationIntegrityError):
            train_loop(model, Dataset(tuple(corpus)[:32], name="t"), constant,
                       TrainingConfig(epochs=1))


def test_criterion_7_end_to_end_smoke(criterion, tmp_path):
    with criterion(7, budget_seconds=120.0):
        corpus = toy_corpus()
        assert len(corpus) == 64
        train, dev = stratified_split(corpus, 0.25, seed=3)
        model = ClarityClassifier(ModelConfig(model_id="tiny", max_length=64, seed=0))
        config = TrainingConfig(
            base_lr=5e-3, micro_batch_size=8, accumulation_steps=2,
            epochs=6, patience=3, seed=0,
        )
        history = train_loop(model, train, dev, config)
        assert history.train_loss[0] > history.train_loss[1] > history.train_loss[2]
        assert history.stopped_early
        assert history.best_dev_macro_f1 == 1.0

        corpus_path = tmp_path / "corpus.tsv"
        write_dataset(corpus, corpus_path)
        config_path = tmp_path / "train.cfg"
        config_path.write_text(
            "base_lr=5e-3\nmicro_batch_size=8\naccumulation_steps=2\npatience=3\n",
            "utf-8",
        )
        splits = tmp_path / "splits"
        run = tmp_path / "run"
        evaluation = tmp_path / "eval"
        report = tmp_path / "report"
        predictions = tmp_path / "preds.tsv"

        chain = [
            ["prepare", "--data", str(corpus_path), "--dev-fraction", "0.25",
             "--seed", "3", "--out", str(splits)],
            ["train", "--train", str(splits / "train.tsv"), "--dev", str(splits / "dev.tsv"),
             "--config", str(config_path), "--max-length", "64", "--seed", "0",
             "--out", str(run)],
            ["predict", "--model", str(run / "checkpoint"), "--data", str(splits / "dev.tsv"),
             "--out", str(predictions)],
            ["evaluate", "--gold", str(splits / "dev.tsv"), "--pred", str(predictions),
             "--out", str(evaluation)],
            ["report", "--matrix", str(evaluation / "confusion_matrix.tsv"),
             "--out", str(report)],
        ]
        for argv in chain:
            assert main(argv) == EXIT_OK, argv[0]
        assert (report / "report.txt").exists()


def test_criterion_8_full_scale_targets_documented(criterion):
    with criterion(8):
        readme = Path(__file__).resolve().parents[1] / "README.md"
        text = readme.read_text("utf-8")
        # headline numbers from the full-scale runs
        for figure in ("0.76", "0.66", "0.4476", "0.5628", "0.45", "0.28"):
            assert figure in text, figure
        assert "0.64" in text and "0.64-0.66" in text
        assert "full scale" in text.lower() or "full-scale" in text.lower()

        # the documented table stays consistent with the constants in code
        from clarity.baselines import FULL_SCALE_REFERENCE

        for kind in ("logistic_regression", "svm", "random_forest",
                     "transformer_distil", "transformer_base"):
            assert f"{FULL_SCALE_REFERENCE[kind]:.4f}" in text, kind
