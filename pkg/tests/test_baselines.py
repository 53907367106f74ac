"""Tests for the majority, TF-IDF classical, and plain fine-tune baselines."""

import math

import pytest

from clarity.baselines import (
    BASELINE_KINDS,
    CLASSICAL_KINDS,
    FULL_SCALE_REFERENCE,
    TfidfConfig,
    english_stopwords,
    majority_baseline,
    run_baseline,
    simple_transformer_baseline,
    tfidf_vectorize,
    train_classical,
)
from clarity.data import Dataset
from clarity.taxonomy import ClarityLabel

from toydata import make_pair, toy_corpus

DOCS = ["the cat sat", "the dog sat", "the dog ran"]

PLAIN = TfidfConfig(
    max_features=100,
    ngram_range=(1, 1),
    min_df=1,
    max_df=1.0,
    use_stopwords=False,
    l2_normalize=False,
)


# ---------------------------------------------------------------------------
# majority
# ---------------------------------------------------------------------------


def _pairs(labels):
    return Dataset(
        tuple(make_pair(question=f"q{i}?", clarity=label) for i, label in enumerate(labels)),
        name="hand",
    )


def test_majority_predicts_most_frequent_training_label(toy_splits):
    train, dev = toy_splits
    result = majority_baseline(train, dev)
    assert result.name == "majority"
    assert result.details == {"majority_label": int(ClarityLabel.CLEAR_REPLY)}
    # every prediction lands in the majority column
    assert result.matrix.predicted_total(0) == len(dev)
    assert result.matrix.predicted_total(1) == 0


def test_majority_tie_resolves_to_lowest_code():
    train = _pairs([ClarityLabel.AMBIVALENT, ClarityLabel.AMBIVALENT,
                    ClarityLabel.CLEAR_REPLY, ClarityLabel.CLEAR_REPLY,
                    ClarityLabel.CLEAR_NON_REPLY])
    test = _pairs([ClarityLabel.CLEAR_REPLY, ClarityLabel.AMBIVALENT])
    result = majority_baseline(train, test)
    assert result.details["majority_label"] == 0


def test_majority_rejects_empty_training_split():
    with pytest.raises(ValueError, match="empty"):
        majority_baseline(Dataset((), name="none"), _pairs([ClarityLabel.AMBIVALENT]))


# ---------------------------------------------------------------------------
# TF-IDF
# ---------------------------------------------------------------------------


def test_stopword_list_is_loaded_once_and_complete():
    words = english_stopwords()
    assert len(words) == 318
    assert "the" in words
    assert words is english_stopwords()


def test_tfidf_config_validation():
    with pytest.raises(ValueError):
        TfidfConfig(max_features=0)
    with pytest.raises(ValueError):
        TfidfConfig(min_df=0)
    with pytest.raises(ValueError):
        TfidfConfig(max_df=0.0)
    with pytest.raises(ValueError):
        TfidfConfig(ngram_range=(2, 1))


def test_tfidf_values_match_hand_computation():
    train_x, _, vectorizer = tfidf_vectorize(DOCS, [], PLAIN)
    assert list(vectorizer.get_feature_names_out()) == ["cat", "dog", "ran", "sat", "the"]

    def idf(df, n=3):
        return math.log((1 + n) / (1 + df)) + 1

    # first document: "the cat sat"
    expected = [idf(1), 0.0, 0.0, idf(2), idf(3)]
    observed = train_x.toarray()[0].tolist()
    for got, want in zip(observed, expected):
        assert abs(got - want) < 1e-9


def test_tfidf_l2_normalization():
    config = TfidfConfig(
        max_features=100, ngram_range=(1, 1), min_df=1, max_df=1.0,
        use_stopwords=False, l2_normalize=True,
    )
    train_x, _, _ = tfidf_vectorize(DOCS, [], config)
    rows = train_x.toarray()
    for row in rows:
        norm = math.sqrt(sum(v * v for v in row))
        assert abs(norm - 1.0) < 1e-9


def test_tfidf_truncation_is_deterministic_and_alphabetical_on_ties():
    config = TfidfConfig(
        max_features=3, ngram_range=(1, 2), min_df=1, max_df=1.0, use_stopwords=False
    )
    _, _, vectorizer = tfidf_vectorize(DOCS, [], config)
    # df ranking: the(3) then dog, sat, "the dog" all at 2; the alphabetical
    # ties dog and sat make the cut, "the dog" does not
    assert list(vectorizer.get_feature_names_out()) == ["dog", "sat", "the"]


def test_tfidf_min_df_filters_rare_terms():
    config = TfidfConfig(
        max_features=100, ngram_range=(1, 2), min_df=2, max_df=1.0, use_stopwords=False
    )
    _, _, vectorizer = tfidf_vectorize(DOCS, [], config)
    assert list(vectorizer.get_feature_names_out()) == ["dog", "sat", "the", "the dog"]


def test_tfidf_max_df_filters_ubiquitous_terms():
    config = TfidfConfig(
        max_features=100, ngram_range=(1, 1), min_df=1, max_df=0.9, use_stopwords=False
    )
    _, _, vectorizer = tfidf_vectorize(DOCS, [], config)
    assert list(vectorizer.get_feature_names_out()) == ["cat", "dog", "ran", "sat"]


def test_tfidf_stopword_removal():
    config = TfidfConfig(max_features=100, ngram_range=(1, 2), min_df=2, max_df=1.0)
    _, _, vectorizer = tfidf_vectorize(DOCS, [], config)
    assert list(vectorizer.get_feature_names_out()) == ["dog", "sat"]


def test_tfidf_sublinear_scaling():
    train = ["cat dog", "dog cat"]
    other = ["cat cat cat dog"]
    plain = TfidfConfig(
        max_features=10, ngram_range=(1, 1), min_df=1, max_df=1.0,
        use_stopwords=False, l2_normalize=False,
    )
    _, other_plain, _ = tfidf_vectorize(train, other, plain)
    row = other_plain.toarray()[0]
    assert abs(row[0] / row[1] - 3.0) < 1e-9

    import dataclasses

    _, other_sub, _ = tfidf_vectorize(
        train, other, dataclasses.replace(plain, sublinear_tf=True)
    )
    row = other_sub.toarray()[0]
    assert abs(row[0] / row[1] - (1 + math.log(3))) < 1e-9


def test_tfidf_rejects_empty_vocabulary():
    with pytest.raises(ValueError, match="vocabulary empty"):
        tfidf_vectorize(
            ["the and of", "a an the"], [],
            TfidfConfig(min_df=1, max_features=10),
        )
    with pytest.raises(ValueError):
        tfidf_vectorize([], ["something"], PLAIN)


# ---------------------------------------------------------------------------
# classical models
# ---------------------------------------------------------------------------


def test_logistic_regression_separates_templated_training_data(toy_splits):
    train, _ = toy_splits
    result = train_classical(train, train, "logistic_regression",
                             tfidf=TfidfConfig(min_df=1))
    assert result.name == "logistic_regression"
    assert result.matrix.accuracy() == 1.0


def test_svm_grid_searches_six_cells(toy_splits):
    train, dev = toy_splits
    result = train_classical(train, dev, "svm")
    assert result.details["grid_size"] == 6
    assert result.details["best_params"]["C"] in (0.1, 1.0, 10.0)
    assert result.details["best_params"]["kernel"] in ("linear", "rbf")


def test_classical_kinds_beat_the_majority_baseline(toy_splits):
    train, dev = toy_splits
    floor = majority_baseline(train, dev).macro_f1
    for kind in CLASSICAL_KINDS:
        result = train_classical(train, dev, kind)
        assert result.macro_f1 > floor, kind


def test_classical_rejects_single_class_training_data(toy):
    only_clear = Dataset(
        tuple(p for p in toy if p.clarity == ClarityLabel.CLEAR_REPLY),
        name="single",
    )
    with pytest.raises(ValueError, match="single class"):
        train_classical(only_clear, only_clear, "logistic_regression")


def test_classical_rejects_unknown_kind(toy_splits):
    train, dev = toy_splits
    with pytest.raises(ValueError, match="unknown classical"):
        train_classical(train, dev, "perceptron")


# ---------------------------------------------------------------------------
# plain fine-tunes and the dispatcher
# ---------------------------------------------------------------------------


def test_simple_transformer_learns_the_toy_corpus(toy_splits):
    train, dev = toy_splits
    result, history = simple_transformer_baseline(
        train, dev, dev, "distil", model_id="tiny", seed=0, epochs=4, base_lr=5e-3
    )
    assert result.name == "transformer_distil"
    assert result.details == {"preset": "distil", "model_id": "tiny"}
    assert len(history.train_loss) <= 4
    floor = majority_baseline(train, dev).macro_f1
    assert result.macro_f1 > floor


def test_transformer_preset_validation(toy_splits):
    train, dev = toy_splits
    with pytest.raises(ValueError, match="unknown preset"):
        simple_transformer_baseline(train, dev, dev, "huge")


def test_run_baseline_dispatch(toy_splits):
    train, dev = toy_splits
    result = run_baseline("majority", train, dev, dev)
    assert result.name == "majority"
    with pytest.raises(ValueError, match="unknown baseline"):
        run_baseline("oracle", train, dev, dev)


def test_full_scale_reference_values():
    assert set(FULL_SCALE_REFERENCE) == set(BASELINE_KINDS) | {"feature_fused"}
    assert FULL_SCALE_REFERENCE["majority"] == pytest.approx(0.27)
    assert FULL_SCALE_REFERENCE["logistic_regression"] == pytest.approx(0.4476)
    assert FULL_SCALE_REFERENCE["transformer_base"] == pytest.approx(0.5628)
    ordered = [
        FULL_SCALE_REFERENCE[k]
        for k in ("majority", "random_forest", "svm", "logistic_regression",
                  "transformer_distil", "transformer_base", "feature_fused")
    ]
    assert ordered == sorted(ordered)
