"""Reference systems the fused classifier is compared against.

Three tiers: a majority-class floor, classical TF-IDF models (logistic
regression, a small SVM grid, random forest), and plain fine-tuned encoders
without the feature fusion, focal loss, or layer-wise decay. Published
full-scale macro F1 numbers are kept here as constants so reports can show
the gap without re-running the multi-hour jobs behind them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np
from scipy import sparse
from sklearn.ensemble import RandomForestClassifier
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import GridSearchCV
from sklearn.svm import SVC

from .data import Dataset, format_input
from .evaluation import ConfusionMatrix, confusion_matrix, macro_f1
from .model import ClarityClassifier, ModelConfig
from .train import TrainHistory, TrainingConfig, train_loop

logger = logging.getLogger(__name__)

# Macro F1 reference points from full-scale runs on the complete corpus
# (thousands of records, pretrained encoders, GPU fine-tuning). The bundled
# tests exercise the same code paths on small data and do not reproduce
# these numbers.
FULL_SCALE_REFERENCE: dict[str, float] = {
    "majority": 0.2700,
    "logistic_regression": 0.4476,
    "svm": 0.4270,
    "random_forest": 0.4256,
    "transformer_distil": 0.5158,
    "transformer_base": 0.5628,
    "feature_fused": 0.66,
}


@dataclass(frozen=True)
class BaselineResult:
    name: str
    matrix: ConfusionMatrix
    macro_f1: float
    details: dict | None = None


def majority_baseline(train: Dataset, test: Dataset, num_classes: int = 3) -> BaselineResult:
    """Predict the most frequent training label everywhere.

    Ties on frequency resolve to the lowest label code.
    """
    counts: dict[int, int] = {}
    for pair in train:
        counts[int(pair.clarity)] = counts.get(int(pair.clarity), 0) + 1
    if not counts:
        raise ValueError("training split is empty")
    majority = min(counts, key=lambda code: (-counts[code], code))
    gold = [int(p.clarity) for p in test]
    predicted = [majority] * len(gold)
    matrix = confusion_matrix(gold, predicted, num_classes)
    return BaselineResult(
        name="majority",
        matrix=matrix,
        macro_f1=macro_f1(matrix),
        details={"majority_label": majority},
    )


# ---------------------------------------------------------------------------
# classical models over TF-IDF
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1)
def english_stopwords() -> frozenset[str]:
    """Frozen English stopword list shipped with the package."""
    text = resources.files("clarity.resources").joinpath("stopwords_english.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class TfidfConfig:
    max_features: int = 5000
    ngram_range: tuple[int, int] = (1, 2)
    min_df: int = 2
    max_df: float = 0.95
    use_stopwords: bool = True
    sublinear_tf: bool = False
    l2_normalize: bool = True
    lowercase: bool = True

    def __post_init__(self) -> None:
        if self.max_features < 1:
            raise ValueError("max_features must be positive")
        if self.min_df < 1:
            raise ValueError("min_df must be >= 1")
        if not 0.0 < self.max_df <= 1.0:
            raise ValueError("max_df must be in (0, 1]")
        lo, hi = self.ngram_range
        if lo < 1 or hi < lo:
            raise ValueError("ngram_range must satisfy 1 <= lo <= hi")


def tfidf_vectorize(
    train_texts: Sequence[str],
    other_texts: Sequence[str],
    config: TfidfConfig = TfidfConfig(),
):
    """Fit TF-IDF on the training texts only and transform both splits.

    Vocabulary truncation to max_features is made deterministic: terms are
    ranked by document frequency, and ties at the cutoff go to the
    alphabetically earlier term (the stock fitter breaks such ties by hash
    order). Returns (train_matrix, other_matrix, vectorizer).
    """
    if not train_texts:
        raise ValueError("cannot fit a vectorizer on zero documents")
    stop_words = sorted(english_stopwords()) if config.use_stopwords else None
    shared = dict(
        ngram_range=config.ngram_range,
        lowercase=config.lowercase,
        stop_words=stop_words,
    )
    counter = TfidfVectorizer(min_df=config.min_df, max_df=config.max_df, **shared)
    try:
        counter.fit(train_texts)
    except ValueError as exc:
        raise ValueError(f"vocabulary empty after filtering: {exc}") from exc
    document_frequency = np.asarray(
        (counter.transform(train_texts) > 0).sum(axis=0)
    ).ravel()
    terms = counter.get_feature_names_out()
    ranked = sorted(zip(terms, document_frequency), key=lambda t: (-t[1], t[0]))
    kept = sorted(term for term, _ in ranked[: config.max_features])
    if not kept:
        raise ValueError("vocabulary empty after filtering")
    vectorizer = TfidfVectorizer(
        vocabulary=kept,
        sublinear_tf=config.sublinear_tf,
        norm="l2" if config.l2_normalize else None,
        **shared,
    )
    train_x = vectorizer.fit_transform(train_texts)
    if other_texts:
        other_x = vectorizer.transform(other_texts)
    else:
        other_x = sparse.csr_matrix((0, len(kept)))
    return train_x, other_x, vectorizer


_SVM_GRID = {"C": [0.1, 1.0, 10.0], "kernel": ["linear", "rbf"]}

CLASSICAL_KINDS: tuple[str, ...] = ("logistic_regression", "svm", "random_forest")


def train_classical(
    train: Dataset,
    test: Dataset,
    kind: str,
    tfidf: TfidfConfig | None = None,
    seed: int = 0,
    num_classes: int = 3,
) -> BaselineResult:
    """TF-IDF + {logistic_regression | svm | random_forest}.

    Configurations follow the published reference setups: balanced class
    weights everywhere, C=1.0 logistic regression, an SVM grid over
    C in {0.1, 1, 10} x {linear, rbf} picked by 3-fold macro F1, and a
    100-tree depth-20 random forest. The SVM's vectorizer turns on sublinear
    tf scaling.
    """
    if kind not in CLASSICAL_KINDS:
        raise ValueError(f"unknown classical baseline {kind!r}")
    if len({int(p.clarity) for p in train}) < 2:
        raise ValueError("training split has a single class; nothing to fit")
    if tfidf is None:
        tfidf = TfidfConfig(sublinear_tf=True) if kind == "svm" else TfidfConfig()
    train_texts = [format_input(p) for p in train]
    test_texts = [format_input(p) for p in test]
    train_y = np.array([int(p.clarity) for p in train])
    gold = [int(p.clarity) for p in test]
    train_x, test_x, _ = tfidf_vectorize(train_texts, test_texts, tfidf)

    details: dict = {}
    if kind == "logistic_regression":
        estimator = LogisticRegression(
            C=1.0, max_iter=1000, class_weight="balanced", random_state=seed
        )
        estimator.fit(train_x, train_y)
    elif kind == "svm":
        search = GridSearchCV(
            SVC(class_weight="balanced", random_state=seed),
            _SVM_GRID,
            scoring="f1_macro",
            cv=3,
        )
        search.fit(train_x, train_y)
        estimator = search.best_estimator_
        details["best_params"] = dict(search.best_params_)
        details["grid_size"] = len(search.cv_results_["params"])
    else:
        estimator = RandomForestClassifier(
            n_estimators=100,
            max_depth=20,
            min_samples_split=10,
            min_samples_leaf=4,
            class_weight="balanced",
            random_state=seed,
        )
        estimator.fit(train_x, train_y)

    predicted = [int(v) for v in estimator.predict(test_x)]
    matrix = confusion_matrix(gold, predicted, num_classes)
    return BaselineResult(kind, matrix, macro_f1(matrix), details or None)


# ---------------------------------------------------------------------------
# plain fine-tuned encoders
# ---------------------------------------------------------------------------

#: Published preset -> full-scale checkpoint and training shape. CI swaps the
#: checkpoint for the bundled tiny encoder but keeps the training shape.
TRANSFORMER_PRESETS: dict[str, dict] = {
    "distil": {"model_id": "distilbert-base-uncased", "micro_batch_size": 16},
    "base": {"model_id": "bert-base-uncased", "micro_batch_size": 8},
}


def simple_transformer_baseline(
    train: Dataset,
    dev: Dataset,
    test: Dataset,
    preset: str,
    model_id: str = "tiny",
    seed: int = 0,
    epochs: int = 4,
    base_lr: float = 2e-5,
) -> tuple[BaselineResult, TrainHistory]:
    """Plain fine-tune: class-weighted cross entropy, no extras.

    No focal term, no sample weights, no layer-wise decay, no boolean
    features; 10% linear warmup with linear decay, weight decay 0.01, clip
    1.0. Presets fix the micro-batch size (16 for the distilled tier, 8 for
    the base tier).
    """
    if preset not in TRANSFORMER_PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(TRANSFORMER_PRESETS)}")
    shape = TRANSFORMER_PRESETS[preset]
    model_config = ModelConfig(model_id=model_id, use_features=False, seed=seed)
    model = ClarityClassifier(model_config)
    config = TrainingConfig(
        base_lr=base_lr,
        llrd_decay=1.0,
        micro_batch_size=shape["micro_batch_size"],
        accumulation_steps=1,
        warmup_fraction=0.10,
        focal_gamma=0.0,
        schedule="linear",
        epochs=epochs,
        patience=epochs,
        seed=seed,
        use_class_weights=True,
        use_sample_weights=False,
    )
    history = train_loop(model, train, dev, config)
    gold = [int(p.clarity) for p in test]
    predicted = [int(c) for c in model.predict(list(test))]
    matrix = confusion_matrix(gold, predicted, model_config.num_classes)
    name = f"transformer_{preset}"
    result = BaselineResult(
        name, matrix, macro_f1(matrix), {"preset": preset, "model_id": model_id}
    )
    return result, history


def run_baseline(
    kind: str,
    train: Dataset,
    dev: Dataset,
    test: Dataset,
    seed: int = 0,
    model_id: str = "tiny",
    epochs: int = 4,
    base_lr: float = 2e-5,
) -> BaselineResult:
    """Dispatch by kind string; the CLI's single entry point."""
    if kind == "majority":
        return majority_baseline(train, test)
    if kind in CLASSICAL_KINDS:
        return train_classical(train, test, kind, seed=seed)
    if kind in ("transformer_distil", "transformer_base"):
        preset = kind.removeprefix("transformer_")
        result, _ = simple_transformer_baseline(
            train, dev, test, preset,
            model_id=model_id, seed=seed, epochs=epochs, base_lr=base_lr,
        )
        return result
    raise ValueError(f"unknown baseline kind {kind!r}")


BASELINE_KINDS: tuple[str, ...] = (
    "majority",
    *CLASSICAL_KINDS,
    "transformer_distil",
    "transformer_base",
)
