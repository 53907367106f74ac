import pytest

from clarity.data import stratified_split
from clarity.model import ClarityClassifier, ModelConfig
from clarity.train import TrainingConfig, train_loop

from toydata import toy_corpus


@pytest.fixture(scope="session")
def toy():
    return toy_corpus()


@pytest.fixture(scope="session")
def toy_splits(toy):
    return stratified_split(toy, 0.25, seed=3)


def fast_training_config(**overrides) -> TrainingConfig:
    values = dict(
        base_lr=5e-3,
        micro_batch_size=8,
        accumulation_steps=2,
        epochs=6,
        patience=3,
        seed=0,
    )
    values.update(overrides)
    return TrainingConfig(**values)


def tiny_model_config(**overrides) -> ModelConfig:
    values = dict(model_id="tiny", max_length=64, seed=0)
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture(scope="session")
def trained(toy_splits):
    """One fitted model shared by the tests that only read from it."""
    train, dev = toy_splits
    model = ClarityClassifier(tiny_model_config())
    history = train_loop(model, train, dev, fast_training_config())
    return model, history
