"""Feature-fused classification head over an encoder backbone.

The two boolean question features are projected into a small dense vector and
concatenated with the first-token pooled encoder state before the softmax
layer, so the head sees both the text representation and the question-form
signals.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import QAPair
from .encoders import EncoderBackbone, pad_batch, resolve_encoder
from .features import extract_boolean_features

CONFIG_FILE = "config.txt"
WEIGHTS_FILE = "weights.pt"


@dataclass(frozen=True)
class ModelConfig:
    model_id: str = "tiny"
    num_classes: int = 3
    feature_dim: int = 32
    dropout: float = 0.1
    max_length: int = 256
    use_features: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.max_length < 16:
            raise ValueError("max_length must be at least 16")


@dataclass(frozen=True)
class Batch:
    input_ids: torch.Tensor
    attention_mask: torch.Tensor
    features: torch.Tensor
    labels: torch.Tensor | None
    sample_weights: torch.Tensor
    truncation_count: int


class ClarityClassifier(nn.Module):
    """Encoder -> first-token pool (+ projected boolean features) -> logits."""

    def __init__(self, config: ModelConfig, encoder: EncoderBackbone | None = None):
        super().__init__()
        self.config = config
        self.encoder = encoder or resolve_encoder(config.model_id, seed=config.seed)
        head_generator = torch.Generator().manual_seed(config.seed + 1)
        self.feature_projection = nn.Linear(2, config.feature_dim)
        self.feature_activation = nn.ReLU()
        self.dropout = nn.Dropout(config.dropout)
        head_in = self.encoder.hidden_size + (config.feature_dim if config.use_features else 0)
        self.classifier = nn.Linear(head_in, config.num_classes)
        with torch.no_grad():
            for layer in (self.feature_projection, self.classifier):
                weight = torch.empty_like(layer.weight)
                bound = float(weight.shape[1]) ** -0.5
                weight.uniform_(-bound, bound, generator=head_generator)
                layer.weight.copy_(weight)
                layer.bias.zero_()

    def forward(
        self,
        input_ids: torch.Tensor,
        attention_mask: torch.Tensor,
        features: torch.Tensor,
    ) -> torch.Tensor:
        hidden = self.encoder.encode(input_ids, attention_mask)
        pooled = hidden[:, 0, :]
        if self.config.use_features:
            # dropout lives inside the feature projection only; the pooled
            # text representation reaches the classifier untouched
            projected = self.feature_activation(self.feature_projection(features))
            projected = self.dropout(projected)
            pooled = torch.cat([pooled, projected], dim=1)
        return self.classifier(pooled)

    def make_batch(self, pairs: list[QAPair], with_labels: bool = True) -> Batch:
        """Tokenize, pad, and collect features, labels, and sample weights.

        truncation_count reports how many answers lost tokens to the length
        budget.
        """
        if not pairs:
            raise ValueError("cannot build an empty batch")
        sequences: list[list[int]] = []
        truncated = 0
        feature_rows: list[list[float]] = []
        weights: list[float] = []
        labels: list[int] = []
        for pair in pairs:
            ids = self.encoder.tokenize_pair(pair.question, pair.answer, self.config.max_length)
            full = self.encoder.tokenize_pair(pair.question, pair.answer, 1_000_000)
            if len(full) > len(ids):
                truncated += 1
            sequences.append(ids)
            affirmative, multiple = pair.affirmative_question, pair.multiple_questions
            if affirmative is None or multiple is None:
                extracted = extract_boolean_features(pair.question)
                affirmative = extracted.affirmative_question if affirmative is None else affirmative
                multiple = extracted.multiple_questions if multiple is None else multiple
            feature_rows.append([float(affirmative), float(multiple)])
            weights.append(pair.sample_weight if pair.sample_weight is not None else 1.0)
            if with_labels:
                if pair.clarity is None:
                    raise ValueError("record lacks a clarity label")
                labels.append(int(pair.clarity))
        input_ids, attention_mask = pad_batch(sequences)
        return Batch(
            input_ids=input_ids,
            attention_mask=attention_mask,
            features=torch.tensor(feature_rows, dtype=torch.float32),
            labels=torch.tensor(labels, dtype=torch.long) if with_labels else None,
            sample_weights=torch.tensor(weights, dtype=torch.float32),
            truncation_count=truncated,
        )

    @torch.no_grad()
    def predict(self, pairs: list[QAPair], batch_size: int = 32) -> np.ndarray:
        """Class codes for each pair; argmax ties break to the lowest code."""
        self.eval()
        predictions: list[int] = []
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            batch = self.make_batch(chunk, with_labels=False)
            logits = self(batch.input_ids, batch.attention_mask, batch.features)
            predictions.extend(int(i) for i in np.argmax(logits.numpy(), axis=1))
        return np.array(predictions, dtype=np.int64)

    @torch.no_grad()
    def predict_proba(self, pairs: list[QAPair], batch_size: int = 32) -> np.ndarray:
        self.eval()
        rows: list[np.ndarray] = []
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            batch = self.make_batch(chunk, with_labels=False)
            logits = self(batch.input_ids, batch.attention_mask, batch.features)
            rows.append(torch.softmax(logits, dim=1).numpy())
        return np.concatenate(rows, axis=0)


def save_checkpoint(model: ClarityClassifier, directory: str | Path) -> None:
    """weights.pt plus a flat key=value config.txt."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), directory / WEIGHTS_FILE)
    config = model.config
    lines = [
        f"model_id={config.model_id}",
        f"num_classes={config.num_classes}",
        f"feature_dim={config.feature_dim}",
        f"dropout={config.dropout}",
        f"max_length={config.max_length}",
        f"use_features={config.use_features}",
        f"seed={config.seed}",
    ]
    (directory / CONFIG_FILE).write_text("\n".join(lines) + "\n", "utf-8")


def load_checkpoint(directory: str | Path) -> ClarityClassifier:
    directory = Path(directory)
    config_path = directory / CONFIG_FILE
    weights_path = directory / WEIGHTS_FILE
    if not config_path.is_file() or not weights_path.is_file():
        raise FileNotFoundError(f"{directory} is not a model checkpoint")
    raw: dict[str, str] = {}
    for line in config_path.read_text("utf-8").splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            raw[key.strip()] = value.strip()
    config = ModelConfig(
        model_id=raw["model_id"],
        num_classes=int(raw["num_classes"]),
        feature_dim=int(raw["feature_dim"]),
        dropout=float(raw["dropout"]),
        max_length=int(raw["max_length"]),
        use_features=raw["use_features"] == "True",
        seed=int(raw["seed"]),
    )
    model = ClarityClassifier(config)
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model
