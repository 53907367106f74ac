"""Encoder backbones and tokenization.

The classifier only needs three things from a backbone: token-level hidden
states, a depth-indexed view of its parameters for layer-wise learning-rate
decay, and an identifier for checkpoints. ``TinyEncoder`` is a small
randomly initialized transformer that satisfies the interface without any
network access; pretrained HuggingFace backbones plug in through the same
interface when the optional ``transformers`` dependency is installed.
"""

from __future__ import annotations

import hashlib

import torch
from torch import nn

PAD_ID = 0
SEP_ID = 1


class HashTokenizer:
    """Deterministic whitespace tokenizer with hashed ids.

    Tokens map to ids in [2, vocab_size) via blake2b; 0 is padding and 1 is
    the separator. No vocabulary file, so any text tokenizes the same way on
    every machine.
    """

    sep_token = "[SEP]"

    def __init__(self, vocab_size: int = 4096):
        if vocab_size < 3:
            raise ValueError("vocab_size must leave room for pad and sep ids")
        self.vocab_size = vocab_size

    def token_id(self, token: str) -> int:
        if token == self.sep_token:
            return SEP_ID
        digest = hashlib.blake2b(token.lower().encode("utf-8"), digest_size=8).digest()
        return 2 + int.from_bytes(digest, "big") % (self.vocab_size - 2)

    def encode(self, text: str) -> list[int]:
        return [self.token_id(t) for t in text.split()]

    def encode_pair(self, question: str, answer: str, max_length: int) -> list[int]:
        """question [SEP] answer, truncated from the answer tail.

        If the question alone (plus the separator) exceeds the budget, the
        question itself is tail-truncated and the answer is dropped.
        """
        if max_length < 2:
            raise ValueError("max_length must be at least 2")
        q_ids = self.encode(question)
        a_ids = self.encode(answer)
        if len(q_ids) + 1 >= max_length:
            return q_ids[: max_length - 1] + [SEP_ID]
        budget = max_length - len(q_ids) - 1
        return q_ids + [SEP_ID] + a_ids[:budget]


class EncoderBackbone(nn.Module):
    """Interface shared by the tiny encoder and pretrained wrappers."""

    identifier: str
    hidden_size: int
    layer_count: int

    def encode(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        """(batch, seq) ids and mask -> (batch, seq, hidden) states."""
        raise NotImplementedError

    def tokenize_pair(self, question: str, answer: str, max_length: int) -> list[int]:
        raise NotImplementedError

    def depth_parameter_groups(self) -> list[tuple[int, list[nn.Parameter]]]:
        """Parameters bucketed by depth: 0 is the top encoder block, deeper
        blocks count up, embeddings sit at depth == layer_count."""
        raise NotImplementedError


class _TinyBlock(nn.Module):
    def __init__(self, hidden: int, heads: int, ffn: int):
        super().__init__()
        self.attention = nn.MultiheadAttention(hidden, heads, batch_first=True)
        self.norm1 = nn.LayerNorm(hidden)
        self.ffn = nn.Sequential(nn.Linear(hidden, ffn), nn.GELU(), nn.Linear(ffn, hidden))
        self.norm2 = nn.LayerNorm(hidden)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        attended, _ = self.attention(x, x, x, key_padding_mask=pad_mask, need_weights=False)
        x = self.norm1(x + attended)
        return self.norm2(x + self.ffn(x))


class TinyEncoder(EncoderBackbone):
    """Two-layer transformer encoder with random weights.

    Small enough to train on CPU in seconds; used for offline runs and the
    test suite. Weight initialization is fully determined by the seed.
    """

    def __init__(
        self,
        hidden_size: int = 32,
        layer_count: int = 2,
        heads: int = 2,
        ffn_size: int = 64,
        vocab_size: int = 4096,
        max_positions: int = 512,
        seed: int = 0,
    ):
        super().__init__()
        self.identifier = "tiny"
        self.hidden_size = hidden_size
        self.layer_count = layer_count
        self.max_positions = max_positions
        self.tokenizer = HashTokenizer(vocab_size)
        generator_state = torch.random.get_rng_state()
        torch.manual_seed(seed)
        try:
            self.embeddings = nn.Embedding(vocab_size, hidden_size, padding_idx=PAD_ID)
            self.position_embeddings = nn.Embedding(max_positions, hidden_size)
            self.embedding_norm = nn.LayerNorm(hidden_size)
            self.blocks = nn.ModuleList(
                _TinyBlock(hidden_size, heads, ffn_size) for _ in range(layer_count)
            )
        finally:
            torch.random.set_rng_state(generator_state)

    def encode(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(input_ids.shape[1], device=input_ids.device)
        x = self.embeddings(input_ids) + self.position_embeddings(positions)
        x = self.embedding_norm(x)
        pad_mask = attention_mask == 0
        # a fully padded row would make attention emit NaN; rows always carry
        # at least one real token by construction, but guard anyway
        if bool(pad_mask.all(dim=1).any()):
            raise ValueError("batch contains a row with no unpadded tokens")
        for block in self.blocks:
            x = block(x, pad_mask)
        return x

    def tokenize_pair(self, question: str, answer: str, max_length: int) -> list[int]:
        return self.tokenizer.encode_pair(question, answer, min(max_length, self.max_positions))

    def depth_parameter_groups(self) -> list[tuple[int, list[nn.Parameter]]]:
        groups: list[tuple[int, list[nn.Parameter]]] = []
        for depth, block in enumerate(reversed(self.blocks)):
            groups.append((depth, list(block.parameters())))
        embedding_params = (
            list(self.embeddings.parameters())
            + list(self.position_embeddings.parameters())
            + list(self.embedding_norm.parameters())
        )
        groups.append((self.layer_count, embedding_params))
        return groups


class PretrainedEncoder(EncoderBackbone):
    """Wrapper around a HuggingFace AutoModel checkpoint."""

    def __init__(self, model_id: str):
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise RuntimeError(
                "pretrained backbones need the 'transformers' extra installed"
            ) from exc
        self.identifier = model_id
        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModel.from_pretrained(model_id)
        self.hidden_size = self._model.config.hidden_size
        self.layer_count = self._model.config.num_hidden_layers

    def encode(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        return self._model(input_ids=input_ids, attention_mask=attention_mask).last_hidden_state

    def tokenize_pair(self, question: str, answer: str, max_length: int) -> list[int]:
        encoded = self._tokenizer(
            question, answer, truncation="only_second", max_length=max_length
        )
        return list(encoded["input_ids"])

    def depth_parameter_groups(self) -> list[tuple[int, list[nn.Parameter]]]:
        layers = _find_hf_layers(self._model)
        grouped_ids: set[int] = set()
        groups: list[tuple[int, list[nn.Parameter]]] = []
        for depth, layer in enumerate(reversed(layers)):
            params = list(layer.parameters())
            grouped_ids.update(id(p) for p in params)
            groups.append((depth, params))
        leftovers = [p for p in self._model.parameters() if id(p) not in grouped_ids]
        groups.append((self.layer_count, leftovers))
        return groups


def _find_hf_layers(model: nn.Module) -> list[nn.Module]:
    for attr in ("encoder", "transformer"):
        stack = getattr(model, attr, None)
        if stack is not None and hasattr(stack, "layer"):
            return list(stack.layer)
        if stack is not None and hasattr(stack, "layers"):
            return list(stack.layers)
    raise RuntimeError(f"cannot locate encoder layers on {type(model).__name__}")


def resolve_encoder(model_id: str, seed: int = 0) -> EncoderBackbone:
    """Map a model identifier to a backbone instance.

    "tiny" (optionally "tiny:<hidden>x<layers>") builds the offline encoder;
    anything else is treated as a HuggingFace checkpoint name.
    """
    if model_id == "tiny":
        return TinyEncoder(seed=seed)
    if model_id.startswith("tiny:"):
        shape = model_id.split(":", 1)[1]
        try:
            hidden_text, layer_text = shape.split("x", 1)
            hidden, layers = int(hidden_text), int(layer_text)
        except ValueError:
            raise ValueError(f"bad tiny encoder shape {shape!r}, expected HxL") from None
        heads = 2 if hidden % 2 == 0 else 1
        return TinyEncoder(
            hidden_size=hidden, layer_count=layers, heads=heads,
            ffn_size=2 * hidden, seed=seed,
        )
    return PretrainedEncoder(model_id)


def pad_batch(sequences: list[list[int]]) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad id sequences to a rectangle, returning (ids, attention_mask)."""
    if not sequences:
        raise ValueError("cannot pad an empty batch")
    width = max(len(s) for s in sequences)
    ids = torch.full((len(sequences), width), PAD_ID, dtype=torch.long)
    mask = torch.zeros((len(sequences), width), dtype=torch.long)
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        mask[row, : len(seq)] = 1
    return ids, mask
