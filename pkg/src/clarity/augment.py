"""Minority-class augmentation: lexical edit operations and frame-based synthesis.

Two families of synthetic records are produced. Lexical paraphrasing applies
one of four token-level operations (synonym replacement, random insertion,
random swap, random deletion) to the answer of an existing record and stamps
the result as claude_synthetic with weight 0.5. Frame-based synthesis mines
rhetorical answer skeletons from a class, fills their topic slots with
randomized political contexts, and stamps the result as gemini_synthetic with
weight 0.7. Generation only ever reads the training split it is given.
"""

from __future__ import annotations

import hashlib
import logging
import math
import random
import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

from .data import (
    SOURCE_WEIGHTS,
    Dataset,
    QAPair,
    Source,
    class_distribution,
    normalize_text,
)
from .features import extract_boolean_features
from .taxonomy import ClarityLabel, clarity_name

logger = logging.getLogger(__name__)

SLOT = "{TOPIC}"


class GenerationError(Exception):
    """Synthesis could not produce the requested records."""


class BalanceMode(Enum):
    FULL_BALANCE = "full-balance"
    PARTIAL = "partial"


def child_seed(seed: int, *parts: object) -> int:
    """Derive a stable per-record seed from a base seed and context parts."""
    digest = hashlib.blake2b(
        ":".join([str(seed)] + [str(p) for p in parts]).encode("utf-8"),
        digest_size=8,
    ).digest()
    return int.from_bytes(digest, "big")


# ---------------------------------------------------------------------------
# thesaurus
# ---------------------------------------------------------------------------


class Thesaurus:
    """Flat-file synonym table: word<TAB>synonym<TAB>synonym..."""

    def __init__(self, entries: Mapping[str, Sequence[str]]):
        self._entries = {w.lower(): tuple(s) for w, s in entries.items() if s}

    @classmethod
    def from_file(cls, path: str | Path) -> "Thesaurus":
        entries: dict[str, list[str]] = {}
        for line in Path(path).read_text("utf-8").splitlines():
            fields = [f.strip() for f in line.split("\t") if f.strip()]
            if len(fields) >= 2:
                entries[fields[0]] = fields[1:]
        return cls(entries)

    def synonyms(self, token: str) -> tuple[str, ...]:
        return self._entries.get(token.lower().strip(".,!?;:'\""), ())

    def __len__(self) -> int:
        return len(self._entries)


@lru_cache(maxsize=1)
def default_thesaurus() -> Thesaurus:
    with resources.as_file(resources.files("clarity.resources") / "thesaurus.tsv") as p:
        return Thesaurus.from_file(p)


def _match_case(template: str, replacement: str) -> str:
    if template[:1].isupper():
        return replacement[:1].upper() + replacement[1:]
    return replacement


# ---------------------------------------------------------------------------
# lexical edit operations
# ---------------------------------------------------------------------------


def synonym_replace(
    tokens: Sequence[str],
    p: float,
    rng: random.Random,
    thesaurus: Thesaurus | None = None,
) -> list[str]:
    """Replace each token that has a synonym with probability p."""
    thesaurus = thesaurus or default_thesaurus()
    out = list(tokens)
    for i, token in enumerate(tokens):
        options = thesaurus.synonyms(token)
        if options and rng.random() < p:
            out[i] = _match_case(token, rng.choice(options))
    return out


def _edit_budget(p: float, n: int) -> int:
    # keeps every op within the "about p of the tokens" envelope, so output
    # length stays inside [n - ceil(p*n), n + ceil(p*n)]
    return math.ceil(p * n) if p > 0 else 0


def random_insert(
    tokens: Sequence[str],
    p: float,
    rng: random.Random,
    thesaurus: Thesaurus | None = None,
) -> list[str]:
    """Insert synonyms of firing tokens at random positions.

    Each token with a thesaurus entry fires with probability p; at most
    ceil(p * n) insertions are made.
    """
    thesaurus = thesaurus or default_thesaurus()
    budget = _edit_budget(p, len(tokens))
    insertions: list[str] = []
    for token in tokens:
        if len(insertions) >= budget:
            break
        options = thesaurus.synonyms(token)
        if options and rng.random() < p:
            insertions.append(rng.choice(options))
    out = list(tokens)
    for word in insertions:
        out.insert(rng.randrange(len(out) + 1), word)
    return out


def random_swap(tokens: Sequence[str], p: float, rng: random.Random) -> list[str]:
    """Exchange two distinct random positions, floor(p * n) times."""
    out = list(tokens)
    n = len(out)
    if n < 2:
        return out
    for _ in range(int(p * n)):
        i = rng.randrange(n)
        j = rng.randrange(n - 1)
        if j >= i:
            j += 1
        out[i], out[j] = out[j], out[i]
    return out


def random_delete(tokens: Sequence[str], p: float, rng: random.Random) -> list[str]:
    """Drop tokens that fire with probability p, at most ceil(p * n) of them.

    At least one token always survives.
    """
    budget = _edit_budget(p, len(tokens))
    out: list[str] = []
    dropped = 0
    for token in tokens:
        if dropped < budget and rng.random() < p:
            dropped += 1
        else:
            out.append(token)
    if not out:
        out = [tokens[rng.randrange(len(tokens))]]
    return out


EDA_OPERATIONS: tuple[Callable, ...] = (
    synonym_replace,
    random_insert,
    random_swap,
    random_delete,
)


# ---------------------------------------------------------------------------
# plans and weights
# ---------------------------------------------------------------------------


def assign_sample_weights(source: Source) -> float:
    """Confidence weight by provenance: original 1.0, gemini 0.7, claude 0.5."""
    return SOURCE_WEIGHTS[Source(source)]


@dataclass(frozen=True)
class AugmentationPlan:
    """Per-class post-augmentation targets plus generation parameters."""

    targets: Mapping[ClarityLabel, int]
    op_probability: float = 0.1
    source: Source = Source.GEMINI_SYNTHETIC
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.op_probability < 1.0:
            raise ValueError("op_probability must be in [0, 1)")


def balance_plan(
    distribution: Mapping[ClarityLabel, tuple[int, float]],
    mode: BalanceMode,
    partial_targets: Mapping[ClarityLabel, int] | None = None,
) -> dict[ClarityLabel, int]:
    """Per-class counts to generate.

    FULL_BALANCE raises every class to the current maximum; PARTIAL takes
    explicit post-augmentation targets and errors if any target is below the
    current count.
    """
    counts = {label: distribution[label][0] for label in distribution}
    if mode == BalanceMode.FULL_BALANCE:
        top = max(counts.values())
        return {label: top - count for label, count in counts.items()}
    if partial_targets is None:
        raise ValueError("partial mode requires explicit per-class targets")
    to_generate: dict[ClarityLabel, int] = {label: 0 for label in counts}
    for label, target in partial_targets.items():
        current = counts.get(label, 0)
        if target < current:
            raise ValueError(
                f"target {target} for {clarity_name(label)} is below current count {current}"
            )
        to_generate[label] = target - current
    return to_generate


def eda_augment(
    pair: QAPair,
    plan: AugmentationPlan,
    rng: random.Random,
    thesaurus: Thesaurus | None = None,
) -> QAPair:
    """Paraphrase the answer with one uniformly chosen edit operation.

    The question is untouched, the label is copied, and the result is stamped
    claude_synthetic with the matching confidence weight.
    """
    if pair.clarity is None:
        raise GenerationError("cannot augment an unlabeled record")
    tokens = pair.answer.split()
    if len(tokens) < 1:
        logger.warning("answer too short to augment; passing through unchanged")
        new_answer = pair.answer
    else:
        op = EDA_OPERATIONS[rng.randrange(len(EDA_OPERATIONS))]
        if op in (synonym_replace, random_insert):
            new_tokens = op(tokens, plan.op_probability, rng, thesaurus)
        else:
            new_tokens = op(tokens, plan.op_probability, rng)
        new_answer = " ".join(new_tokens)
    return QAPair(
        question=pair.question,
        answer=new_answer,
        clarity=pair.clarity,
        evasion=pair.evasion,
        affirmative_question=pair.affirmative_question,
        multiple_questions=pair.multiple_questions,
        source=Source.CLAUDE_SYNTHETIC,
        sample_weight=assign_sample_weights(Source.CLAUDE_SYNTHETIC),
        meta={"features": pair.meta.get("features", "heuristic"), "strategy": "lexical"},
    )


# ---------------------------------------------------------------------------
# rhetorical frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RhetoricalFrame:
    """An answer skeleton with at least one topic slot.

    origin_count is the number of corpus answers that collapse to this
    skeleton.
    """

    template: str
    label: ClarityLabel
    origin_count: int

    def __post_init__(self) -> None:
        if not self.template.strip():
            raise ValueError("frame template must be non-empty")
        if SLOT not in self.template:
            raise ValueError(f"frame template must contain {SLOT}")


@lru_cache(maxsize=None)
def frame_words(path: str | None = None) -> frozenset[str]:
    """Stop-pattern list: tokens kept verbatim when mining answer skeletons."""
    if path:
        text = Path(path).read_text("utf-8")
    else:
        text = resources.files("clarity.resources").joinpath("frame_words.txt").read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


_STRIP_PUNCT = re.compile(r"^\W+|\W+$")


def _skeleton(answer: str, keep: frozenset[str]) -> str | None:
    """Replace maximal runs of content tokens with the topic slot."""
    parts: list[str] = []
    in_content_run = False
    for token in answer.split():
        bare = _STRIP_PUNCT.sub("", token).lower()
        if bare and bare not in keep:
            if not in_content_run:
                parts.append(SLOT)
                in_content_run = True
        else:
            parts.append(token)
            in_content_run = False
    if SLOT not in parts:
        return None
    return " ".join(parts)


def extract_frames(
    dataset: Dataset,
    label: ClarityLabel,
    min_support: int = 1,
    stop_pattern_path: str | None = None,
) -> list[RhetoricalFrame]:
    """Mine frequent answer skeletons for one class.

    Content spans (runs of tokens outside the stop-pattern list) are replaced
    with topic slots; skeletons are counted case-insensitively and returned
    with support >= min_support, highest support first, ties lexicographic.
    """
    keep = frame_words(stop_pattern_path)
    support: dict[str, int] = {}
    surface: dict[str, str] = {}
    for pair in dataset:
        if pair.clarity != label:
            continue
        skeleton = _skeleton(pair.answer, keep)
        if skeleton is None:
            continue
        key = skeleton.lower()
        support[key] = support.get(key, 0) + 1
        surface.setdefault(key, skeleton)
    frames = [
        RhetoricalFrame(template=surface[key], label=label, origin_count=count)
        for key, count in support.items()
        if count >= min_support
    ]
    frames.sort(key=lambda f: (-f.origin_count, f.template))
    return frames


def fallback_frames(dataset: Dataset, label: ClarityLabel) -> list[RhetoricalFrame]:
    """Whole-answer templates for classes where skeleton mining finds nothing."""
    seen: dict[str, int] = {}
    for pair in dataset:
        if pair.clarity != label:
            continue
        template = f"On {SLOT}, {pair.answer[:1].lower()}{pair.answer[1:]}"
        seen[template] = seen.get(template, 0) + 1
    frames = [
        RhetoricalFrame(template=t, label=label, origin_count=c) for t, c in seen.items()
    ]
    frames.sort(key=lambda f: (-f.origin_count, f.template))
    return frames


# ---------------------------------------------------------------------------
# frame x context synthesis
# ---------------------------------------------------------------------------


class GeneratorClient(Protocol):
    """External text generator. Implementations either behave
    deterministically under a fixed seed or declare themselves nondeterministic."""

    name: str
    deterministic: bool

    def generate(self, prompt: str) -> str: ...


class HttpGeneratorClient:
    """Minimal JSON-over-HTTP generator client.

    POSTs {"model": ..., "prompt": ...} to the endpoint and expects a JSON
    body with a "text" field. Credentials come from the environment only.
    """

    deterministic = False

    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.name = model
        self._api_key = api_key
        self._timeout = timeout

    def generate(self, prompt: str) -> str:
        import requests

        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        response = requests.post(
            self.endpoint,
            json={"model": self.name, "prompt": prompt},
            headers=headers,
            timeout=self._timeout,
        )
        response.raise_for_status()
        return response.json()["text"]


QUESTION_TEMPLATES: tuple[str, ...] = (
    "Will you address {TOPIC}?",
    "What is your position on {TOPIC}?",
    "Can you give specifics about {TOPIC}?",
    "Do you plan to act on {TOPIC}?",
    "How will your administration handle {TOPIC}?",
)


@lru_cache(maxsize=1)
def default_contexts() -> tuple[str, ...]:
    text = resources.files("clarity.resources").joinpath("political_contexts.txt").read_text("utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


def _synthesis_prompt(frame: RhetoricalFrame, context: str) -> str:
    return (
        f"Political context: {context}\n"
        f"Answer template: {frame.template}\n"
        f"Target clarity class: {clarity_name(frame.label)}\n"
        "Write one interview answer that instantiates the template for this "
        "context while keeping the clarity class. Reply with the answer text only."
    )


def casa_generate(
    frames: Sequence[RhetoricalFrame],
    contexts: Sequence[str],
    n: int,
    client: GeneratorClient | None = None,
    rng: random.Random | None = None,
    retries: int = 2,
) -> list[QAPair]:
    """Produce exactly n synthetic records from frames and randomized contexts.

    Offline (no client): slots are filled with uniformly drawn contexts and a
    question is synthesized from the same context via fixed interrogative
    templates; deterministic given the rng seed. Online: the answer text comes
    from the client, retried up to ``retries`` extra times per record; on
    exhaustion everything generated so far is discarded.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return []
    if not frames:
        raise GenerationError("no frames to generate from")
    if not contexts:
        raise GenerationError("context list is empty")
    rng = rng or random.Random(0)

    out: list[QAPair] = []
    for _ in range(n):
        frame = frames[rng.randrange(len(frames))]
        context = contexts[rng.randrange(len(contexts))]
        question = QUESTION_TEMPLATES[rng.randrange(len(QUESTION_TEMPLATES))].replace(
            SLOT, context
        )
        if client is None:
            # fill the first slot with the question's context, any further
            # slots with fresh draws, so multi-slot frames do not stutter
            answer = frame.template.replace(SLOT, context, 1)
            while SLOT in answer:
                answer = answer.replace(SLOT, contexts[rng.randrange(len(contexts))], 1)
            generator_name = "offline-template"
        else:
            answer = _client_generate(client, frame, context, retries)
            generator_name = client.name
        extracted = extract_boolean_features(question)
        out.append(
            QAPair(
                question=question,
                answer=answer,
                clarity=frame.label,
                affirmative_question=extracted.affirmative_question,
                multiple_questions=extracted.multiple_questions,
                source=Source.GEMINI_SYNTHETIC,
                sample_weight=assign_sample_weights(Source.GEMINI_SYNTHETIC),
                meta={"features": "heuristic", "strategy": "frame", "generator": generator_name},
            )
        )
    return out


def _client_generate(
    client: GeneratorClient, frame: RhetoricalFrame, context: str, retries: int
) -> str:
    prompt = _synthesis_prompt(frame, context)
    last_error: Exception | None = None
    for _ in range(retries + 1):
        try:
            text = normalize_text(client.generate(prompt))
            if text:
                return text
            last_error = GenerationError("client returned empty text")
        except Exception as exc:  # client errors are opaque; retry then give up
            last_error = exc
    raise GenerationError(f"generator client {client.name!r} failed: {last_error}")


# ---------------------------------------------------------------------------
# plan execution
# ---------------------------------------------------------------------------


def lint_synthetic(records: Sequence[QAPair], existing: Dataset) -> list[str]:
    """Automated quality checks standing in for manual inspection.

    Flags answers outside a sane length band, hierarchy violations (defended
    in depth; QAPair already rejects them), and duplicates of existing or
    other synthetic records. Returns human-readable issue strings.
    """
    issues: list[str] = []
    seen = {(p.question, p.answer, p.source) for p in existing}
    for index, record in enumerate(records):
        n_tokens = len(record.answer.split())
        if n_tokens < 2:
            issues.append(f"record {index}: answer has under 2 tokens")
        if n_tokens > 300:
            issues.append(f"record {index}: answer exceeds 300 tokens")
        key = (record.question, record.answer, record.source)
        if key in seen:
            issues.append(f"record {index}: duplicate of an existing record")
        seen.add(key)
    return issues


def run_plan(
    train: Dataset,
    plan: AugmentationPlan,
    client: GeneratorClient | None = None,
    contexts: Sequence[str] | None = None,
    thesaurus: Thesaurus | None = None,
) -> list[QAPair]:
    """Execute an augmentation plan against the training split only.

    Results are deterministic for a fixed plan seed: each synthetic record
    draws its own child seed from (plan.seed, class, index), so parallel and
    serial execution would merge to the same output.
    """
    distribution = class_distribution(train)
    synthetic: list[QAPair] = []
    for label in sorted(plan.targets, key=int):
        current = distribution.get(label, (0, 0.0))[0]
        target = plan.targets[label]
        if target < current:
            raise ValueError(
                f"target {target} for {clarity_name(label)} below current count {current}"
            )
        needed = target - current
        if needed == 0:
            continue
        if plan.source == Source.CLAUDE_SYNTHETIC:
            synthetic.extend(_run_lexical(train, label, needed, plan, thesaurus))
        elif plan.source == Source.GEMINI_SYNTHETIC:
            synthetic.extend(_run_frames(train, label, needed, plan, client, contexts))
        else:
            raise ValueError("plan source must be a synthetic source")
    issues = lint_synthetic(synthetic, train)
    if issues:
        logger.warning("synthetic lint found %d issues (first: %s)", len(issues), issues[0])
    return synthetic


def _run_lexical(
    train: Dataset,
    label: ClarityLabel,
    needed: int,
    plan: AugmentationPlan,
    thesaurus: Thesaurus | None,
) -> list[QAPair]:
    # Only original records are paraphrased; synthetic ones never re-enter.
    sources = [p for p in train if p.clarity == label and p.source == Source.ORIGINAL]
    if not sources:
        raise GenerationError(f"no original records with label {clarity_name(label)}")
    order_rng = random.Random(child_seed(plan.seed, "order", int(label)))
    order = list(range(len(sources)))
    order_rng.shuffle(order)
    out: list[QAPair] = []
    for i in range(needed):
        pair = sources[order[i % len(sources)]]
        rng = random.Random(child_seed(plan.seed, int(label), i))
        out.append(eda_augment(pair, plan, rng, thesaurus))
    return out


def _run_frames(
    train: Dataset,
    label: ClarityLabel,
    needed: int,
    plan: AugmentationPlan,
    client: GeneratorClient | None,
    contexts: Sequence[str] | None,
) -> list[QAPair]:
    # mine only from original records: synthetic text must never seed more
    # synthetic text across repeated augmentation runs
    originals = Dataset(
        tuple(p for p in train if p.source == Source.ORIGINAL), name=train.name
    )
    frames = extract_frames(originals, label, min_support=2)
    if not frames:
        frames = extract_frames(originals, label, min_support=1)
    if not frames:
        frames = fallback_frames(originals, label)
    rng = random.Random(child_seed(plan.seed, "frames", int(label)))
    return casa_generate(
        frames, contexts or default_contexts(), needed, client=client, rng=rng
    )
