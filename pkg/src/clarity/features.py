"""Boolean discourse features with a heuristic fallback.

Dataset-supplied feature columns always win; the extractor here only fills
gaps. The auxiliary-verb list lives in a versioned resource file so changing
it is a configuration change, not a code change.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path


class FeatureProvenance(Enum):
    DATASET_COLUMN = "dataset"
    HEURISTIC = "heuristic"


@dataclass(frozen=True)
class BooleanFeatures:
    affirmative_question: bool
    multiple_questions: bool
    provenance: FeatureProvenance


_CLAUSE_SPLIT = re.compile(r"([.?!;])")
_WORD = re.compile(r"[A-Za-z']+")


def _resource_text(name: str) -> str:
    return resources.files("clarity.resources").joinpath(name).read_text("utf-8")


@lru_cache(maxsize=None)
def auxiliary_words(path: str | None = None) -> frozenset[str]:
    """The frozen auxiliary/modal word list, one word per line."""
    text = Path(path).read_text("utf-8") if path else _resource_text("auxiliary_words.txt")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def _clauses(text: str) -> list[tuple[str, str]]:
    """Split into (clause, terminator) pairs; terminator '' for the tail."""
    parts = _CLAUSE_SPLIT.split(text)
    out = []
    for i in range(0, len(parts), 2):
        clause = parts[i].strip()
        terminator = parts[i + 1] if i + 1 < len(parts) else ""
        if clause:
            out.append((clause, terminator))
    return out


def extract_boolean_features(question: str, aux_path: str | None = None) -> BooleanFeatures:
    """Heuristic extraction of the two boolean discourse features.

    affirmative_question: the first interrogative clause starts with an
    auxiliary/modal from the frozen word list. multiple_questions: at least
    two '?' characters or at least two interrogative clauses.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    aux = auxiliary_words(aux_path)
    clauses = _clauses(question)
    interrogative = [c for c, term in clauses if term == "?"]

    first = interrogative[0] if interrogative else (clauses[0][0] if clauses else question)
    match = _WORD.search(first)
    affirmative = bool(match) and match.group(0).lower() in aux

    multiple = question.count("?") >= 2 or len(interrogative) >= 2
    return BooleanFeatures(affirmative, multiple, FeatureProvenance.HEURISTIC)


def heuristic_agreement(pairs) -> dict[str, float]:
    """Agreement rate between dataset-supplied features and the heuristic.

    Only records whose features came from dataset columns are counted. The
    corpus's own extraction procedure is unknown, so agreement is something to
    measure and report rather than assume.
    """
    n = agree_affirmative = agree_multiple = 0
    for pair in pairs:
        if pair.meta.get("features") != FeatureProvenance.DATASET_COLUMN.value:
            continue
        extracted = extract_boolean_features(pair.question)
        n += 1
        agree_affirmative += extracted.affirmative_question == pair.affirmative_question
        agree_multiple += extracted.multiple_questions == pair.multiple_questions
    if n == 0:
        return {"records_compared": 0.0}
    return {
        "records_compared": float(n),
        "affirmative_question": agree_affirmative / n,
        "multiple_questions": agree_multiple / n,
    }
