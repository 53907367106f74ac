"""Dataset ingestion, input formatting, stratified splitting, and prediction io.

On-disk format is delimiter-separated columnar text (UTF-8, tab by default)
with a header row. Column names are configurable through a schema map so
externally produced files can be ingested without rewriting them.
"""

from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .features import extract_boolean_features
from .taxonomy import (
    ClarityLabel,
    EvasionLabel,
    clarity_name,
    evasion_name,
    map_evasion_to_clarity,
    parse_clarity,
    parse_evasion,
)

logger = logging.getLogger(__name__)


class DataError(Exception):
    """Malformed input data or an ill-posed data operation."""


class Source(Enum):
    ORIGINAL = "original"
    GEMINI_SYNTHETIC = "gemini_synthetic"
    CLAUDE_SYNTHETIC = "claude_synthetic"


#: Per-source confidence weight applied to each sample's loss contribution.
SOURCE_WEIGHTS = {
    Source.ORIGINAL: 1.0,
    Source.GEMINI_SYNTHETIC: 0.7,
    Source.CLAUDE_SYNTHETIC: 0.5,
}


def normalize_text(text: str) -> str:
    """Trim and collapse internal whitespace to single spaces. No lowercasing."""
    return " ".join(text.split())


@dataclass(frozen=True)
class QAPair:
    """One question-answer record with labels, features, and provenance.

    ``affirmative_question`` and ``multiple_questions`` are None until filled,
    either from dataset columns or from the heuristic extractor; ``meta``
    records which one it was under the ``features`` key.
    """

    question: str
    answer: str
    clarity: ClarityLabel | None = None
    evasion: EvasionLabel | None = None
    affirmative_question: bool | None = None
    multiple_questions: bool | None = None
    source: Source = Source.ORIGINAL
    sample_weight: float | None = None
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "question", normalize_text(self.question))
        object.__setattr__(self, "answer", normalize_text(self.answer))
        if not self.question or not self.answer:
            raise DataError("question and answer must be non-empty after trimming")
        if self.evasion is not None and self.clarity is not None:
            expected = map_evasion_to_clarity(self.evasion)
            if expected != self.clarity:
                raise DataError(
                    f"hierarchy violation: evasion {evasion_name(self.evasion)!r} "
                    f"belongs to {clarity_name(expected)!r}, not "
                    f"{clarity_name(self.clarity)!r}"
                )
        if self.sample_weight is None:
            object.__setattr__(self, "sample_weight", SOURCE_WEIGHTS[self.source])
        if not 0.0 < self.sample_weight <= 1.0:
            raise DataError(f"sample_weight must be in (0, 1], got {self.sample_weight}")

    @property
    def record_id(self) -> str:
        return self.meta.get("id", "")


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of QAPair records."""

    records: tuple[QAPair, ...]
    name: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[QAPair]:
        return iter(self.records)

    def __getitem__(self, index: int) -> QAPair:
        return self.records[index]

    def subset(self, indices: Iterable[int], name: str = "") -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), name or self.name)


#: Logical field -> default column name. Override entries via the schema map.
DEFAULT_SCHEMA = {
    "id": "id",
    "question": "question",
    "answer": "answer",
    "clarity": "clarity_label",
    "evasion": "evasion_label",
    "affirmative": "affirmative_questions",
    "multiple": "multiple_questions",
    "source": "source",
    "sample_weight": "sample_weight",
}

_TRUE_STRINGS = {"1", "true", "yes"}
_FALSE_STRINGS = {"0", "false", "no", ""}


def _parse_bool(value: str, column: str, row_number: int) -> bool:
    v = value.strip().lower()
    if v in _TRUE_STRINGS:
        return True
    if v in _FALSE_STRINGS:
        return False
    raise DataError(f"row {row_number}: cannot parse boolean {value!r} in column {column!r}")


def _parse_source(value: str, row_number: int) -> Source:
    v = value.strip().lower()
    for source in Source:
        if v == source.value:
            return source
    raise DataError(f"row {row_number}: unknown source {value!r}")


def load_dataset(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    delimiter: str = "\t",
    name: str | None = None,
) -> Dataset:
    """Load a columnar text file into a Dataset.

    Missing boolean-feature columns fall back to the heuristic extractor;
    missing label columns leave records unlabeled. Raises DataError with the
    offending row number for malformed rows and names any unknown label string.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    columns = dict(DEFAULT_SCHEMA)
    columns.update(schema or {})

    with path.open("r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle, delimiter=delimiter)
        if reader.fieldnames is None:
            logger.warning("dataset file %s is empty", path)
            return Dataset((), name or path.stem)
        header = set(reader.fieldnames)
        for required in ("question", "answer"):
            if columns[required] not in header:
                raise DataError(
                    f"{path}: missing required column {columns[required]!r} "
                    f"(have {sorted(header)})"
                )
        has = {key: columns[key] in header for key in columns}

        records: list[QAPair] = []
        for row_number, row in enumerate(reader, start=2):  # header is line 1
            if any(v is None for v in row.values()):
                raise DataError(f"row {row_number}: fewer fields than header columns")
            if None in row:
                raise DataError(f"row {row_number}: more fields than header columns")
            records.append(_row_to_pair(row, columns, has, row_number))

    if not records:
        logger.warning("dataset file %s contains no data rows", path)
    return Dataset(tuple(records), name or path.stem)


def _row_to_pair(
    row: Mapping[str, str],
    columns: Mapping[str, str],
    has: Mapping[str, bool],
    row_number: int,
) -> QAPair:
    question = row[columns["question"]]
    answer = row[columns["answer"]]
    if not question.strip() or not answer.strip():
        raise DataError(f"row {row_number}: empty question or answer")

    clarity = evasion = None
    if has["clarity"] and row[columns["clarity"]].strip():
        try:
            clarity = parse_clarity(row[columns["clarity"]])
        except ValueError as exc:
            raise DataError(f"row {row_number}: {exc}") from exc
    if has["evasion"] and row[columns["evasion"]].strip():
        try:
            evasion = parse_evasion(row[columns["evasion"]])
        except ValueError as exc:
            raise DataError(f"row {row_number}: {exc}") from exc

    meta: dict[str, str] = {}
    if has["id"] and row[columns["id"]].strip():
        meta["id"] = row[columns["id"]].strip()

    if has["affirmative"] and has["multiple"]:
        affirmative = _parse_bool(row[columns["affirmative"]], columns["affirmative"], row_number)
        multiple = _parse_bool(row[columns["multiple"]], columns["multiple"], row_number)
        meta["features"] = "dataset"
    else:
        extracted = extract_boolean_features(question)
        affirmative = extracted.affirmative_question
        multiple = extracted.multiple_questions
        meta["features"] = "heuristic"

    source = Source.ORIGINAL
    if has["source"] and row[columns["source"]].strip():
        source = _parse_source(row[columns["source"]], row_number)
    weight = None
    if has["sample_weight"] and row[columns["sample_weight"]].strip():
        try:
            weight = float(row[columns["sample_weight"]])
        except ValueError as exc:
            raise DataError(f"row {row_number}: bad sample_weight") from exc

    try:
        return QAPair(
            question=question,
            answer=answer,
            clarity=clarity,
            evasion=evasion,
            affirmative_question=affirmative,
            multiple_questions=multiple,
            source=source,
            sample_weight=weight,
            meta=meta,
        )
    except DataError as exc:
        raise DataError(f"row {row_number}: {exc}") from exc


def write_dataset(dataset: Dataset, path: str | Path, delimiter: str = "\t") -> Path:
    """Write a Dataset in the canonical column layout. Round-trips with load_dataset.

    Records whose boolean features were never filled get the heuristic values
    at write time, so the file always carries concrete 0/1 columns.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(DEFAULT_SCHEMA.values())
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter=delimiter, lineterminator="\n")
        writer.writerow(fields)
        for index, pair in enumerate(dataset):
            pair = with_heuristic_features(pair)
            writer.writerow(
                [
                    pair.meta.get("id", str(index)),
                    pair.question,
                    pair.answer,
                    clarity_name(pair.clarity) if pair.clarity is not None else "",
                    evasion_name(pair.evasion) if pair.evasion is not None else "",
                    int(pair.affirmative_question),
                    int(pair.multiple_questions),
                    pair.source.value,
                    repr(pair.sample_weight),
                ]
            )
    return path


def format_input(pair: QAPair, separator: str = "[SEP]") -> str:
    """Render the model input string: "Question: {q} {sep} Answer: {a}".

    Only trimming and single-space collapse are applied; any separator-like
    substrings inside the question or answer pass through verbatim.
    """
    return f"Question: {pair.question} {separator} Answer: {pair.answer}"


def class_distribution(dataset: Dataset) -> dict[ClarityLabel, tuple[int, float]]:
    """Count records per clarity class. Every record must be labeled."""
    counts = {label: 0 for label in ClarityLabel}
    for index, pair in enumerate(dataset):
        if pair.clarity is None:
            raise DataError(f"record {index} has no clarity label")
        counts[pair.clarity] += 1
    total = len(dataset)
    return {
        label: (count, count / total if total else 0.0)
        for label, count in counts.items()
        if count > 0
    }


def _largest_remainder_allocation(
    counts: Mapping[ClarityLabel, int], fraction: float, seats: int
) -> dict[ClarityLabel, int]:
    # Deterministic: largest fractional remainder first, label code breaks ties.
    quotas = {label: counts[label] * fraction for label in counts}
    allocation = {label: math.floor(q) for label, q in quotas.items()}
    remaining = seats - sum(allocation.values())
    order = sorted(counts, key=lambda lab: (-(quotas[lab] - allocation[lab]), int(lab)))
    for label in order[:remaining]:
        allocation[label] += 1
    return allocation


def stratified_split(
    dataset: Dataset,
    dev_fraction: float,
    seed: int,
    expected_classes: Sequence[ClarityLabel] | None = None,
) -> tuple[Dataset, Dataset]:
    """Split into (train, dev) preserving class proportions.

    Deterministic given ``seed``; the two parts partition the input. When
    ``expected_classes`` is given, any listed class absent from the data is an
    error (the downstream pipeline needs all of them represented).
    """
    if not 0.0 < dev_fraction < 1.0:
        raise DataError(f"dev_fraction must be in (0, 1), got {dev_fraction}")
    if len(dataset) == 0:
        raise DataError("cannot split an empty dataset")

    by_class: dict[ClarityLabel, list[int]] = {}
    for index, pair in enumerate(dataset):
        if pair.clarity is None:
            raise DataError(f"record {index} has no clarity label")
        by_class.setdefault(pair.clarity, []).append(index)

    if expected_classes:
        missing = [c for c in expected_classes if c not in by_class]
        if missing:
            names = ", ".join(clarity_name(c) for c in missing)
            raise DataError(f"class with 0 records: {names}")

    counts = {label: len(idx) for label, idx in by_class.items()}
    seats = math.floor(len(dataset) * dev_fraction + 0.5)
    allocation = _largest_remainder_allocation(counts, dev_fraction, seats)

    rng = random.Random(seed)
    dev_indices: list[int] = []
    for label in sorted(by_class, key=int):
        indices = list(by_class[label])
        rng.shuffle(indices)
        dev_indices.extend(indices[: allocation[label]])

    dev_set = set(dev_indices)
    train_indices = [i for i in range(len(dataset)) if i not in dev_set]
    return (
        dataset.subset(train_indices, f"{dataset.name}.train"),
        dataset.subset(sorted(dev_indices), f"{dataset.name}.dev"),
    )


def write_predictions(
    pairs: Sequence[tuple[QAPair, ClarityLabel]], path: str | Path
) -> Path:
    """Write one "id<TAB>label" line per pair. Ids default to the position."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for index, (pair, label) in enumerate(pairs):
            record_id = pair.record_id or str(index)
            handle.write(f"{record_id}\t{clarity_name(label)}\n")
    return path


def read_predictions(path: str | Path) -> list[tuple[str, ClarityLabel]]:
    """Read a prediction file written by write_predictions."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"prediction file not found: {path}")
    out: list[tuple[str, ClarityLabel]] = []
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"line {line_number}: expected 'id<TAB>label'")
            try:
                out.append((parts[0], parse_clarity(parts[1])))
            except ValueError as exc:
                raise DataError(f"line {line_number}: {exc}") from exc
    return out


def with_heuristic_features(pair: QAPair) -> QAPair:
    """Return the pair with boolean features filled in if absent."""
    if pair.affirmative_question is not None and pair.multiple_questions is not None:
        return pair
    extracted = extract_boolean_features(pair.question)
    meta = dict(pair.meta)
    meta["features"] = "heuristic"
    return replace(
        pair,
        affirmative_question=extracted.affirmative_question,
        multiple_questions=extracted.multiple_questions,
        meta=meta,
    )
