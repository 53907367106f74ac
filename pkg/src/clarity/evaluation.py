"""Evaluation: confusion matrices, per-class PRF, macro F1, and reports.

Counts are exact integers; derived rates use float arithmetic with the
convention that any zero denominator yields 0.0 rather than an error, so
classes with no support or no predictions still appear in reports. Rendered
percentages round half away from zero to one decimal, matching how results
tables are usually typeset.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Sequence

from .data import QAPair
from .taxonomy import ClarityLabel, clarity_name


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


def _default_names(size: int) -> tuple[str, ...]:
    if size == len(ClarityLabel):
        return tuple(clarity_name(ClarityLabel(i)) for i in range(size))
    return tuple(f"class {i}" for i in range(size))


class ConfusionMatrix:
    """Square count matrix, rows gold, columns predicted."""

    def __init__(self, counts: Sequence[Sequence[int]], names: Sequence[str] | None = None):
        size = len(counts)
        if size == 0:
            raise ValueError("matrix must be non-empty")
        for row in counts:
            if len(row) != size:
                raise ValueError("matrix must be square")
            for cell in row:
                if cell < 0 or cell != int(cell):
                    raise ValueError("cells must be non-negative integers")
        if names is not None and len(names) != size:
            raise ValueError("label name count does not match matrix size")
        self.counts = tuple(tuple(int(c) for c in row) for row in counts)
        self.size = size
        self.names = tuple(names) if names is not None else _default_names(size)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ConfusionMatrix) and self.counts == other.counts

    def __repr__(self) -> str:
        return f"ConfusionMatrix({[list(r) for r in self.counts]})"

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def support(self, label: int) -> int:
        return sum(self.counts[label])

    def predicted_total(self, label: int) -> int:
        return sum(row[label] for row in self.counts)

    def correct(self) -> int:
        return sum(self.counts[i][i] for i in range(self.size))

    def accuracy(self) -> float:
        return self.correct() / self.total if self.total else 0.0

    def off_diagonal_total(self) -> int:
        return self.total - self.correct()


def confusion_matrix(
    gold: Sequence[int],
    predicted: Sequence[int],
    num_classes: int,
    names: Sequence[str] | None = None,
) -> ConfusionMatrix:
    if len(gold) != len(predicted):
        raise ValueError("gold and predicted lengths differ")
    counts = [[0] * num_classes for _ in range(num_classes)]
    for g, p in zip(gold, predicted):
        if not (0 <= g < num_classes and 0 <= p < num_classes):
            raise ValueError(f"label out of range: gold={g} predicted={p}")
        counts[g][p] += 1
    return ConfusionMatrix(counts, names)


def per_class_prf(matrix: ConfusionMatrix) -> list[ClassMetrics]:
    """Precision, recall, F1, and support per class; 0/0 counts as 0.0."""
    out: list[ClassMetrics] = []
    for label in range(matrix.size):
        tp = matrix.counts[label][label]
        predicted = matrix.predicted_total(label)
        support = matrix.support(label)
        precision = tp / predicted if predicted else 0.0
        recall = tp / support if support else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if (precision + recall) > 0
            else 0.0
        )
        out.append(ClassMetrics(precision, recall, f1, support))
    return out


def macro_f1(matrix: ConfusionMatrix) -> float:
    """Unweighted mean of per-class F1, zero-support classes included."""
    metrics = per_class_prf(matrix)
    return sum(m.f1 for m in metrics) / len(metrics)


def weighted_f1(matrix: ConfusionMatrix) -> float:
    metrics = per_class_prf(matrix)
    total = matrix.total
    if total == 0:
        return 0.0
    return sum(m.f1 * m.support for m in metrics) / total


def round_percent(value: float, places: int = 1) -> str:
    """Percentage string with half-away-from-zero rounding: 0.66883 -> '66.9'."""
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(str(value * 100)).quantize(quantum, rounding=ROUND_HALF_UP))


def _count_with_percent(count: int, total: int) -> str:
    fraction = count / total if total else 0.0
    return f"{count} ({round_percent(fraction)}%)"


# ---------------------------------------------------------------------------
# error analysis
# ---------------------------------------------------------------------------


def error_buckets(
    pairs: Sequence[tuple[QAPair, int]],
    confidences: Sequence[float] | None = None,
) -> dict[tuple[int, int], list[QAPair]]:
    """Group misclassified records by (gold, predicted) label codes.

    Each bucket keeps input order, or confidence-descending order when
    ``confidences`` (aligned with ``pairs``) is given. Bucket sizes sum to the
    number of misclassified records.
    """
    if confidences is not None and len(confidences) != len(pairs):
        raise ValueError("confidences must align with pairs")
    staged: dict[tuple[int, int], list[tuple[float, int, QAPair]]] = {}
    for index, (pair, predicted) in enumerate(pairs):
        if pair.clarity is None:
            raise ValueError(f"record {index} has no gold label")
        gold = int(pair.clarity)
        if gold == int(predicted):
            continue
        confidence = confidences[index] if confidences is not None else 0.0
        staged.setdefault((gold, int(predicted)), []).append((confidence, index, pair))
    out: dict[tuple[int, int], list[QAPair]] = {}
    for key, members in staged.items():
        if confidences is not None:
            members.sort(key=lambda m: (-m[0], m[1]))
        out[key] = [pair for _, _, pair in members]
    return out


@dataclass(frozen=True)
class ErrorCell:
    gold: int
    predicted: int
    count: int
    share_of_errors: float


def error_cells(matrix: ConfusionMatrix) -> list[ErrorCell]:
    """Off-diagonal cells ordered by count descending, then (gold, predicted)."""
    total_errors = matrix.off_diagonal_total()
    cells: list[ErrorCell] = []
    for g in range(matrix.size):
        for p in range(matrix.size):
            if g == p or matrix.counts[g][p] == 0:
                continue
            count = matrix.counts[g][p]
            share = count / total_errors if total_errors else 0.0
            cells.append(ErrorCell(g, p, count, share))
    cells.sort(key=lambda c: (-c.count, c.gold, c.predicted))
    return cells


def pairwise_error_share(
    matrix: ConfusionMatrix,
    first: int,
    second: int,
    total_errors: int | None = None,
) -> float:
    """Share of all errors confused between one unordered pair of classes.

    The denominator defaults to the matrix's own off-diagonal total; pass
    ``total_errors`` to compare against an externally reported error count.
    """
    if first == second:
        raise ValueError("pair must name two distinct classes")
    denominator = matrix.off_diagonal_total() if total_errors is None else total_errors
    if denominator <= 0:
        return 0.0
    between = matrix.counts[first][second] + matrix.counts[second][first]
    return between / denominator


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _counts_grid(matrix: ConfusionMatrix, markdown: bool) -> list[str]:
    names = matrix.names
    total = matrix.total
    row_totals = [matrix.support(i) for i in range(matrix.size)]
    col_totals = [matrix.predicted_total(i) for i in range(matrix.size)]
    header = ["gold \\ predicted", *names, "total"]
    rows = [
        [names[g], *[str(c) for c in matrix.counts[g]], _count_with_percent(row_totals[g], total)]
        for g in range(matrix.size)
    ]
    footer = ["total", *[_count_with_percent(c, total) for c in col_totals], str(total)]
    table = [header, *rows, footer]
    if markdown:
        lines = ["| " + " | ".join(table[0]) + " |"]
        lines.append("| --- " + "| ---: " * (len(table[0]) - 1) + "|")
        lines.extend("| " + " | ".join(row) + " |" for row in table[1:])
        return lines
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    return ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in table]


def render_report(
    matrix: ConfusionMatrix,
    names: Sequence[str] | None = None,
    style: str = "text",
    extras: Mapping[str, float] | None = None,
) -> str:
    """Byte-deterministic evaluation summary.

    ``style`` is "text" (fixed-width) or "markdown" (pipe tables). The report
    carries the count grid with row and column totals (counts plus one-decimal
    percentages), per-class precision/recall/F1/support, accuracy, macro F1,
    and the largest error cells.
    """
    if style not in ("text", "markdown"):
        raise ValueError("style must be 'text' or 'markdown'")
    if names is not None:
        matrix = ConfusionMatrix(matrix.counts, names)
    labels = matrix.names
    metrics = per_class_prf(matrix)
    markdown = style == "markdown"
    lines: list[str] = []

    lines.append("Confusion matrix" if not markdown else "## Confusion matrix")
    lines.append("")
    lines.extend(_counts_grid(matrix, markdown))
    lines.append("")

    lines.append("Per-class metrics" if not markdown else "## Per-class metrics")
    lines.append("")
    if markdown:
        lines.append("| class | precision | recall | F1 | support |")
        lines.append("| --- | ---: | ---: | ---: | ---: |")
        for name, m in zip(labels, metrics):
            lines.append(
                f"| {name} | {m.precision:.4f} | {m.recall:.4f} "
                f"| {m.f1:.4f} | {m.support} |"
            )
    else:
        width = max(len(n) for n in (*labels, "class"))
        lines.append(f"{'class':<{width}}  precision  recall  F1      support")
        for name, m in zip(labels, metrics):
            lines.append(
                f"{name:<{width}}  {m.precision:<9.4f}  {m.recall:<6.4f}"
                f"  {m.f1:<6.4f}  {m.support}"
            )

    lines.append("")
    lines.append(f"Accuracy: {matrix.accuracy():.4f}")
    lines.append(f"Macro F1: {macro_f1(matrix):.4f}")
    lines.append(f"Weighted F1: {weighted_f1(matrix):.4f}")
    if extras:
        for key in sorted(extras):
            lines.append(f"{key}: {extras[key]:.4f}")

    cells = error_cells(matrix)
    if cells:
        lines.append("")
        lines.append("Largest error cells" if not markdown else "## Largest error cells")
        for cell in cells[:5]:
            lines.append(
                f"  {labels[cell.gold]} -> {labels[cell.predicted]}: "
                f"{cell.count} ({round_percent(cell.share_of_errors)}% of errors)"
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# flat-file round trips
# ---------------------------------------------------------------------------


def write_metrics(metrics: Mapping[str, float], path: str | Path) -> None:
    """key=value lines, keys sorted, repr floats for exact round trips."""
    lines = [f"{key}={metrics[key]!r}" for key in sorted(metrics)]
    Path(path).write_text("\n".join(lines) + "\n", "utf-8")


def read_metrics(path: str | Path) -> dict[str, float]:
    out: dict[str, float] = {}
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = float(value.strip())
    return out


def write_matrix(matrix: ConfusionMatrix, path: str | Path) -> None:
    """Tab-separated counts with a gold/predicted header row and column."""
    lines = ["gold\\predicted\t" + "\t".join(matrix.names)]
    for label, row in zip(matrix.names, matrix.counts):
        lines.append(label + "\t" + "\t".join(str(c) for c in row))
    Path(path).write_text("\n".join(lines) + "\n", "utf-8")


def read_matrix(path: str | Path) -> ConfusionMatrix:
    lines = [l for l in Path(path).read_text("utf-8").splitlines() if l.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path} does not hold a matrix")
    names = lines[0].split("\t")[1:]
    counts = [[int(c) for c in line.split("\t")[1:]] for line in lines[1:]]
    return ConfusionMatrix(counts, names or None)
