"""Clarity: classify how directly political interview answers address questions.

A two-level label scheme (three clarity classes over nine evasion techniques),
a feature-fused transformer classifier tuned for the heavy class imbalance of
real interview corpora, synthetic-minority augmentation, reference baselines,
and an evaluation and reporting harness.
"""

__version__ = "0.1.0"

from .data import (
    DataError,
    Dataset,
    QAPair,
    Source,
    SOURCE_WEIGHTS,
    class_distribution,
    format_input,
    load_dataset,
    stratified_split,
    write_dataset,
)
from .evaluation import (
    ConfusionMatrix,
    confusion_matrix,
    macro_f1,
    per_class_prf,
    render_report,
)
from .features import BooleanFeatures, extract_boolean_features
from .taxonomy import (
    ClarityLabel,
    EvasionLabel,
    clarity_name,
    evasion_name,
    map_evasion_to_clarity,
    parse_clarity,
    parse_evasion,
)

__all__ = [
    "__version__",
    "BooleanFeatures",
    "ClarityLabel",
    "ConfusionMatrix",
    "DataError",
    "Dataset",
    "EvasionLabel",
    "QAPair",
    "SOURCE_WEIGHTS",
    "Source",
    "clarity_name",
    "class_distribution",
    "confusion_matrix",
    "evasion_name",
    "extract_boolean_features",
    "format_input",
    "load_dataset",
    "macro_f1",
    "map_evasion_to_clarity",
    "parse_clarity",
    "parse_evasion",
    "per_class_prf",
    "render_report",
    "stratified_split",
    "write_dataset",
]
