"""Two-level label taxonomy: three clarity classes and nine evasion techniques.

Clarity codes are stable integers used in every confusion matrix and
prediction file. Each evasion technique maps to exactly one clarity class.
"""

from __future__ import annotations

from enum import IntEnum


class ClarityLabel(IntEnum):
    CLEAR_REPLY = 0
    AMBIVALENT = 1
    CLEAR_NON_REPLY = 2


class EvasionLabel(IntEnum):
    EXPLICIT = 0
    IMPLICIT = 1
    GENERAL = 2
    PARTIAL = 3
    DODGING = 4
    DEFLECTION = 5
    DECLINING = 6
    CLAIMS_IGNORANCE = 7
    CLARIFICATION = 8


CLARITY_NAMES: dict[ClarityLabel, str] = {
    ClarityLabel.CLEAR_REPLY: "Clear Reply",
    ClarityLabel.AMBIVALENT: "Ambivalent",
    ClarityLabel.CLEAR_NON_REPLY: "Clear Non-Reply",
}

EVASION_NAMES: dict[EvasionLabel, str] = {
    EvasionLabel.EXPLICIT: "Explicit",
    EvasionLabel.IMPLICIT: "Implicit",
    EvasionLabel.GENERAL: "General",
    EvasionLabel.PARTIAL: "Partial",
    EvasionLabel.DODGING: "Dodging",
    EvasionLabel.DEFLECTION: "Deflection",
    EvasionLabel.DECLINING: "Declining",
    EvasionLabel.CLAIMS_IGNORANCE: "Claims ignorance",
    EvasionLabel.CLARIFICATION: "Clarification",
}

_EVASION_TO_CLARITY: dict[EvasionLabel, ClarityLabel] = {
    EvasionLabel.EXPLICIT: ClarityLabel.CLEAR_REPLY,
    EvasionLabel.IMPLICIT: ClarityLabel.AMBIVALENT,
    EvasionLabel.GENERAL: ClarityLabel.AMBIVALENT,
    EvasionLabel.PARTIAL: ClarityLabel.AMBIVALENT,
    EvasionLabel.DODGING: ClarityLabel.AMBIVALENT,
    EvasionLabel.DEFLECTION: ClarityLabel.AMBIVALENT,
    EvasionLabel.DECLINING: ClarityLabel.CLEAR_NON_REPLY,
    EvasionLabel.CLAIMS_IGNORANCE: ClarityLabel.CLEAR_NON_REPLY,
    EvasionLabel.CLARIFICATION: ClarityLabel.CLEAR_NON_REPLY,
}

# Spellings seen in the wild for the same labels.
_CLARITY_ALIASES = {
    "clear reply": ClarityLabel.CLEAR_REPLY,
    "ambivalent": ClarityLabel.AMBIVALENT,
    "ambiguous": ClarityLabel.AMBIVALENT,
    "clear non reply": ClarityLabel.CLEAR_NON_REPLY,
}

_EVASION_ALIASES = {
    "explicit": EvasionLabel.EXPLICIT,
    "implicit": EvasionLabel.IMPLICIT,
    "general": EvasionLabel.GENERAL,
    "partial": EvasionLabel.PARTIAL,
    "partial half answer": EvasionLabel.PARTIAL,
    "dodging": EvasionLabel.DODGING,
    "deflection": EvasionLabel.DEFLECTION,
    "declining": EvasionLabel.DECLINING,
    "declining to answer": EvasionLabel.DECLINING,
    "claims ignorance": EvasionLabel.CLAIMS_IGNORANCE,
    "clarification": EvasionLabel.CLARIFICATION,
}


def map_evasion_to_clarity(evasion: EvasionLabel) -> ClarityLabel:
    """Return the clarity class that the evasion technique belongs to."""
    return _EVASION_TO_CLARITY[EvasionLabel(evasion)]


def _normalize(text: str) -> str:
    for ch in "-_/.,":
        text = text.replace(ch, " ")
    return " ".join(text.split()).lower()


def parse_clarity(text: str) -> ClarityLabel:
    """Parse a clarity label string, tolerant of case and separators."""
    key = _normalize(text)
    if key not in _CLARITY_ALIASES:
        raise ValueError(f"unknown clarity label: {text!r}")
    return _CLARITY_ALIASES[key]


def parse_evasion(text: str) -> EvasionLabel:
    """Parse an evasion label string, tolerant of case and separators."""
    key = _normalize(text)
    if key not in _EVASION_ALIASES:
        raise ValueError(f"unknown evasion label: {text!r}")
    return _EVASION_ALIASES[key]


def clarity_name(label: ClarityLabel) -> str:
    return CLARITY_NAMES[ClarityLabel(label)]


def evasion_name(label: EvasionLabel) -> str:
    return EVASION_NAMES[EvasionLabel(label)]
