"""Parse regulated model output into structured predictions.

Parsers are total: any input string yields a valid structure, never an
exception, so every consistency route stays comparable. Unresolvable labels
and unalignable values are kept as diagnostics instead of being silently
dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ontology import Ontology, SlotPair, Utterance

RESOLUTION_EXACT = "exact"
RESOLUTION_NORMALIZED = "normalized"
RESOLUTION_UNRESOLVED = "unresolved"

_INTENT_MARKER_RE = re.compile(r"intent\s*=\s*", re.IGNORECASE)
_STRIP_CHARS = " \t\r\n\"'[]()`‘’“”"


def normalize_label(label: str) -> str:
    """Case-fold and drop non-alphanumerics, so '-', '_', and spaces coincide."""
    return "".join(ch for ch in label.casefold() if ch.isalnum())


@dataclass(frozen=True)
class IntentPrediction:
    """The intent read from one reply; canonical is None when unresolved."""

    raw_text: str
    canonical: str | None
    resolution: str

    @property
    def is_resolved(self) -> bool:
        return self.resolution != RESOLUTION_UNRESOLVED

    @staticmethod
    def unresolved(raw_text: str) -> "IntentPrediction":
        return IntentPrediction(raw_text, None, RESOLUTION_UNRESOLVED)


@dataclass(frozen=True)
class SlotPrediction:
    """Slot pairs read from one reply.

    ``pairs`` are aligned to character spans in the utterance; ``unaligned``
    holds (type, value) entries whose value matched no substring;
    ``unknown_types`` holds entries whose type is outside the constraint set.
    """

    raw_text: str
    pairs: tuple[SlotPair, ...] = ()
    unaligned: tuple[tuple[str, str], ...] = ()
    unknown_types: tuple[tuple[str, str], ...] = ()

    @staticmethod
    def empty(raw_text: str = "") -> "SlotPrediction":
        return SlotPrediction(raw_text=raw_text)


@dataclass(frozen=True)
class JointPrediction:
    intent: IntentPrediction
    slots: SlotPrediction

    @staticmethod
    def empty() -> "JointPrediction":
        return JointPrediction(IntentPrediction.unresolved(""), SlotPrediction.empty())


def _clean(text: str) -> str:
    return text.strip(_STRIP_CHARS).strip(".,:").strip(_STRIP_CHARS)


def _canonicalize(value: str, candidates) -> tuple[str | None, str]:
    """Match against the candidate labels: exact first, then normalized."""
    for label in candidates:
        if value == label:
            return label, RESOLUTION_EXACT
    normalized = normalize_label(value)
    if normalized:
        for label in candidates:
            if normalize_label(label) == normalized:
                return label, RESOLUTION_NORMALIZED
    return None, RESOLUTION_UNRESOLVED


def parse_intent(raw: str, ontology: Ontology) -> IntentPrediction:
    """Extract the value after the first 'Intent=' marker and canonicalize it."""
    match = _INTENT_MARKER_RE.search(raw)
    if not match:
        return IntentPrediction.unresolved(raw)
    tail = raw[match.end() :]
    value = _clean(re.split(r"[;\n]", tail, maxsplit=1)[0])
    if not value:
        return IntentPrediction.unresolved(raw)
    canonical, resolution = _canonicalize(value, ontology.intents)
    if canonical is None:
        return IntentPrediction.unresolved(raw)
    return IntentPrediction(raw, canonical, resolution)


def _align(
    value: str, utterance: Utterance, used: set[tuple[int, int]]
) -> tuple[int, int] | None:
    """Earliest unused case-insensitive occurrence of value in the utterance."""
    haystack = utterance.text.casefold()
    needle = value.casefold()
    start = 0
    while True:
        idx = haystack.find(needle, start)
        if idx < 0:
            return None
        span = (idx, idx + len(value))
        if span not in used:
            return span
        start = idx + 1


def parse_slots(
    raw: str,
    constraint: tuple[str, ...] | list[str],
    utterance: Utterance,
) -> SlotPrediction:
    """Split 'type=value' segments on ';' and anchor values to the utterance.

    Types are canonicalized against the constraint set used for the prompt;
    stored values are the utterance surface form, not the model's casing.
    """
    pairs: list[SlotPair] = []
    unaligned: list[tuple[str, str]] = []
    unknown: list[tuple[str, str]] = []
    used_spans: set[tuple[int, int]] = set()
    for segment in raw.split(";"):
        if "=" not in segment:
            continue
        key, _, value = segment.partition("=")
        key = _clean(key)
        value = _clean(value)
        if not key or not value:
            continue
        slot_type, resolution = _canonicalize(key, constraint)
        if resolution == RESOLUTION_UNRESOLVED:
            entry = (key, value)
            if entry not in unknown:
                unknown.append(entry)
            continue
        span = _align(value, utterance, used_spans)
        if span is None:
            entry = (slot_type, value)
            if entry not in unaligned:
                unaligned.append(entry)
            continue
        used_spans.add(span)
        surface = utterance.text[span[0] : span[1]]
        pairs.append(SlotPair(slot_type, surface, span))
    return SlotPrediction(
        raw_text=raw,
        pairs=tuple(pairs),
        unaligned=tuple(unaligned),
        unknown_types=tuple(unknown),
    )


def parse_joint(raw: str, ontology: Ontology, utterance: Utterance) -> JointPrediction:
    """Parse a joint reply: the 'Intent=' segment plus slot segments in any order."""
    segments = raw.split(";")
    intent_segment: str | None = None
    rest: list[str] = []
    for segment in segments:
        key, sep, _ = segment.partition("=")
        if (
            intent_segment is None
            and sep
            and normalize_label(_clean(key)) == "intent"
        ):
            intent_segment = segment
        else:
            rest.append(segment)
    if intent_segment is None:
        intent = IntentPrediction.unresolved(raw)
    else:
        intent = parse_intent(intent_segment, ontology)
        if not intent.is_resolved:
            intent = IntentPrediction.unresolved(raw)
    slots = parse_slots(";".join(rest), ontology.slot_labels, utterance)
    return JointPrediction(intent=intent, slots=slots)
