"""Scoring: intent accuracy, span-level micro slot F1, and sentence accuracy.

Slot pairs match on (type, normalized value) rather than character spans:
gold spans can differ trivially in casing or spacing from free-text model
output. Matching is 1:1 greedy in corpus order.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .ontology import GoldAnnotation
from .pipeline import PredictionRecord


class IdMismatch(Exception):
    """Prediction and gold sequences do not line up by utterance id."""


def normalize_value(value: str) -> str:
    """Case-fold and collapse whitespace runs for slot-value comparison."""
    return " ".join(value.casefold().split())


@dataclass(frozen=True)
class MetricsSummary:
    intent_accuracy: float
    slot_precision: float
    slot_recall: float
    slot_f1: float
    sentence_accuracy: float
    n_utterances: int
    n_failed: int
    avg_context_length: float

    def to_dict(self) -> dict:
        return {
            "intent_accuracy": self.intent_accuracy,
            "slot_precision": self.slot_precision,
            "slot_recall": self.slot_recall,
            "slot_f1": self.slot_f1,
            "sentence_accuracy": self.sentence_accuracy,
            "n_utterances": self.n_utterances,
            "n_failed": self.n_failed,
            "avg_context_length": self.avg_context_length,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsSummary":
        return cls(
            intent_accuracy=doc["intent_accuracy"],
            slot_precision=doc["slot_precision"],
            slot_recall=doc["slot_recall"],
            slot_f1=doc["slot_f1"],
            sentence_accuracy=doc["sentence_accuracy"],
            n_utterances=doc["n_utterances"],
            n_failed=doc["n_failed"],
            avg_context_length=doc["avg_context_length"],
        )


def _check_alignment(
    preds: list[PredictionRecord], gold: list[GoldAnnotation]
) -> None:
    if len(preds) != len(gold):
        raise IdMismatch(
            f"{len(preds)} predictions vs {len(gold)} gold annotations"
        )
    for pred, ann in zip(preds, gold):
        if pred.utterance_id != ann.utterance_id:
            raise IdMismatch(
                f"prediction id {pred.utterance_id!r} vs gold id {ann.utterance_id!r}"
            )
        if ann.intent is None:
            raise ValueError(
                f"gold annotation {ann.utterance_id!r} has no intent label"
            )


def _pred_keys(pred: PredictionRecord) -> list[tuple[str, str]]:
    if pred.failed:
        return []
    return [(p.slot_type, normalize_value(p.value)) for p in pred.final_slots]


def _gold_keys(ann: GoldAnnotation) -> list[tuple[str, str]]:
    return [(p.slot_type, normalize_value(p.value)) for p in ann.slots]


def score_intent(
    preds: list[PredictionRecord], gold: list[GoldAnnotation]
) -> float:
    """Fraction of utterances whose final intent equals the gold intent."""
    _check_alignment(preds, gold)
    if not preds:
        return 0.0
    correct = 0
    for pred, ann in zip(preds, gold):
        if pred.failed:
            continue
        intent = pred.final_intent
        if intent is not None and intent == ann.intent:
            correct += 1
    return correct / len(preds)


def score_slots(
    preds: list[PredictionRecord], gold: list[GoldAnnotation]
) -> tuple[float, float, float]:
    """Micro-averaged (precision, recall, F1) over predicted slot pairs."""
    _check_alignment(preds, gold)
    tp = fp = fn = 0
    for pred, ann in zip(preds, gold):
        remaining = Counter(_gold_keys(ann))
        for key in _pred_keys(pred):
            if remaining[key] > 0:
                remaining[key] -= 1
                tp += 1
            else:
                fp += 1
        fn += sum(remaining.values())
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def score_sentence(
    preds: list[PredictionRecord], gold: list[GoldAnnotation]
) -> float:
    """Fraction with the intent correct and the slot pair multiset exactly right."""
    _check_alignment(preds, gold)
    if not preds:
        return 0.0
    correct = 0
    for pred, ann in zip(preds, gold):
        if pred.failed:
            continue
        intent = pred.final_intent
        if intent is None or intent != ann.intent:
            continue
        if Counter(_pred_keys(pred)) == Counter(_gold_keys(ann)):
            correct += 1
    return correct / len(preds)


def context_length_stats(preds: list[PredictionRecord]) -> float:
    """Mean whitespace-token count of the newly sent prompt text per backend call."""
    lengths = [length for pred in preds for _, length in pred.prompts_used]
    if not lengths:
        return 0.0
    return sum(lengths) / len(lengths)


def compute_summary(
    preds: list[PredictionRecord], gold: list[GoldAnnotation]
) -> MetricsSummary:
    precision, recall, f1 = score_slots(preds, gold)
    return MetricsSummary(
        intent_accuracy=score_intent(preds, gold),
        slot_precision=precision,
        slot_recall=recall,
        slot_f1=f1,
        sentence_accuracy=score_sentence(preds, gold),
        n_utterances=len(preds),
        n_failed=sum(1 for p in preds if p.failed),
        avg_context_length=context_length_stats(preds),
    )
