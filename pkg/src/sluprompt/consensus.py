"""Multi-route consistency voting.

Intent is decided by a sentence-level majority over resolved route intents.
Slots are decided in two steps: a value-position vote keeps every span
supported by at least half of the routes (non-strict threshold, with a
strict-majority toggle for sensitivity analysis), then each kept span gets
the plurality slot type among its supporting routes.

Ties break deterministically: earliest supporting route index first, then
lexicographic label order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ontology import SlotPair
from .parsing import JointPrediction

Span = tuple[int, int]


@dataclass(frozen=True)
class RouteSet:
    """The per-route predictions feeding one vote, with provenance tags."""

    routes: tuple[JointPrediction, ...]
    provenance: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "routes", tuple(self.routes))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if not self.routes:
            raise ValueError("a route set needs at least one route")
        if len(self.routes) != len(self.provenance):
            raise ValueError(
                f"{len(self.routes)} routes but {len(self.provenance)} provenance tags"
            )

    def __len__(self) -> int:
        return len(self.routes)


@dataclass(frozen=True)
class ConsensusResult:
    """Voted intent and slot pairs plus the tallies behind every decision."""

    intent: str | None
    slots: tuple[SlotPair, ...]
    vote_trace: dict = field(default_factory=dict)


def _argmax_with_tiebreak(
    counts: dict[str, int], first_index: dict[str, int]
) -> str | None:
    best: str | None = None
    for label in counts:
        if best is None:
            best = label
            continue
        key = (-counts[label], first_index[label], label)
        best_key = (-counts[best], first_index[best], best)
        if key < best_key:
            best = label
    return best


def vote_intent(routes: RouteSet) -> str | None:
    """Majority intent across routes; unresolved routes do not vote."""
    counts: dict[str, int] = {}
    first_index: dict[str, int] = {}
    for i, route in enumerate(routes.routes):
        label = route.intent.canonical
        if label is None:
            continue
        counts[label] = counts.get(label, 0) + 1
        first_index.setdefault(label, i)
    return _argmax_with_tiebreak(counts, first_index)


def _route_spans(route: JointPrediction) -> dict[Span, str]:
    """Aligned (span -> slot type) pairs of one route; unaligned pairs are out."""
    spans: dict[Span, str] = {}
    for pair in route.slots.pairs:
        if pair.char_span is not None and pair.char_span not in spans:
            spans[pair.char_span] = pair.slot_type
    return spans


def vote_slot_values(routes: RouteSet, strict_majority: bool = False) -> list[Span]:
    """Spans supported by at least half of the routes (strictly more when toggled).

    The threshold compares against the full route count, including routes
    with empty predictions.
    """
    total = len(routes)
    counts: dict[Span, int] = {}
    for route in routes.routes:
        for span in _route_spans(route):
            counts[span] = counts.get(span, 0) + 1
    if strict_majority:
        kept = [span for span, count in counts.items() if 2 * count > total]
    else:
        kept = [span for span, count in counts.items() if 2 * count >= total]
    return sorted(kept)


def vote_slot_type(routes: RouteSet, span: Span) -> str:
    """Plurality slot type among routes that predicted this span."""
    counts: dict[str, int] = {}
    first_index: dict[str, int] = {}
    for i, route in enumerate(routes.routes):
        slot_type = _route_spans(route).get(span)
        if slot_type is None:
            continue
        counts[slot_type] = counts.get(slot_type, 0) + 1
        first_index.setdefault(slot_type, i)
    winner = _argmax_with_tiebreak(counts, first_index)
    if winner is None:
        raise ValueError(f"no route predicted span {span}")
    return winner


def consensus(routes: RouteSet, strict_majority: bool = False) -> ConsensusResult:
    """Compose the intent vote and the two-step slot vote, recording tallies."""
    total = len(routes)

    intent_counts: dict[str, int] = {}
    intent_first: dict[str, int] = {}
    for i, route in enumerate(routes.routes):
        label = route.intent.canonical
        if label is None:
            continue
        intent_counts[label] = intent_counts.get(label, 0) + 1
        intent_first.setdefault(label, i)
    intent = _argmax_with_tiebreak(intent_counts, intent_first)

    span_counts: dict[Span, int] = {}
    for route in routes.routes:
        for span in _route_spans(route):
            span_counts[span] = span_counts.get(span, 0) + 1

    kept_spans = vote_slot_values(routes, strict_majority=strict_majority)
    slots = []
    type_trace: dict[str, dict[str, int]] = {}
    for span in kept_spans:
        type_counts: dict[str, int] = {}
        type_first: dict[str, int] = {}
        value = None
        for i, route in enumerate(routes.routes):
            for pair in route.slots.pairs:
                if pair.char_span == span:
                    type_counts[pair.slot_type] = type_counts.get(pair.slot_type, 0) + 1
                    type_first.setdefault(pair.slot_type, i)
                    if value is None:
                        value = pair.value
                    break
        slot_type = _argmax_with_tiebreak(type_counts, type_first)
        assert slot_type is not None and value is not None
        slots.append(SlotPair(slot_type, value, span))
        type_trace[f"{span[0]}:{span[1]}"] = dict(type_counts)

    vote_trace = {
        "n_routes": total,
        "intent": dict(intent_counts),
        "slot_values": {f"{s}:{e}": c for (s, e), c in sorted(span_counts.items())},
        "slot_types": type_trace,
        "provenance": list(routes.provenance),
    }
    return ConsensusResult(intent=intent, slots=tuple(slots), vote_trace=vote_trace)
