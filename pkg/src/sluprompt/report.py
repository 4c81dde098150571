"""Render run comparisons as Markdown, CSV, or JSON.

When a baseline run is designated, the headline metrics of every other run
carry a signed delta against it, e.g. ``40.96 (+5.21)``.
"""

from __future__ import annotations

import json

from .metrics import MetricsSummary

_HEADLINE = (
    ("sentence_accuracy", "Sentence Acc (%)"),
    ("intent_accuracy", "Intent Acc (%)"),
    ("slot_f1", "Slot F1 (%)"),
)
_EXTRA = (
    ("slot_precision", "Slot P (%)"),
    ("slot_recall", "Slot R (%)"),
    ("avg_context_length", "Avg Context Len (ws tokens)"),
)


class UnknownBaseline(Exception):
    """The designated baseline run name is not among the summaries."""

    def __init__(self, name: str, candidates: list[str]):
        super().__init__(
            f"unknown baseline {name!r}; candidates: {', '.join(candidates)}"
        )
        self.candidates = candidates


def _ordered(summaries: dict[str, MetricsSummary], baseline: str | None) -> list[str]:
    if baseline is None:
        return list(summaries)
    if baseline not in summaries:
        raise UnknownBaseline(baseline, list(summaries))
    return [baseline] + [name for name in summaries if name != baseline]


def _pct(value: float) -> str:
    return f"{100 * value:.2f}"


def _cell(name: str, key: str, summaries, baseline: str | None) -> str:
    value = getattr(summaries[name], key)
    if key == "avg_context_length":
        return f"{value:.2f}"
    text = _pct(value)
    if baseline is not None and name != baseline:
        delta = 100 * (value - getattr(summaries[baseline], key))
        text += f" ({delta:+.2f})"
    return text


def render_report(
    summaries: dict[str, MetricsSummary], baseline: str | None = None
) -> str:
    """Markdown comparison table across runs."""
    if not summaries:
        raise ValueError("at least one summary is required")
    names = _ordered(summaries, baseline)
    columns = list(_HEADLINE) + list(_EXTRA)
    header = ["Run"] + [title for _, title in columns] + ["N", "Failed"]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    for name in names:
        summary = summaries[name]
        row = [name]
        for key, _ in columns:
            delta_base = baseline if key in dict(_HEADLINE) else None
            row.append(_cell(name, key, summaries, delta_base))
        row.append(str(summary.n_utterances))
        row.append(str(summary.n_failed))
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def render_csv(
    summaries: dict[str, MetricsSummary], baseline: str | None = None
) -> str:
    names = _ordered(summaries, baseline)
    keys = [key for key, _ in _HEADLINE + _EXTRA]
    lines = ["run," + ",".join(keys) + ",n_utterances,n_failed"]
    for name in names:
        summary = summaries[name]
        values = [f"{getattr(summary, key):.6f}" for key in keys]
        lines.append(
            f"{name},{','.join(values)},{summary.n_utterances},{summary.n_failed}"
        )
    return "\n".join(lines) + "\n"


def summaries_to_json(
    summaries: dict[str, MetricsSummary], baseline: str | None = None
) -> str:
    names = _ordered(summaries, baseline)
    doc = {"baseline": baseline, "runs": {name: summaries[name].to_dict() for name in names}}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
