from __future__ import annotations

import json

import pytest

from sluprompt.metrics import MetricsSummary
from sluprompt.report import (
    UnknownBaseline,
    render_csv,
    render_report,
    summaries_to_json,
)


def summary(sentence, intent, f1, n=8):
    return MetricsSummary(
        intent_accuracy=intent,
        slot_precision=f1,
        slot_recall=f1,
        slot_f1=f1,
        sentence_accuracy=sentence,
        n_utterances=n,
        n_failed=0,
        avg_context_length=100.0,
    )


def test_two_runs_with_baseline_show_deltas():
    table = render_report(
        {"vanilla": summary(0.3575, 0.9551, 0.6901), "staged": summary(0.4096, 0.9566, 0.7179)},
        baseline="vanilla",
    )
    lines = table.splitlines()
    assert lines[0].startswith("| Run |")
    assert "| vanilla | 35.75 | 95.51 | 69.01 |" in lines[2]
    assert "40.96 (+5.21)" in lines[3]
    assert "95.66 (+0.15)" in lines[3]
    assert "71.79 (+2.78)" in lines[3]


def test_baseline_row_comes_first():
    table = render_report(
        {"a": summary(0.1, 0.1, 0.1), "b": summary(0.2, 0.2, 0.2)}, baseline="b"
    )
    rows = [line for line in table.splitlines() if line.startswith("| ")][1:]
    assert rows[0].startswith("| b |")


def test_single_run_has_no_deltas():
    table = render_report({"only": summary(0.5, 0.9, 0.7)})
    assert "(+" not in table
    assert "(-" not in table
    assert "| only | 50.00 | 90.00 | 70.00 |" in table


def test_negative_delta_is_signed():
    table = render_report(
        {"base": summary(0.5, 0.9, 0.7), "worse": summary(0.4, 0.8, 0.6)},
        baseline="base",
    )
    assert "40.00 (-10.00)" in table


def test_unknown_baseline_lists_candidates():
    with pytest.raises(UnknownBaseline) as err:
        render_report({"a": summary(0.1, 0.1, 0.1)}, baseline="nope")
    assert "a" in str(err.value)


def test_deltas_match_hand_arithmetic():
    runs = {
        "vanilla": summary(0.3575, 0.9551, 0.6901),
        "staged": summary(0.4096, 0.9566, 0.7179),
    }
    table = render_report(runs, baseline="vanilla")
    for key in ("sentence_accuracy", "intent_accuracy", "slot_f1"):
        delta = 100 * (getattr(runs["staged"], key) - getattr(runs["vanilla"], key))
        assert f"({delta:+.2f})" in table


def test_csv_round_trips_values():
    runs = {"a": summary(0.5, 0.9, 0.7)}
    csv_text = render_csv(runs)
    header, row = csv_text.strip().splitlines()
    assert header.startswith("run,sentence_accuracy,intent_accuracy,slot_f1")
    fields = row.split(",")
    assert fields[0] == "a"
    assert float(fields[1]) == 0.5


def test_json_summary_round_trip():
    runs = {"a": summary(0.5, 0.9, 0.7)}
    doc = json.loads(summaries_to_json(runs, baseline=None))
    restored = MetricsSummary.from_dict(doc["runs"]["a"])
    assert restored == runs["a"]


def test_empty_report_is_an_error():
    with pytest.raises(ValueError):
        render_report({})
