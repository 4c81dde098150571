"""Acceptance suite: one test per release criterion, each printing a verdict.

Oracles here are written from scratch (plain counting loops over symbolic
route/corpus encodings) and never call back into the voting or scoring code
they check.
"""

from __future__ import annotations

import itertools
import os
import random
import time

import pytest

from sluprompt.backend import BackendConfig
from sluprompt.consensus import RouteSet, consensus, vote_slot_type, vote_slot_values
from sluprompt.metrics import (
    compute_summary,
    context_length_stats,
    score_intent,
    score_sentence,
    score_slots,
)
from sluprompt.ontology import GoldAnnotation, SlotPair, Utterance
from sluprompt.parsing import (
    IntentPrediction,
    JointPrediction,
    SlotPrediction,
    parse_intent,
    parse_joint,
    parse_slots,
)
from sluprompt.pipeline import (
    ByPrompt,
    PredictionRecord,
    RunConfig,
    expected_calls,
    run_dataset,
    run_single,
    write_predictions,
)
from sluprompt.prompts import PromptMode

SPAN_1 = (0, 4)
SPAN_2 = (10, 14)
INTENT_OPTIONS = (None, "A", "B", "C")
TYPE_OPTIONS = (None, "x", "y", "z")


def _route_from_config(intent, span_types) -> JointPrediction:
    """Build a route from (intent|None, {span: type}) symbolic form."""
    if intent is None:
        intent_pred = IntentPrediction.unresolved("")
    else:
        intent_pred = IntentPrediction(intent, intent, "exact")
    pairs = tuple(
        SlotPair(slot_type, f"v{span[0]}", span)
        for span, slot_type in sorted(span_types.items())
    )
    return JointPrediction(intent_pred, SlotPrediction(raw_text="", pairs=pairs))


def _oracle_intent(intents):
    counts, first = {}, {}
    for i, label in enumerate(intents):
        if label is None:
            continue
        counts[label] = counts.get(label, 0) + 1
        if label not in first:
            first[label] = i
    best = None
    for label in counts:
        if best is None or (-counts[label], first[label], label) < (
            -counts[best],
            first[best],
            best,
        ):
            best = label
    return best


def _oracle_spans(span_maps, strict=False):
    total = len(span_maps)
    counts = {}
    for span_types in span_maps:
        for span in span_types:
            counts[span] = counts.get(span, 0) + 1
    keep = []
    for span, count in counts.items():
        if (2 * count > total) if strict else (2 * count >= total):
            keep.append(span)
    return sorted(keep)


def _oracle_type(span_maps, span):
    counts, first = {}, {}
    for i, span_types in enumerate(span_maps):
        slot_type = span_types.get(span)
        if slot_type is None:
            continue
        counts[slot_type] = counts.get(slot_type, 0) + 1
        if slot_type not in first:
            first[slot_type] = i
    best = None
    for label in counts:
        if best is None or (-counts[label], first[label], label) < (
            -counts[best],
            first[best],
            best,
        ):
            best = label
    return best


def _check_against_oracle(configs) -> None:
    """configs: tuple of (intent|None, {span: type}) symbolic routes."""
    routes = RouteSet(
        tuple(_route_from_config(intent, span_types) for intent, span_types in configs),
        tuple(f"r{i}" for i in range(len(configs))),
    )
    span_maps = [span_types for _, span_types in configs]
    result = consensus(routes)
    assert result.intent == _oracle_intent([i for i, _ in configs]), configs
    expected_spans = _oracle_spans(span_maps)
    assert [p.char_span for p in result.slots] == expected_spans, configs
    for pair in result.slots:
        assert pair.slot_type == _oracle_type(span_maps, pair.char_span), configs


SLOT_CONFIGS = [
    {
        span: slot_type
        for span, slot_type in ((SPAN_1, t1), (SPAN_2, t2))
        if slot_type is not None
    }
    for t1 in TYPE_OPTIONS
    for t2 in TYPE_OPTIONS
]


def test_criterion_01_consensus_matches_brute_force_oracle():
    started = time.monotonic()
    checked = 0

    # Intent voting: every ordered tuple up to |R|=4 over 3 intents + unresolved.
    intent_routes = [
        _route_from_config(intent, {}) for intent in INTENT_OPTIONS
    ]
    for n in range(1, 5):
        for combo in itertools.product(range(len(INTENT_OPTIONS)), repeat=n):
            routes = RouteSet(
                tuple(intent_routes[i] for i in combo),
                tuple(f"r{i}" for i in range(n)),
            )
            expected = _oracle_intent([INTENT_OPTIONS[i] for i in combo])
            assert consensus(routes).intent == expected, combo
            checked += 1

    # Slot voting: every ordered tuple up to |R|=4 over 2 spans x (3 types + absent).
    slot_routes = [_route_from_config(None, cfg) for cfg in SLOT_CONFIGS]
    for n in range(1, 5):
        for combo in itertools.product(range(len(SLOT_CONFIGS)), repeat=n):
            routes = RouteSet(
                tuple(slot_routes[i] for i in combo),
                tuple(f"r{i}" for i in range(n)),
            )
            span_maps = [SLOT_CONFIGS[i] for i in combo]
            expected_spans = _oracle_spans(span_maps)
            assert vote_slot_values(routes) == expected_spans, combo
            for span in expected_spans:
                assert vote_slot_type(routes, span) == _oracle_type(span_maps, span), combo
            checked += 1

    # Full composition: exhaustive at |R| <= 2, seeded sample at |R| in {3, 4}.
    joint_options = [
        (intent, cfg) for intent in INTENT_OPTIONS for cfg in SLOT_CONFIGS
    ]
    for n in (1, 2):
        for combo in itertools.product(joint_options, repeat=n):
            _check_against_oracle(combo)
            checked += 1
    rng = random.Random(20240824)
    for _ in range(20000):
        n = rng.choice((3, 4))
        _check_against_oracle(tuple(rng.choice(joint_options) for _ in range(n)))
        checked += 1

    elapsed = time.monotonic() - started
    assert elapsed < 10.0, f"oracle sweep took {elapsed:.1f}s"
    print(
        f"ACCEPTANCE 1 PASS: consensus equals brute-force oracle on {checked} "
        f"route sets in {elapsed:.1f}s"
    )


def test_criterion_02_value_vote_threshold_semantics():
    half_support = RouteSet(
        (
            _route_from_config("A", {SPAN_1: "x"}),
            _route_from_config("A", {SPAN_1: "x"}),
            _route_from_config("A", {}),
            _route_from_config("A", {}),
        ),
        ("r0", "r1", "r2", "r3"),
    )
    assert vote_slot_values(half_support) == [SPAN_1]
    assert vote_slot_values(half_support, strict_majority=True) == []
    print(
        "ACCEPTANCE 2 PASS: span in 2 of 4 routes kept by the non-strict "
        "threshold and dropped by the strict toggle"
    )


def test_criterion_03_four_route_fixture_votes_to_movie_name(mini_ontology):
    utterance = Utterance("fig", "Find the movie The Ghost")
    replies = [
        'Intent=SearchMovie; movie_name="The Ghost"',
        'Intent=SearchMovie; movie_name="The Ghost"',
        'Intent=SearchCreativeWork; object_name="The Ghost"',
        "Intent=SearchMovie",
    ]
    routes = RouteSet(
        tuple(parse_joint(reply, mini_ontology, utterance) for reply in replies),
        ("r0", "r1", "r2", "r3"),
    )
    result = consensus(routes)
    assert result.intent == "SearchMovie"
    assert result.slots == (SlotPair("movie_name", "The Ghost", (15, 24)),)
    print(
        "ACCEPTANCE 3 PASS: four-route fixture votes to "
        '(SearchMovie, movie_name="The Ghost")'
    )


def _oracle_metrics(pred_rows, gold_rows):
    def norm(value):
        return " ".join(value.casefold().split())

    n = len(gold_rows)
    intent_ok = sentence_ok = 0
    tp = fp = fn = 0
    for (p_intent, p_pairs, failed), (g_intent, g_pairs) in zip(pred_rows, gold_rows):
        pred_keys = [] if failed else [(t, norm(v)) for t, v in p_pairs]
        gold_keys = [(t, norm(v)) for t, v in g_pairs]
        intent_right = not failed and p_intent is not None and p_intent == g_intent
        if intent_right:
            intent_ok += 1
        remaining = list(gold_keys)
        for key in pred_keys:
            if key in remaining:
                remaining.remove(key)
                tp += 1
            else:
                fp += 1
        fn += len(remaining)
        if intent_right and sorted(pred_keys) == sorted(gold_keys):
            sentence_ok += 1
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return intent_ok / n, precision, recall, f1, sentence_ok / n


def _mutate_value(rng, value):
    choice = rng.random()
    if choice < 0.4:
        return value
    if choice < 0.6:
        return value.upper()
    if choice < 0.8:
        return value.capitalize()
    return value.replace(" ", "  ") if " " in value else value + ""


def test_criterion_04_metrics_match_brute_force_scorer():
    rng = random.Random(20240825)
    intents = ("A", "B", "C")
    slot_types = ("artist", "album", "track")
    values = ("cher", "ray of light", "the ghost", "ok go", "believe")

    for corpus in range(1000):
        n = rng.randrange(1, 11)
        gold_rows, pred_rows, preds, golds = [], [], [], []
        for i in range(n):
            g_intent = rng.choice(intents)
            g_pairs = []
            for _ in range(rng.randrange(0, 4)):
                pair = (rng.choice(slot_types), rng.choice(values))
                if pair not in g_pairs:
                    g_pairs.append(pair)
            p_intent = rng.choice(intents + (None,))
            p_pairs = []
            for _ in range(rng.randrange(0, 4)):
                if g_pairs and rng.random() < 0.5:
                    slot_type, value = rng.choice(g_pairs)
                    p_pairs.append((slot_type, _mutate_value(rng, value)))
                else:
                    p_pairs.append((rng.choice(slot_types), rng.choice(values)))
            failed = rng.random() < 0.05
            gold_rows.append((g_intent, g_pairs))
            pred_rows.append((p_intent, p_pairs, failed))
            golds.append(
                GoldAnnotation(str(i), g_intent, tuple(SlotPair(t, v) for t, v in g_pairs))
            )
            intent_pred = (
                IntentPrediction.unresolved("")
                if p_intent is None
                else IntentPrediction(p_intent, p_intent, "exact")
            )
            preds.append(
                PredictionRecord(
                    utterance_id=str(i),
                    final=JointPrediction(
                        intent_pred,
                        SlotPrediction(
                            raw_text="", pairs=tuple(SlotPair(t, v) for t, v in p_pairs)
                        ),
                    ),
                    failed=failed,
                )
            )
        expected = _oracle_metrics(pred_rows, gold_rows)
        got = (
            score_intent(preds, golds),
            *score_slots(preds, golds),
            score_sentence(preds, golds),
        )
        assert got == expected, f"corpus {corpus}"

    # Hand-checked fixture: 3 gold pairs, 2 predicted, 1 matching.
    preds = [
        PredictionRecord(
            "0",
            JointPrediction(
                IntentPrediction("A", "A", "exact"),
                SlotPrediction(
                    raw_text="",
                    pairs=(SlotPair("artist", "Madonna"), SlotPair("album", "Ray")),
                ),
            ),
        ),
        PredictionRecord(
            "1",
            JointPrediction(IntentPrediction("A", "A", "exact"), SlotPrediction("")),
        ),
    ]
    golds = [
        GoldAnnotation("0", "A", (SlotPair("artist", "Madonna"), SlotPair("playlist", "rock"))),
        GoldAnnotation("1", "A", (SlotPair("artist", "Cher"),)),
    ]
    precision, recall, f1 = score_slots(preds, golds)
    assert precision == pytest.approx(0.5)
    assert recall == pytest.approx(1 / 3)
    assert f1 == pytest.approx(0.4)
    print(
        "ACCEPTANCE 4 PASS: metrics equal the brute-force TP/FP/FN scorer on "
        "1000 random corpora plus the P=0.5, R=1/3, F1=0.4 fixture"
    )


def test_criterion_05_parser_totality_and_recorded_responses(snips_ontology):
    utterance = Utterance("0", "put United Abominations onto my rare groove playlist")
    rng = random.Random(20240826)
    failures = 0
    for _ in range(10000):
        raw = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 80))).decode(
            "latin-1"
        )
        try:
            intent = parse_intent(raw, snips_ontology)
            if intent.resolution != "unresolved":
                assert intent.canonical in snips_ontology.intents
            slots = parse_slots(raw, snips_ontology.slot_labels, utterance)
            for pair in slots.pairs:
                start, end = pair.char_span
                assert utterance.text[start:end] == pair.value
            parse_joint(raw, snips_ontology, utterance)
        except Exception:  # noqa: BLE001 - the criterion counts any failure
            failures += 1
    assert failures == 0

    intent = parse_intent("Intent=AddToPlaylist", snips_ontology)
    assert (intent.canonical, intent.resolution) == ("AddToPlaylist", "exact")

    joint = parse_joint(
        'Intent=AddToPlaylist; entity-name="United Abominations"',
        snips_ontology,
        utterance,
    )
    assert joint.intent.canonical == "AddToPlaylist"
    assert joint.slots.pairs == (
        SlotPair("entity_name", "United Abominations", (4, 23)),
    )

    subset = snips_ontology.intent_slot_map["AddToPlaylist"]
    slots = parse_slots('entity-name="United Abominations"', subset, utterance)
    assert slots.pairs == (SlotPair("entity_name", "United Abominations", (4, 23)),)
    print(
        "ACCEPTANCE 5 PASS: 10000 adversarial strings parsed with zero "
        "failures; recorded example responses parse to their documented structures"
    )


def _replay_config(replay_path, **kwargs) -> RunConfig:
    backend = BackendConfig(kind="replay", replay_file=replay_path)
    kwargs.setdefault("mode", PromptMode.CRO_INTENT_SLOT)
    return RunConfig(backend=backend, model_name="fixture-model", **kwargs)


def test_criterion_06_subsetting_and_call_count_contracts(
    replay_path, snips_ontology, snips_data
):
    config = _replay_config(replay_path)
    for utt, gold in snips_data:
        record = run_single(utt, config, snips_ontology, gold)
        assert not record.failed
        intent = record.final.intent.canonical
        assert record.calls[1].constraint == snips_ontology.intent_slot_map[intent], utt.id

    contract = [
        (PromptMode.VANILLA, False, 1),
        (PromptMode.CRO_INTENT_SLOT, False, 2),
        (PromptMode.CRO_SLOT_INTENT, False, 2),
        (PromptMode.NO_INTERACTION, False, 2),
        (PromptMode.CRO_INTENT_SLOT, True, 1),
    ]
    for mode, gold_intent, calls in contract:
        config = _replay_config(replay_path, mode=mode, gold_intent=gold_intent)
        assert expected_calls(config) == calls
        records = run_dataset(snips_data, config, snips_ontology)
        assert all(len(r.calls) == calls for r in records), mode
    print(
        "ACCEPTANCE 6 PASS: stage-2 constraints equal the intent's slot subset "
        "and per-mode call counts match the contract table"
    )


def test_criterion_07_staged_prompts_are_shorter_on_average(
    replay_path, snips_ontology, snips_data
):
    staged = run_dataset(
        snips_data, _replay_config(replay_path), snips_ontology
    )
    vanilla = run_dataset(
        snips_data, _replay_config(replay_path, mode=PromptMode.VANILLA), snips_ontology
    )
    staged_mean = context_length_stats(staged)
    vanilla_mean = context_length_stats(vanilla)
    assert staged_mean < vanilla_mean
    print(
        f"ACCEPTANCE 7 PASS: mean per-call prompt length {staged_mean:.1f} "
        f"(two-stage) < {vanilla_mean:.1f} (single-turn) whitespace tokens"
    )


def test_criterion_08_replay_runs_are_byte_identical(
    replay_path, snips_ontology, snips_data, tmp_path
):
    started = time.monotonic()
    consistency = ByPrompt(
        (PromptMode.VANILLA, PromptMode.CRO_INTENT_SLOT, PromptMode.CRO_SLOT_INTENT)
    )
    outputs = []
    for name, in_flight in (("a", 1), ("b", 1), ("c", 8)):
        config = _replay_config(
            replay_path, consistency=consistency, max_in_flight=in_flight
        )
        path = tmp_path / f"{name}.jsonl"
        write_predictions(run_dataset(snips_data, config, snips_ontology), path)
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]
    elapsed = time.monotonic() - started
    assert elapsed < 30.0
    print(
        f"ACCEPTANCE 8 PASS: replayed runs byte-identical across executions "
        f"and max_in_flight in {{1, 8}} ({elapsed:.1f}s)"
    )


LIVE_ENDPOINT = os.environ.get("SLUPROMPT_LIVE_ENDPOINT")


@pytest.mark.skipif(
    not LIVE_ENDPOINT,
    reason="live check is optional; set SLUPROMPT_LIVE_ENDPOINT (and "
    "SLUPROMPT_LIVE_MODEL / SLUPROMPT_LIVE_API_KEY_ENV) to enable",
)
def test_criterion_09_optional_live_staged_beats_vanilla(snips_ontology, snips_data):
    # Flaky by nature: model behavior drifts; run on demand against a real endpoint.
    backend = BackendConfig(
        kind="http",
        endpoint_url=LIVE_ENDPOINT,
        api_key_env=os.environ.get("SLUPROMPT_LIVE_API_KEY_ENV"),
    )
    model = os.environ.get("SLUPROMPT_LIVE_MODEL", "gpt-3.5-turbo")
    sample = snips_data[:50]
    gold = [g for _, g in sample]
    staged = run_dataset(
        sample,
        RunConfig(mode=PromptMode.CRO_INTENT_SLOT, backend=backend, model_name=model),
        snips_ontology,
    )
    vanilla = run_dataset(
        sample,
        RunConfig(mode=PromptMode.VANILLA, backend=backend, model_name=model),
        snips_ontology,
    )
    staged_acc = compute_summary(staged, gold).sentence_accuracy
    vanilla_acc = compute_summary(vanilla, gold).sentence_accuracy
    assert staged_acc >= vanilla_acc
    print(
        f"ACCEPTANCE 9 PASS: live sentence accuracy {staged_acc:.3f} (two-stage) "
        f">= {vanilla_acc:.3f} (single-turn)"
    )
