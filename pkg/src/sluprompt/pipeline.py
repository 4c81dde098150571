"""End-to-end runs: build prompts, call the backend, parse, vote, record.

Utterances are processed with bounded parallelism; within one utterance the
follow-up call strictly waits for the first-stage reply. Output order always
matches input order, and replayed runs are fully reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .backend import BackendConfig, BackendError, ChatMessage, ChatRequest, complete, request_key
from .consensus import ConsensusResult, RouteSet, consensus
from .ontology import GoldAnnotation, Ontology, SlotPair, Utterance
from .parsing import (
    IntentPrediction,
    JointPrediction,
    RESOLUTION_EXACT,
    SlotPrediction,
    parse_intent,
    parse_joint,
    parse_slots,
)
from .prompts import (
    PromptMode,
    PromptSpec,
    TemplateSet,
    build_intent_prompt,
    build_intent_prompt_after_slots,
    build_slot_prompt,
    build_vanilla_prompt,
    constraint_for_prompt,
    default_templates,
)

logger = logging.getLogger(__name__)

PREDICTIONS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ByTemperature:
    """Consistency routes: the configured mode sampled at each temperature."""

    temperatures: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "temperatures", tuple(self.temperatures))
        if len(self.temperatures) < 2:
            raise ValueError("by-temperature consistency needs at least 2 values")


@dataclass(frozen=True)
class ByPrompt:
    """Consistency routes: one run per prompt variant at the default temperature."""

    modes: tuple[PromptMode, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "modes", tuple(self.modes))
        if len(set(self.modes)) < 2:
            raise ValueError("by-prompt consistency needs at least 2 distinct modes")


Consistency = ByTemperature | ByPrompt | None


@dataclass(frozen=True)
class RunConfig:
    mode: PromptMode
    backend: BackendConfig
    consistency: Consistency = None
    gold_intent: bool = False
    temperature: float = 0.1
    model_name: str = "gpt-3.5-turbo"
    max_tokens: int = 256
    max_in_flight: int = 1
    record_replay: bool = False
    templates: TemplateSet | None = None

    def __post_init__(self) -> None:
        if self.gold_intent and self.mode is not PromptMode.CRO_INTENT_SLOT:
            raise ValueError("gold_intent is only valid with mode cro_intent_slot")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be positive")
        if self.record_replay:
            object.__setattr__(self, "backend", replace(self.backend, record=True))

    def template_set(self) -> TemplateSet:
        return self.templates or default_templates()


@dataclass(frozen=True)
class CallRecord:
    """One backend call: stage name, prompt size, and the slot constraint offered."""

    stage: str
    token_length: int
    constraint: tuple[str, ...] | None
    request_key: str
    duration: float = 0.0


@dataclass(frozen=True)
class PredictionRecord:
    utterance_id: str
    final: ConsensusResult | JointPrediction
    routes: RouteSet | None = None
    calls: tuple[CallRecord, ...] = ()
    failed: bool = False
    error: str | None = None

    @property
    def prompts_used(self) -> list[tuple[str, int]]:
        return [(c.stage, c.token_length) for c in self.calls]

    @property
    def timing(self) -> list[float]:
        return [c.duration for c in self.calls]

    @property
    def final_intent(self) -> str | None:
        if isinstance(self.final, ConsensusResult):
            return self.final.intent
        return self.final.intent.canonical

    @property
    def final_slots(self) -> tuple[SlotPair, ...]:
        if isinstance(self.final, ConsensusResult):
            return self.final.slots
        return self.final.slots.pairs


def _token_length(prompt: PromptSpec) -> int:
    return len(prompt.rendered.split())


class _Session:
    """One chat conversation; collects call records as it goes."""

    def __init__(self, config: RunConfig, temperature: float, salt: str | None):
        self.config = config
        self.temperature = temperature
        self.salt = salt
        self.messages: list[ChatMessage] = []
        self.calls: list[CallRecord] = []

    def ask(self, stage: str, prompt: PromptSpec, constraint) -> str:
        self.messages.append(ChatMessage("user", prompt.rendered))
        request = ChatRequest(
            messages=tuple(self.messages),
            temperature=self.temperature,
            model_name=self.config.model_name,
            max_tokens=self.config.max_tokens,
        )
        started = time.monotonic()
        response = complete(request, self.config.backend, route_salt=self.salt)
        self.calls.append(
            CallRecord(
                stage=stage,
                token_length=_token_length(prompt),
                constraint=tuple(constraint) if constraint is not None else None,
                request_key=request_key(request),
                duration=time.monotonic() - started,
            )
        )
        self.messages.append(ChatMessage("assistant", response.text))
        return response.text


def _route_once(
    utterance: Utterance,
    mode: PromptMode,
    temperature: float,
    config: RunConfig,
    ontology: Ontology,
    gold: GoldAnnotation | None,
    salt: str | None,
) -> tuple[JointPrediction, list[CallRecord]]:
    """Run one inference route in the given mode and parse its replies."""
    templates = config.template_set()

    if mode is PromptMode.VANILLA:
        session = _Session(config, temperature, salt)
        prompt = build_vanilla_prompt(ontology, utterance, templates)
        reply = session.ask("vanilla", prompt, ontology.slot_labels)
        return parse_joint(reply, ontology, utterance), session.calls

    if mode is PromptMode.CRO_INTENT_SLOT:
        session = _Session(config, temperature, salt)
        if config.gold_intent:
            assert gold is not None and gold.intent is not None
            intent_pred = IntentPrediction(gold.intent, gold.intent, RESOLUTION_EXACT)
        else:
            stage1 = build_intent_prompt(ontology, utterance, templates)
            reply1 = session.ask("intent", stage1, None)
            intent_pred = parse_intent(reply1, ontology)
        if intent_pred.is_resolved:
            stage2 = build_slot_prompt(ontology, utterance, intent_pred.canonical, templates)
            constraint = constraint_for_prompt(ontology, intent_pred.canonical)
            reply2 = session.ask("slot", stage2, constraint)
            calls = list(session.calls)
        else:
            # Unresolved first stage: degrade to an independent full-list
            # slot session so the utterance still gets scored.
            calls = list(session.calls)
            fresh = _Session(config, temperature, salt)
            stage2 = build_slot_prompt(ontology, utterance, None, templates)
            constraint = ontology.slot_labels
            reply2 = fresh.ask("slot", stage2, constraint)
            calls.extend(fresh.calls)
        slots = parse_slots(reply2, constraint, utterance)
        return JointPrediction(intent_pred, slots), calls

    if mode is PromptMode.CRO_SLOT_INTENT:
        session = _Session(config, temperature, salt)
        stage1 = build_slot_prompt(ontology, utterance, None, templates)
        reply1 = session.ask("slot", stage1, ontology.slot_labels)
        slots = parse_slots(reply1, ontology.slot_labels, utterance)
        stage2 = build_intent_prompt_after_slots(ontology, utterance, slots.pairs, templates)
        reply2 = session.ask("intent", stage2, None)
        intent_pred = parse_intent(reply2, ontology)
        return JointPrediction(intent_pred, slots), session.calls

    if mode is PromptMode.NO_INTERACTION:
        intent_session = _Session(config, temperature, salt)
        intent_prompt = build_intent_prompt(ontology, utterance, templates)
        intent_reply = intent_session.ask("intent", intent_prompt, None)
        slot_session = _Session(config, temperature, salt)
        slot_prompt = build_slot_prompt(ontology, utterance, None, templates)
        slot_reply = slot_session.ask("slot", slot_prompt, ontology.slot_labels)
        intent_pred = parse_intent(intent_reply, ontology)
        slots = parse_slots(slot_reply, ontology.slot_labels, utterance)
        return (
            JointPrediction(intent_pred, slots),
            intent_session.calls + slot_session.calls,
        )

    raise ValueError(f"unsupported mode {mode!r}")


def _fan_out(
    utterance: Utterance,
    config: RunConfig,
    ontology: Ontology,
    gold: GoldAnnotation | None,
) -> tuple[RouteSet, list[CallRecord]]:
    if isinstance(config.consistency, ByTemperature):
        plan = [
            (f"t={t}", config.mode, t) for t in config.consistency.temperatures
        ]
    elif isinstance(config.consistency, ByPrompt):
        plan = [
            (m.value, m, config.temperature) for m in config.consistency.modes
        ]
    else:
        raise ValueError("fan_out_routes requires a consistency setting")

    routes: list[JointPrediction] = []
    provenance: list[str] = []
    calls: list[CallRecord] = []
    for i, (tag, mode, temperature) in enumerate(plan):
        salt = f"route{i}:{tag}"
        # gold_intent only applies where a first intent stage exists.
        route_config = config
        if config.gold_intent and mode is not PromptMode.CRO_INTENT_SLOT:
            route_config = replace(config, gold_intent=False, mode=mode)
        try:
            joint, route_calls = _route_once(
                utterance, mode, temperature, route_config, ontology, gold, salt
            )
            calls.extend(route_calls)
        except BackendError as exc:
            logger.warning("route %s failed for %s: %s", tag, utterance.id, exc)
            joint = JointPrediction.empty()
        routes.append(joint)
        provenance.append(tag)
    return RouteSet(tuple(routes), tuple(provenance)), calls


def fan_out_routes(
    utterance: Utterance,
    config: RunConfig,
    ontology: Ontology,
    gold: GoldAnnotation | None = None,
) -> RouteSet:
    """Run every consistency route for one utterance; failed routes come back empty."""
    routes, _ = _fan_out(utterance, config, ontology, gold)
    return routes


def run_single(
    utterance: Utterance,
    config: RunConfig,
    ontology: Ontology,
    gold: GoldAnnotation | None = None,
) -> PredictionRecord:
    """Process one utterance under the configured mode and consistency."""
    if config.gold_intent and (gold is None or gold.intent is None):
        raise ValueError(f"gold intent required for utterance {utterance.id!r}")
    try:
        if config.consistency is None:
            joint, calls = _route_once(
                utterance, config.mode, config.temperature, config, ontology, gold, None
            )
            return PredictionRecord(
                utterance_id=utterance.id, final=joint, calls=tuple(calls)
            )
        routes, calls = _fan_out(utterance, config, ontology, gold)
        return PredictionRecord(
            utterance_id=utterance.id,
            final=consensus(routes),
            routes=routes,
            calls=tuple(calls),
        )
    except BackendError as exc:
        return PredictionRecord(
            utterance_id=utterance.id,
            final=JointPrediction.empty(),
            failed=True,
            error=str(exc),
        )


def expected_calls(config: RunConfig) -> int:
    """Backend calls one utterance should cost under this configuration."""

    def per_mode(mode: PromptMode, gold: bool) -> int:
        if mode is PromptMode.VANILLA:
            return 1
        if mode is PromptMode.CRO_INTENT_SLOT and gold:
            return 1
        return 2

    if config.consistency is None:
        return per_mode(config.mode, config.gold_intent)
    if isinstance(config.consistency, ByTemperature):
        return per_mode(config.mode, config.gold_intent) * len(
            config.consistency.temperatures
        )
    return sum(
        per_mode(m, config.gold_intent and m is PromptMode.CRO_INTENT_SLOT)
        for m in config.consistency.modes
    )


def run_dataset(
    data: list[tuple[Utterance, GoldAnnotation]],
    config: RunConfig,
    ontology: Ontology,
) -> list[PredictionRecord]:
    """Process a dataset with bounded parallelism, preserving input order."""
    if not data:
        return []
    if config.max_in_flight == 1:
        return [run_single(utt, config, ontology, gold) for utt, gold in data]
    with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
        futures = [
            pool.submit(run_single, utt, config, ontology, gold) for utt, gold in data
        ]
        return [f.result() for f in futures]


def _slot_pair_dict(pair: SlotPair) -> dict:
    return {
        "type": pair.slot_type,
        "value": pair.value,
        "span": list(pair.char_span) if pair.char_span else None,
    }


def _slot_pair_from(d: dict) -> SlotPair:
    span = tuple(d["span"]) if d.get("span") else None
    return SlotPair(d["type"], d["value"], span)


def _intent_dict(pred: IntentPrediction) -> dict:
    return {"raw": pred.raw_text, "canonical": pred.canonical, "resolution": pred.resolution}


def _slots_dict(pred: SlotPrediction) -> dict:
    return {
        "raw": pred.raw_text,
        "pairs": [_slot_pair_dict(p) for p in pred.pairs],
        "unaligned": [list(e) for e in pred.unaligned],
        "unknown_types": [list(e) for e in pred.unknown_types],
    }


def _joint_dict(joint: JointPrediction) -> dict:
    return {"intent": _intent_dict(joint.intent), "slots": _slots_dict(joint.slots)}


def _joint_from(d: dict) -> JointPrediction:
    intent = IntentPrediction(
        d["intent"]["raw"], d["intent"]["canonical"], d["intent"]["resolution"]
    )
    slots = SlotPrediction(
        raw_text=d["slots"]["raw"],
        pairs=tuple(_slot_pair_from(p) for p in d["slots"]["pairs"]),
        unaligned=tuple(tuple(e) for e in d["slots"]["unaligned"]),
        unknown_types=tuple(tuple(e) for e in d["slots"]["unknown_types"]),
    )
    return JointPrediction(intent, slots)


def record_to_dict(record: PredictionRecord) -> dict:
    """JSON-ready form of a record.

    Call durations are deliberately left out so replayed runs serialize
    byte-identically.
    """
    doc: dict = {
        "schema_version": PREDICTIONS_SCHEMA_VERSION,
        "utterance_id": record.utterance_id,
        "failed": record.failed,
        "error": record.error,
        "calls": [
            {
                "stage": c.stage,
                "token_length": c.token_length,
                "constraint": list(c.constraint) if c.constraint is not None else None,
                "request_key": c.request_key,
            }
            for c in record.calls
        ],
    }
    if isinstance(record.final, ConsensusResult):
        doc["final"] = {
            "kind": "consensus",
            "intent": record.final.intent,
            "slots": [_slot_pair_dict(p) for p in record.final.slots],
            "vote_trace": record.final.vote_trace,
        }
    else:
        doc["final"] = {"kind": "single", **_joint_dict(record.final)}
    if record.routes is not None:
        doc["routes"] = {
            "provenance": list(record.routes.provenance),
            "predictions": [_joint_dict(j) for j in record.routes.routes],
        }
    return doc


def record_from_dict(doc: dict) -> PredictionRecord:
    final_doc = doc["final"]
    final: ConsensusResult | JointPrediction
    if final_doc["kind"] == "consensus":
        final = ConsensusResult(
            intent=final_doc["intent"],
            slots=tuple(_slot_pair_from(p) for p in final_doc["slots"]),
            vote_trace=final_doc.get("vote_trace", {}),
        )
    else:
        final = _joint_from(final_doc)
    routes = None
    if "routes" in doc:
        routes = RouteSet(
            tuple(_joint_from(j) for j in doc["routes"]["predictions"]),
            tuple(doc["routes"]["provenance"]),
        )
    calls = tuple(
        CallRecord(
            stage=c["stage"],
            token_length=c["token_length"],
            constraint=tuple(c["constraint"]) if c.get("constraint") is not None else None,
            request_key=c.get("request_key", ""),
        )
        for c in doc.get("calls", [])
    )
    return PredictionRecord(
        utterance_id=doc["utterance_id"],
        final=final,
        routes=routes,
        calls=calls,
        failed=doc.get("failed", False),
        error=doc.get("error"),
    )


def write_predictions(records: list[PredictionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(
                json.dumps(record_to_dict(record), sort_keys=True, ensure_ascii=True)
                + "\n"
            )


def read_predictions(path) -> list[PredictionRecord]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(record_from_dict(json.loads(line)))
    return records


def _sha256_path(path) -> str:
    """Content hash of a file, or of a directory's files in sorted order."""
    path = Path(path)
    digest = hashlib.sha256()
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for file in files:
        digest.update(file.name.encode("utf-8"))
        with open(file, "rb") as handle:
            for chunk in iter(lambda: handle.read(65536), b""):
                digest.update(chunk)
    return digest.hexdigest()


def config_to_dict(config: RunConfig) -> dict:
    consistency: dict | None = None
    if isinstance(config.consistency, ByTemperature):
        consistency = {"by": "temperature", "temperatures": list(config.consistency.temperatures)}
    elif isinstance(config.consistency, ByPrompt):
        consistency = {"by": "prompt", "modes": [m.value for m in config.consistency.modes]}
    return {
        "mode": config.mode.value,
        "consistency": consistency,
        "gold_intent": config.gold_intent,
        "temperature": config.temperature,
        "model_name": config.model_name,
        "max_tokens": config.max_tokens,
        "max_in_flight": config.max_in_flight,
        "record_replay": config.record_replay,
        "backend": {
            "kind": config.backend.kind,
            "endpoint_url": config.backend.endpoint_url,
            "api_key_env": config.backend.api_key_env,
            "request_timeout": config.backend.request_timeout,
            "max_retries": config.backend.max_retries,
            "retry_backoff": list(config.backend.retry_backoff),
            "cache_dir": str(config.backend.cache_dir) if config.backend.cache_dir else None,
            "replay_file": str(config.backend.replay_file) if config.backend.replay_file else None,
            "record": config.backend.record,
        },
    }


def build_manifest(
    config: RunConfig,
    ontology_path,
    dataset_path,
) -> dict:
    """Everything needed to reproduce a run: config plus input content hashes."""
    templates = config.template_set()
    return {
        "schema_version": PREDICTIONS_SCHEMA_VERSION,
        "config": config_to_dict(config),
        "ontology_path": str(ontology_path),
        "ontology_sha256": _sha256_path(ontology_path),
        "dataset_path": str(dataset_path),
        "dataset_sha256": _sha256_path(dataset_path),
        "template_sha256": {
            name: hashlib.sha256(source.encode("utf-8")).hexdigest()
            for name, source in sorted(templates.sources.items())
        },
    }
