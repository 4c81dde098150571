"""Zero-shot intent detection and slot filling through staged chat prompting.

The package wires together an ontology of intents and described slots,
prompt builders for the single-turn and two-stage variants, a chat backend
with caching and deterministic replay, total parsers for regulated model
output, multi-route consistency voting, and the standard metric suite.
"""

from .backend import (
    ApiError,
    BackendConfig,
    BackendError,
    ChatMessage,
    ChatRequest,
    ChatResponse,
    RateLimitedError,
    ReplayMissError,
    TransportError,
    complete,
    request_key,
)
from .consensus import (
    ConsensusResult,
    RouteSet,
    consensus,
    vote_intent,
    vote_slot_type,
    vote_slot_values,
)
from .metrics import (
    IdMismatch,
    MetricsSummary,
    compute_summary,
    context_length_stats,
    score_intent,
    score_sentence,
    score_slots,
)
from .ontology import (
    DatasetError,
    GoldAnnotation,
    LengthMismatch,
    MalformedOntology,
    Ontology,
    SlotDef,
    SlotPair,
    SpanMismatch,
    UnknownLabel,
    Utterance,
    bio_to_spans,
    load_dataset,
    load_ontology,
    scaffold_ontology,
    spans_to_bio,
)
from .parsing import (
    IntentPrediction,
    JointPrediction,
    SlotPrediction,
    normalize_label,
    parse_intent,
    parse_joint,
    parse_slots,
)
from .pipeline import (
    ByPrompt,
    ByTemperature,
    PredictionRecord,
    RunConfig,
    build_manifest,
    expected_calls,
    fan_out_routes,
    read_predictions,
    run_dataset,
    run_single,
    write_predictions,
)
from .prompts import (
    PromptMode,
    PromptSpec,
    TemplateError,
    TemplateSet,
    UnknownIntent,
    build_intent_prompt,
    build_intent_prompt_after_slots,
    build_slot_prompt,
    build_vanilla_prompt,
)
from .report import render_csv, render_report, summaries_to_json

__version__ = "0.1.0"

__all__ = [
    "ApiError",
    "BackendConfig",
    "BackendError",
    "ByPrompt",
    "ByTemperature",
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "ConsensusResult",
    "DatasetError",
    "GoldAnnotation",
    "IdMismatch",
    "IntentPrediction",
    "JointPrediction",
    "LengthMismatch",
    "MalformedOntology",
    "MetricsSummary",
    "Ontology",
    "PredictionRecord",
    "PromptMode",
    "PromptSpec",
    "RateLimitedError",
    "ReplayMissError",
    "RouteSet",
    "RunConfig",
    "SlotDef",
    "SlotPair",
    "SlotPrediction",
    "SpanMismatch",
    "TemplateError",
    "TemplateSet",
    "TransportError",
    "UnknownIntent",
    "UnknownLabel",
    "Utterance",
    "bio_to_spans",
    "build_intent_prompt",
    "build_intent_prompt_after_slots",
    "build_manifest",
    "build_slot_prompt",
    "build_vanilla_prompt",
    "complete",
    "compute_summary",
    "consensus",
    "context_length_stats",
    "expected_calls",
    "fan_out_routes",
    "load_dataset",
    "load_ontology",
    "normalize_label",
    "parse_intent",
    "parse_joint",
    "parse_slots",
    "read_predictions",
    "render_csv",
    "render_report",
    "request_key",
    "run_dataset",
    "run_single",
    "scaffold_ontology",
    "score_intent",
    "score_sentence",
    "score_slots",
    "spans_to_bio",
    "summaries_to_json",
    "vote_intent",
    "vote_slot_type",
    "vote_slot_values",
    "write_predictions",
]
