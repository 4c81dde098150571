"""Prompt construction for the supported prompting variants.

Prompt wording lives in external template files (``templates/``) with
``{{placeholder}}`` markers so users can swap wording without touching code.
A template file is a sequence of ``[[block_kind]]`` sections; recognized
placeholders are ``intent_list``, ``slot_descriptions``, ``sentence``,
``prior_intent``, and ``prior_slots``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .ontology import Ontology, SlotDef, SlotPair, Utterance

BLOCK_KINDS = (
    "task_instruction",
    "label_constraint",
    "regulation",
    "given_sentence",
    "prior_answer",
)

TEMPLATE_NAMES = (
    "vanilla",
    "intent_first",
    "slot_followup",
    "slot_standalone",
    "intent_followup",
)

_SECTION_RE = re.compile(r"^\[\[(\w+)\]\]\s*$")
_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


class TemplateError(Exception):
    """A template file is malformed or uses an unknown placeholder."""


class UnknownIntent(Exception):
    """The requested intent label is not part of the ontology."""


class PromptMode(str, Enum):
    """Which prompting variant drives a run."""

    VANILLA = "vanilla"
    CRO_INTENT_SLOT = "cro_intent_slot"
    CRO_SLOT_INTENT = "cro_slot_intent"
    NO_INTERACTION = "no_interaction"


@dataclass(frozen=True)
class PromptSpec:
    """An ordered list of (block_kind, text) pairs forming one prompt."""

    blocks: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        for kind, _ in self.blocks:
            if kind not in BLOCK_KINDS:
                raise TemplateError(f"unknown block kind {kind!r}")

    @property
    def rendered(self) -> str:
        return "\n\n".join(text for _, text in self.blocks)

    def block_text(self, kind: str) -> str | None:
        for block_kind, text in self.blocks:
            if block_kind == kind:
                return text
        return None


def _parse_template(source: str, name: str) -> tuple[tuple[str, str], ...]:
    blocks: list[tuple[str, list[str]]] = []
    for line in source.splitlines():
        match = _SECTION_RE.match(line)
        if match:
            kind = match.group(1)
            if kind not in BLOCK_KINDS:
                raise TemplateError(f"template {name!r}: unknown block kind {kind!r}")
            blocks.append((kind, []))
        else:
            if not blocks:
                if line.strip():
                    raise TemplateError(
                        f"template {name!r}: text before the first [[block]] marker"
                    )
                continue
            blocks[-1][1].append(line)
    if not blocks:
        raise TemplateError(f"template {name!r}: no blocks found")
    return tuple((kind, "\n".join(lines).strip("\n")) for kind, lines in blocks)


@dataclass(frozen=True)
class TemplateSet:
    """The five prompt templates, parsed into block structure."""

    sources: dict[str, str]
    parsed: dict[str, tuple[tuple[str, str], ...]]

    @classmethod
    def from_sources(cls, sources: dict[str, str]) -> "TemplateSet":
        missing = [name for name in TEMPLATE_NAMES if name not in sources]
        if missing:
            raise TemplateError(f"missing templates: {', '.join(missing)}")
        parsed = {name: _parse_template(sources[name], name) for name in TEMPLATE_NAMES}
        return cls(sources=dict(sources), parsed=parsed)

    @classmethod
    def default(cls) -> "TemplateSet":
        sources = {}
        for name in TEMPLATE_NAMES:
            ref = resources.files("sluprompt.templates").joinpath(f"{name}.txt")
            sources[name] = ref.read_text(encoding="utf-8")
        return cls.from_sources(sources)

    @classmethod
    def load(cls, directory: str | Path) -> "TemplateSet":
        directory = Path(directory)
        sources = {}
        for name in TEMPLATE_NAMES:
            path = directory / f"{name}.txt"
            if not path.exists():
                raise TemplateError(f"missing template file: {path}")
            sources[name] = path.read_text(encoding="utf-8")
        return cls.from_sources(sources)


_DEFAULT_TEMPLATES: TemplateSet | None = None


def default_templates() -> TemplateSet:
    global _DEFAULT_TEMPLATES
    if _DEFAULT_TEMPLATES is None:
        _DEFAULT_TEMPLATES = TemplateSet.default()
    return _DEFAULT_TEMPLATES


def _substitute(text: str, values: dict[str, str], name: str) -> str:
    def replace(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise TemplateError(f"template {name!r}: unknown placeholder {{{{{key}}}}}")
        return values[key]

    return _PLACEHOLDER_RE.sub(replace, text)


def _render(template_name: str, templates: TemplateSet, values: dict[str, str]) -> PromptSpec:
    blocks = tuple(
        (kind, _substitute(text, values, template_name))
        for kind, text in templates.parsed[template_name]
    )
    return PromptSpec(blocks=blocks)


def format_intent_list(ontology: Ontology) -> str:
    return "; ".join(ontology.intents)


def format_slot_descriptions(slots: tuple[SlotDef, ...] | list[SlotDef]) -> str:
    return "\n".join(f"{slot.label}: {slot.description}" for slot in slots)


def format_prior_slots(pairs: list[SlotPair] | tuple[SlotPair, ...]) -> str:
    if not pairs:
        return "no slots were found"
    return "; ".join(f'{pair.slot_type}="{pair.value}"' for pair in pairs)


def build_vanilla_prompt(
    ontology: Ontology,
    utterance: Utterance,
    templates: TemplateSet | None = None,
) -> PromptSpec:
    """Single-turn prompt asking for intent and slots jointly (full label sets)."""
    templates = templates or default_templates()
    return _render(
        "vanilla",
        templates,
        {
            "intent_list": format_intent_list(ontology),
            "slot_descriptions": format_slot_descriptions(ontology.slots),
            "sentence": utterance.text,
        },
    )


def build_intent_prompt(
    ontology: Ontology,
    utterance: Utterance,
    templates: TemplateSet | None = None,
) -> PromptSpec:
    """Stage-1 prompt: classify the intent against the full intent list."""
    templates = templates or default_templates()
    return _render(
        "intent_first",
        templates,
        {
            "intent_list": format_intent_list(ontology),
            "sentence": utterance.text,
        },
    )


def build_slot_prompt(
    ontology: Ontology,
    utterance: Utterance,
    predicted_intent: str | None = None,
    templates: TemplateSet | None = None,
) -> PromptSpec:
    """Slot-filling prompt.

    With ``predicted_intent`` the prompt continues the session: it restates
    the intent and offers only the slot subset mapped to it. With None the
    prompt is session-initial and offers the full slot list.
    """
    templates = templates or default_templates()
    if predicted_intent is None:
        return _render(
            "slot_standalone",
            templates,
            {
                "slot_descriptions": format_slot_descriptions(ontology.slots),
                "sentence": utterance.text,
            },
        )
    if predicted_intent not in ontology.intents:
        raise UnknownIntent(f"intent {predicted_intent!r} is not in the ontology")
    subset = ontology.slots_for_intent(predicted_intent)
    return _render(
        "slot_followup",
        templates,
        {
            "prior_intent": predicted_intent,
            "slot_descriptions": format_slot_descriptions(subset),
            "sentence": utterance.text,
        },
    )


def build_intent_prompt_after_slots(
    ontology: Ontology,
    utterance: Utterance,
    predicted_slots: list[SlotPair] | tuple[SlotPair, ...],
    templates: TemplateSet | None = None,
) -> PromptSpec:
    """Stage-2 prompt of the slot-first order: intent choice given prior slots.

    The full intent list is always presented; the slot -> intent direction
    defines no label subsetting.
    """
    templates = templates or default_templates()
    return _render(
        "intent_followup",
        templates,
        {
            "prior_slots": format_prior_slots(predicted_slots),
            "intent_list": format_intent_list(ontology),
            "sentence": utterance.text,
        },
    )


def constraint_for_prompt(
    ontology: Ontology, predicted_intent: str | None
) -> tuple[str, ...]:
    """The slot labels offered by a slot prompt built with the same arguments."""
    if predicted_intent is None:
        return ontology.slot_labels
    return tuple(slot.label for slot in ontology.slots_for_intent(predicted_intent))
