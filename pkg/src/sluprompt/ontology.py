"""Task ontology and dataset loading.

The ontology is a standalone JSON document (intents, slots with prompt
descriptions, and the intent -> slot-subset map); datasets come either as
span-based JSON lines or as BIO-tagged corpora which are converted to
character spans on load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


class DatasetError(Exception):
    """Base class for ontology/dataset validation failures."""


class MalformedOntology(DatasetError):
    """Ontology document violates an invariant (names the offending label)."""


class UnknownLabel(DatasetError):
    """A label in the data is absent from the ontology or not valid BIO."""


class SpanMismatch(DatasetError):
    """A declared character span does not reproduce the slot value."""


class LengthMismatch(DatasetError):
    """Token and tag sequences differ in length."""


@dataclass(frozen=True)
class SlotDef:
    """A slot label plus the free-text description injected into prompts."""

    label: str
    description: str


@dataclass(frozen=True)
class SlotPair:
    """One typed span: slot type, surface value, optional (start, end) offsets."""

    slot_type: str
    value: str
    char_span: tuple[int, int] | None = None


@dataclass(frozen=True)
class Ontology:
    """Validated label inventory shared by prompts, parsing, and scoring.

    ``intent_slot_map`` is normalized at construction: every intent gets an
    entry (missing intents map to an empty subset) and each subset is
    re-ordered to follow the order of ``slots``.
    """

    intents: tuple[str, ...]
    slots: tuple[SlotDef, ...]
    intent_slot_map: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "intents", tuple(self.intents))
        object.__setattr__(self, "slots", tuple(self.slots))
        seen: set[str] = set()
        for intent in self.intents:
            if not intent:
                raise MalformedOntology("empty intent label")
            if intent in seen:
                raise MalformedOntology(f"duplicate intent label: {intent!r}")
            seen.add(intent)
        slot_order: dict[str, int] = {}
        for slot in self.slots:
            if not slot.label:
                raise MalformedOntology("empty slot label")
            if slot.label in slot_order:
                raise MalformedOntology(f"duplicate slot label: {slot.label!r}")
            if not slot.description:
                raise MalformedOntology(
                    f"slot {slot.label!r} has an empty description"
                )
            slot_order[slot.label] = len(slot_order)
        normalized: dict[str, tuple[str, ...]] = {}
        for intent, subset in self.intent_slot_map.items():
            if intent not in seen:
                raise MalformedOntology(
                    f"intent_slot_map key {intent!r} is not a declared intent"
                )
            for label in subset:
                if label not in slot_order:
                    raise MalformedOntology(
                        f"intent_slot_map for {intent!r} references unknown slot {label!r}"
                    )
            normalized[intent] = tuple(sorted(set(subset), key=slot_order.__getitem__))
        for intent in self.intents:
            normalized.setdefault(intent, ())
        object.__setattr__(self, "intent_slot_map", normalized)

    @property
    def slot_labels(self) -> tuple[str, ...]:
        return tuple(slot.label for slot in self.slots)

    def slot_def(self, label: str) -> SlotDef:
        for slot in self.slots:
            if slot.label == label:
                return slot
        raise UnknownLabel(f"unknown slot label: {label!r}")

    def slots_for_intent(self, intent: str) -> tuple[SlotDef, ...]:
        """Slot definitions mapped to ``intent``, in ontology order."""
        if intent not in self.intent_slot_map:
            raise UnknownLabel(f"unknown intent label: {intent!r}")
        subset = set(self.intent_slot_map[intent])
        return tuple(slot for slot in self.slots if slot.label in subset)


@dataclass(frozen=True)
class Utterance:
    """An input sentence; tokens default to a whitespace split of the text."""

    id: str
    text: str
    tokens: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise DatasetError(f"utterance {self.id!r} has empty text")
        if self.tokens is None:
            object.__setattr__(self, "tokens", tuple(self.text.split()))
        else:
            tokens = tuple(self.tokens)
            if " ".join(tokens) != self.text:
                raise DatasetError(
                    f"utterance {self.id!r}: explicit tokens do not join to the text"
                )
            object.__setattr__(self, "tokens", tokens)


@dataclass(frozen=True)
class GoldAnnotation:
    """Reference labels for one utterance.

    ``intent`` may be None for unlabeled rows (JSON datasets with a null
    intent); scoring and gold-intent runs require it to be present.
    """

    utterance_id: str
    intent: str | None
    slots: tuple[SlotPair, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "slots", tuple(self.slots))


def _token_char_ranges(tokens: list[str] | tuple[str, ...]) -> list[tuple[int, int]]:
    ranges = []
    pos = 0
    for token in tokens:
        ranges.append((pos, pos + len(token)))
        pos += len(token) + 1
    return ranges


def _tag_runs(tags: list[str] | tuple[str, ...]) -> list[tuple[str, int, int]]:
    """Maximal (slot_type, start_token, end_token_inclusive) runs of BIO tags.

    An I- tag that opens a run (no preceding tag of the same type) is treated
    as B-, the conll-eval repair convention.
    """
    runs: list[tuple[str, int, int]] = []
    current: list | None = None  # [type, start, end]
    for i, tag in enumerate(tags):
        if tag == "O":
            if current:
                runs.append(tuple(current))
                current = None
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            raise UnknownLabel(f"tag {tag!r} at position {i} is not valid BIO")
        prefix, slot_type = tag[0], tag[2:]
        if prefix == "I" and current and current[0] == slot_type:
            current[2] = i
        else:
            if current:
                runs.append(tuple(current))
            current = [slot_type, i, i]
    if current:
        runs.append(tuple(current))
    return runs


def bio_to_spans(
    tokens: list[str] | tuple[str, ...], tags: list[str] | tuple[str, ...]
) -> list[SlotPair]:
    """Convert parallel token/BIO-tag sequences into character-anchored pairs.

    Character offsets are relative to the whitespace-joined token string.
    """
    if len(tokens) != len(tags):
        raise LengthMismatch(
            f"{len(tokens)} tokens but {len(tags)} tags"
        )
    ranges = _token_char_ranges(tokens)
    pairs = []
    for slot_type, start, end in _tag_runs(tags):
        char_span = (ranges[start][0], ranges[end][1])
        value = " ".join(tokens[start : end + 1])
        pairs.append(SlotPair(slot_type, value, char_span))
    return pairs


def spans_to_bio(
    pairs: list[SlotPair] | tuple[SlotPair, ...],
    tokens: list[str] | tuple[str, ...],
) -> list[str]:
    """Re-derive BIO tags from character-anchored pairs (inverse of bio_to_spans)."""
    ranges = _token_char_ranges(tokens)
    starts = {start: i for i, (start, _) in enumerate(ranges)}
    ends = {end: i for i, (_, end) in enumerate(ranges)}
    tags = ["O"] * len(tokens)
    for pair in pairs:
        if pair.char_span is None:
            raise SpanMismatch(f"pair {pair.slot_type}={pair.value!r} has no span")
        start, end = pair.char_span
        if start not in starts or end not in ends:
            raise SpanMismatch(
                f"span {pair.char_span} does not align to token boundaries"
            )
        first, last = starts[start], ends[end]
        tags[first] = f"B-{pair.slot_type}"
        for i in range(first + 1, last + 1):
            tags[i] = f"I-{pair.slot_type}"
    return tags


def load_ontology(path: str | Path) -> Ontology:
    """Load and validate the ontology JSON document."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedOntology(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise MalformedOntology(f"{path}: top level must be a JSON object")
    for key in ("intents", "slots"):
        if key not in doc:
            raise MalformedOntology(f"{path}: missing required key {key!r}")
    slots = []
    for entry in doc["slots"]:
        if not isinstance(entry, dict) or "label" not in entry:
            raise MalformedOntology(f"{path}: slot entries need a 'label' field")
        slots.append(SlotDef(entry["label"], entry.get("description", "")))
    raw_map = doc.get("intent_slot_map", {})
    return Ontology(
        intents=tuple(doc["intents"]),
        slots=tuple(slots),
        intent_slot_map={k: tuple(v) for k, v in raw_map.items()},
    )


def _validate_gold(
    utterance: Utterance, gold: GoldAnnotation, ontology: Ontology, where: str
) -> None:
    if gold.intent is not None and gold.intent not in ontology.intents:
        raise UnknownLabel(f"{where}: unknown intent {gold.intent!r}")
    known = set(ontology.slot_labels)
    seen: set[tuple[str, str, tuple[int, int] | None]] = set()
    for pair in gold.slots:
        if pair.slot_type not in known:
            raise UnknownLabel(f"{where}: unknown slot type {pair.slot_type!r}")
        if pair.char_span is not None:
            start, end = pair.char_span
            if utterance.text[start:end] != pair.value:
                raise SpanMismatch(
                    f"{where}: span {pair.char_span} reads "
                    f"{utterance.text[start:end]!r}, not {pair.value!r}"
                )
        key = (pair.slot_type, pair.value, pair.char_span)
        if key in seen:
            raise DatasetError(f"{where}: duplicate gold slot pair {key}")
        seen.add(key)


def _load_jsonl(path: Path, ontology: Ontology):
    out = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: not valid JSON ({exc})") from exc
            utt = Utterance(id=str(rec.get("id", lineno - 1)), text=rec["text"])
            pairs = []
            for slot in rec.get("slots", []):
                span = None
                if slot.get("start") is not None and slot.get("end") is not None:
                    span = (int(slot["start"]), int(slot["end"]))
                pairs.append(SlotPair(slot["type"], slot["value"], span))
            gold = GoldAnnotation(utt.id, rec.get("intent"), tuple(pairs))
            _validate_gold(utt, gold, ontology, where)
            out.append((utt, gold))
    return out


def _load_bio_dir(path: Path, ontology: Ontology):
    token_lines = (path / "seq.in").read_text(encoding="utf-8").splitlines()
    tag_lines = (path / "seq.out").read_text(encoding="utf-8").splitlines()
    intents = (path / "label").read_text(encoding="utf-8").splitlines()
    if not (len(token_lines) == len(tag_lines) == len(intents)):
        raise LengthMismatch(
            f"{path}: seq.in/seq.out/label line counts differ "
            f"({len(token_lines)}/{len(tag_lines)}/{len(intents)})"
        )
    out = []
    for i, (toks, tags, intent) in enumerate(zip(token_lines, tag_lines, intents)):
        where = f"{path}:{i + 1}"
        tokens = toks.split()
        if not tokens:
            continue
        out.append(_bio_record(str(i), tokens, tags.split(), intent.strip(), ontology, where))
    return out


def _load_conll(path: Path, ontology: Ontology):
    out = []
    tokens: list[str] = []
    tags: list[str] = []
    intent: str | None = None
    block_start = 1

    def flush(where: str):
        if not tokens and intent is None:
            return
        if intent is None:
            raise DatasetError(f"{where}: block has no intent line")
        out.append(
            _bio_record(str(len(out)), list(tokens), list(tags), intent, ontology, where)
        )
        tokens.clear()
        tags.clear()

    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                flush(f"{path}:{block_start}")
                intent = None
                block_start = lineno + 1
                continue
            fields = line.split()
            if len(fields) == 1:
                intent = fields[0]
            else:
                tokens.append(fields[0])
                tags.append(fields[-1])
    flush(f"{path}:{block_start}")
    return out


def _bio_record(utt_id, tokens, tags, intent, ontology, where):
    try:
        pairs = bio_to_spans(tokens, tags)
    except UnknownLabel as exc:
        raise UnknownLabel(f"{where}: {exc}") from exc
    except LengthMismatch as exc:
        raise LengthMismatch(f"{where}: {exc}") from exc
    utt = Utterance(id=utt_id, text=" ".join(tokens), tokens=tuple(tokens))
    gold = GoldAnnotation(utt_id, intent, tuple(pairs))
    _validate_gold(utt, gold, ontology, where)
    return (utt, gold)


def load_dataset(
    path: str | Path, ontology: Ontology
) -> list[tuple[Utterance, GoldAnnotation]]:
    """Load a dataset in either supported format and validate against the ontology.

    Format detection: a directory is the three-file BIO layout
    (seq.in/seq.out/label); a file whose first non-blank line starts with
    ``{`` is JSON lines; anything else is CoNLL-style BIO blocks.
    """
    path = Path(path)
    if path.is_dir():
        return _load_bio_dir(path, ontology)
    with path.open(encoding="utf-8") as handle:
        first = ""
        for line in handle:
            if line.strip():
                first = line.strip()
                break
    if first.startswith("{"):
        return _load_jsonl(path, ontology)
    return _load_conll(path, ontology)


def scaffold_ontology(
    data: list[tuple[Utterance, GoldAnnotation]],
) -> dict:
    """Derive a description-less ontology document from labeled data.

    Zero-shot prompting needs slot descriptions that no corpus carries, so
    the returned document uses placeholder descriptions for the user to edit
    before loading.
    """
    intents: list[str] = []
    slot_labels: list[str] = []
    mapping: dict[str, list[str]] = {}
    for _, gold in data:
        if gold.intent and gold.intent not in intents:
            intents.append(gold.intent)
        for pair in gold.slots:
            if pair.slot_type not in slot_labels:
                slot_labels.append(pair.slot_type)
            if gold.intent:
                subset = mapping.setdefault(gold.intent, [])
                if pair.slot_type not in subset:
                    subset.append(pair.slot_type)
    return {
        "intents": intents,
        "slots": [
            {"label": label, "description": f"(describe the {label} slot)"}
            for label in slot_labels
        ],
        "intent_slot_map": {intent: mapping.get(intent, []) for intent in intents},
    }
