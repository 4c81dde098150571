"""Walk through the two-step consistency vote on a four-route example.

Four independent inference routes annotate the sentence
"Find the movie The Ghost". Their raw replies disagree on the intent and on
the slot type, and the vote settles both: a sentence-level majority picks
the intent, a position vote keeps every span backed by at least half of the
routes, and a per-span plurality picks each kept span's type.

Run: python demos/voting_walkthrough.py
"""

import json

from sluprompt import Ontology, SlotDef, Utterance, consensus, parse_joint
from sluprompt.consensus import RouteSet

ontology = Ontology(
    intents=("SearchMovie", "SearchCreativeWork", "PlayMusic"),
    slots=(
        SlotDef("movie_name", "Name of the movie to look up"),
        SlotDef("object_name", "Name of the creative work"),
        SlotDef("artist", "Name of the musical artist"),
    ),
    intent_slot_map={
        "SearchMovie": ("movie_name",),
        "SearchCreativeWork": ("object_name",),
        "PlayMusic": ("artist",),
    },
)

utterance = Utterance("demo", "Find the movie The Ghost")

replies = [
    'Intent=SearchMovie; movie_name="The Ghost"',
    'Intent=SearchMovie; movie_name="The Ghost"',
    'Intent=SearchCreativeWork; object_name="The Ghost"',
    "Intent=SearchMovie",
]

print(f"Sentence: {utterance.text}\n")
routes = []
for i, reply in enumerate(replies):
    joint = parse_joint(reply, ontology, utterance)
    routes.append(joint)
    pairs = ", ".join(f'{p.slot_type}="{p.value}"@{p.char_span}' for p in joint.slots.pairs)
    print(f"route {i}: intent={joint.intent.canonical!r:24s} slots=[{pairs}]")

result = consensus(RouteSet(tuple(routes), ("r0", "r1", "r2", "r3")))

print(f"\nvoted intent: {result.intent}")
for pair in result.slots:
    print(f'voted slot:   {pair.slot_type}="{pair.value}" at {pair.char_span}')
print("\nvote trace:")
print(json.dumps(result.vote_trace, indent=2))
