from __future__ import annotations

import functools
import sys
from pathlib import Path

import pytest

import sluprompt.pipeline as pipeline_module
from sluprompt.backend import BackendConfig, complete
from sluprompt.ontology import Ontology, SlotDef, load_dataset, load_ontology

DATA_DIR = Path(__file__).parent / "data"
sys.path.insert(0, str(DATA_DIR))

import make_fixtures  # noqa: E402  (fixture generator doubles as scripted model)


@pytest.fixture(scope="session")
def snips_ontology() -> Ontology:
    return load_ontology(DATA_DIR / "snips_ontology.json")


@pytest.fixture(scope="session")
def snips_data(snips_ontology):
    return load_dataset(DATA_DIR / "snips_dataset.jsonl", snips_ontology)


@pytest.fixture(scope="session")
def replay_path() -> Path:
    return DATA_DIR / "replay_fixture.jsonl"


@pytest.fixture
def replay_backend(replay_path) -> BackendConfig:
    return BackendConfig(kind="replay", replay_file=replay_path)


@pytest.fixture(scope="session")
def mini_ontology() -> Ontology:
    return Ontology(
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


@pytest.fixture
def scripted_pipeline(monkeypatch):
    """Route pipeline backend calls through a scripted transport.

    Yields a mutable holder: set ``holder.reply`` to override the default
    fixture responder, and read ``holder.prompts`` for every prompt sent.
    """

    class Holder:
        def __init__(self):
            self.prompts: list[str] = []
            self.reply = None  # callable(messages) -> str, or None for default

    holder = Holder()

    def transport(url, payload, headers, timeout):
        import json

        request = json.loads(payload.decode("utf-8"))
        prompt = next(
            m["content"] for m in reversed(request["messages"]) if m["role"] == "user"
        )
        holder.prompts.append(prompt)
        responder = holder.reply or make_fixtures.scripted_reply
        reply = responder(request["messages"])
        body = json.dumps({"choices": [{"message": {"content": reply}}]})
        return 200, body, {}

    monkeypatch.setattr(
        pipeline_module, "complete", functools.partial(complete, transport=transport)
    )
    return holder


@pytest.fixture
def http_backend(tmp_path) -> BackendConfig:
    """An http-kind config for use with the scripted transport."""
    return BackendConfig(
        kind="http", endpoint_url="http://scripted.invalid/v1/chat/completions"
    )
