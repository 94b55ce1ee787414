from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from iacsmell.corpus import Snippet
from iacsmell.llm_bench import ChatClient, ClientConfig

FIXTURES = Path(__file__).parent / "fixtures"


def envelope(text: str) -> tuple[int, str]:
    """A successful chat-completion response body around the given text."""
    return 200, json.dumps({"choices": [{"message": {"content": text}}]})


def scripted_client(
    cache_dir,
    responses=None,
    responder=None,
    capture=None,
    model: str = "stub-model",
    max_retries: int = 3,
    max_in_flight: int = 1,
) -> ChatClient:
    """ChatClient over a scripted transport. `responses` is a queue of
    (status, body) tuples or exceptions; `responder` is a payload -> response
    callable for order-independent scripting."""
    queue = list(responses or [])

    def transport(url, headers, payload, timeout):
        if capture is not None:
            capture.append({"url": url, "headers": headers, "payload": payload})
        if responder is not None:
            return responder(payload)
        item = queue.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

    config = ClientConfig(
        endpoint="http://stub.invalid/v1/chat",
        model=model,
        cache_dir=Path(cache_dir) / "cache",
        backoff_base=0.0,
        max_retries=max_retries,
        max_in_flight=max_in_flight,
    )
    return ChatClient(config, transport=transport)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def read_fixture(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def make_snippet(
    i: int,
    label: int,
    tool: str = "puppet",
    body: str | None = None,
    pair_id: str | None = None,
    misconfig_lines: list[int] | None = None,
) -> Snippet:
    return Snippet(
        id=f"s{i:05d}",
        tool=tool,
        body=body or f"file {{ '/tmp/f{i}': mode => '0644' }}",
        label=label,
        pair_id=pair_id,
        misconfig_lines=misconfig_lines,
    )


def make_dataset(n_pos: int, n_neg: int, seed: int = 0) -> list[Snippet]:
    """n_pos misconfigured + n_neg clean snippets in a shuffled order."""
    snippets = [make_snippet(i, 1) for i in range(n_pos)]
    snippets += [make_snippet(n_pos + i, 0) for i in range(n_neg)]
    random.Random(seed).shuffle(snippets)
    return snippets


def make_paired_dataset(n_pairs: int, n_pos: int, n_neg: int, seed: int = 0) -> list[Snippet]:
    """Canonical misconfigured/fixed pairs plus unpaired singletons."""
    snippets: list[Snippet] = []
    counter = 0
    for p in range(n_pairs):
        snippets.append(make_snippet(counter, 1, pair_id=f"p{p}"))
        snippets.append(make_snippet(counter + 1, 0, pair_id=f"p{p}"))
        counter += 2
    for _ in range(n_pos):
        snippets.append(make_snippet(counter, 1))
        counter += 1
    for _ in range(n_neg):
        snippets.append(make_snippet(counter, 0))
        counter += 1
    random.Random(seed).shuffle(snippets)
    return snippets
