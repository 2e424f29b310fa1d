"""Chat-completion backends behind one interface.

Two implementations of the same gateway surface: an HTTP client speaking
the ``/v1/chat/completions`` wire protocol of llama.cpp-style servers, and
a scripted backend that replays canned responses for deterministic runs.
Both also serve text embeddings (the scripted one via a seeded
bag-of-tokens hash, so similarity reflects shared vocabulary).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import requests

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")

DEFAULT_EMBED_DIM = 32
DEFAULT_RETRIES = 2


class GatewayError(Exception):
    """Base for operational backend failures."""


class BackendUnreachableError(GatewayError):
    """The HTTP backend could not be reached."""


class MalformedResponseError(GatewayError):
    """The backend answered, but not in the expected wire shape."""


class ScriptExhaustedError(GatewayError):
    """A scripted backend ran out of canned responses."""


class StructuredOutputError(GatewayError):
    """The model never produced a parseable structured reply within the retry budget."""


@dataclass(frozen=True)
class Msg:
    """One history entry: a role and its text content."""

    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.content is None:
            raise ValueError("content must not be None")

    def as_wire(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


def system(content: str) -> Msg:
    return Msg("system", content)


def user(content: str) -> Msg:
    return Msg("user", content)


def assistant(content: str) -> Msg:
    return Msg("assistant", content)


@dataclass(frozen=True)
class GenParams:
    """Sampling parameters for one generation call."""

    temperature: float = 0.7
    max_tokens: int = 512
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class Embedding:
    """Fixed-length real vector; gateways always return unit L2 norm."""

    values: tuple[float, ...]

    @property
    def dimension(self) -> int:
        return len(self.values)

    def dot(self, other: "Embedding") -> float:
        if self.dimension != other.dimension:
            raise ValueError(
                f"dimension mismatch: {self.dimension} vs {other.dimension}"
            )
        return math.fsum(a * b for a, b in zip(self.values, other.values))

    def norm(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.values))

    def normalized(self) -> "Embedding":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return Embedding(tuple(v / n for v in self.values))


@dataclass
class Script:
    """Ordered canned responses consumed one per chat call.

    Exhaustion raises; a script never silently repeats itself.
    """

    responses: list[str]
    cursor: int = 0

    def next(self) -> str:
        if self.cursor >= len(self.responses):
            raise ScriptExhaustedError(
                f"script exhausted after {len(self.responses)} responses"
            )
        out = self.responses[self.cursor]
        self.cursor = self.cursor + 1
        return out

    @property
    def remaining(self) -> int:
        return len(self.responses) - self.cursor


@dataclass(frozen=True)
class FieldSpec:
    """One field a structured reply must carry.

    kind is one of: any, string, number, boolean, list, object.
    """

    name: str
    required: bool = True
    kind: str = "any"


def _check_history(history: Sequence[Msg]) -> None:
    if not history:
        raise ValueError("history must be non-empty")
    for i, msg in enumerate(history):
        if msg.role == "system" and i != 0:
            raise ValueError("a system message is only allowed first in the history")


class Gateway:
    """Shared contract: chat and embed, both leaving their inputs untouched.

    Callers issue requests strictly sequentially (one logical caller at a
    time); implementations only need to keep each call's request and
    response paired.
    """

    def chat(self, history: Sequence[Msg], params: GenParams) -> str:
        _check_history(history)
        return self._chat(list(history), params)

    def embed(self, text: str) -> Embedding:
        if not text:
            raise ValueError("cannot embed empty text")
        return self._embed(text)

    def _chat(self, history: list[Msg], params: GenParams) -> str:
        raise NotImplementedError

    def _embed(self, text: str) -> Embedding:
        raise NotImplementedError


def hash_embedding(text: str, dim: int = DEFAULT_EMBED_DIM, seed: int = 0) -> Embedding:
    """Deterministic bag-of-tokens embedding.

    Each lowercased token hashes to a fixed gaussian vector; the text vector
    is the normalized token sum, so texts sharing words land closer than
    unrelated ones. Good enough to exercise retrieval and action-subsetting
    logic offline.
    """
    tokens = re.findall(r"[a-z0-9']+", text.lower())
    if not tokens:
        tokens = [text]
    acc = [0.0] * dim
    for token in tokens:
        digest = hashlib.sha256(f"{seed}:{token}".encode("utf-8")).digest()
        rng = random.Random(int.from_bytes(digest[:8], "big"))
        for i in range(dim):
            acc[i] += rng.gauss(0.0, 1.0)
    emb = Embedding(tuple(acc))
    if emb.norm() == 0.0:  # astronomically unlikely; keep the invariant anyway
        acc[0] = 1.0
        emb = Embedding(tuple(acc))
    return emb.normalized()


class ScriptedGateway(Gateway):
    """Deterministic backend: canned chat responses plus hash embeddings.

    Records every call (``chat_calls`` / ``embed_calls``) so tests can
    assert on the exact prompts a run produced.
    """

    def __init__(self, script: Script | Sequence[str], seed: int = 0,
                 embed_dim: int = DEFAULT_EMBED_DIM) -> None:
        if not isinstance(script, Script):
            script = Script(list(script))
        self.script = script
        self.seed = seed
        self.embed_dim = embed_dim
        self.chat_calls: list[tuple[tuple[Msg, ...], GenParams]] = []
        self.embed_calls: list[str] = []

    def _chat(self, history: list[Msg], params: GenParams) -> str:
        self.chat_calls.append((tuple(history), params))
        return self.script.next()

    def _embed(self, text: str) -> Embedding:
        self.embed_calls.append(text)
        return hash_embedding(text, self.embed_dim, self.seed)


class HttpGateway(Gateway):
    """Client for an OpenAI-compatible chat-completions server.

    Request bodies carry exactly ``model``, ``messages``, ``temperature``,
    ``max_tokens`` and ``seed``; the reply is read from
    ``choices[0].message.content``. Embeddings go through ``/v1/embeddings``.
    """

    def __init__(self, base_url: str, model: str = "local",
                 timeout: float = 120.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout

    def _post(self, path: str, body: dict[str, Any]) -> dict[str, Any]:
        url = f"{self.base_url}{path}"
        try:
            resp = requests.post(url, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnreachableError(f"POST {url} failed: {exc}") from exc
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponseError(f"non-JSON response from {url}") from exc

    def ping(self) -> bool:
        """True when something answers HTTP at the base URL."""
        try:
            requests.get(f"{self.base_url}/v1/models", timeout=self.timeout)
        except requests.RequestException:
            return False
        return True

    def _chat(self, history: list[Msg], params: GenParams) -> str:
        body = {
            "model": self.model,
            "messages": [m.as_wire() for m in history],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "seed": params.seed,
        }
        data = self._post("/v1/chat/completions", body)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(
                f"chat response missing choices[0].message.content: {data!r}"
            ) from exc
        if not isinstance(content, str):
            raise MalformedResponseError(f"message content is not text: {content!r}")
        return content

    def _embed(self, text: str) -> Embedding:
        data = self._post("/v1/embeddings", {"model": self.model, "input": text})
        try:
            values = data["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(
                f"embeddings response missing data[0].embedding: {data!r}"
            ) from exc
        return Embedding(tuple(float(v) for v in values)).normalized()


class CassetteRecorder(Gateway):
    """Wraps a gateway and appends every exchange to a JSONL cassette.

    One record per line: ``{"request": <wire body>, "response": <wire body>}``.
    Chat records from a cassette replay later as a :class:`Script`.
    """

    def __init__(self, inner: Gateway, path: str | Path) -> None:
        self.inner = inner
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")

    def _append(self, request: dict[str, Any], response: dict[str, Any]) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps({"request": request, "response": response}) + "\n")

    def _chat(self, history: list[Msg], params: GenParams) -> str:
        text = self.inner.chat(history, params)
        request = {
            "model": getattr(self.inner, "model", "scripted"),
            "messages": [m.as_wire() for m in history],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "seed": params.seed,
        }
        response = {"choices": [{"message": {"role": "assistant", "content": text}}]}
        self._append(request, response)
        return text

    def _embed(self, text: str) -> Embedding:
        emb = self.inner.embed(text)
        self._append(
            {"model": getattr(self.inner, "model", "scripted"), "input": text},
            {"data": [{"embedding": list(emb.values)}]},
        )
        return emb


def script_from_cassette(path: str | Path) -> Script:
    """Load a cassette's chat responses, in order, as a replayable Script.

    Embedding records are skipped; scripted replays embed via the hash
    embedder instead.
    """
    responses: list[str] = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                request = record["request"]
                response = record["response"]
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedResponseError(
                    f"{path}:{lineno}: not a cassette record"
                ) from exc
            if "messages" not in request:
                continue
            try:
                responses.append(response["choices"][0]["message"]["content"])
            except (KeyError, IndexError, TypeError) as exc:
                raise MalformedResponseError(
                    f"{path}:{lineno}: chat record without message content"
                ) from exc
    return Script(responses)


def find_json_objects(text: str) -> Iterable[dict[str, Any]]:
    """Yield every well-formed JSON object embedded in free-form text."""
    decoder = json.JSONDecoder()
    pos = 0
    while True:
        start = text.find("{", pos)
        if start < 0:
            return
        try:
            obj, end = decoder.raw_decode(text, start)
        except ValueError:
            pos = start + 1
            continue
        if isinstance(obj, dict):
            yield obj
            pos = end
        else:
            pos = start + 1


_KIND_CHECKS = {
    "any": lambda v: True,
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "list": lambda v: isinstance(v, list),
    "object": lambda v: isinstance(v, dict),
}


def extract_fields(text: str, schema: Sequence[FieldSpec]) -> dict[str, Any] | None:
    """First embedded JSON object satisfying the schema, projected onto it.

    Returns None when no object carries every required field with the right
    kind. Optional fields missing from the reply come back as None.
    """
    for obj in find_json_objects(text):
        ok = True
        for spec in schema:
            if spec.name not in obj or obj[spec.name] is None:
                if spec.required:
                    ok = False
                    break
                continue
            if not _KIND_CHECKS[spec.kind](obj[spec.name]):
                ok = False
                break
        if ok:
            return {spec.name: obj.get(spec.name) for spec in schema}
    return None


def _format_schema(schema: Sequence[FieldSpec]) -> str:
    parts = []
    for spec in schema:
        suffix = "" if spec.required else " (optional)"
        parts.append(f'"{spec.name}" ({spec.kind}){suffix}')
    return ", ".join(parts)


def chat_structured(gateway: Gateway, history: Sequence[Msg],
                    schema: Sequence[FieldSpec], params: GenParams,
                    retries: int = DEFAULT_RETRIES) -> dict[str, Any]:
    """Chat until the reply parses into the schema's fields.

    Each failed attempt is answered with a corrective user message appended
    to a working copy of the history; the caller's history is never touched.
    Raises StructuredOutputError once the retry budget is spent.
    """
    names = [spec.name for spec in schema]
    if len(set(names)) != len(names) or any(not n for n in names):
        raise ValueError("schema field names must be distinct and non-empty")
    work = list(history)
    attempts = retries + 1
    reply = ""
    for attempt in range(attempts):
        reply = gateway.chat(work, params)
        fields = extract_fields(reply, schema)
        if fields is not None:
            return fields
        logger.debug("structured parse failed (attempt %d): %r", attempt + 1, reply)
        work = work + [
            assistant(reply),
            user(
                "Your reply could not be parsed. Respond with only a JSON "
                f"object containing the fields {_format_schema(schema)}."
            ),
        ]
    raise StructuredOutputError(
        f"no parseable reply after {attempts} attempts; last reply: {reply!r}"
    )
