"""Long-term agent memory as scored observations.

After every action an agent records a short statement about the
environment. Each record carries a turn timestamp, an importance score
(rated 1-10 by a non-agent rater, normalized to [0.1, 1]) and a text
embedding. Before acting, an agent generates a query and gets back the
top-k records by summed recency + importance + relevance.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .agents import Agent
from .gateway import (
    Embedding,
    Gateway,
    GatewayError,
    GenParams,
    Msg,
    system,
    user,
)

logger = logging.getLogger(__name__)

DEFAULT_DECAY = 0.03
DEFAULT_TOP_K = 5
DEFAULT_IMPORTANCE = 5
DEFAULT_RATER_RETRIES = 2

RATER_PERSONA = (
    "You rate how important a single observation is to the agent who made it."
)
RATER_PROMPT = (
    "On a scale from 1 to 10, where 1 is mundane and 10 is critical, rate the "
    "importance of this observation. Reply with a single integer.\n\n"
    "Observation: {text}"
)
RATER_RETRY_PROMPT = (
    "Your reply did not contain an integer from 1 to 10. "
    "Reply with a single integer from 1 to 10."
)
QUERY_PROMPT = (
    "In one short sentence, state the single thing you most want to know "
    "about your current situation before you act."
)


def recency(t_a: int, t_b: int, decay: float = DEFAULT_DECAY) -> float:
    """exp(-decay * age) where age = t_a - t_b, in turns. 1.0 at age zero."""
    if t_a < t_b:
        raise ValueError(f"current turn {t_a} precedes observation turn {t_b}")
    return math.exp(-decay * (t_a - t_b))


def normalize_importance(raw: int) -> float:
    """Map a 1..10 rating linearly onto [0.1, 1.0]."""
    if not isinstance(raw, int) or isinstance(raw, bool) or not 1 <= raw <= 10:
        raise ValueError(f"importance rating must be an integer in 1..10, got {raw!r}")
    return raw / 10


def relevance(query: Embedding, obs: Embedding) -> float:
    """Dot product; in [-1, 1] because gateways return unit vectors."""
    return query.dot(obs)


@dataclass(frozen=True)
class Observation:
    """One memory record: text, when it happened, how much it matters."""

    text: str
    turn: int
    importance_raw: int
    embedding: Embedding

    def __post_init__(self) -> None:
        if self.turn < 0:
            raise ValueError(f"turn must be >= 0, got {self.turn}")
        normalize_importance(self.importance_raw)  # range check

    @property
    def importance(self) -> float:
        return normalize_importance(self.importance_raw)


@dataclass(frozen=True)
class RetrievalParams:
    """Scoring knobs. The three weights default to the plain unweighted sum."""

    decay: float = DEFAULT_DECAY
    k: int = DEFAULT_TOP_K
    rater_params: GenParams = field(default_factory=lambda: GenParams(temperature=0.0))
    w_recency: float = 1.0
    w_importance: float = 1.0
    w_relevance: float = 1.0

    def __post_init__(self) -> None:
        if self.decay <= 0:
            raise ValueError(f"decay must be > 0, got {self.decay}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


def retrieval_score(obs: Observation, query: Embedding, t_a: int,
                    params: RetrievalParams) -> float:
    """Weighted sum of recency, importance and relevance (weights default 1)."""
    return (
        params.w_recency * recency(t_a, obs.turn, params.decay)
        + params.w_importance * obs.importance
        + params.w_relevance * relevance(query, obs.embedding)
    )


class MemoryStore:
    """Append-only per-agent observation lists."""

    def __init__(self) -> None:
        self._by_agent: dict[str, list[Observation]] = {}

    def observations(self, agent_id: str) -> list[Observation]:
        return list(self._by_agent.get(agent_id, []))

    def append(self, agent_id: str, obs: Observation) -> None:
        self._by_agent.setdefault(agent_id, []).append(obs)

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_agent.values())

    def agent_ids(self) -> list[str]:
        return list(self._by_agent)

    def dump(self, path: str | Path) -> None:
        """One observation per line: agent_id, text, turn, raw rating, embedding."""
        with Path(path).open("w", encoding="utf-8") as fh:
            for agent_id, entries in self._by_agent.items():
                for obs in entries:
                    fh.write(json.dumps({
                        "agent_id": agent_id,
                        "text": obs.text,
                        "turn": obs.turn,
                        "importance_raw": obs.importance_raw,
                        "embedding": list(obs.embedding.values),
                    }) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MemoryStore":
        store = cls()
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                store.append(rec["agent_id"], Observation(
                    text=rec["text"],
                    turn=rec["turn"],
                    importance_raw=rec["importance_raw"],
                    embedding=Embedding(tuple(float(v) for v in rec["embedding"])),
                ))
        return store


def _first_rating(reply: str) -> int | None:
    for token in re.findall(r"-?\d+", reply):
        value = int(token)
        if 1 <= value <= 10:
            return value
    return None


def rate_importance(text: str, gateway: Gateway, *,
                    params: GenParams | None = None,
                    retries: int = DEFAULT_RATER_RETRIES) -> int:
    """Ask a dedicated rater (not any agent) for a 1..10 importance rating.

    Takes the first in-range integer in the reply. After the retry budget
    the midpoint 5 is returned so a bad rating never halts a run.
    """
    if not text:
        raise ValueError("cannot rate empty text")
    params = params or GenParams(temperature=0.0)
    history: list[Msg] = [system(RATER_PERSONA), user(RATER_PROMPT.format(text=text))]
    for _ in range(retries + 1):
        reply = gateway.chat(history, params)
        rating = _first_rating(reply)
        if rating is not None:
            return rating
        history = history + [Msg("assistant", reply), user(RATER_RETRY_PROMPT)]
    logger.warning("importance rater gave no usable rating; defaulting to %d",
                   DEFAULT_IMPORTANCE)
    return DEFAULT_IMPORTANCE


def generate_query(agent: Agent, gateway: Gateway) -> str:
    """One short query statement from the agent's history, via a meta-prompt.

    Runs on a copy, so the agent's history is untouched. A gateway failure
    degrades to an empty query (the caller then skips retrieval).
    """
    probe = list(agent.history) + [user(QUERY_PROMPT)]
    try:
        return gateway.chat(probe, agent.params).strip()
    except GatewayError as exc:
        logger.warning("query generation failed, skipping retrieval: %s", exc)
        return ""


def retrieve(store: MemoryStore, agent_id: str, query_text: str, t_a: int,
             params: RetrievalParams, gateway: Gateway) -> list[Observation]:
    """Top-k observations by retrieval score.

    Ties go to the newer observation, then to insertion order. Returns
    fewer than k when the store is smaller; an empty store yields [].
    """
    entries = store.observations(agent_id)
    if not entries:
        return []
    query = gateway.embed(query_text)
    scored = [
        (retrieval_score(obs, query, t_a, params), obs.turn, index, obs)
        for index, obs in enumerate(entries)
    ]
    scored.sort(key=lambda item: (-item[0], -item[1], item[2]))
    return [obs for _, _, _, obs in scored[:params.k]]


def record(store: MemoryStore, agent_id: str, text: str, t_now: int,
           gateway: Gateway, params: RetrievalParams | None = None) -> Observation:
    """Rate, embed and timestamp an observation, then append it."""
    if not text:
        raise ValueError("cannot record an empty observation")
    params = params or RetrievalParams()
    raw = rate_importance(text, gateway, params=params.rater_params)
    obs = Observation(
        text=text,
        turn=t_now,
        importance_raw=raw,
        embedding=gateway.embed(text),
    )
    store.append(agent_id, obs)
    return obs


def render_observations(observations: Sequence[Observation]) -> str:
    """Numbered block injected into prompts; empty string when nothing to show."""
    if not observations:
        return ""
    lines = ["Here are some important observations about your situation:"]
    for i, obs in enumerate(observations, start=1):
        lines.append(f"{i}. {obs.text}")
    return "\n".join(lines)
