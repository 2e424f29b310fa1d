"""Turn-based multi-agent LLM simulations.

Independent persona-bearing agents act on a shared world through a
moderator-mediated event loop, with long-term memory via scored
observation retrieval. Runs against a live chat-completions server or a
deterministic scripted backend.
"""

from .agents import (
    Agent,
    DirectedMessage,
    Roster,
    new_agent,
    next_speaker,
    parse_directed,
    respond,
    truncate,
)
from .gateway import (
    CassetteRecorder,
    Embedding,
    FieldSpec,
    Gateway,
    GatewayError,
    GenParams,
    HttpGateway,
    Msg,
    Script,
    ScriptedGateway,
    chat_structured,
    script_from_cassette,
)
from .engine import (
    ActionCall,
    ActionContext,
    ActionSpec,
    EngineConfig,
    TurnOutcome,
    World,
    WorldObject,
    run_loop,
    run_turn,
)
from .memory import (
    MemoryStore,
    Observation,
    RetrievalParams,
    normalize_importance,
    recency,
    relevance,
    retrieval_score,
    retrieve,
)

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "ActionCall",
    "ActionContext",
    "ActionSpec",
    "CassetteRecorder",
    "DirectedMessage",
    "Embedding",
    "EngineConfig",
    "FieldSpec",
    "Gateway",
    "GatewayError",
    "GenParams",
    "HttpGateway",
    "MemoryStore",
    "Msg",
    "Observation",
    "RetrievalParams",
    "Roster",
    "Script",
    "ScriptedGateway",
    "TurnOutcome",
    "World",
    "WorldObject",
    "chat_structured",
    "new_agent",
    "next_speaker",
    "normalize_importance",
    "parse_directed",
    "recency",
    "relevance",
    "respond",
    "retrieval_score",
    "retrieve",
    "run_loop",
    "run_turn",
    "script_from_cassette",
    "truncate",
]
