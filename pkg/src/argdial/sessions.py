"""Dialogue sessions: NLU dispatch, per-session locking, persistence, replay.

Each session owns one DialogueState over a shared immutable graph. Every
successful move is appended to an event log; replaying the log against a
fresh initial state reproduces the final state exactly, which is also how
persisted sessions are verified on load.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import threading
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dialogue import (
    ARGUMENT_KINDS,
    ArgumentGraph,
    DialogueState,
    MoveError,
    SpeechAct,
    apply_move,
    initial_state,
    render_opening,
    render_response,
)
from .text import split_words

# maps one-to-one onto speech-act kinds; closed set by construction
INTENTS = ("stance", "exit", "level_up", "why", "prefer", "reject")


class SessionNotFoundError(KeyError):
    pass


class ModelNlu:
    """Intent classification and argument resolution backed by the trained models."""

    def __init__(self, intent_model, argsim_model):
        self.intent_model = intent_model
        self.argsim_model = argsim_model

    def classify(self, text: str) -> tuple[str, dict[str, float], float]:
        probs = self.intent_model.classify(text)
        distribution = {label: float(p) for label, p in zip(self.intent_model.labels, probs)}
        label = max(distribution, key=distribution.get)
        return label, distribution, distribution[label]

    def resolve(self, text: str, candidates: list[tuple[str, str]]) -> tuple[str, list[float]]:
        from .argsim import nearest_argument

        texts = [t for _, t in candidates]
        idx, _ = nearest_argument(self.argsim_model, text, texts)
        scores = [self.argsim_model.score_pair(text, t) if text else 0.0 for t in texts]
        return candidates[idx][0], scores


KEYWORD_RULES = (
    ("exit", ("finish", "goodbye", "bye", "exit", "quit", "stop here", "end the")),
    ("level_up", ("previous", "go back", "back up", "level up", "return to", "go up")),
    ("stance", ("stance", "opinion", "my position", "where do i stand")),
    ("why", ("why", "tell me more", "more about", "explain", "details")),
    ("reject", ("reject", "disagree", "do not believe", "don't believe", "dismiss", "wrong")),
    ("prefer", ("prefer", "agree", "favor", "convincing", "good", "best", "like")),
)


class KeywordNlu:
    """Deterministic rule-based fallback, usable without trained checkpoints."""

    def classify(self, text: str) -> tuple[str, dict[str, float], float]:
        lowered = " ".join(split_words(text))
        for label, cues in KEYWORD_RULES:
            if any(cue in lowered for cue in cues):
                distribution = {k: (1.0 if k == label else 0.0) for k in INTENTS}
                return label, distribution, 1.0
        uniform = {k: 1.0 / len(INTENTS) for k in INTENTS}
        return "stance", uniform, 1.0 / len(INTENTS)

    def resolve(self, text: str, candidates: list[tuple[str, str]]) -> tuple[str, list[float]]:
        query = set(split_words(text))
        scores = []
        for _, cand_text in candidates:
            words = set(split_words(cand_text))
            if not query or not words:
                scores.append(0.0)
                continue
            scores.append(len(query & words) / float(np.sqrt(len(query) * len(words))))
        best = max(range(len(candidates)), key=lambda i: (scores[i], -i))
        return candidates[best][0], scores


@dataclass
class Event:
    """One successful user move and the system's reply."""

    utterance: str
    intent: str
    confidence: float
    resolved_argument: str | None
    response: str
    stance_after: float


@dataclass
class Session:
    id: str
    topic: str
    created_at: str
    state: DialogueState
    events: list[Event] = field(default_factory=list)
    config_hash: str = ""


@dataclass
class UtteranceOutcome:
    response_text: str
    intent: str
    confidence: float
    distribution: dict[str, float]
    resolved_argument: str | None
    similarity_scores: list[float]
    stance: float
    state: DialogueState
    clarification: bool = False


def state_to_dict(state: DialogueState) -> dict:
    return {
        "session_id": state.session_id,
        "current_id": state.current_id,
        "displayed": list(state.displayed),
        "rejected": sorted(state.rejected),
        "preferences": dict(state.preferences),
        "strengths": dict(state.strengths),
        "terminated": state.terminated,
    }


def state_from_dict(payload: dict) -> DialogueState:
    return DialogueState(
        session_id=payload["session_id"],
        current_id=payload["current_id"],
        displayed=list(payload["displayed"]),
        rejected=set(payload["rejected"]),
        preferences={k: int(v) for k, v in payload["preferences"].items()},
        strengths={k: float(v) for k, v in payload["strengths"].items()},
        terminated=bool(payload["terminated"]),
    )


def replay_events(graph: ArgumentGraph, session_id: str, events: list[Event]) -> DialogueState:
    """Reapply logged moves from a fresh initial state."""
    state = initial_state(graph, session_id)
    for event in events:
        argument = event.resolved_argument if event.intent in ARGUMENT_KINDS else None
        state, _ = apply_move(graph, state, SpeechAct(event.intent, argument))
    return state


class SessionStore:
    """Sessions keyed by opaque id; mutations are serialized per session.

    With a data directory set, every mutation rewrites the session's JSON
    file and sessions are reloaded (and replay-verified) on startup.
    """

    def __init__(self, graph: ArgumentGraph, topic: str, data_dir=None, config_hash: str = ""):
        self.graph = graph
        self.topic = topic
        self.config_hash = config_hash
        self.data_dir = Path(data_dir) if data_dir else None
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        if self.data_dir:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.data_dir.glob("*.json")):
                session = self._load_file(path)
                self._sessions[session.id] = session
                self._locks[session.id] = threading.Lock()

    # -- lifecycle -------------------------------------------------------------

    def create(self) -> Session:
        session_id = uuid.uuid4().hex
        session = Session(
            id=session_id,
            topic=self.topic,
            created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
            state=initial_state(self.graph, session_id),
            config_hash=self.config_hash,
        )
        with self._registry_lock:
            self._sessions[session_id] = session
            self._locks[session_id] = threading.Lock()
        self._persist(session)
        return session

    def get(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise SessionNotFoundError(session_id)

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            if session_id not in self._locks:
                raise SessionNotFoundError(session_id)
            return self._locks[session_id]

    def list_ids(self) -> list[str]:
        with self._registry_lock:
            return sorted(self._sessions)

    def delete(self, session_id: str) -> None:
        with self._registry_lock:
            if session_id not in self._sessions:
                raise SessionNotFoundError(session_id)
            del self._sessions[session_id]
            del self._locks[session_id]
        if self.data_dir:
            (self.data_dir / f"{session_id}.json").unlink(missing_ok=True)

    # -- persistence -------------------------------------------------------------

    def _persist(self, session: Session) -> None:
        if not self.data_dir:
            return
        payload = {
            "id": session.id,
            "topic": session.topic,
            "created_at": session.created_at,
            "config_hash": session.config_hash,
            "state": state_to_dict(session.state),
            "events": [asdict(e) for e in session.events],
        }
        path = self.data_dir / f"{session.id}.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        tmp.replace(path)

    def _load_file(self, path: Path) -> Session:
        payload = json.loads(path.read_text(encoding="utf-8"))
        events = [Event(**e) for e in payload["events"]]
        stored = state_from_dict(payload["state"])
        replayed = replay_events(self.graph, payload["id"], events)
        if replayed != stored:
            raise ValueError(f"session file {path.name}: replayed state diverges from stored state")
        return Session(
            id=payload["id"],
            topic=payload["topic"],
            created_at=payload["created_at"],
            state=stored,
            events=events,
            config_hash=payload.get("config_hash", ""),
        )


def _session_rng(session_id: str, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(session_id.encode("utf-8")).digest()
    return np.random.default_rng((seed, int.from_bytes(digest[:8], "little")))


class DialogueService:
    """Full utterance pipeline: classify, resolve, move, render, log."""

    def __init__(
        self,
        store: SessionStore,
        nlu,
        templates: dict[str, list[str]],
        confidence_threshold: float = 0.0,
        seed: int = 0,
    ):
        if not 0.0 <= confidence_threshold <= 1.0:
            raise ValueError("confidence threshold must be in [0, 1]")
        self.store = store
        self.nlu = nlu
        self.templates = templates
        self.confidence_threshold = confidence_threshold
        self.seed = seed
        self._render_rngs: dict[str, np.random.Generator] = {}

    def _rng(self, session_id: str) -> np.random.Generator:
        if session_id not in self._render_rngs:
            self._render_rngs[session_id] = _session_rng(session_id, self.seed)
        return self._render_rngs[session_id]

    def create_session(self) -> tuple[Session, str]:
        session = self.store.create()
        opening = render_opening(self.store.graph, self.templates, self._rng(session.id))
        return session, opening

    def handle_utterance(self, session_id: str, text: str) -> UtteranceOutcome:
        graph = self.store.graph
        with self.store.lock(session_id):
            session = self.store.get(session_id)
            if session.state.terminated:
                raise MoveError("session_terminated", "the session has ended; no further moves")

            label, distribution, confidence = self.nlu.classify(text)
            if self.confidence_threshold > 0.0 and confidence < self.confidence_threshold:
                stance = session.state.strengths[graph.root_id]
                return UtteranceOutcome(
                    response_text="I am not sure what you meant. Could you rephrase that?",
                    intent=label,
                    confidence=confidence,
                    distribution=distribution,
                    resolved_argument=None,
                    similarity_scores=[],
                    stance=stance,
                    state=session.state,
                    clarification=True,
                )

            resolved_id = None
            similarity_scores: list[float] = []
            if label in ARGUMENT_KINDS:
                candidates = [(nid, graph.nodes[nid].text) for nid in session.state.displayed]
                if not candidates:
                    raise MoveError(
                        "unknown_reference", "no arguments are currently displayed to refer to"
                    )
                resolved_id, similarity_scores = self.nlu.resolve(text, candidates)

            act = SpeechAct(label, resolved_id)
            new_state, result = apply_move(graph, session.state, act)
            response = render_response(graph, result, self.templates, self._rng(session_id))

            session.state = new_state
            session.events.append(
                Event(
                    utterance=text,
                    intent=label,
                    confidence=confidence,
                    resolved_argument=resolved_id,
                    response=response,
                    stance_after=result.stance,
                )
            )
            self.store._persist(session)
            return UtteranceOutcome(
                response_text=response,
                intent=label,
                confidence=confidence,
                distribution=distribution,
                resolved_argument=resolved_id,
                similarity_scores=similarity_scores,
                stance=result.stance,
                state=new_state,
            )
