"""Argument-tree dialogue: speech-act moves, stance propagation, templated replies.

The graph is a strict tree of claims and premises; every non-root node either
supports or attacks its parent. A dialogue walks the tree node by node,
displaying the non-rejected children of the current node as the referencable
siblings. The user's stance is propagated bottom-up from per-node weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

ARGUMENT_KINDS = ("why", "prefer", "reject")
MOVE_KINDS = ("stance", "exit", "level_up", *ARGUMENT_KINDS)

# preference boost per prefer() on a node; the boosted weight is capped at 1
PREFERENCE_BOOST = 0.25


class GraphError(ValueError):
    """Structural problem in an argument-graph document."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class SpeechActError(ValueError):
    pass


class MoveError(RuntimeError):
    """A move that cannot be applied; the dialogue state is left unchanged."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class ArgumentNode:
    id: str
    text: str
    relation: str  # "support" | "attack" | "root"
    parent: str | None
    weight: float = 0.5
    children: list[str] = field(default_factory=list)


@dataclass
class ArgumentGraph:
    nodes: dict[str, ArgumentNode]
    root_id: str

    def node(self, node_id: str) -> ArgumentNode:
        return self.nodes[node_id]

    def descendants(self, node_id: str) -> set[str]:
        out: set[str] = set()
        stack = list(self.nodes[node_id].children)
        while stack:
            nid = stack.pop()
            out.add(nid)
            stack.extend(self.nodes[nid].children)
        return out


def parse_graph(document: dict) -> ArgumentGraph:
    """Validate a graph document; raises GraphError with a named code."""
    entries = document.get("nodes")
    if not isinstance(entries, list) or not entries:
        raise GraphError("empty", "document must carry a nonempty 'nodes' list")

    nodes: dict[str, ArgumentNode] = {}
    for entry in entries:
        nid = entry.get("id")
        if not isinstance(nid, str) or not nid:
            raise GraphError("invalid_id", f"node id must be a nonempty string, got {nid!r}")
        if nid in nodes:
            raise GraphError("duplicate_id", f"node id {nid!r} appears twice")
        parent = entry.get("parent")
        if isinstance(parent, (list, tuple)):
            raise GraphError("multi_parent", f"node {nid!r} lists multiple parents: {parent!r}")
        relation = entry.get("relation")
        if relation not in ("support", "attack", "root"):
            raise GraphError("invalid_relation", f"node {nid!r} has relation {relation!r}")
        if relation == "root" and parent is not None:
            raise GraphError("invalid_relation", f"root node {nid!r} must not have a parent")
        if relation != "root" and parent is None:
            raise GraphError("orphan", f"node {nid!r} has no parent but is not the root")
        weight = entry.get("weight", 0.5)
        if not isinstance(weight, (int, float)) or not 0.0 <= float(weight) <= 1.0:
            raise GraphError("invalid_weight", f"node {nid!r} weight {weight!r} outside [0, 1]")
        nodes[nid] = ArgumentNode(
            id=nid,
            text=str(entry.get("text", "")),
            relation=relation,
            parent=parent,
            weight=float(weight),
        )

    roots = [n.id for n in nodes.values() if n.relation == "root"]
    if len(roots) > 1:
        raise GraphError("multi_root", f"multiple root nodes: {roots}")
    if not roots:
        raise GraphError("no_root", "document has no root node")
    root_id = roots[0]

    for node in nodes.values():
        if node.parent is None:
            continue
        if node.parent not in nodes:
            raise GraphError(
                "dangling_reference", f"node {node.id!r} references missing parent {node.parent!r}"
            )
        nodes[node.parent].children.append(node.id)  # document order

    reached = {root_id} | ArgumentGraph(nodes, root_id).descendants(root_id)
    unreached = set(nodes) - reached
    if unreached:
        raise GraphError("cycle", f"nodes {sorted(unreached)} are not reachable from the root")
    return ArgumentGraph(nodes=nodes, root_id=root_id)


def load_graph(path) -> tuple[str, ArgumentGraph]:
    with open(path, encoding="utf-8") as fh:
        document = json.load(fh)
    return str(document.get("topic", "")), parse_graph(document)


def bundled_graph_path() -> str:
    return str(resources.files("argdial.data") / "marriage.json")


@dataclass
class SpeechAct:
    """One user move; why/prefer/reject carry the referenced argument id."""

    kind: str
    argument: str | None = None

    def __post_init__(self):
        if self.kind not in MOVE_KINDS:
            raise SpeechActError(f"unknown speech act {self.kind!r}")
        if self.kind in ARGUMENT_KINDS and not self.argument:
            raise SpeechActError(f"{self.kind} requires an argument reference")
        if self.kind not in ARGUMENT_KINDS and self.argument is not None:
            raise SpeechActError(f"{self.kind} must not carry an argument reference")


@dataclass
class DialogueState:
    session_id: str
    current_id: str
    displayed: list[str]
    rejected: set[str] = field(default_factory=set)
    preferences: dict[str, int] = field(default_factory=dict)
    strengths: dict[str, float] = field(default_factory=dict)
    terminated: bool = False


# ---------------------------------------------------------------------------
# stance propagation


def _effective_weight(node: ArgumentNode, preferences: dict[str, int]) -> float:
    count = preferences.get(node.id, 0)
    return min(1.0, node.weight * (1.0 + PREFERENCE_BOOST * count))


def additive_clamped_policy(
    graph: ArgumentGraph, rejected: set[str], preferences: dict[str, int]
) -> dict[str, float]:
    """Bottom-up strength: clamp01(w_eff + (sum support - sum attack) / #children).

    Each considered child contributes strength(child) * w_eff(child), signed by
    its relation and normalized by the number of non-rejected children.
    Preference statements scale a node's effective weight by
    (1 + PREFERENCE_BOOST * count), capped at 1. Rejected subtrees are skipped
    entirely. This propagation rule is a deliberately simple stand-in; swap the
    policy callable for a different semantics.
    """
    strengths: dict[str, float] = {}
    # iterative post-order; trees may be deep
    stack: list[tuple[str, bool]] = [(graph.root_id, False)]
    while stack:
        nid, ready = stack.pop()
        node = graph.nodes[nid]
        kids = [k for k in node.children if k not in rejected]
        if not ready:
            stack.append((nid, True))
            stack.extend((k, False) for k in kids)
            continue
        value = _effective_weight(node, preferences)
        for k in kids:
            child = graph.nodes[k]
            signed = 1.0 if child.relation == "support" else -1.0
            value += signed * strengths[k] * _effective_weight(child, preferences) / len(kids)
        strengths[nid] = min(1.0, max(0.0, value))
    return strengths


def compute_stance(
    graph: ArgumentGraph,
    state: DialogueState,
    policy=additive_clamped_policy,
) -> tuple[float, dict[str, float]]:
    """Root strength plus per-node strengths over the non-rejected tree."""
    strengths = policy(graph, state.rejected, state.preferences)
    return strengths[graph.root_id], strengths


# ---------------------------------------------------------------------------
# the state machine


def initial_state(graph: ArgumentGraph, session_id: str = "", policy=additive_clamped_policy) -> DialogueState:
    """Opening state: the major claim itself is presented as the one
    introducible argument; the first why() descends into its children.
    """
    state = DialogueState(
        session_id=session_id,
        current_id=graph.root_id,
        displayed=[graph.root_id],
    )
    _, state.strengths = compute_stance(graph, state, policy)
    return state


@dataclass
class MoveResult:
    kind: str
    stance: float
    current_id: str
    displayed: list[str]
    terminated: bool
    referenced_id: str | None = None
    # (relation, node_id) per displayed child, for why responses
    introduced: list[tuple[str, str]] = field(default_factory=list)


def _copy_state(state: DialogueState) -> DialogueState:
    return replace(
        state,
        displayed=list(state.displayed),
        rejected=set(state.rejected),
        preferences=dict(state.preferences),
        strengths=dict(state.strengths),
    )


def apply_move(
    graph: ArgumentGraph,
    state: DialogueState,
    act: SpeechAct,
    policy=additive_clamped_policy,
) -> tuple[DialogueState, MoveResult]:
    """Apply one speech act; on MoveError the input state is untouched."""
    if state.terminated:
        raise MoveError("session_terminated", "the session has ended; no further moves")

    if act.kind in ARGUMENT_KINDS and act.argument not in state.displayed:
        raise MoveError(
            "unknown_reference",
            f"argument {act.argument!r} is not among the displayed siblings {state.displayed}",
        )

    new = _copy_state(state)

    if act.kind == "stance":
        stance, _ = compute_stance(graph, new, policy)
        return new, MoveResult(
            kind="stance",
            stance=stance,
            current_id=new.current_id,
            displayed=list(new.displayed),
            terminated=False,
        )

    if act.kind == "exit":
        new.terminated = True
        stance, _ = compute_stance(graph, new, policy)
        return new, MoveResult(
            kind="exit",
            stance=stance,
            current_id=new.current_id,
            displayed=list(new.displayed),
            terminated=True,
        )

    if act.kind == "level_up":
        parent = graph.nodes[state.current_id].parent
        if parent is None:
            raise MoveError("at_root", "already at the major claim; cannot go further up")
        new.current_id = parent
        new.displayed = [k for k in graph.nodes[parent].children if k not in new.rejected]
        stance, new.strengths = compute_stance(graph, new, policy)
        return new, MoveResult(
            kind="level_up",
            stance=stance,
            current_id=parent,
            displayed=list(new.displayed),
            terminated=False,
            referenced_id=parent,
        )

    if act.kind == "why":
        target = graph.nodes[act.argument]
        if not target.children:
            raise MoveError("no_children", f"argument {target.id!r} has no further information")
        new.current_id = target.id
        new.displayed = [k for k in target.children if k not in new.rejected]
        stance, new.strengths = compute_stance(graph, new, policy)
        return new, MoveResult(
            kind="why",
            stance=stance,
            current_id=target.id,
            displayed=list(new.displayed),
            terminated=False,
            referenced_id=target.id,
            introduced=[(graph.nodes[k].relation, k) for k in new.displayed],
        )

    if act.kind == "prefer":
        new.preferences[act.argument] = new.preferences.get(act.argument, 0) + 1
        stance, new.strengths = compute_stance(graph, new, policy)
        return new, MoveResult(
            kind="prefer",
            stance=stance,
            current_id=new.current_id,
            displayed=list(new.displayed),
            terminated=False,
            referenced_id=act.argument,
        )

    # reject: the argument and its whole subtree disappear from display and stance
    new.rejected |= {act.argument} | graph.descendants(act.argument)
    new.displayed = [k for k in graph.nodes[new.current_id].children if k not in new.rejected]
    stance, new.strengths = compute_stance(graph, new, policy)
    return new, MoveResult(
        kind="reject",
        stance=stance,
        current_id=new.current_id,
        displayed=list(new.displayed),
        terminated=False,
        referenced_id=act.argument,
    )


# ---------------------------------------------------------------------------
# templated responses


def load_templates(path=None) -> dict[str, list[str]]:
    if path is None:
        raw = (resources.files("argdial.data") / "templates.json").read_text("utf-8")
    else:
        raw = open(path, encoding="utf-8").read()
    templates = json.loads(raw)
    for key in ("opening", "stance", "exit", "level_up", "why_support", "why_attack", "prefer", "reject"):
        if not templates.get(key):
            raise ValueError(f"template file is missing phrases for {key!r}")
    return templates


def _pick(templates: dict[str, list[str]], key: str, rng: np.random.Generator) -> str:
    options = templates[key]
    return options[int(rng.integers(len(options)))]


def render_opening(
    graph: ArgumentGraph, templates: dict[str, list[str]], rng: np.random.Generator
) -> str:
    return _pick(templates, "opening", rng).format(argument=graph.nodes[graph.root_id].text)


def render_response(
    graph: ArgumentGraph,
    result: MoveResult,
    templates: dict[str, list[str]],
    rng: np.random.Generator,
) -> str:
    """Natural-language reply; the introductory phrasing is drawn seeded-random."""
    if result.kind == "stance":
        return _pick(templates, "stance", rng).format(stance=f"{result.stance:.2f}")
    if result.kind == "exit":
        return _pick(templates, "exit", rng)
    if result.kind == "level_up":
        text = graph.nodes[result.current_id].text
        return _pick(templates, "level_up", rng).format(argument=text)
    if result.kind == "why":
        sentences = []
        for relation, nid in result.introduced:
            key = "why_support" if relation == "support" else "why_attack"
            sentences.append(_pick(templates, key, rng).format(argument=graph.nodes[nid].text))
        return " ".join(sentences)
    if result.kind in ("prefer", "reject"):
        text = graph.nodes[result.referenced_id].text
        return _pick(templates, result.kind, rng).format(argument=text)
    raise SpeechActError(f"no rendering for move kind {result.kind!r}")


def tree_payload(graph: ArgumentGraph, state: DialogueState) -> dict:
    """Full tree with per-node strengths and rejection flags, for clients."""
    return {
        "root": graph.root_id,
        "current": state.current_id,
        "displayed": list(state.displayed),
        "nodes": [
            {
                "id": n.id,
                "text": n.text,
                "relation": n.relation,
                "parent": n.parent,
                "weight": n.weight,
                "children": list(n.children),
                "rejected": n.id in state.rejected,
                "strength": state.strengths.get(n.id),
                "preferences": state.preferences.get(n.id, 0),
            }
            for n in graph.nodes.values()
        ],
    }
