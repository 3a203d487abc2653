"""Dataset loading, classification/similarity metrics, and pipeline evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .argsim import nearest_argument
from .dialogue import ARGUMENT_KINDS, ArgumentGraph
from .intent import SPEECH_ACTS

GROUPS = ("native", "non_native", "unspecified")

# Full-scale reference results measured with a pretrained 12-layer encoder on
# the original study corpus; kept for comparison, not reproducible at toy scale.
FULL_SCALE_REFERENCE = {
    "intent_accuracy_full_data_x100": 89.7,
    "argsim_reference_accuracy_x100": 95.2,
    "argsim_sts_spearman_x100": 85.1,
    "pipeline_native": {"intent_f1": 89.8, "sim_accuracy": 95.2, "overall_accuracy": 87.7},
    "pipeline_non_native": {"intent_f1": 88.8, "sim_accuracy": 89.7, "overall_accuracy": 87.3},
}


class DatasetError(ValueError):
    pass


@dataclass
class LabeledUtterance:
    """One annotated utterance; argument-bearing intents carry a reference
    argument and the sibling candidates displayed when it was produced."""

    text: str
    intent: str
    ref_arg: str | None = None
    topic: str = ""
    group: str = "unspecified"
    candidates: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.intent not in SPEECH_ACTS:
            raise DatasetError(f"unknown intent {self.intent!r}")
        if self.group not in GROUPS:
            raise DatasetError(f"unknown group {self.group!r}")
        bearing = self.intent in ARGUMENT_KINDS
        if bearing and not self.ref_arg:
            raise DatasetError(f"{self.intent} utterance must carry a reference argument")
        if not bearing and self.ref_arg is not None:
            raise DatasetError(f"{self.intent} utterance must not carry a reference argument")
        if bearing and self.candidates and self.ref_arg not in self.candidates:
            raise DatasetError(
                f"reference argument {self.ref_arg!r} missing from candidates {self.candidates}"
            )


def load_user_study(path) -> list[LabeledUtterance]:
    """Read one JSON object per line: text, intent, ref_arg, topic, group,
    and (for argument-bearing records) the candidate sibling ids."""
    records: list[LabeledUtterance] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"line {lineno}: invalid JSON ({err.msg})")
            try:
                records.append(
                    LabeledUtterance(
                        text=obj["text"],
                        intent=obj["intent"],
                        ref_arg=obj.get("ref_arg"),
                        topic=obj.get("topic", ""),
                        group=obj.get("group", "unspecified"),
                        candidates=list(obj.get("candidates") or []),
                    )
                )
            except KeyError as err:
                raise DatasetError(f"line {lineno}: missing field {err}")
            except DatasetError as err:
                raise DatasetError(f"line {lineno}: {err}")
    return records


def intent_counts(records: list[LabeledUtterance]) -> dict[str, int]:
    counts = {label: 0 for label in SPEECH_ACTS}
    for r in records:
        counts[r.intent] += 1
    return counts


def topic_split(
    records: list[LabeledUtterance], test_topic: str
) -> tuple[list[LabeledUtterance], list[LabeledUtterance]]:
    """Hold one topic out for testing; train on everything else."""
    topics = {r.topic for r in records}
    if len(topics) < 2:
        raise DatasetError(f"topic split needs at least 2 topics, found {sorted(topics)}")
    if test_topic not in topics:
        raise DatasetError(f"test topic {test_topic!r} not present in {sorted(topics)}")
    test = [r for r in records if r.topic == test_topic]
    train = [r for r in records if r.topic != test_topic]
    return train, test


# -- metrics --------------------------------------------------------------------


def accuracy(predictions: list, golds: list) -> float:
    if len(predictions) != len(golds) or not golds:
        raise ValueError("accuracy: inputs must be equal-length and nonempty")
    return sum(p == g for p, g in zip(predictions, golds)) / len(golds)


def per_class_f1(predictions: list, golds: list) -> dict:
    """Precision/recall/F1/support per class present in gold or predictions."""
    if len(predictions) != len(golds) or not golds:
        raise ValueError("per_class_f1: inputs must be equal-length and nonempty")
    classes = sorted(set(golds) | set(predictions), key=str)
    out = {}
    for cls in classes:
        tp = sum(1 for p, g in zip(predictions, golds) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(predictions, golds) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(predictions, golds) if p != cls and g == cls)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
        out[cls] = {"precision": precision, "recall": recall, "f1": f1, "support": tp + fn}
    return out


def macro_f1(predictions: list, golds: list) -> float:
    scores = per_class_f1(predictions, golds)
    return sum(c["f1"] for c in scores.values()) / len(scores)


def _fractional_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; runs of equal values share their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Pearson correlation of fractional ranks (average-rank ties)."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise ValueError("spearman: needs two equal-length 1-D inputs of length >= 2")
    rx, ry = _fractional_ranks(xs), _fractional_ranks(ys)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0.0:
        raise ValueError("spearman: undefined for constant input")
    return float((dx * dy).sum() / denom)


# -- complete pipeline -------------------------------------------------------------


@dataclass
class EvalReport:
    n_records: int
    intent_accuracy: float
    intent_macro_f1: float
    overall_accuracy: float
    sim_accuracy: float | None
    per_class: dict
    confusion: dict
    split: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "intent_accuracy": self.intent_accuracy,
            "intent_macro_f1": self.intent_macro_f1,
            "sim_accuracy": self.sim_accuracy,
            "overall_accuracy": self.overall_accuracy,
            "per_class": self.per_class,
            "confusion": self.confusion,
            "split": self.split,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class GoldIntentOracle:
    """Replays annotated intents; pipeline plumbing checks, not a model."""

    def __init__(self, records: list[LabeledUtterance]):
        self._by_text = {r.text: r.intent for r in records}

    def predict(self, text: str) -> str:
        return self._by_text.get(text, SPEECH_ACTS[0])


class GoldArgumentOracle:
    """Replays annotated reference arguments by their node text."""

    def __init__(self, records: list[LabeledUtterance], graph: ArgumentGraph):
        self._by_text = {
            r.text: graph.nodes[r.ref_arg].text for r in records if r.ref_arg is not None
        }

    def resolve(self, text: str, candidate_texts: list[str]) -> int:
        target = self._by_text.get(text)
        if target is not None and target in candidate_texts:
            return candidate_texts.index(target)
        return 0


def _resolve(argsim_model, text: str, candidate_texts: list[str]) -> int:
    resolver = getattr(argsim_model, "resolve", None)
    if resolver is not None:
        return resolver(text, candidate_texts)
    return nearest_argument(argsim_model, text, candidate_texts)[0]


def evaluate_pipeline(
    intent_model,
    argsim_model,
    graph: ArgumentGraph,
    records: list[LabeledUtterance],
    split: dict | None = None,
) -> EvalReport:
    """Intent, similarity and conjunction accuracy over labeled records.

    A record counts as correct overall iff the predicted intent matches and,
    for argument-bearing gold intents, the argument resolved over the record's
    candidate siblings matches the annotated reference. Similarity accuracy is
    measured on argument-bearing records independently of the intent decision.
    """
    if not records:
        raise DatasetError("evaluate_pipeline: no records")
    predictions, golds = [], []
    overall_correct = 0
    sim_total, sim_correct = 0, 0
    confusion: dict[str, dict[str, int]] = {}
    for record in records:
        predicted = intent_model.predict(record.text)
        predictions.append(predicted)
        golds.append(record.intent)
        confusion.setdefault(record.intent, {}).setdefault(predicted, 0)
        confusion[record.intent][predicted] += 1

        bearing = record.intent in ARGUMENT_KINDS
        candidate_texts = [graph.nodes[c].text for c in record.candidates]
        resolved_gold_side = None
        if bearing:
            if not record.candidates:
                raise DatasetError(f"argument-bearing record lacks candidates: {record.text!r}")
            idx = _resolve(argsim_model, record.text, candidate_texts)
            resolved_gold_side = record.candidates[idx]
            sim_total += 1
            sim_correct += resolved_gold_side == record.ref_arg

        if predicted == record.intent:
            if not bearing:
                overall_correct += 1
            elif resolved_gold_side == record.ref_arg:
                overall_correct += 1

    return EvalReport(
        n_records=len(records),
        intent_accuracy=accuracy(predictions, golds),
        intent_macro_f1=macro_f1(predictions, golds),
        overall_accuracy=overall_correct / len(records),
        sim_accuracy=(sim_correct / sim_total) if sim_total else None,
        per_class=per_class_f1(predictions, golds),
        confusion=confusion,
        split=split or {},
    )
