"""Rule-based solution evaluator for event argument extraction.

Predictions (role, span, entity type triples, possibly pulled out of
generated code) run through five ordered checks: known role, allowed entity
type, no spurious arguments, correct role for identified arguments, and
completeness against the gold arguments. The first violated check produces
the textual feedback; a solution is correct only when all five pass, which
makes per-instance identification precision 1 for every passing prediction.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import ValidationError
from .model import PASS, ErrorClass, Feedback


def normalize_span(span: str) -> str:
    """Whitespace-insensitive exact matching: collapse runs, strip ends."""
    return " ".join(span.split())


@dataclass(frozen=True)
class EventOntology:
    event_type: str
    roles: tuple[tuple[str, tuple[str, ...]], ...]  # (role name, allowed entity types)

    def __post_init__(self):
        names = [name for name, _ in self.roles]
        if len(names) != len(set(names)):
            raise ValidationError("ontology role names must be unique")
        for name, types in self.roles:
            if not types:
                raise ValidationError(f"role {name!r} must allow at least one entity type")

    @property
    def role_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.roles)

    def allowed_types(self, role: str) -> tuple[str, ...]:
        for name, types in self.roles:
            if name == role:
                return types
        raise KeyError(role)

    @classmethod
    def from_dict(cls, payload: dict) -> "EventOntology":
        return cls(
            event_type=payload["event_type"],
            roles=tuple(
                (role["name"], tuple(role["entity_types"]))
                for role in payload["roles"]
            ),
        )


@dataclass(frozen=True)
class PredictedArgument:
    role: str
    span: str
    entity_type: Optional[str] = None


@dataclass(frozen=True)
class EventPrediction:
    """What the generator claimed; malformed content is feedback, not error."""

    arguments: tuple[PredictedArgument, ...] = ()

    @classmethod
    def from_dict(cls, payload: dict) -> "EventPrediction":
        return cls(
            arguments=tuple(
                PredictedArgument(
                    role=arg["role"],
                    span=arg["span"],
                    entity_type=arg.get("entity_type"),
                )
                for arg in payload.get("arguments", [])
            )
        )


@dataclass(frozen=True)
class GoldEvent:
    arguments: tuple[tuple[str, str], ...]  # (role, span)

    def __post_init__(self):
        for role, span in self.arguments:
            if not span:
                raise ValidationError("gold spans must be non-empty")

    @classmethod
    def from_dict(cls, payload: dict) -> "GoldEvent":
        return cls(
            arguments=tuple(
                (arg["role"], arg["span"]) for arg in payload.get("arguments", [])
            )
        )


def _fail(check: int, message: str) -> Feedback:
    return Feedback(
        f_binary=0,
        f_text=f"Check {check} failed: {message}",
        error_class=ErrorClass.other(f"EvaluatorCheck{check}"),
    )


def evaluate_event(pred: EventPrediction, ontology: EventOntology, gold: GoldEvent) -> Feedback:
    """Run the five checks strictly in order; first violation wins.

    Check order is part of the contract: it decides which error the
    improvement loop pressures the generator to fix first.
    """
    # 1: every predicted role exists in the ontology.
    for arg in pred.arguments:
        if arg.role not in ontology.role_names:
            return _fail(
                1,
                f"role '{arg.role}' is not defined for event type "
                f"'{ontology.event_type}'; known roles: {', '.join(ontology.role_names)}",
            )

    # 2: every argument's entity type is allowed for its role.
    for arg in pred.arguments:
        if arg.entity_type is not None:
            allowed = ontology.allowed_types(arg.role)
            if arg.entity_type not in allowed:
                return _fail(
                    2,
                    f"role '{arg.role}' does not accept entity type "
                    f"'{arg.entity_type}' for span '{arg.span}'; allowed types: "
                    f"{', '.join(allowed)}",
                )

    gold_spans = Counter(normalize_span(span) for _, span in gold.arguments)
    gold_pairs = Counter(
        (normalize_span(span), role) for role, span in gold.arguments
    )

    # 3: no spurious arguments (every predicted span matches a gold span).
    seen_spans: Counter = Counter()
    for arg in pred.arguments:
        span = normalize_span(arg.span)
        seen_spans[span] += 1
        if seen_spans[span] > gold_spans[span]:
            return _fail(
                3,
                f"predicted argument '{arg.span}' (role '{arg.role}') does not "
                f"match any ground-truth argument",
            )

    # 4: every identified argument carries the correct role.
    seen_pairs: Counter = Counter()
    for arg in pred.arguments:
        pair = (normalize_span(arg.span), arg.role)
        seen_pairs[pair] += 1
        if seen_pairs[pair] > gold_pairs[pair]:
            expected = sorted(
                {role for (span, role) in gold_pairs if span == pair[0]}
            )
            return _fail(
                4,
                f"argument '{arg.span}' was identified but classified as role "
                f"'{arg.role}'; expected role: {', '.join(expected) or 'unknown'}",
            )

    # 5: completeness — every gold argument was identified and classified.
    missing = gold_pairs - seen_pairs
    if missing:
        (span, role), _ = sorted(missing.items())[0]
        return _fail(
            5,
            f"prediction is incomplete: ground-truth argument '{span}' "
            f"(role '{role}') was not identified",
        )

    return Feedback(f_binary=1, f_text=None, error_class=PASS)


def _instance_counts(pred: EventPrediction, gold: GoldEvent) -> tuple[int, int, int, int]:
    pred_spans = Counter(normalize_span(a.span) for a in pred.arguments)
    gold_spans = Counter(normalize_span(s) for _, s in gold.arguments)
    pred_pairs = Counter((normalize_span(a.span), a.role) for a in pred.arguments)
    gold_pairs = Counter((normalize_span(s), r) for r, s in gold.arguments)
    correct_id = sum((pred_spans & gold_spans).values())
    correct_cls = sum((pred_pairs & gold_pairs).values())
    return correct_id, correct_cls, len(pred.arguments), len(gold.arguments)


def _prf(correct: int, predicted: int, gold: int) -> dict:
    precision = correct / predicted if predicted else 0.0
    recall = correct / gold if gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def score_eae(preds, golds) -> dict:
    """Micro-averaged Arg-I (span match) and Arg-C (span + role) scores."""
    preds = list(preds)
    golds = list(golds)
    if len(preds) != len(golds):
        raise ValidationError(
            f"preds and golds must align by instance ({len(preds)} != {len(golds)})"
        )
    total_id = total_cls = total_pred = total_gold = 0
    for pred, gold in zip(preds, golds):
        correct_id, correct_cls, n_pred, n_gold = _instance_counts(pred, gold)
        total_id += correct_id
        total_cls += correct_cls
        total_pred += n_pred
        total_gold += n_gold
    return {
        "arg_i": _prf(total_id, total_pred, total_gold),
        "arg_c": _prf(total_cls, total_pred, total_gold),
    }


# Matches `role = [TypeName("span"), ...]` both as assignments and as keyword
# arguments inside a constructor call.
_ROLE_LIST = re.compile(r"(\w+)\s*=\s*\[([^\]]*)\]")
_ENTITY = re.compile(r"(\w+)\(\s*[\"']([^\"']*)[\"']\s*\)")


def extract_prediction_from_code(code: str) -> EventPrediction:
    """Pull (role, span, entity type) triples out of generated code."""
    arguments = []
    for role, body in _ROLE_LIST.findall(code):
        for entity_type, span in _ENTITY.findall(body):
            arguments.append(
                PredictedArgument(role=role, span=span, entity_type=entity_type)
            )
    return EventPrediction(arguments=tuple(arguments))


def load_jsonl(path, parser):
    items = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                items.append(parser(json.loads(line)))
    return items
