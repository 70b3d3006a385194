"""Core domain types: problems, candidate solutions, execution feedback.

All types are immutable after construction and safe to share across workers.
The problem corpus is line-delimited JSON (one problem per line) with fields
``id`` / ``instruction`` / ``tests`` / ``setup_code``; unknown keys are
ignored so corpora from other tools load as-is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import CorpusError, ValidationError

# Canonical error-class labels tracked individually in reports; anything else
# is folded into Other(name).
CANONICAL_ERRORS = ("AssertionError", "SyntaxError", "IndentationError", "NameError")


@dataclass(frozen=True, order=True)
class ErrorClass:
    """Outcome category of one evaluated solution.

    ``kind`` is one of ``pass``, ``timeout``, a canonical error label, or
    ``other``; ``name`` carries the verbatim exception name for ``other``.
    """

    kind: str
    name: Optional[str] = None

    @classmethod
    def other(cls, name: Optional[str]) -> "ErrorClass":
        return cls("other", name if name else "Unknown")

    @property
    def label(self) -> str:
        if self.kind == "pass":
            return "Pass"
        if self.kind == "timeout":
            return "Timeout"
        if self.kind == "other":
            return f"Other({self.name})"
        return self.kind

    @property
    def is_pass(self) -> bool:
        return self.kind == "pass"

    def to_json(self) -> str:
        return self.label

    @classmethod
    def from_json(cls, label: str) -> "ErrorClass":
        if label == "Pass":
            return PASS
        if label == "Timeout":
            return TIMEOUT
        if label.startswith("Other(") and label.endswith(")"):
            return cls.other(label[6:-1])
        if label in CANONICAL_ERRORS:
            return cls(label)
        return cls.other(label)


PASS = ErrorClass("pass")
TIMEOUT = ErrorClass("timeout")


@dataclass(frozen=True)
class TestCase:
    """One executable assertion or statement from a problem's test suite."""

    __test__ = False  # not a pytest class

    index: int
    source: str

    def __post_init__(self):
        if not self.source:
            raise ValidationError("test case source must be non-empty")
        if self.index < 0:
            raise ValidationError("test case index must be >= 0")


@dataclass(frozen=True)
class Problem:
    """A natural-language task plus the test suite that checks solutions."""

    id: str
    instruction: str
    tests: tuple[TestCase, ...]
    setup_code: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise ValidationError("problem id must be non-empty")
        if not self.instruction:
            raise ValidationError(f"problem {self.id!r}: instruction must be non-empty")
        if not self.tests:
            raise ValidationError(f"problem {self.id!r}: tests must be non-empty")
        for pos, test in enumerate(self.tests):
            if test.index != pos:
                raise ValidationError(
                    f"problem {self.id!r}: test index {test.index} != position {pos}"
                )

    def to_dict(self) -> dict:
        record = {
            "id": self.id,
            "instruction": self.instruction,
            "tests": [t.source for t in self.tests],
        }
        if self.setup_code is not None:
            record["setup_code"] = self.setup_code
        return record

    @classmethod
    def from_dict(cls, record: dict) -> "Problem":
        tests = tuple(
            TestCase(index=i, source=src) for i, src in enumerate(record.get("tests", []))
        )
        return cls(
            id=record.get("id", ""),
            instruction=record.get("instruction", ""),
            tests=tests,
            setup_code=record.get("setup_code"),
        )


@dataclass(frozen=True)
class CandidateSolution:
    """Generator output for one problem, before and after post-processing.

    ``text`` must be a prefix of ``raw_text`` when truncation was applied,
    and identical otherwise.
    """

    problem_id: str
    sample_index: int
    raw_text: str
    text: str
    conditioned_on: Optional[str] = None

    def __post_init__(self):
        if self.sample_index < 0:
            raise ValidationError("sample_index must be >= 0")
        if not self.raw_text.startswith(self.text):
            raise ValidationError("post-processed text must be a prefix of raw_text")


@dataclass(frozen=True)
class Feedback:
    """Evaluator verdict for one (problem, solution) pair.

    Invariant: ``f_binary == 1`` exactly when every per-test status passed,
    which is exactly when ``error_class`` is Pass; textual feedback is only
    present for failures.
    """

    f_binary: int
    f_text: Optional[str]
    error_class: ErrorClass
    per_test: tuple[tuple[int, ErrorClass], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.f_binary not in (0, 1):
            raise ValidationError("f_binary must be 0 or 1")
        all_pass = all(status.is_pass for _, status in self.per_test)
        if self.per_test and (self.f_binary == 1) != all_pass:
            raise ValidationError("f_binary must be 1 iff every test passed")
        if (self.f_binary == 1) != self.error_class.is_pass:
            raise ValidationError("error_class must be Pass iff f_binary is 1")
        if self.f_text is not None and self.f_binary == 1:
            raise ValidationError("textual feedback implies a failing solution")

    def to_dict(self) -> dict:
        return {
            "f_binary": self.f_binary,
            "f_text": self.f_text,
            "error_class": self.error_class.to_json(),
            "per_test": [[i, status.to_json()] for i, status in self.per_test],
        }

    @classmethod
    def from_dict(cls, record: dict) -> "Feedback":
        return cls(
            f_binary=record["f_binary"],
            f_text=record.get("f_text"),
            error_class=ErrorClass.from_json(record["error_class"]),
            per_test=tuple(
                (i, ErrorClass.from_json(s)) for i, s in record.get("per_test", [])
            ),
        )


@dataclass(frozen=True)
class FcftRecord:
    """One feedback-conditioned training sequence with provenance."""

    sequence: str
    problem_id: str
    sample_index: int
    f_binary: int
    iteration: int

    def to_dict(self) -> dict:
        return {
            "sequence": self.sequence,
            "problem_id": self.problem_id,
            "sample_index": self.sample_index,
            "f_binary": self.f_binary,
            "iteration": self.iteration,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "FcftRecord":
        return cls(
            sequence=record["sequence"],
            problem_id=record["problem_id"],
            sample_index=record["sample_index"],
            f_binary=record["f_binary"],
            iteration=record["iteration"],
        )


def load_problems(path) -> list[Problem]:
    """Load a JSONL problem corpus, preserving file order.

    Raises :class:`CorpusError` naming the offending line for malformed JSON
    and for duplicate problem ids.
    """
    path = Path(path)
    problems: list[Problem] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(
                    f"{path}:{lineno}: malformed JSON: {exc}", line_number=lineno
                ) from exc
            try:
                problem = Problem.from_dict(record)
            except ValidationError as exc:
                raise CorpusError(
                    f"{path}:{lineno}: invalid problem: {exc}", line_number=lineno
                ) from exc
            if problem.id in seen:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate problem id {problem.id!r}",
                    line_number=lineno,
                )
            seen.add(problem.id)
            problems.append(problem)
    return problems


def save_problems(problems, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for problem in problems:
            handle.write(json.dumps(problem.to_dict(), ensure_ascii=False) + "\n")
