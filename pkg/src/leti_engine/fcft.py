"""Render and parse feedback-conditioned training sequences.

A sequence is the exact concatenation

    <reward token> [ <|text_feedback|> trace <|/text_feedback|> ] instruction <|sol|> solution

with no inserted separators beyond the explicit ``<|sol|>`` boundary between
instruction and solution. The boundary literal makes the pure-text parse a
total, lossless inverse of the builder; prompt templates rendered for a
generator use a plain newline instead.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from itertools import cycle
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import SequenceFormatError
from .model import Feedback, FcftRecord

logger = logging.getLogger(__name__)

GOOD = "<|good|>"
BAD = "<|bad|>"
FB_OPEN = "<|text_feedback|>"
FB_CLOSE = "<|/text_feedback|>"
SOLUTION_SEP = "<|sol|>"

#: All literals with structural meaning inside a sequence.
RESERVED_TOKENS = (GOOD, BAD, FB_OPEN, FB_CLOSE, SOLUTION_SEP)


def _check_clean(text: str, role: str) -> None:
    for token in RESERVED_TOKENS:
        if token in text:
            raise SequenceFormatError(
                "reserved_token_in_payload",
                f"{role} contains the reserved literal {token!r}",
            )


def render_feedback(f_binary: int, f_text: Optional[str] = None) -> str:
    """Render the feedback prefix for a sequence.

    Passing solutions (and failures with no usable trace) get only the reward
    token; otherwise the trace is enclosed in the text-feedback markers.
    Whitespace-only traces count as absent.
    """
    if f_binary not in (0, 1):
        raise ValueError("f_binary must be 0 or 1")
    reward = GOOD if f_binary == 1 else BAD
    if f_text is None or not f_text.strip():
        return reward
    _check_clean(f_text, "textual feedback")
    return f"{reward}{FB_OPEN}{f_text}{FB_CLOSE}"


def build_sequence(instruction: str, solution_text: str, feedback: Feedback) -> str:
    _check_clean(instruction, "instruction")
    _check_clean(solution_text, "solution text")
    prefix = render_feedback(feedback.f_binary, feedback.f_text)
    return f"{prefix}{instruction}{SOLUTION_SEP}{solution_text}"


def build_record(problem, solution, feedback: Feedback, iteration: int) -> FcftRecord:
    """Assemble one training record from a problem, its solution and feedback."""
    if solution.problem_id != problem.id:
        raise SequenceFormatError(
            "solution_problem_mismatch",
            f"solution belongs to {solution.problem_id!r}, not {problem.id!r}",
        )
    return FcftRecord(
        sequence=build_sequence(problem.instruction, solution.text, feedback),
        problem_id=problem.id,
        sample_index=solution.sample_index,
        f_binary=feedback.f_binary,
        iteration=iteration,
    )


def parse_record(sequence: str) -> tuple[int, Optional[str], str, str]:
    """Split a sequence back into (f_binary, f_text, instruction, solution).

    Total inverse of :func:`build_sequence` on its image; malformed input
    raises :class:`SequenceFormatError` naming the violated rule.
    """
    if sequence.startswith(GOOD):
        f_binary, rest = 1, sequence[len(GOOD):]
    elif sequence.startswith(BAD):
        f_binary, rest = 0, sequence[len(BAD):]
    else:
        raise SequenceFormatError(
            "missing_reward_token", "sequence must start with a reward token"
        )

    f_text: Optional[str] = None
    if rest.startswith(FB_OPEN):
        close = rest.find(FB_CLOSE)
        if close == -1:
            raise SequenceFormatError(
                "unbalanced_text_feedback",
                "feedback opener without matching closer",
            )
        f_text = rest[len(FB_OPEN):close]
        rest = rest[close + len(FB_CLOSE):]

    sep = rest.find(SOLUTION_SEP)
    if sep == -1:
        raise SequenceFormatError(
            "missing_solution_separator",
            f"sequence lacks the {SOLUTION_SEP!r} boundary",
        )
    instruction = rest[:sep]
    solution_text = rest[sep + len(SOLUTION_SEP):]
    return f_binary, f_text, instruction, solution_text


@dataclass(frozen=True)
class MixedBatch:
    """One batch in the interleaved training stream."""

    kind: str  # "fcft" | "pretrain"
    items: tuple

    def __len__(self):
        return len(self.items)


def mix_batches(fcft, pretrain, batch_size: int) -> Iterator[MixedBatch]:
    """Interleave training batches strictly as fcft, pretrain, fcft, ...

    The epoch ends when the fcft stream is exhausted; the pretrain stream
    cycles when shorter. An empty fcft stream produces nothing (with a
    warning), regardless of pretrain size.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    fcft = list(fcft)
    pretrain = list(pretrain)
    if not fcft:
        logger.warning("mix_batches: empty fcft stream, nothing to emit")
        return
    pretrain_cycle = cycle(pretrain) if pretrain else None
    for start in range(0, len(fcft), batch_size):
        yield MixedBatch("fcft", tuple(fcft[start : start + batch_size]))
        if pretrain_cycle is not None:
            yield MixedBatch(
                "pretrain",
                tuple(next(pretrain_cycle) for _ in range(batch_size)),
            )
        else:
            yield MixedBatch("pretrain", tuple())


def dedup_records(records: Iterable[FcftRecord]) -> list[tuple[FcftRecord, int]]:
    """Collapse exact duplicates, keeping first occurrence and a count.

    Duplicate identity is (problem_id, sequence, f_binary); off by default in
    the pipeline since the literal algorithm keeps every sample.
    """
    counts: dict[tuple, int] = {}
    order: list[FcftRecord] = []
    for record in records:
        key = (record.problem_id, record.sequence, record.f_binary)
        if key in counts:
            counts[key] += 1
        else:
            counts[key] = 1
            order.append(record)
    return [
        (record, counts[(record.problem_id, record.sequence, record.f_binary)])
        for record in order
    ]


def write_records(records: Iterable[FcftRecord], path, dedup: bool = False) -> int:
    """Write records as JSONL; returns the number of lines written."""
    path = Path(path)
    written = 0
    with path.open("w", encoding="utf-8") as handle:
        if dedup:
            for record, count in dedup_records(records):
                entry = record.to_dict()
                entry["count"] = count
                handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
                written += 1
        else:
            for record in records:
                handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
                written += 1
    return written


def read_records(path) -> list[FcftRecord]:
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(FcftRecord.from_dict(json.loads(line)))
    return records


def read_pretrain_corpus(path) -> list[str]:
    """Read a plain-text corpus: one document per record, blank-line separated."""
    text = Path(path).read_text(encoding="utf-8")
    return [doc.strip("\n") for doc in text.split("\n\n") if doc.strip()]
