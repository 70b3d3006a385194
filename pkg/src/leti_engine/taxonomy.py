"""Classify interpreter stderr into error classes.

Classification keys on the last exception reported in the trace, so chained
tracebacks ("During handling of the above exception...") resolve to the
exception the interpreter ultimately raised.
"""

from __future__ import annotations

import builtins
import re
from typing import Optional

from .model import CANONICAL_ERRORS, PASS, TIMEOUT, ErrorClass

# Exception names whose spelling does not end in "Error" but that the target
# interpreter can still report as the final trace line.
_KNOWN_EXCEPTIONS = frozenset(
    name
    for name in dir(builtins)
    if isinstance(getattr(builtins, name), type)
    and issubclass(getattr(builtins, name), BaseException)
)

# `Name` or `Name: message`, where Name may be dotted (module.QualifiedError).
_TRACE_LINE = re.compile(
    r"^(?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)(?::\s?.*)?$"
)


def _is_exception_name(name: str) -> bool:
    return name.endswith("Error") or name in _KNOWN_EXCEPTIONS


def extract_exception_name(trace: str) -> Optional[str]:
    """Pull the raising exception's class name out of a traceback, if any.

    Scans from the bottom for the first line shaped like ``Name`` or
    ``Name: message`` whose name looks like an exception; dotted names keep
    only the final component. Returns ``None`` when no such line exists.
    """
    for line in reversed(trace.splitlines()):
        line = line.strip()
        if not line:
            continue
        match = _TRACE_LINE.match(line)
        if not match:
            continue
        name = match.group("name").rsplit(".", 1)[-1]
        if _is_exception_name(name):
            return name
    return None


def classify_trace(outcome) -> ErrorClass:
    """Map one :class:`~leti_engine.sandbox.ExecutionOutcome` to its class.

    Total: every outcome gets exactly one class. Nonzero exits without a
    parseable trace become Other("Unknown").
    """
    if outcome.timed_out:
        return TIMEOUT
    if outcome.exit_code == 0:
        return PASS
    name = extract_exception_name(outcome.stderr or "")
    if name in CANONICAL_ERRORS:
        return ErrorClass(name)
    return ErrorClass.other(name)


def classify_text(trace: str) -> ErrorClass:
    """Classify a bare failing trace (no outcome object)."""
    name = extract_exception_name(trace)
    if name in CANONICAL_ERRORS:
        return ErrorClass(name)
    return ErrorClass.other(name)
