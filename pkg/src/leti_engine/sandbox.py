"""Sandboxed execution of candidate solutions against test cases.

Each test case runs as an independent interpreter subprocess in a fresh
temporary working directory with a scrubbed environment, a hard wall-clock
kill, and capped stream capture. Isolation is process + temp dir + timeout;
there is no OS-level jailing and no network blocking.

Two backends exist: ``raw`` invokes the interpreter directly on a script file
and classifies stderr downstream; ``shim`` wraps the script in a runner that
reports exact exception identity as one JSON line (falling back to raw when
the shim itself misbehaves).
"""

from __future__ import annotations

import json
import os
import re
import shutil
import signal
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .errors import InfrastructureError, SpawnError
from .model import CANONICAL_ERRORS, PASS, TIMEOUT, ErrorClass, Feedback
from .taxonomy import classify_trace

INTERPRETER_ENV_VAR = "LETI_INTERPRETER"
SHIM_ENV_VAR = "LETI_SHIM"
TRUNCATION_MARKER = "...[truncated]"
PATH_TOKEN = "<src>"
SCRIPT_NAME = "script.py"

# Feedback text keeps the trace tail; interpreters put the exception message
# last, which is the informative part.
FEEDBACK_TEXT_LIMIT = 2048


def resolve_interpreter() -> str:
    override = os.environ.get(INTERPRETER_ENV_VAR)
    if override:
        return override
    return "python" if sys.platform == "win32" else "python3"


def resolve_shim_path() -> Optional[str]:
    """Locate the runner shim script: env var first, then an installed module."""
    override = os.environ.get(SHIM_ENV_VAR)
    if override:
        return override
    try:
        import runner_shim  # type: ignore
    except ImportError:
        return None
    return runner_shim.__file__


@dataclass(frozen=True)
class ExecutionLimits:
    """Resource bounds for one sandboxed execution."""

    wall_clock_timeout: float = 10.0
    max_stream_capture: int = 65536
    max_concurrent: int = field(default_factory=lambda: os.cpu_count() or 1)
    interpreter_args: tuple[str, ...] = ("-I", "-S")

    def __post_init__(self):
        if self.wall_clock_timeout <= 0:
            raise ValueError("wall_clock_timeout must be > 0")
        if self.max_stream_capture <= 0:
            raise ValueError("max_stream_capture must be > 0")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")


@dataclass(frozen=True)
class ExecutionOutcome:
    """Raw result of one sandboxed run."""

    status: str  # "normal" | "timed_out" | "spawn_failed"
    exit_code: Optional[int]
    stdout: str
    stderr: str
    duration: float
    spawn_reason: Optional[str] = None
    workdir: Optional[str] = None

    @property
    def timed_out(self) -> bool:
        return self.status == "timed_out"

    @property
    def spawn_failed(self) -> bool:
        return self.status == "spawn_failed"

    @property
    def ok(self) -> bool:
        return self.status == "normal" and self.exit_code == 0


def _cap_stream(data: bytes, cap: int) -> str:
    text_bytes = data if len(data) <= cap else data[:cap]
    text = text_bytes.decode("utf-8", errors="replace")
    if len(data) > cap:
        text += TRUNCATION_MARKER
    return text


def _scrubbed_env(workdir: str) -> dict:
    return {
        "PATH": os.environ.get("PATH", "/usr/local/bin:/usr/bin:/bin"),
        "HOME": workdir,
        "TMPDIR": workdir,
        "LC_ALL": "C.UTF-8",
        "PYTHONIOENCODING": "utf-8",
    }


def normalize_paths(text: str, workdir: str) -> str:
    """Rewrite the execution temp dir to a fixed token.

    Keeps feedback text independent of where the run happened, which in turn
    keeps training sequences reproducible across machines.
    """
    for variant in {workdir, os.path.realpath(workdir)}:
        text = text.replace(variant, PATH_TOKEN)
    return text


def execute_script(
    script: str,
    limits: ExecutionLimits = ExecutionLimits(),
    backend: str = "raw",
    shim_path: Optional[str] = None,
) -> ExecutionOutcome:
    """Run one script in a fresh sandbox and capture the outcome.

    The script may be arbitrary text, including invalid source; program-level
    failure shows up in the exit code and stderr, never as an exception here.
    Only a missing interpreter yields a ``spawn_failed`` outcome.
    """
    if backend not in ("raw", "shim"):
        raise ValueError(f"unknown backend {backend!r}")
    interpreter = resolve_interpreter()
    workdir = tempfile.mkdtemp(prefix="leti-run-")
    try:
        script_path = os.path.join(workdir, SCRIPT_NAME)
        with open(script_path, "w", encoding="utf-8") as handle:
            handle.write(script)
        argv = [interpreter, *limits.interpreter_args]
        if backend == "shim":
            resolved_shim = shim_path or resolve_shim_path()
            if resolved_shim is None:
                return ExecutionOutcome(
                    status="spawn_failed",
                    exit_code=None,
                    stdout="",
                    stderr="",
                    duration=0.0,
                    spawn_reason="runner shim not found (set LETI_SHIM)",
                    workdir=workdir,
                )
            argv.append(resolved_shim)
        argv.append(script_path)

        started = time.monotonic()
        try:
            proc = subprocess.Popen(
                argv,
                cwd=workdir,
                env=_scrubbed_env(workdir),
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                start_new_session=True,
            )
        except (FileNotFoundError, PermissionError) as exc:
            return ExecutionOutcome(
                status="spawn_failed",
                exit_code=None,
                stdout="",
                stderr="",
                duration=time.monotonic() - started,
                spawn_reason=f"cannot start interpreter {interpreter!r}: {exc}",
                workdir=workdir,
            )

        timed_out = False
        try:
            out, err = proc.communicate(timeout=limits.wall_clock_timeout)
        except subprocess.TimeoutExpired:
            timed_out = True
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                proc.kill()
            out, err = proc.communicate()
        duration = time.monotonic() - started

        return ExecutionOutcome(
            status="timed_out" if timed_out else "normal",
            exit_code=None if timed_out else proc.returncode,
            stdout=_cap_stream(out, limits.max_stream_capture),
            stderr=_cap_stream(err, limits.max_stream_capture),
            duration=duration,
            workdir=workdir,
        )
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


def compose_script(problem, solution_text: str, test_source: str) -> str:
    parts = []
    if problem.setup_code:
        parts.append(problem.setup_code)
    parts.append(solution_text)
    parts.append(test_source)
    return "\n".join(parts) + "\n"


def _timeout_feedback_text(limits: ExecutionLimits) -> str:
    return f"Execution timed out after {limits.wall_clock_timeout:g}s."


@dataclass
class _CaseResult:
    error_class: ErrorClass
    trace: Optional[str]


def _run_case_raw(script: str, limits: ExecutionLimits) -> _CaseResult:
    outcome = execute_script(script, limits, backend="raw")
    if outcome.spawn_failed:
        raise SpawnError(outcome.spawn_reason or "interpreter failed to start")
    if outcome.timed_out:
        return _CaseResult(TIMEOUT, _timeout_feedback_text(limits))
    error_class = classify_trace(outcome)
    if error_class.is_pass:
        return _CaseResult(PASS, None)
    trace = normalize_paths(outcome.stderr, outcome.workdir or "")
    return _CaseResult(error_class, trace if trace.strip() else None)


def _run_case_shim(script: str, limits: ExecutionLimits, shim_path) -> _CaseResult:
    outcome = execute_script(script, limits, backend="shim", shim_path=shim_path)
    if outcome.spawn_failed:
        raise SpawnError(outcome.spawn_reason or "interpreter failed to start")
    if outcome.timed_out:
        return _CaseResult(TIMEOUT, _timeout_feedback_text(limits))
    report = None
    if outcome.exit_code == 0:
        line = outcome.stdout.strip().splitlines()
        try:
            report = json.loads(line[-1]) if line else None
        except json.JSONDecodeError:
            report = None
    if not isinstance(report, dict) or "status" not in report:
        # Shim misbehaved (bad exit, truncated or invalid JSON): fall back.
        return _run_case_raw(script, limits)
    if report["status"] == "pass":
        return _CaseResult(PASS, None)
    exc_type = report.get("exc_type")
    if exc_type in CANONICAL_ERRORS:
        error_class = ErrorClass(exc_type)
    else:
        error_class = ErrorClass.other(exc_type)
    trace = report.get("traceback") or ""
    trace = normalize_paths(trace, outcome.workdir or "")
    return _CaseResult(error_class, trace if trace.strip() else None)


def evaluate_solution(
    problem,
    solution,
    limits: ExecutionLimits = ExecutionLimits(),
    backend: str = "raw",
    shim_path: Optional[str] = None,
) -> Feedback:
    """Run every test case and fold the outcomes into one Feedback.

    All tests run (no stop at first failure) so ``per_test`` is complete, but
    the textual feedback carries only the earliest failing test's trace.
    Spawn failures raise :class:`SpawnError`; they are never recorded as
    solution failures.
    """
    per_test = []
    first_failure: Optional[_CaseResult] = None
    for test in problem.tests:
        script = compose_script(problem, solution.text, test.source)
        if backend == "shim":
            result = _run_case_shim(script, limits, shim_path)
        else:
            result = _run_case_raw(script, limits)
        per_test.append((test.index, result.error_class))
        if first_failure is None and not result.error_class.is_pass:
            first_failure = result

    if first_failure is None:
        return Feedback(
            f_binary=1, f_text=None, error_class=PASS, per_test=tuple(per_test)
        )
    f_text = first_failure.trace
    if f_text is not None and len(f_text) > FEEDBACK_TEXT_LIMIT:
        f_text = f_text[-FEEDBACK_TEXT_LIMIT:]
    return Feedback(
        f_binary=0,
        f_text=f_text,
        error_class=first_failure.error_class,
        per_test=tuple(per_test),
    )


class BatchExecutionError(InfrastructureError):
    """One or more entries in a batch could not be executed at all.

    ``failures`` maps input index to the spawn failure message; ``results``
    holds the Feedback for the entries that did run (None where failed).
    """

    def __init__(self, failures, results):
        super().__init__(
            f"{len(failures)} of {len(results)} evaluations failed to spawn"
        )
        self.failures = failures
        self.results = results


def evaluate_batch(
    pairs,
    limits: ExecutionLimits = ExecutionLimits(),
    backend: str = "raw",
    shim_path: Optional[str] = None,
) -> list[Feedback]:
    """Evaluate (problem, solution) pairs concurrently, preserving order.

    At most ``limits.max_concurrent`` subprocesses run simultaneously. The
    batch never aborts early: spawn failures are collected per entry and
    raised together afterwards.
    """
    pairs = list(pairs)
    if not pairs:
        return []

    def run_one(pair):
        problem, solution = pair
        try:
            return evaluate_solution(problem, solution, limits, backend, shim_path)
        except SpawnError as exc:
            return exc

    with ThreadPoolExecutor(max_workers=limits.max_concurrent) as pool:
        results = list(pool.map(run_one, pairs))

    failures = {i: str(r) for i, r in enumerate(results) if isinstance(r, SpawnError)}
    if failures:
        raise BatchExecutionError(
            failures, [None if isinstance(r, SpawnError) else r for r in results]
        )
    return results
