"""In-interpreter test runner: execute one script, report one JSON line.

Invocation: <interpreter> runner_shim.py <script_path>

The script runs in a fresh namespace with its stdout captured. Whatever
happens inside the script is data, not failure: the shim prints a single
JSON object on stdout and exits 0 whenever the shim itself is healthy.

    {"status": "pass" | "fail",
     "exc_type": <exception class name or null>,
     "traceback": <text formatted like the bare interpreter or null>,
     "stdout": <program stdout>}

Compile-phase errors (syntax, indentation) report through the same schema,
formatted the way the interpreter itself would print them. Shim-internal
faults exit nonzero with a diagnostic on stderr so a host can fall back to
running the script directly.
"""

import io
import json
import sys
from contextlib import redirect_stderr, redirect_stdout


def _strip_foreign_frames(exc, script_path):
    """Drop the shim's own frames so the trace starts at the script's module."""
    tb = exc.__traceback__
    while tb is not None and tb.tb_frame.f_code.co_filename != script_path:
        tb = tb.tb_next
    return tb


def _format_like_interpreter(exc, tb):
    """Render through the interpreter's own display hook for exact parity."""
    exc = exc.with_traceback(tb)
    buffer = io.StringIO()
    with redirect_stderr(buffer):
        sys.__excepthook__(type(exc), exc, tb)
    return buffer.getvalue()


def run_case(script_path):
    """Compile and execute the script; return the report dict."""
    with open(script_path, "r", encoding="utf-8") as handle:
        source = handle.read()

    stdout_buffer = io.StringIO()
    stderr_buffer = io.StringIO()

    try:
        code = compile(source, script_path, "exec")
    except (SyntaxError, ValueError) as exc:
        # Same schema as runtime errors; the interpreter prints compile
        # failures without a call-stack header, so pass no traceback.
        return {
            "status": "fail",
            "exc_type": type(exc).__name__,
            "traceback": _format_like_interpreter(exc, None),
            "stdout": "",
        }

    namespace = {
        "__name__": "__main__",
        "__file__": script_path,
        "__builtins__": __builtins__,
    }
    # The script's module frame sits below the shim's own frames; grant it
    # the same recursion budget it would get at the interpreter top level,
    # so depth-sensitive behaviour (RecursionError tracebacks) matches.
    depth = 1  # the exec call below takes one slot of its own
    frame = sys._getframe()
    while frame is not None:
        depth += 1
        frame = frame.f_back
    sys.setrecursionlimit(sys.getrecursionlimit() + depth)
    try:
        with redirect_stdout(stdout_buffer), redirect_stderr(stderr_buffer):
            exec(code, namespace)
    except BaseException as exc:  # noqa: BLE001 -- program failure is data
        tb = _strip_foreign_frames(exc, script_path)
        return {
            "status": "fail",
            "exc_type": type(exc).__name__,
            "traceback": _format_like_interpreter(exc, tb),
            "stdout": stdout_buffer.getvalue(),
        }
    return {
        "status": "pass",
        "exc_type": None,
        "traceback": None,
        "stdout": stdout_buffer.getvalue(),
    }


def main(argv):
    if len(argv) != 2:
        print("usage: runner_shim <script_path>", file=sys.stderr)
        return 2
    try:
        report = run_case(argv[1])
        line = json.dumps(report)
    except OSError as exc:
        print(f"runner_shim: cannot run {argv[1]}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal fault: let the host fall back
        print(f"runner_shim: internal error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(line + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
