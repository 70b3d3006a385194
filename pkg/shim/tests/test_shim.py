import json
import subprocess
import sys
from pathlib import Path

import pytest

SHIM = str(Path(__file__).parents[1] / "runner_shim.py")

REQUIRED_KEYS = {"status", "exc_type", "traceback", "stdout"}


def run_shim(tmp_path, code):
    script = tmp_path / "script.py"
    script.write_text(code, encoding="utf-8")
    proc = subprocess.run(
        [sys.executable, SHIM, str(script)], capture_output=True, text=True
    )
    return proc, str(script)


def run_raw(script_path):
    return subprocess.run(
        [sys.executable, script_path], capture_output=True, text=True
    )


def parse_report(proc):
    assert proc.returncode == 0, proc.stderr
    lines = proc.stdout.splitlines()
    assert len(lines) == 1, "shim must emit exactly one stdout line"
    report = json.loads(lines[0])
    assert set(report) == REQUIRED_KEYS
    return report


class TestSchema:
    def test_pass_case(self, tmp_path):
        proc, _ = run_shim(tmp_path, "assert 1 == 1\n")
        report = parse_report(proc)
        assert report == {
            "status": "pass", "exc_type": None, "traceback": None, "stdout": "",
        }

    def test_fail_case(self, tmp_path):
        proc, _ = run_shim(tmp_path, "assert 1 == 2\n")
        report = parse_report(proc)
        assert report["status"] == "fail"
        assert report["exc_type"] == "AssertionError"
        assert report["traceback"].rstrip().endswith("AssertionError")

    def test_syntax_error_same_schema(self, tmp_path):
        proc, _ = run_shim(tmp_path, "def f(:\n")
        report = parse_report(proc)
        assert report["status"] == "fail"
        assert report["exc_type"] == "SyntaxError"
        assert "SyntaxError" in report["traceback"]

    def test_status_exc_traceback_consistency(self, tmp_path):
        for code in ("x = 1\n", "boom(\n", "1 / 0\n"):
            report = parse_report(run_shim(tmp_path, code)[0])
            is_pass = report["status"] == "pass"
            assert (report["exc_type"] is None) == is_pass
            assert (report["traceback"] is None) == is_pass


class TestStdoutEmbedding:
    def test_program_output_not_interleaved(self, tmp_path):
        proc, _ = run_shim(tmp_path, "print('line one')\nprint('line two')\n")
        report = parse_report(proc)
        assert report["stdout"] == "line one\nline two\n"

    def test_output_before_failure_is_kept(self, tmp_path):
        proc, _ = run_shim(tmp_path, "print('before')\nassert False\n")
        report = parse_report(proc)
        assert report["stdout"] == "before\n"
        assert report["exc_type"] == "AssertionError"


class TestTracebackParity:
    CASES = [
        "assert 1 == 2\n",
        "def check(x):\n    assert x\ncheck(0)\n",
        "def f(:\n    return 1\n",
        "x = 1\n    y = 2\n",
        "def f():\npass\n",
        "print(foo)\n",
        "x = 1 / 0\n",
        "x = int('boom')\n",
        "try:\n    {}['k']\nexcept KeyError:\n    raise ValueError('wrapped')\n",
        "try:\n    1 / 0\nexcept ZeroDivisionError:\n    print(undefined)\n",
    ]

    @pytest.mark.parametrize("code", CASES, ids=lambda c: c.splitlines()[0][:24])
    def test_traceback_matches_raw_stderr(self, tmp_path, code):
        proc, script = run_shim(tmp_path, code)
        report = parse_report(proc)
        raw = run_raw(script)
        assert report["status"] == "fail"
        assert raw.returncode != 0
        assert report["traceback"] == raw.stderr

    @pytest.mark.parametrize("code", CASES, ids=lambda c: c.splitlines()[0][:24])
    def test_exc_type_matches_raw_final_line(self, tmp_path, code):
        proc, script = run_shim(tmp_path, code)
        report = parse_report(proc)
        raw = run_raw(script)
        final = raw.stderr.rstrip().splitlines()[-1]
        assert report["exc_type"] == final.split(":")[0].strip()


class TestShimInternalFaults:
    def test_missing_script_exits_nonzero(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, SHIM, str(tmp_path / "absent.py")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode != 0
        assert "runner_shim" in proc.stderr
        assert proc.stdout == ""

    def test_no_arguments_exits_nonzero(self):
        proc = subprocess.run([sys.executable, SHIM], capture_output=True, text=True)
        assert proc.returncode != 0
        assert "usage" in proc.stderr


class TestIsolation:
    def test_fresh_namespace_per_run(self, tmp_path):
        proc, _ = run_shim(tmp_path, "assert '__leaked__' not in globals()\n__leaked__ = 1\n")
        assert parse_report(proc)["status"] == "pass"
        proc, _ = run_shim(tmp_path, "assert '__leaked__' not in globals()\n")
        assert parse_report(proc)["status"] == "pass"

    def test_runs_as_main(self, tmp_path):
        proc, _ = run_shim(tmp_path, "assert __name__ == '__main__'\n")
        assert parse_report(proc)["status"] == "pass"
