import json

import pytest
from click.testing import CliRunner

from leti_engine.cli import main
from leti_engine.generator import GeneratorSpec
from leti_engine.model import Problem, TestCase, save_problems
from leti_engine.orchestrator import RunConfig
from leti_engine.sandbox import ExecutionLimits


@pytest.fixture()
def workspace(tmp_path):
    problems = [
        Problem(
            id=f"p{i}",
            instruction=f"number {i}",
            tests=(TestCase(0, f"assert {i} == {i}"),),
        )
        for i in range(2)
    ]
    problems_path = tmp_path / "problems.jsonl"
    save_problems(problems, problems_path)
    config = RunConfig(
        problems_path=str(problems_path),
        generator=GeneratorSpec("trigram", max_new_tokens=4),
        n_samples=2,
        eval_samples=2,
        iterations=1,
        seed=2,
        run_root=str(tmp_path / "runs"),
        limits=ExecutionLimits(wall_clock_timeout=5),
    )
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config.to_dict()))
    return tmp_path, config_path


def test_pipeline_commands(workspace):
    tmp_path, config_path = workspace
    runner = CliRunner()

    samples_path = tmp_path / "samples.jsonl"
    result = runner.invoke(
        main,
        ["--config", str(config_path), "sample", "--out", str(samples_path)],
    )
    assert result.exit_code == 0, result.output
    assert "sampled 4 candidates" in result.output

    feedback_path = tmp_path / "feedback.jsonl"
    result = runner.invoke(
        main,
        [
            "--config", str(config_path),
            "eval", "--samples", str(samples_path), "--out", str(feedback_path),
        ],
    )
    assert result.exit_code == 0, result.output
    assert "evaluated 4" in result.output

    fcft_path = tmp_path / "fcft.jsonl"
    result = runner.invoke(
        main,
        [
            "--config", str(config_path),
            "build-fcft",
            "--samples", str(samples_path),
            "--feedback", str(feedback_path),
            "--out", str(fcft_path),
        ],
    )
    assert result.exit_code == 0, result.output
    assert fcft_path.exists()

    result = runner.invoke(
        main, ["--config", str(config_path), "metrics", "errors", "--feedback", str(feedback_path)]
    )
    assert result.exit_code == 0
    assert "# of Pass Test" in result.output


def test_loop_and_report(workspace):
    tmp_path, config_path = workspace
    runner = CliRunner()
    result = runner.invoke(main, ["--config", str(config_path), "loop"])
    assert result.exit_code == 0, result.output
    assert "complete" in result.output
    assert "pass@1[0]" in result.output

    run_dir = tmp_path / "runs" / "run-2"
    result = runner.invoke(main, ["--run-dir", str(run_dir), "report"])
    assert result.exit_code == 0, result.output
    assert (run_dir / "report" / "metrics.csv").exists()
    assert (run_dir / "report" / "metrics.json").exists()


def test_metrics_commands():
    runner = CliRunner()
    result = runner.invoke(main, ["metrics", "pass-at-k", "-n", "5", "-c", "2", "-k", "2"])
    assert result.exit_code == 0
    assert result.output.strip() == "0.700000"

    result = runner.invoke(
        main, ["metrics", "improvement", "--series", "0:4.5,6:28.0"]
    )
    assert result.exit_code == 0
    assert "avg_per_iter=3.92" in result.output


def test_seed_override_changes_run_id(workspace):
    tmp_path, config_path = workspace
    runner = CliRunner()
    result = runner.invoke(
        main, ["--config", str(config_path), "--seed", "99", "loop"]
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "runs" / "run-99").exists()


def test_validation_error_exit_code_1(workspace, tmp_path):
    _, config_path = workspace
    runner = CliRunner()
    bogus = tmp_path / "nope.jsonl"
    bogus.write_text('{"problem_id": "zzz", "sample_index": 0, "text": "x"}\n')
    result = runner.invoke(
        main, ["--config", str(config_path), "eval", "--samples", str(bogus)]
    )
    assert result.exit_code == 1
    assert "error" in result.output


def test_infrastructure_error_exit_code_2(workspace, monkeypatch):
    tmp_path, config_path = workspace
    monkeypatch.setenv("LETI_INTERPRETER", "/definitely/not/here")
    runner = CliRunner()
    samples_path = tmp_path / "s.jsonl"
    samples_path.write_text('{"problem_id": "p0", "sample_index": 0, "text": "x = 1"}\n')
    result = runner.invoke(
        main, ["--config", str(config_path), "eval", "--samples", str(samples_path)]
    )
    assert result.exit_code == 2


def test_missing_config_is_validation_error():
    runner = CliRunner()
    result = runner.invoke(main, ["sample"])
    assert result.exit_code == 1
    assert "--config is required" in result.output


def test_remote_mode_posts_to_server(workspace, monkeypatch):
    # Route the thin client's HTTP calls into an in-process ASGI app.
    from fastapi.testclient import TestClient

    from leti_engine.service.app import create_app

    client = TestClient(create_app())

    def fake_post(url, json=None, timeout=None):
        path = url.replace("http://svc.local", "")
        return client.post(path, json=json)

    monkeypatch.setattr("leti_engine.cli.httpx.post", fake_post)
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["--server", "http://svc.local", "metrics", "pass-at-k", "-n", "5", "-c", "2", "-k", "2"],
    )
    assert result.exit_code == 0, result.output
    assert result.output.strip() == "0.700000"

    result = runner.invoke(
        main,
        ["--server", "http://svc.local", "metrics", "pass-at-k", "-n", "5", "-c", "9", "-k", "2"],
    )
    assert result.exit_code == 1
