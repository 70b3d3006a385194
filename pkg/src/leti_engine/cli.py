"""Command-line client for the engine service.

Commands marshal their arguments into the same payloads the HTTP API takes;
by default they execute in-process, with ``--server`` (or LETI_SERVICE_URL)
they post to a running service instead. Exit codes: 0 success, 1 validation
error, 2 infrastructure error.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import replace

import click
import httpx

from .errors import InfrastructureError, ValidationError
from .metrics import render_distribution_table, round_half_up
from .model import Feedback
from .orchestrator import RunConfig
from .service import core

SERVICE_URL_ENV = "LETI_SERVICE_URL"

ROUTES = {
    "sample": "/sample",
    "evaluate": "/evaluate",
    "build_fcft": "/fcft/build",
    "loop": "/loop",
    "report": "/report",
    "pass_at_k": "/metrics/pass-at-k",
    "improvement": "/metrics/improvement",
}

LOCAL_OPS = {
    "sample": lambda p: core.sample_candidates(
        p["config"], p.get("iteration", 0), p.get("out_path"), p.get("limit_problems")
    ),
    "evaluate": lambda p: core.evaluate_samples(
        p["config"], p.get("samples_path"), p.get("samples"), p.get("out_path")
    ),
    "build_fcft": lambda p: core.build_fcft(
        p["config"], p["samples_path"], p["feedback_path"],
        p.get("iteration", 0), p.get("out_path"),
    ),
    "loop": lambda p: core.run_loop_service(p["config"], p.get("resume_run_dir")),
    "report": lambda p: core.report(p["run_dir"]),
    "pass_at_k": lambda p: core.compute_pass_at_k(p["n"], p["c"], p["k"]),
    "improvement": lambda p: core.compute_improvement(p["series"]),
}


class Client:
    """Dispatches an operation locally or against a remote service."""

    def __init__(self, server: str | None):
        self.server = server or os.environ.get(SERVICE_URL_ENV)

    def call(self, op: str, payload: dict) -> dict:
        if not self.server:
            return LOCAL_OPS[op](payload)
        try:
            response = httpx.post(
                self.server.rstrip("/") + ROUTES[op], json=payload, timeout=None
            )
        except httpx.TransportError as exc:
            raise InfrastructureError(f"cannot reach service {self.server}: {exc}")
        if response.status_code == 400:
            raise ValidationError(response.json().get("detail", "bad request"))
        if response.status_code >= 500:
            raise InfrastructureError(response.text)
        response.raise_for_status()
        return response.json()


def _load_config(ctx) -> dict:
    try:
        path = ctx.obj.get("config_path")
        if not path:
            raise ValidationError("--config is required for this command")
        config = RunConfig.from_file(path)
        if ctx.obj.get("seed") is not None:
            config = replace(config, seed=ctx.obj["seed"])
        if ctx.obj.get("run_dir") is not None:
            config = replace(config, run_root=ctx.obj["run_dir"])
        return config.to_dict()
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


def _run(ctx, op: str, payload: dict) -> dict:
    try:
        return Client(ctx.obj.get("server")).call(op, payload)
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except InfrastructureError as exc:
        click.echo(f"infrastructure error: {exc}", err=True)
        sys.exit(2)


@click.group()
@click.option("--config", "config_path", type=click.Path(), help="Run config (TOML or JSON).")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--run-dir", type=click.Path(), default=None, help="Override the run root directory.")
@click.option("--server", type=str, default=None, help="Service URL (default: in-process).")
@click.pass_context
def main(ctx, config_path, seed, run_dir, server):
    """Feedback-conditioned fine-tuning data engine."""
    ctx.ensure_object(dict)
    ctx.obj.update(
        config_path=config_path, seed=seed, run_dir=run_dir, server=server
    )


@main.command()
@click.option("--iteration", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
def sample(ctx, iteration, out_path):
    """Sample candidate solutions for every problem."""
    result = _run(ctx, "sample", {
        "config": _load_config(ctx), "iteration": iteration, "out_path": out_path,
    })
    click.echo(f"sampled {result['count']} candidates"
               + (f" -> {result['out_path']}" if result.get("out_path") else ""))


@main.command("eval")
@click.option("--samples", "samples_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
def eval_command(ctx, samples_path, out_path):
    """Evaluate sampled solutions in the sandbox."""
    result = _run(ctx, "evaluate", {
        "config": _load_config(ctx),
        "samples_path": samples_path,
        "out_path": out_path,
    })
    click.echo(f"evaluated {result['count']}: {result['passed']} passed")
    for label, count in sorted(result["error_distribution"].items()):
        click.echo(f"  {label}: {count}")


@main.command("build-fcft")
@click.option("--samples", "samples_path", type=click.Path(exists=True), required=True)
@click.option("--feedback", "feedback_path", type=click.Path(exists=True), required=True)
@click.option("--iteration", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
def build_fcft(ctx, samples_path, feedback_path, iteration, out_path):
    """Assemble the feedback-conditioned training dataset."""
    result = _run(ctx, "build_fcft", {
        "config": _load_config(ctx),
        "samples_path": samples_path,
        "feedback_path": feedback_path,
        "iteration": iteration,
        "out_path": out_path,
    })
    click.echo(
        f"wrote {result['records']} records ({result['good']} good) -> {out_path}"
    )


@main.command()
@click.option("--resume", "resume_run_dir", type=click.Path(), default=None,
              help="Resume an aborted run from its directory.")
@click.pass_context
def loop(ctx, resume_run_dir):
    """Run the full improvement loop."""
    payload = {"resume_run_dir": resume_run_dir}
    payload["config"] = {} if resume_run_dir else _load_config(ctx)
    result = _run(ctx, "loop", payload)
    click.echo(f"run {result['run_id']}: {result['status']} -> {result['run_dir']}")
    for iteration, value in result["pass1_series"]:
        click.echo(f"  pass@1[{iteration}] = {value:.4f}")


@main.group()
def metrics():
    """Metric calculators."""


@metrics.command("pass-at-k")
@click.option("-n", type=int, required=True, help="Samples drawn.")
@click.option("-c", type=int, required=True, help="Correct samples.")
@click.option("-k", type=int, required=True, help="Top-k threshold.")
@click.pass_context
def metrics_pass_at_k(ctx, n, c, k):
    result = _run(ctx, "pass_at_k", {"n": n, "c": c, "k": k})
    click.echo(f"{result['value']:.6f}")


@metrics.command("improvement")
@click.option("--series", required=True,
              help="Comma-separated iteration:pass1 pairs, e.g. 0:4.5,6:28.0")
@click.pass_context
def metrics_improvement(ctx, series):
    points = []
    for chunk in series.split(","):
        iteration, value = chunk.split(":")
        points.append([int(iteration), float(value)])
    result = _run(ctx, "improvement", {"series": points})
    click.echo(
        f"initial={result['initial']} max={result['max']} "
        f"iters_to_max={result['iters_to_max']} "
        f"avg_per_iter={round_half_up(result['avg_per_iter'])}"
    )


@metrics.command("errors")
@click.option("--feedback", "feedback_path", type=click.Path(exists=True), required=True)
def metrics_errors(feedback_path):
    entries = []
    with open(feedback_path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                entries.append(Feedback.from_dict(json.loads(line)))
    from .metrics import error_distribution

    for label, count in render_distribution_table(error_distribution(entries)):
        click.echo(f"{label}: {count}")


@main.command()
@click.pass_context
def report(ctx):
    """Write metrics.json / metrics.csv for a finished run (needs --run-dir)."""
    run_dir = ctx.obj.get("run_dir")
    if not run_dir:
        click.echo("error: report needs --run-dir pointing at a run", err=True)
        sys.exit(1)
    result = _run(ctx, "report", {"run_dir": run_dir})
    click.echo(f"report -> {result['json_path']}, {result['csv_path']}")
    if result.get("improvement"):
        summary = result["improvement"]
        click.echo(
            f"initial={summary['initial']:.4f} max={summary['max']:.4f} "
            f"avg_per_iter={summary['avg_per_iter']:.4f}"
        )


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8035, show_default=True)
def serve(host, port):
    """Start the HTTP service."""
    try:
        import uvicorn
    except ImportError:
        click.echo("error: uvicorn is not installed (pip install leti-engine[serve])", err=True)
        sys.exit(1)
    from .service.app import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
