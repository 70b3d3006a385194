"""Service operations shared by the HTTP handlers and the CLI.

Each function takes plain dict/path inputs (what arrives over the wire) and
returns JSON-serializable results, so the CLI can call them in-process and a
remote client gets identical behaviour over HTTP.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

from ..eae import (
    EventOntology,
    EventPrediction,
    GoldEvent,
    evaluate_event,
    extract_prediction_from_code,
    score_eae,
)
from ..errors import ValidationError
from ..fcft import GOOD, build_record, parse_record, render_feedback, write_records
from ..metrics import error_distribution, improvement_rate, pass_at_k
from ..model import CandidateSolution, Feedback, load_problems
from ..orchestrator import CachedEvaluator, LoopRunner, RunConfig, resume_loop


def _load_config(payload: dict) -> RunConfig:
    return RunConfig.from_dict(payload)


def _read_jsonl(path) -> list[dict]:
    entries = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                entries.append(json.loads(line))
    return entries


def _write_jsonl(entries, path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(json.dumps(entry, sort_keys=True) + "\n")


def sample_candidates(
    config_payload: dict,
    iteration: int = 0,
    out_path: Optional[str] = None,
    limit_problems: Optional[int] = None,
) -> dict:
    """Sample candidates for every problem; conditioning starts at iteration 1."""
    config = _load_config(config_payload)
    problems = load_problems(config.problems_path)
    if limit_problems:
        problems = problems[:limit_problems]
    runner = LoopRunner(config)
    condition = GOOD if iteration >= 1 else None
    entries = []
    for problem in problems:
        solutions = runner._sample_problem(
            problem, iteration, "train",
            config.n_samples, config.train_temperature, condition,
        )
        for solution in solutions:
            entries.append({
                "problem_id": solution.problem_id,
                "sample_index": solution.sample_index,
                "raw_text": solution.raw_text,
                "text": solution.text,
                "conditioned_on": solution.conditioned_on,
            })
    result = {"count": len(entries), "out_path": out_path, "samples": None}
    if out_path:
        _write_jsonl(entries, out_path)
    else:
        result["samples"] = entries
    return result


def _solutions_from_entries(entries) -> list[CandidateSolution]:
    return [
        CandidateSolution(
            problem_id=e["problem_id"],
            sample_index=e["sample_index"],
            raw_text=e.get("raw_text", e["text"]),
            text=e["text"],
            conditioned_on=e.get("conditioned_on"),
        )
        for e in entries
    ]


def evaluate_samples(
    config_payload: dict,
    samples_path: Optional[str] = None,
    samples: Optional[list] = None,
    out_path: Optional[str] = None,
) -> dict:
    config = _load_config(config_payload)
    if samples is None:
        if not samples_path:
            raise ValidationError("provide samples_path or inline samples")
        samples = _read_jsonl(samples_path)
    solutions = _solutions_from_entries(samples)
    problems = {p.id: p for p in load_problems(config.problems_path)}
    missing = [s.problem_id for s in solutions if s.problem_id not in problems]
    if missing:
        raise ValidationError(f"samples reference unknown problems: {missing[:3]}")
    evaluator = CachedEvaluator(config.limits, backend=config.backend)
    pairs = [(problems[s.problem_id], s) for s in solutions]
    feedbacks = evaluator.evaluate(pairs)
    entries = []
    for (problem, solution), feedback in zip(pairs, feedbacks):
        entry = {"problem_id": problem.id, "sample_index": solution.sample_index}
        entry.update(feedback.to_dict())
        entries.append(entry)
    result = {
        "count": len(entries),
        "passed": sum(e["f_binary"] for e in entries),
        "error_distribution": error_distribution(feedbacks),
        "out_path": out_path,
        "feedback": None,
    }
    if out_path:
        _write_jsonl(entries, out_path)
    else:
        result["feedback"] = entries
    return result


def build_fcft(
    config_payload: dict,
    samples_path: str,
    feedback_path: str,
    iteration: int = 0,
    out_path: Optional[str] = None,
) -> dict:
    config = _load_config(config_payload)
    problems = {p.id: p for p in load_problems(config.problems_path)}
    solutions = _solutions_from_entries(_read_jsonl(samples_path))
    feedback_entries = _read_jsonl(feedback_path)
    feedback_by_key = {
        (e["problem_id"], e["sample_index"]): Feedback.from_dict(e)
        for e in feedback_entries
    }
    records = []
    for solution in solutions:
        key = (solution.problem_id, solution.sample_index)
        if key not in feedback_by_key:
            raise ValidationError(f"no feedback for sample {key}")
        records.append(
            build_record(
                problems[solution.problem_id],
                solution,
                feedback_by_key[key],
                iteration,
            )
        )
    good = sum(r.f_binary for r in records)
    if out_path:
        write_records(records, out_path, dedup=config.dedup)
    return {"records": len(records), "good": good, "out_path": out_path}


def run_loop_service(config_payload: dict, resume_run_dir: Optional[str] = None) -> dict:
    if resume_run_dir:
        manifest = resume_loop(resume_run_dir)
    else:
        config = _load_config(config_payload)
        manifest = LoopRunner(config).run_loop()
    run_root = manifest["config"]["run_root"]
    return {
        "run_id": manifest["run_id"],
        "run_dir": str(Path(run_root) / manifest["run_id"]),
        "status": manifest["status"],
        "pass1_series": manifest["pass1_series"],
        "iterations": len(manifest["iterations"]),
    }


def report(run_dir: str) -> dict:
    """Aggregate per-iteration metrics into machine and tabular reports."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ValidationError(f"no manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    rows = []
    for entry in manifest["iterations"]:
        iter_metrics = json.loads(
            (run_dir / f"iter_{entry['iteration']}" / "metrics.json").read_text(
                encoding="utf-8"
            )
        )
        rows.append(iter_metrics)
    report_dir = run_dir / "report"
    report_dir.mkdir(exist_ok=True)
    json_path = report_dir / "metrics.json"
    json_path.write_text(
        json.dumps(
            {"pass1_series": manifest["pass1_series"], "iterations": rows},
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    csv_path = report_dir / "metrics.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["iteration", "train_pass1", "eval_pass1", "fcft_records", "pass", "fail"]
        )
        for row in rows:
            dist = row["train"]["error_distribution"]
            passed = dist.get("Pass", 0)
            writer.writerow([
                row["iteration"],
                row["train"]["pass1"],
                row["eval"]["pass1"],
                row["fcft_records"],
                passed,
                sum(dist.values()) - passed,
            ])
    summary = None
    if manifest["pass1_series"]:
        summary = improvement_rate(manifest["pass1_series"]).to_dict()
    return {
        "json_path": str(json_path),
        "csv_path": str(csv_path),
        "pass1_series": manifest["pass1_series"],
        "improvement": summary,
    }


def compute_pass_at_k(n: int, c: int, k: int) -> dict:
    return {"value": pass_at_k(n, c, k)}


def compute_improvement(series) -> dict:
    return improvement_rate(series).to_dict()


def render_feedback_op(f_binary: int, f_text: Optional[str]) -> dict:
    return {"text": render_feedback(f_binary, f_text)}


def parse_sequence_op(sequence: str) -> dict:
    f_binary, f_text, instruction, solution_text = parse_record(sequence)
    return {
        "f_binary": f_binary,
        "f_text": f_text,
        "instruction": instruction,
        "solution_text": solution_text,
    }


def _ontology_from_model(payload: dict) -> EventOntology:
    return EventOntology(
        event_type=payload["event_type"],
        roles=tuple(
            (role["name"], tuple(role["entity_types"])) for role in payload["roles"]
        ),
    )


def eae_evaluate_op(
    ontology: dict, gold: dict, prediction: Optional[dict] = None,
    code: Optional[str] = None,
) -> dict:
    if prediction is None and code is None:
        raise ValidationError("provide a structured prediction or raw code")
    if prediction is not None:
        pred = EventPrediction.from_dict(prediction)
    else:
        pred = extract_prediction_from_code(code or "")
    feedback = evaluate_event(
        pred, _ontology_from_model(ontology), GoldEvent.from_dict(gold)
    )
    return {
        "f_binary": feedback.f_binary,
        "f_text": feedback.f_text,
        "error_class": feedback.error_class.to_json(),
    }


def eae_score_op(predictions: list, golds: list) -> dict:
    return score_eae(
        [EventPrediction.from_dict(p) for p in predictions],
        [GoldEvent.from_dict(g) for g in golds],
    )
