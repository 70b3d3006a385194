"""Drives the improvement loop: sample, evaluate, build, fit, measure.

One iteration samples candidates for every training problem (conditioned on
the good reward token once the generator has been fitted at least once),
evaluates them in the sandbox, assembles the feedback-conditioned dataset,
fits the generator when it is trainable, and measures conditioned pass@1.
Everything lands under ``runs/<run_id>/iter_<i>/`` plus an append-only
manifest, which is also the resume point after a mid-run abort.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path
from typing import Callable, Optional

from .errors import InfrastructureError, ValidationError
from .fcft import GOOD, build_record, mix_batches, read_pretrain_corpus, write_records
from .generator import GeneratorSpec, TrigramGenerator, build_generator, sample
from .metrics import error_distribution, pass_at_k
from .model import CandidateSolution, Feedback, Problem, load_problems
from .postprocess import DEFAULT_STOPS, truncate_at_stop
from .sandbox import ExecutionLimits, evaluate_batch
from .trigram import TrigramState


@dataclass(frozen=True)
class RunConfig:
    """Everything one loop run needs; defaults follow the training recipe
    (128 samples at temperature 1.0 for training data, 16 at 0.1 for
    evaluation, 3 fitting epochs)."""

    problems_path: str
    generator: GeneratorSpec
    n_samples: int = 128
    train_temperature: float = 1.0
    eval_temperature: float = 0.1
    eval_samples: int = 16
    epochs: int = 3
    iterations: int = 1
    post_processing: bool = False
    eval_post_processing: Optional[bool] = None
    stops: tuple[str, ...] = DEFAULT_STOPS
    mixing_enabled: bool = False
    pretrain_corpus_path: Optional[str] = None
    batch_size: int = 128
    limits: ExecutionLimits = field(default_factory=ExecutionLimits)
    seed: int = 0
    run_root: str = "runs"
    run_id: Optional[str] = None
    test_problems_path: Optional[str] = None
    backend: str = "raw"
    prompt_show_tests: bool = False
    dedup: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.n_samples < 1:
            raise ValidationError("n_samples must be >= 1")
        if self.eval_samples < 0:
            raise ValidationError("eval_samples must be >= 0")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.mixing_enabled and not self.pretrain_corpus_path:
            raise ValidationError("mixing_enabled requires pretrain_corpus_path")

    def to_dict(self) -> dict:
        payload = {
            "problems_path": self.problems_path,
            "generator": self.generator.to_dict(),
            "n_samples": self.n_samples,
            "train_temperature": self.train_temperature,
            "eval_temperature": self.eval_temperature,
            "eval_samples": self.eval_samples,
            "epochs": self.epochs,
            "iterations": self.iterations,
            "post_processing": self.post_processing,
            "eval_post_processing": self.eval_post_processing,
            "stops": list(self.stops),
            "mixing_enabled": self.mixing_enabled,
            "pretrain_corpus_path": self.pretrain_corpus_path,
            "batch_size": self.batch_size,
            "limits": {
                "wall_clock_timeout": self.limits.wall_clock_timeout,
                "max_stream_capture": self.limits.max_stream_capture,
                "max_concurrent": self.limits.max_concurrent,
                "interpreter_args": list(self.limits.interpreter_args),
            },
            "seed": self.seed,
            "run_root": self.run_root,
            "run_id": self.run_id,
            "test_problems_path": self.test_problems_path,
            "backend": self.backend,
            "prompt_show_tests": self.prompt_show_tests,
            "dedup": self.dedup,
        }
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        payload = dict(payload)
        generator = GeneratorSpec.from_dict(payload.pop("generator"))
        limits_payload = payload.pop("limits", None)
        limits = ExecutionLimits()
        if limits_payload:
            limits = ExecutionLimits(
                wall_clock_timeout=limits_payload.get("wall_clock_timeout", 10.0),
                max_stream_capture=limits_payload.get("max_stream_capture", 65536),
                max_concurrent=limits_payload.get(
                    "max_concurrent", ExecutionLimits().max_concurrent
                ),
                interpreter_args=tuple(
                    limits_payload.get("interpreter_args", ("-I", "-S"))
                ),
            )
        payload["stops"] = tuple(payload.get("stops", DEFAULT_STOPS))
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        payload = {k: v for k, v in payload.items() if k in known}
        return cls(generator=generator, limits=limits, **payload)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        raw = path.read_text(encoding="utf-8")
        if path.suffix == ".toml":
            try:
                import tomllib  # type: ignore[import-not-found]
            except ImportError:
                import tomli as tomllib
            payload = tomllib.loads(raw)
        else:
            payload = json.loads(raw)
        return cls.from_dict(payload)


def derive_seed(base: int, *parts) -> int:
    material = ":".join([str(base), *map(str, parts)]).encode("utf-8")
    return int.from_bytes(sha256(material).digest()[:8], "big")


def build_prompt(problem: Problem, config: RunConfig) -> str:
    prompt = problem.instruction + "\n"
    if config.prompt_show_tests and problem.tests:
        prompt += problem.tests[0].source + "\n"
    return prompt


class CachedEvaluator:
    """Memoizes feedback per (problem, solution text, backend).

    Safe because evaluation is deterministic for identical inputs; saves the
    interpreter spawns that duplicate candidates would otherwise cost.
    """

    def __init__(
        self,
        limits: ExecutionLimits,
        backend: str = "raw",
        shim_path: Optional[str] = None,
        evaluate_fn: Optional[Callable[[Problem, CandidateSolution], Feedback]] = None,
    ):
        self.limits = limits
        self.backend = backend
        self.shim_path = shim_path
        self.evaluate_fn = evaluate_fn
        self._cache: dict[tuple, Feedback] = {}

    def evaluate(self, pairs) -> list[Feedback]:
        pairs = list(pairs)
        missing = []
        missing_keys = set()
        for problem, solution in pairs:
            key = (problem.id, solution.text)
            if key not in self._cache and key not in missing_keys:
                missing_keys.add(key)
                missing.append((problem, solution))
        if missing:
            if self.evaluate_fn is not None:
                fresh = [self.evaluate_fn(p, s) for p, s in missing]
            else:
                fresh = evaluate_batch(
                    missing, self.limits, backend=self.backend, shim_path=self.shim_path
                )
            for (problem, solution), feedback in zip(missing, fresh):
                self._cache[(problem.id, solution.text)] = feedback
        return [self._cache[(p.id, s.text)] for p, s in pairs]


@dataclass
class IterationReport:
    iteration: int
    n_problems: int
    n_samples: int
    train_pass1: float
    train_error_distribution: dict
    eval_pass1: Optional[float]
    eval_split: Optional[str]
    fcft_records: int
    fitted: bool
    external_train: Optional[str]
    generator_checksum: Optional[str]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _dump_json(payload, path: Path) -> None:
    _atomic_write(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


class LoopRunner:
    """Owns one run directory and threads generator state across iterations."""

    def __init__(
        self,
        config: RunConfig,
        state: Optional[TrigramState] = None,
        mock_table: Optional[dict] = None,
        evaluate_fn=None,
    ):
        self.config = config
        self.problems = load_problems(config.problems_path)
        if config.test_problems_path:
            self.eval_problems = load_problems(config.test_problems_path)
            self.eval_split = "test"
        else:
            self.eval_problems = self.problems
            self.eval_split = "train"
        if state is None and config.generator.kind == "trigram":
            state = self._load_state_from_spec()
        self.state = state
        self.generator = build_generator(config.generator, state=state, table=mock_table)
        if isinstance(self.generator, TrigramGenerator):
            self.state = self.generator.state
        self.evaluator = CachedEvaluator(
            config.limits, backend=config.backend, evaluate_fn=evaluate_fn
        )
        run_id = config.run_id or f"run-{config.seed}"
        self.run_dir = Path(config.run_root) / run_id
        self.manifest = {
            "run_id": run_id,
            "config": config.to_dict(),
            "status": "created",
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "updated_at": None,
            "baseline": None,
            "iterations": [],
            "pass1_series": [],
            "ood_eval": None,  # reserved for external evaluators
        }

    def _load_state_from_spec(self) -> Optional[TrigramState]:
        state_id = self.config.generator.state_id
        if state_id and Path(state_id).exists():
            payload = json.loads(Path(state_id).read_text(encoding="utf-8"))
            return TrigramState.from_dict(payload)
        return None

    # -- steps ---------------------------------------------------------------

    def _sample_problem(self, problem: Problem, iteration: int, purpose: str,
                        n: int, temperature: float, condition: Optional[str]):
        prompt = build_prompt(problem, self.config)
        seed = derive_seed(self.config.seed, purpose, iteration, problem.id)
        completions = sample(
            self.generator, prompt, n, temperature=temperature,
            condition=condition, seed=seed,
        )
        post_processing = self.config.post_processing
        if purpose == "eval" and self.config.eval_post_processing is not None:
            post_processing = self.config.eval_post_processing
        solutions = []
        for j, raw in enumerate(completions):
            if post_processing:
                text, _ = truncate_at_stop(raw, self.config.stops)
            else:
                text = raw
            solutions.append(
                CandidateSolution(
                    problem_id=problem.id,
                    sample_index=j,
                    raw_text=raw,
                    text=text,
                    conditioned_on=condition,
                )
            )
        return solutions

    def _conditioned_eval(self, iteration: int) -> Optional[float]:
        """Pass@1 with sampling conditioned on the good reward token."""
        if self.config.eval_samples == 0:
            return None
        per_problem = []
        for problem in self.eval_problems:
            solutions = self._sample_problem(
                problem, iteration, "eval",
                self.config.eval_samples, self.config.eval_temperature, GOOD,
            )
            feedbacks = self.evaluator.evaluate(
                [(problem, s) for s in solutions]
            )
            correct = sum(fb.f_binary for fb in feedbacks)
            per_problem.append(
                pass_at_k(self.config.eval_samples, correct, 1)
            )
        return sum(per_problem) / len(per_problem)

    def _fit(self, records) -> tuple[bool, Optional[str]]:
        if self.config.generator.kind == "remote":
            return False, "pending"
        if not isinstance(self.generator, TrigramGenerator):
            return False, None
        sequences = [record.sequence for record in records]
        if self.config.mixing_enabled:
            pretrain = read_pretrain_corpus(self.config.pretrain_corpus_path)
            for _ in range(self.config.epochs):
                for batch in mix_batches(sequences, pretrain, self.config.batch_size):
                    if batch.items:
                        self.generator.state.fit(batch.items, epochs=1)
        else:
            self.generator.fit(sequences, epochs=self.config.epochs)
        return True, None

    def run_iteration(self, iteration: int) -> IterationReport:
        """One full cycle; conditioning on the reward token starts at 1."""
        if iteration < 0:
            raise ValidationError("iteration index must be >= 0")
        iter_dir = self.run_dir / f"iter_{iteration}"
        iter_dir.mkdir(parents=True, exist_ok=True)
        condition = GOOD if iteration >= 1 else None

        # (a) sample candidates for every training problem
        all_solutions: dict[str, list[CandidateSolution]] = {}
        for problem in self.problems:
            all_solutions[problem.id] = self._sample_problem(
                problem, iteration, "train",
                self.config.n_samples, self.config.train_temperature, condition,
            )
        with (iter_dir / "samples.jsonl").open("w", encoding="utf-8") as handle:
            for problem in self.problems:
                for solution in all_solutions[problem.id]:
                    entry = {
                        "problem_id": solution.problem_id,
                        "sample_index": solution.sample_index,
                        "raw_text": solution.raw_text,
                        "text": solution.text,
                        "conditioned_on": solution.conditioned_on,
                    }
                    handle.write(json.dumps(entry, sort_keys=True) + "\n")

        # (b)+(c) evaluate all candidates
        pairs = [
            (problem, solution)
            for problem in self.problems
            for solution in all_solutions[problem.id]
        ]
        feedbacks = self.evaluator.evaluate(pairs)
        feedback_by_key = {}
        with (iter_dir / "feedback.jsonl").open("w", encoding="utf-8") as handle:
            for (problem, solution), feedback in zip(pairs, feedbacks):
                feedback_by_key[(problem.id, solution.sample_index)] = feedback
                entry = {"problem_id": problem.id, "sample_index": solution.sample_index}
                entry.update(feedback.to_dict())
                handle.write(json.dumps(entry, sort_keys=True) + "\n")

        # (d) build the feedback-conditioned dataset
        records = [
            build_record(problem, solution, feedback, iteration)
            for (problem, solution), feedback in zip(pairs, feedbacks)
        ]
        write_records(records, iter_dir / "fcft.jsonl", dedup=self.config.dedup)

        # (e) fit the generator (trigram) or leave training to an external run
        fitted, external = self._fit(records)
        checksum = None
        if isinstance(self.generator, TrigramGenerator):
            checksum = self.generator.state.checksum()
            _dump_json(self.generator.state.to_dict(), iter_dir / "state_after.json")

        # (f) conditioned evaluation
        eval_pass1 = self._conditioned_eval(iteration)

        # train-sampling statistics
        correct_by_problem = {
            problem.id: sum(
                feedback_by_key[(problem.id, j)].f_binary
                for j in range(self.config.n_samples)
            )
            for problem in self.problems
        }
        train_pass1 = sum(
            pass_at_k(self.config.n_samples, c, 1)
            for c in correct_by_problem.values()
        ) / len(self.problems)

        report = IterationReport(
            iteration=iteration,
            n_problems=len(self.problems),
            n_samples=self.config.n_samples,
            train_pass1=train_pass1,
            train_error_distribution=error_distribution(feedbacks),
            eval_pass1=eval_pass1,
            eval_split=self.eval_split if eval_pass1 is not None else None,
            fcft_records=len(records),
            fitted=fitted,
            external_train=external,
            generator_checksum=checksum,
        )
        _dump_json(self._metrics_payload(report), iter_dir / "metrics.json")
        return report

    def _metrics_payload(self, report: IterationReport) -> dict:
        return {
            "iteration": report.iteration,
            "train": {
                "n_problems": report.n_problems,
                "n_samples": report.n_samples,
                "pass1": report.train_pass1,
                "error_distribution": report.train_error_distribution,
            },
            "eval": {
                "split": report.eval_split,
                "condition": GOOD,
                "temperature": self.config.eval_temperature,
                "n_samples": self.config.eval_samples,
                "pass1": report.eval_pass1,
            },
            "fcft_records": report.fcft_records,
            "fitted": report.fitted,
            "external_train": report.external_train,
            "generator_checksum": report.generator_checksum,
        }

    def _save_manifest(self, status: str) -> None:
        self.manifest["status"] = status
        self.manifest["updated_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        _dump_json(self.manifest, self.run_dir / "manifest.json")

    def run_loop(self) -> dict:
        """Baseline evaluation plus ``config.iterations`` full iterations."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._save_manifest("running")
        baseline = self._conditioned_eval(iteration=-1)
        self.manifest["baseline"] = {"eval_pass1": baseline, "split": self.eval_split}
        if baseline is not None:
            self.manifest["pass1_series"].append([0, baseline])
            _dump_json(
                {"after_fits": 0, "eval_pass1": baseline, "split": self.eval_split},
                self.run_dir / "baseline_metrics.json",
            )
        try:
            for iteration in range(self.config.iterations):
                report = self.run_iteration(iteration)
                self.manifest["iterations"].append(report.to_dict())
                if report.eval_pass1 is not None:
                    self.manifest["pass1_series"].append(
                        [iteration + 1, report.eval_pass1]
                    )
                self._save_manifest("running")
        except InfrastructureError:
            self._save_manifest("aborted")
            raise
        self._save_manifest("complete")
        return self.manifest


def run_loop(
    config: RunConfig,
    state: Optional[TrigramState] = None,
    mock_table: Optional[dict] = None,
    evaluate_fn=None,
) -> dict:
    return LoopRunner(
        config, state=state, mock_table=mock_table, evaluate_fn=evaluate_fn
    ).run_loop()


def resume_loop(run_dir, mock_table=None, evaluate_fn=None) -> dict:
    """Continue an aborted run from its last completed iteration."""
    run_dir = Path(run_dir)
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    config = RunConfig.from_dict(manifest["config"])
    completed = len(manifest["iterations"])
    state = None
    if completed and config.generator.kind == "trigram":
        state_path = run_dir / f"iter_{completed - 1}" / "state_after.json"
        state = TrigramState.from_dict(
            json.loads(state_path.read_text(encoding="utf-8"))
        )
    runner = LoopRunner(config, state=state, mock_table=mock_table, evaluate_fn=evaluate_fn)
    runner.manifest = manifest
    try:
        for iteration in range(completed, config.iterations):
            report = runner.run_iteration(iteration)
            manifest["iterations"].append(report.to_dict())
            if report.eval_pass1 is not None:
                manifest["pass1_series"].append([iteration + 1, report.eval_pass1])
            runner._save_manifest("running")
    except InfrastructureError:
        runner._save_manifest("aborted")
        raise
    runner._save_manifest("complete")
    return manifest
