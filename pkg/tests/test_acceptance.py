"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

import random
import string
import time
from itertools import combinations
from pathlib import Path

import pytest

from leti_engine import toybench
from leti_engine.eae import (
    EventOntology,
    EventPrediction,
    GoldEvent,
    PredictedArgument,
    evaluate_event,
    score_eae,
)
from leti_engine.fcft import (
    RESERVED_TOKENS,
    SOLUTION_SEP,
    mix_batches,
    parse_record,
    render_feedback,
)
from leti_engine.generator import GeneratorSpec
from leti_engine.metrics import improvement_rate, pass_at_k, round_half_up
from leti_engine.model import (
    CandidateSolution,
    ErrorClass,
    Problem,
    TestCase,
    save_problems,
)
from leti_engine.orchestrator import LoopRunner, RunConfig
from leti_engine.sandbox import (
    TRUNCATION_MARKER,
    ExecutionLimits,
    evaluate_solution,
    execute_script,
)
from leti_engine.taxonomy import classify_text
from leti_engine.trigram import BOS, TrigramState

FIXTURES = Path(__file__).parent / "fixtures" / "traces"


def criterion(number, name):
    class _Reporter:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            verdict = "PASS" if exc_type is None else "FAIL"
            print(f"[ACCEPTANCE] {number:02d} {name}: {verdict}")
            return False

    return _Reporter()


def brute_force_pass_at_k(n, c, k):
    samples = [True] * c + [False] * (n - c)
    subsets = list(combinations(range(n), k))
    return sum(1 for s in subsets if any(samples[i] for i in s)) / len(subsets)


def test_criterion_01_pass_at_k_oracle():
    with criterion(1, "pass@k oracle equivalence"):
        start = time.monotonic()
        for n in range(1, 13):
            for c in range(0, n + 1):
                for k in range(1, n + 1):
                    assert abs(pass_at_k(n, c, k) - brute_force_pass_at_k(n, c, k)) < 1e-12
        assert abs(pass_at_k(5, 2, 2) - 0.7) < 1e-12
        assert pass_at_k(200, 1, 100) == 0.5
        assert time.monotonic() - start < 5.0


def test_criterion_02_improvement_rate_table():
    with criterion(2, "improvement-rate arithmetic"):
        row_2b = improvement_rate([(0, 4.50), (6, 28.00)])
        assert row_2b.iters_to_max == 6
        assert abs(row_2b.avg_per_iter - 3.92) <= 0.005
        assert round_half_up(row_2b.avg_per_iter) == 3.92

        row_350m = improvement_rate([(0, 7.40), (14, 13.96)])
        assert row_350m.iters_to_max == 14
        assert abs(row_350m.avg_per_iter - 0.47) <= 0.005
        assert round_half_up(row_350m.avg_per_iter) == 0.47


def test_criterion_03_error_classification_corpus():
    with criterion(3, "error classification fixture corpus"):
        cases = sorted(p for p in FIXTURES.iterdir() if p.is_dir())
        assert len(cases) >= 20
        labels = set()
        chained = 0
        for case in cases:
            trace = (case / "trace.txt").read_text(encoding="utf-8")
            expected = (case / "expected.txt").read_text(encoding="utf-8").strip()
            got = classify_text(trace).label
            assert got == expected, f"{case.name}: {got} != {expected}"
            labels.add(expected.split("(")[0])
            if "During handling of the above exception" in trace or "direct cause" in trace:
                chained += 1
        assert {"AssertionError", "SyntaxError", "IndentationError", "NameError", "Other"} <= labels
        assert chained >= 2


def test_criterion_04_fcft_round_trip():
    with criterion(4, "sequence format round-trip"):
        # exact template literals
        assert render_feedback(1, None) == "<|good|>"
        assert render_feedback(0, "Traceback...\nZeroDivisionError: division by zero") == (
            "<|bad|><|text_feedback|>Traceback...\n"
            "ZeroDivisionError: division by zero<|/text_feedback|>"
        )
        assert render_feedback(0, None) == "<|bad|>"

        rng = random.Random(20240117)
        alphabet = string.ascii_letters + string.digits + " \n\t.:,()[]'\"=+-*/"

        def clean(min_len=0, max_len=80):
            while True:
                text = "".join(
                    rng.choice(alphabet) for _ in range(rng.randint(min_len, max_len))
                )
                if all(tok not in text for tok in RESERVED_TOKENS):
                    return text

        for _ in range(1000):
            f_binary = rng.randint(0, 1)
            f_text = clean(1) if rng.random() < 0.6 else None
            instruction = clean(1)
            solution = clean(0)
            sequence = (
                render_feedback(f_binary, f_text)
                + instruction
                + SOLUTION_SEP
                + solution
            )
            parsed = parse_record(sequence)
            expected_text = f_text if (f_text is not None and f_text.strip()) else None
            assert parsed == (f_binary, expected_text, instruction, solution)


def test_criterion_05_sandbox_contract():
    with criterion(5, "sandbox contract"):
        problem = Problem(
            id="s1", instruction="Return 3.", tests=(TestCase(0, "assert f() == 3"),)
        )
        good = CandidateSolution("s1", 0, "def f():\n return 3", "def f():\n return 3")
        feedback = evaluate_solution(problem, good, ExecutionLimits(wall_clock_timeout=5))
        assert (feedback.f_binary, feedback.f_text, feedback.error_class.label) == (
            1, None, "Pass",
        )

        start = time.monotonic()
        spin = CandidateSolution("s1", 1, "while True: pass", "while True: pass")
        feedback = evaluate_solution(problem, spin, ExecutionLimits(wall_clock_timeout=1))
        assert time.monotonic() - start <= 2.0
        assert feedback.error_class.label == "Timeout"

        outcome = execute_script(
            "import sys\nsys.stdout.write('y' * (1024 * 1024))",
            ExecutionLimits(max_stream_capture=65536),
        )
        assert len(outcome.stdout) == 65536 + len(TRUNCATION_MARKER)
        assert outcome.stdout.endswith(TRUNCATION_MARKER)


def test_criterion_07_conditioning_separation():
    with criterion(7, "conditioning separation"):
        state = TrigramState(smoothing_alpha=1.0)
        state.fit(["<|good|> A"] * 9 + ["<|good|> B"], epochs=1)
        good_ctx = (BOS, "<|good|>")
        assert abs(state.probability(good_ctx, "A") - 10 / 14) < 1e-12

        mixed = TrigramState(smoothing_alpha=1.0)
        mixed.fit(
            ["<|good|> A"] * 9 + ["<|good|> B"] + ["<|bad|> B"] * 9 + ["<|bad|> A"],
            epochs=1,
        )
        assert mixed.probability(good_ctx, "A") > mixed.probability(good_ctx, "B")


EAE_ONTOLOGY = EventOntology(
    event_type="Movement.Transport",
    roles=(
        ("agent", ("PER", "ORG")),
        ("artifact", ("PER", "VEH")),
        ("destination", ("GPE", "LOC")),
    ),
)
EAE_GOLD = GoldEvent(arguments=(("artifact", "troops"), ("destination", "Mosul")))


def _eae_pred(*args):
    return EventPrediction(
        arguments=tuple(PredictedArgument(r, s, t) for r, s, t in args)
    )


def test_criterion_08_eae_evaluator():
    with criterion(8, "EAE evaluator checks and scores"):
        trips = [
            _eae_pred(("pilot", "troops", "PER")),                       # unknown role
            _eae_pred(("artifact", "troops", "GPE")),                    # bad entity type
            _eae_pred(("artifact", "troops", "PER"),
                      ("destination", "Mosul", "GPE"),
                      ("agent", "nobody", "PER")),                       # spurious
            _eae_pred(("artifact", "troops", "PER"),
                      ("agent", "Mosul", "PER")),                        # wrong role
            _eae_pred(("artifact", "troops", "PER")),                    # incomplete
        ]
        for number, prediction in enumerate(trips, start=1):
            feedback = evaluate_event(prediction, EAE_ONTOLOGY, EAE_GOLD)
            assert feedback.f_binary == 0
            assert f"Check {number}" in feedback.f_text, (number, feedback.f_text)

        scores = score_eae(
            [_eae_pred(("r1", "s1", None), ("r3", "s2", None))],
            [GoldEvent(arguments=(("r1", "s1"), ("r2", "s2")))],
        )
        assert scores["arg_i"] == {"precision": 1.0, "recall": 1.0, "f1": 1.0}
        assert scores["arg_c"] == {"precision": 0.5, "recall": 0.5, "f1": 0.5}

        rng = random.Random(88)
        roles = [name for name, _ in EAE_ONTOLOGY.roles]
        spans = ["troops", "Mosul", "convoy", "Basra"]
        passes = 0
        for _ in range(200):
            style = rng.random()
            if style < 0.4:  # exact gold with valid types
                args = [
                    (role, span, EAE_ONTOLOGY.allowed_types(role)[0])
                    for role, span in EAE_GOLD.arguments
                ]
            elif style < 0.7:  # perturbed gold
                args = [
                    (rng.choice(roles), span, EAE_ONTOLOGY.allowed_types(roles[0])[0])
                    for _, span in EAE_GOLD.arguments
                ]
                if rng.random() < 0.5:
                    args.pop()
            else:  # arbitrary
                args = [
                    (rng.choice(roles + ["bogus"]), rng.choice(spans), rng.choice(["PER", "XXX"]))
                    for _ in range(rng.randint(0, 3))
                ]
            prediction = _eae_pred(*args)
            feedback = evaluate_event(prediction, EAE_ONTOLOGY, EAE_GOLD)
            if feedback.f_binary == 1:
                passes += 1
                scores = score_eae([prediction], [EAE_GOLD])
                assert scores["arg_i"]["precision"] == 1.0
        assert passes >= 40  # the property must not hold vacuously


def test_criterion_09_mixing_schedule():
    with criterion(9, "mixing schedule"):
        rng = random.Random(5)
        for _ in range(50):
            n_fcft = rng.randint(0, 40)
            n_pre = rng.randint(0, 10)
            batch_size = rng.randint(1, 7)
            fcft = [f"f{i}" for i in range(n_fcft)]
            pretrain = [f"p{i}" for i in range(n_pre)]
            batches = list(mix_batches(fcft, pretrain, batch_size))
            if not fcft:
                assert batches == []
                continue
            kinds = [b.kind for b in batches]
            assert kinds[::2] == ["fcft"] * (len(batches) // 2 + len(batches) % 2)
            assert kinds[1::2] == ["pretrain"] * (len(batches) // 2)
            assert kinds[0] == "fcft"
            emitted = [x for b in batches if b.kind == "fcft" for x in b.items]
            assert emitted == fcft  # each exactly once, input order
            if pretrain:
                for batch in batches:
                    if batch.kind == "pretrain":
                        assert set(batch.items) <= set(pretrain)
                        assert len(batch.items) == batch_size


def _tiny_loop_config(root, seed=17):
    problems = [
        Problem(
            id=f"d{i}",
            instruction=f"value{i}",
            tests=(TestCase(0, f"assert {i} == {i}"),),
        )
        for i in range(2)
    ]
    problems_path = root / "problems.jsonl"
    save_problems(problems, problems_path)
    return RunConfig(
        problems_path=str(problems_path),
        generator=GeneratorSpec("trigram", max_new_tokens=4),
        n_samples=4,
        eval_samples=2,
        eval_temperature=0.5,
        iterations=2,
        seed=seed,
        run_root=str(root / "runs"),
        limits=ExecutionLimits(wall_clock_timeout=5),
    )


def test_criterion_10_loop_determinism(tmp_path):
    with criterion(10, "loop determinism"):
        blobs = []
        for name in ("first", "second"):
            root = tmp_path / name
            root.mkdir()
            config = _tiny_loop_config(root)
            LoopRunner(config).run_loop()
            run_dir = root / "runs" / "run-17"
            payload = []
            for i in range(config.iterations):
                payload.append((run_dir / f"iter_{i}" / "fcft.jsonl").read_bytes())
                payload.append((run_dir / f"iter_{i}" / "metrics.json").read_bytes())
            blobs.append(payload)
        assert blobs[0] == blobs[1]


def test_criterion_06_desk_scale_trend(tmp_path):
    with criterion(6, "desk-scale improvement trend"):
        start = time.monotonic()
        config = toybench.prepare(tmp_path / "toy", n_samples=32, iterations=3)
        runner = LoopRunner(config)
        manifest = runner.run_loop()
        elapsed = time.monotonic() - start

        series = [value for _, value in manifest["pass1_series"]]
        assert len(series) == 4  # baseline + one point per iteration
        assert series[3] > series[0], series
        assert all(series[i] <= series[i + 1] for i in range(3)), series
        plateaus = sum(1 for i in range(3) if series[i] == series[i + 1])
        assert plateaus <= 1, series
        assert elapsed < 60.0, f"toy benchmark took {elapsed:.1f}s"


SHIM_PATH = Path(__file__).parents[1] / "shim" / "runner_shim.py"


def test_criterion_11_shim_parity():
    import json

    from leti_engine.model import CANONICAL_ERRORS
    from leti_engine.sandbox import execute_script, normalize_paths
    from leti_engine.taxonomy import classify_trace

    with criterion(11, "shim parity (secondary)"):
        assert SHIM_PATH.exists()
        limits = ExecutionLimits(wall_clock_timeout=10)
        cases = sorted(p for p in FIXTURES.iterdir() if p.is_dir())
        assert len(cases) >= 20
        for case in cases:
            script = (case / "script.py").read_text(encoding="utf-8")

            raw = execute_script(script, limits, backend="raw")
            raw_class = classify_trace(raw)

            shim = execute_script(
                script, limits, backend="shim", shim_path=str(SHIM_PATH)
            )
            assert shim.exit_code == 0, (case.name, shim.stderr)
            lines = shim.stdout.strip().splitlines()
            assert len(lines) == 1, case.name  # single-line JSON protocol
            report = json.loads(lines[0])
            assert set(report) == {"status", "exc_type", "traceback", "stdout"}
            is_pass = report["status"] == "pass"
            assert (report["exc_type"] is None) == is_pass
            assert (report["traceback"] is None) == is_pass

            exc_type = report["exc_type"]
            if exc_type in CANONICAL_ERRORS:
                shim_class = ErrorClass(exc_type)
            else:
                shim_class = ErrorClass.other(exc_type)
            assert shim_class == raw_class, (case.name, shim_class, raw_class)

            shim_trace = normalize_paths(report["traceback"], shim.workdir or "")
            raw_trace = normalize_paths(raw.stderr, raw.workdir or "")
            assert shim_trace == raw_trace, case.name
