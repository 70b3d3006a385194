import pytest

from leti_engine import toybench
from leti_engine.model import CandidateSolution, load_problems
from leti_engine.orchestrator import RunConfig
from leti_engine.sandbox import ExecutionLimits, evaluate_solution
from leti_engine.trigram import tokenize

FAST = ExecutionLimits(wall_clock_timeout=5)


def test_problem_count_and_shape():
    problems = toybench.build_problems()
    assert len(problems) == 64
    assert len({p.id for p in problems}) == 64
    for problem in problems:
        # single-token instructions keep the reward token inside the
        # trigram's context window at sampling time
        assert len(tokenize(problem.instruction)) == 1
        assert len(problem.tests) == 1
        assert problem.setup_code


def test_setup_code_compiles_and_helpers_work():
    problems = toybench.build_problems()
    namespace = {}
    exec(problems[0].setup_code, namespace)
    namespace["f07"]()
    assert namespace["OUT"] == 7


@pytest.mark.parametrize("index", [0, 7, 40])
def test_reference_solutions_pass_in_sandbox(index):
    problems = toybench.build_problems()
    problem = problems[index]
    spec = toybench._spec(index)
    solution = CandidateSolution(
        problem_id=problem.id,
        sample_index=0,
        raw_text=f"{spec['fname']} ( )",
        text=f"{spec['fname']} ( )",
    )
    feedback = evaluate_solution(problem, solution, FAST)
    assert feedback.f_binary == 1


def test_wrong_helper_fails_assertion():
    problems = toybench.build_problems()
    solution = CandidateSolution(
        problem_id=problems[0].id, sample_index=0, raw_text="f01 ( )", text="f01 ( )"
    )
    feedback = evaluate_solution(problems[0], solution, FAST)
    assert feedback.f_binary == 0
    assert feedback.error_class.label == "AssertionError"


def test_primer_mixes_strong_and_weak():
    docs = toybench.primer_docs()
    headful = [d for d, _ in docs if not d.startswith("snippet ")]
    headless = [d for d, _ in docs if d.startswith("snippet ")]
    assert headful and headless


def test_seed_state_knows_solutions_but_not_reward_contexts():
    state = toybench.build_seed_state()
    assert "<|sol|>" in state.vocabulary
    assert "<|good|>" not in state.vocabulary


def test_prepare_writes_artifacts(tmp_path):
    config = toybench.prepare(tmp_path)
    assert isinstance(config, RunConfig)
    problems = load_problems(config.problems_path)
    assert len(problems) == 64
    assert config.generator.kind == "trigram"
    assert (tmp_path / "seed_state.json").exists()
    assert (tmp_path / "pretrain.txt").exists()
    assert config.eval_temperature == 0.0
