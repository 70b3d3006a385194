"""Built-in desk-scale benchmark: 64 synthetic constant/arithmetic problems.

Each problem's instruction is a single identifier (e.g. ``const07``) naming a
task, the shared setup code defines one helper per task that stores the
expected value in ``OUT``, and the solution is a call to the right helper.
Instructions are single tokens on purpose: the trigram generator's context
window is two tokens, so the reward token prepended at sampling time can only
influence generation when it sits immediately before the final prompt token.

The primer corpus plays the role of the pre-trained base model. "Strong"
problems get primer documents that start with the task name, so even the
unfitted generator can complete them; "weak" problems get the same knowledge
behind a filler prefix, leaving their prompt context cold until the loop
discovers solutions for them. That split is what makes the conditioned
pass@1 curve climb over several iterations rather than jump once.
"""

from __future__ import annotations

import json
from pathlib import Path

from .generator import GeneratorSpec
from .model import Problem, TestCase, save_problems
from .orchestrator import RunConfig
from .sandbox import ExecutionLimits
from .trigram import TrigramState

N_PROBLEMS = 64
SMOOTHING_ALPHA = 0.02
MAX_NEW_TOKENS = 6

# Problems whose primer leaves the prompt context cold (index mod 16).
WEAK_SLOTS = frozenset({10, 11, 12, 13, 14, 15})


def _spec(index: int) -> dict:
    if index < 32:
        value = index
        return {
            "id": f"toy/const{index:02d}",
            "instruction": f"const{index:02d}",
            "fname": f"f{index:02d}",
            "body": f"    OUT = {value}",
            "expected": value,
        }
    k = index - 32
    a = (k * 3) % 17 + 2
    b = (k * 5) % 19 + 3
    return {
        "id": f"toy/add{k:02d}",
        "instruction": f"add{k:02d}",
        "fname": f"g{k:02d}",
        "body": f"    OUT = {a} + {b}",
        "expected": a + b,
    }


def is_weak(index: int) -> bool:
    return index % 16 in WEAK_SLOTS


def shared_setup() -> str:
    lines = ["OUT = None"]
    for index in range(N_PROBLEMS):
        spec = _spec(index)
        lines.append(f"def {spec['fname']}():")
        lines.append("    global OUT")
        lines.append(spec["body"])
    return "\n".join(lines)


def build_problems() -> list[Problem]:
    setup = shared_setup()
    problems = []
    for index in range(N_PROBLEMS):
        spec = _spec(index)
        problems.append(
            Problem(
                id=spec["id"],
                instruction=spec["instruction"],
                tests=(TestCase(0, f"assert OUT == {spec['expected']}"),),
                setup_code=setup,
            )
        )
    return problems


def primer_docs() -> list[tuple[str, int]]:
    """Weighted documents standing in for the base model's training data."""
    docs: list[tuple[str, int]] = []
    for index in range(N_PROBLEMS):
        spec = _spec(index)
        task, fname = spec["instruction"], spec["fname"]
        wrong = _spec((index + 1) % N_PROBLEMS)["fname"]
        undefined = f"q{fname}"
        good = f"{task} <|sol|> {fname} ( )"
        if is_weak(index):
            # Heavy weights keep the solution knowledge dominant at the
            # (task, separator) context even after junk candidates from the
            # loop's own sampling pile counts onto it.
            docs.append((f"snippet {good}", 2000))
            docs.append((f"snippet {task} <|sol|> {wrong} ( )", 200))
        else:
            docs.append((good, 40))
            docs.append((f"{task} <|sol|> {wrong} ( )", 6))
            docs.append((f"{task} <|sol|> {undefined} ( )", 2))
            docs.append((f"{task} <|sol|> {fname} ( (", 2))
    return docs


def build_seed_state(alpha: float = SMOOTHING_ALPHA) -> TrigramState:
    state = TrigramState(smoothing_alpha=alpha)
    for doc, weight in primer_docs():
        state.fit([doc], epochs=weight)
    return state


def write_pretrain_corpus(path: Path) -> None:
    docs = [doc for doc, _ in primer_docs()]
    path.write_text("\n\n".join(docs) + "\n", encoding="utf-8")


def prepare(
    workdir,
    n_samples: int = 32,
    iterations: int = 3,
    seed: int = 3,
    eval_samples: int = 4,
    mixing_enabled: bool = False,
) -> RunConfig:
    """Materialize the benchmark under ``workdir`` and return its config.

    Evaluation runs at temperature 0 (greedy) so the conditioned pass@1
    series is deterministic given the run seed.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    problems_path = workdir / "problems.jsonl"
    save_problems(build_problems(), problems_path)
    state_path = workdir / "seed_state.json"
    state_path.write_text(
        json.dumps(build_seed_state().to_dict(), sort_keys=True), encoding="utf-8"
    )
    pretrain_path = workdir / "pretrain.txt"
    write_pretrain_corpus(pretrain_path)
    return RunConfig(
        problems_path=str(problems_path),
        generator=GeneratorSpec(
            kind="trigram",
            state_id=str(state_path),
            max_new_tokens=MAX_NEW_TOKENS,
            smoothing_alpha=SMOOTHING_ALPHA,
        ),
        n_samples=n_samples,
        train_temperature=1.0,
        eval_temperature=0.0,
        eval_samples=eval_samples,
        epochs=3,
        iterations=iterations,
        post_processing=False,
        mixing_enabled=mixing_enabled,
        pretrain_corpus_path=str(pretrain_path) if mixing_enabled else None,
        limits=ExecutionLimits(wall_clock_timeout=5),
        seed=seed,
        run_root=str(workdir / "runs"),
        run_id=f"toy-{seed}",
    )
