"""Evaluation metrics: pass@k, error distributions, improvement rates."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import ValidationError
from .model import CANONICAL_ERRORS


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k estimate from n samples with c correct.

    Computes 1 - C(n-c, k)/C(n, k) via the numerically stable product form
    1 - prod_{i=n-c+1..n} (1 - k/i); exactly 1.0 when fewer than k samples
    are incorrect.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if not 0 <= c <= n:
        raise ValidationError(f"c must be in [0, n]; got c={c}, n={n}")
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in [1, n]; got k={k}, n={n}")
    if n - c < k:
        return 1.0
    product = 1.0
    for i in range(n - c + 1, n + 1):
        product *= 1.0 - k / i
    return 1.0 - product


def mean_pass_at_k(correct_counts, n: int, k: int) -> float:
    counts = list(correct_counts)
    if not counts:
        return 0.0
    return sum(pass_at_k(n, c, k) for c in counts) / len(counts)


def error_distribution(feedbacks) -> dict[str, int]:
    """Count feedbacks per error class; counts partition the input.

    Keys are canonical class labels, ``Timeout``, ``Other(name)`` per
    distinct name, and ``Pass``.
    """
    counts: Counter = Counter()
    for feedback in feedbacks:
        counts[feedback.error_class.label] += 1
    return dict(counts)


def render_distribution_table(distribution: dict[str, int]) -> list[tuple[str, int]]:
    """Arrange counts in report order: canonical classes, Other, Pass."""
    rows = [(f"# of {name}", distribution.get(name, 0)) for name in CANONICAL_ERRORS]
    other = sum(
        count
        for label, count in distribution.items()
        if label.startswith("Other(") or label == "Timeout"
    )
    rows.append(("# of Other Errors", other))
    rows.append(("# of Pass Test", distribution.get("Pass", 0)))
    return rows


@dataclass(frozen=True)
class ImprovementSummary:
    initial: float
    max: float
    iters_to_max: int
    avg_per_iter: float

    def to_dict(self) -> dict:
        return {
            "initial": self.initial,
            "max": self.max,
            "iters_to_max": self.iters_to_max,
            "avg_per_iter": self.avg_per_iter,
        }


def improvement_rate(series) -> ImprovementSummary:
    """Summarize a (iteration, pass@1) series.

    ``avg_per_iter`` is (max - initial) / iterations-to-max, where the
    divisor is the earliest iteration attaining the maximum. A series that
    never improves past its initial value reports zeros.
    """
    points = sorted(series, key=lambda item: item[0])
    if not points:
        raise ValidationError("series must be non-empty")
    by_iteration = dict(points)
    if 0 not in by_iteration:
        raise ValidationError("series must include iteration 0")
    initial = by_iteration[0]
    best = max(value for _, value in points)
    if best <= initial:
        return ImprovementSummary(initial, initial, 0, 0.0)
    iters_to_max = min(it for it, value in points if value == best)
    return ImprovementSummary(initial, best, iters_to_max, (best - initial) / iters_to_max)


def round_half_up(value: float, digits: int = 2) -> float:
    """Render-time rounding; internal values stay full precision."""
    from decimal import ROUND_HALF_UP, Decimal

    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))
