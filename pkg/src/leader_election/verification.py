"""Batch checks over ranges of protocols and unbalanced-flip plans.

Each check returns a list of :class:`Finding`; an empty list of failures means
every claim held exactly.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .analysis import all_honest_probabilities, structural_counts, verify_honest_bound
from .flip_core import ConstructionError, build_unbalanced_plan, evaluate_plan_exact
from .protocols import ProtocolVariant, build
from .rational import ceil_log2, format_rational


@dataclass
class Finding:
    check: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"check": self.check, "passed": self.passed, **self.detail}


def check_protocols(variant, ns: Iterable[int], epsilon, *, eps_prime=None) -> list[Finding]:
    """Fairness, honest bound and structure for each ``n`` (one finding per check kind).

    ``eps_prime`` replaces the variant's per-flip budget, to confirm that a
    broken budget is caught.
    """
    variant = ProtocolVariant(variant)
    eps = Fraction(epsilon)
    failures: dict[str, list] = {"fairness": [], "honest_bound": [], "structure": []}
    tested = 0
    for n in ns:
        tree = build(variant, n, eps, eps_prime=eps_prime)
        tested += 1
        probs = all_honest_probabilities(tree)
        bad = [p for p, v in probs.items() if v != Fraction(1, n)]
        if bad:
            failures["fairness"].append({"n": n, "players": bad[:5]})

        bound = verify_honest_bound(tree, eps)
        if not bound.passed:
            failures["honest_bound"].append(
                {"n": n, "player": bound.player, "margin": format_rational(bound.margin)}
            )

        counts = structural_counts(tree)
        expected = _expected_structure(variant, n)
        got = {k: getattr(counts, k) for k in expected}
        if got != expected:
            failures["structure"].append({"n": n, "expected": expected, "got": got})

    return [
        Finding(f"{variant.value}:{name}", not bad, {"instances": tested, "witnesses": bad[:10]})
        for name, bad in failures.items()
    ]


def _expected_structure(variant: ProtocolVariant, n: int) -> dict:
    if variant is ProtocolVariant.LINEAR:
        return {"match_count": n - 1, "depth": n - 1, "unbalanced_count": n - 2}
    # three and seven are the recursive trees for their n
    return {
        "match_count": n - 1,
        "depth": ceil_log2(n) if n > 1 else 0,
        "unbalanced_count": bin(n).count("1") - 1,
    }


def sample_probabilities(count: int, seed: int, max_denominator: int = 10**6) -> list[Fraction]:
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        den = rng.randint(2, max_denominator)
        out.append(Fraction(rng.randint(1, den - 1), den))
    return out


def check_unbalanced_plans(
    qs: Sequence[Fraction], k_max: int, epsilons: Sequence[Fraction]
) -> list[Finding]:
    """Truncation error and composed cheating advantage of every ``(q, k, eps)`` plan.

    Plans whose truncation is zero must be refused at construction; they
    count as rejected, not as failures.
    """
    approx_bad, honest_bad, bias_bad = [], [], []
    built = rejected = 0
    worst_ratio = Fraction(0)
    for q in qs:
        for k in range(1, k_max + 1):
            for eps in epsilons:
                try:
                    plan = build_unbalanced_plan(q, k, eps)
                except ConstructionError:
                    rejected += 1
                    if Fraction((q.numerator << k) // q.denominator) != 0:
                        approx_bad.append({"q": format_rational(q), "k": k, "reason": "wrongly rejected"})
                    continue
                built += 1
                x = plan.achieved_x
                if abs(x - q) > Fraction(1, 2**k):
                    approx_bad.append({"q": format_rational(q), "k": k, "x": format_rational(x)})
                if evaluate_plan_exact(plan) != x:
                    honest_bad.append({"q": format_rational(q), "k": k})
                gain0 = evaluate_plan_exact(plan, cheater=0) - x
                gain1 = evaluate_plan_exact(plan, cheater=1) - (1 - x)
                gain = max(gain0, gain1)
                if eps > 0:
                    worst_ratio = max(worst_ratio, gain / eps)
                if gain > 2 * eps:
                    bias_bad.append({
                        "q": format_rational(q), "k": k, "epsilon": format_rational(eps),
                        "gain": format_rational(gain),
                    })
    summary = {"plans": built, "rejected_degenerate": rejected}
    return [
        Finding("plan:truncation_error", not approx_bad, {**summary, "witnesses": approx_bad[:10]}),
        Finding("plan:honest_value", not honest_bad, {**summary, "witnesses": honest_bad[:10]}),
        Finding("plan:composed_bias", not bias_bad, {
            **summary, "worst_gain_over_epsilon": format_rational(worst_ratio),
            "witnesses": bias_bad[:10],
        }),
    ]
