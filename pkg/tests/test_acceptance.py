"""Acceptance criteria, each checked at its stated tolerance.

Every test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import random
import time
from fractions import Fraction as F

import pytest

from leader_election.analysis import (
    all_honest_probabilities,
    analyze,
    honest_worst_case,
    structural_counts,
    verify_honest_bound,
)
from leader_election.flip_core import ConstructionError, build_unbalanced_plan, evaluate_plan_exact
from leader_election.protocols import build_linear, build_recursive, build_seven, build_three
from leader_election.simulator import StrategyProfile, compare_to_exact, simulate

half = F(1, 2)


def sampled_rationals(count, seed, lo=F(0), hi=F(1, 50), max_den=10**6):
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        den = rng.randint(2, max_den)
        x = F(rng.randint(1, den - 1), den)
        if lo < x < hi:
            out.append(x)
    return out


@pytest.mark.criterion("AC1 exact fairness")
def test_ac1_exact_fairness():
    t0 = time.perf_counter()
    trees = [build_three(F(1, 10)), build_seven(F(1, 10))]
    trees += [build_recursive(n, F(1, 10)) for n in range(2, 1025)]
    trees += [build_linear(n, F(1, 10)) for n in range(2, 257)]
    for tree in trees:
        probs = all_honest_probabilities(tree)
        n = len(probs)
        assert all(p == F(1, n) for p in probs.values()), n
    assert time.perf_counter() - t0 < 10


@pytest.mark.criterion("AC2 three-player polynomial")
def test_ac2_three_player_polynomial():
    for e in sampled_rationals(20, seed=2, hi=F(1, 4)):
        tree = build_three(2 * e)
        assert tree.spec.epsilon == e
        assert honest_worst_case(tree, 1) == F(1, 3) - F(7, 6) * e + e * e


@pytest.mark.criterion("AC3 seven-player products")
def test_ac3_seven_player_products():
    grid = [F(i, 1000) for i in range(0, 50, 7)] + sampled_rationals(10, seed=3, hi=F(1, 21))
    for e in grid:
        tree = build_seven(F(1, 10), eps_prime=e)
        a1 = honest_worst_case(tree, 1)
        assert a1 == (half - e) ** 2 * (F(4, 7) - e)
        assert a1 == F(1, 7) - F(23, 28) * e + F(11, 7) * e**2 - e**3
        assert honest_worst_case(tree, 5) == (half - e) * (F(2, 3) - e) * (F(3, 7) - e)
        assert honest_worst_case(tree, 7) == (F(1, 3) - e) * (F(3, 7) - e)
    for eps in (F(1, 10), F(1, 100)):
        tree = build_seven(eps)
        assert tree.spec.epsilon == eps / 21
        for player in range(1, 8):
            assert honest_worst_case(tree, player) >= F(1, 7) - eps


@pytest.mark.criterion("AC4 global honest bound")
def test_ac4_global_honest_bound():
    t0 = time.perf_counter()
    for eps in (F(1, 10), F(1, 100)):
        for n in range(2, 513):
            check = verify_honest_bound(build_recursive(n, eps), eps)
            assert check.passed, (n, eps, check)
        for n in range(2, 129):
            check = verify_honest_bound(build_linear(n, eps), eps)
            assert check.passed, (n, eps, check)
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion("AC5 unbalanced flips equal popcount minus one")
def test_ac5_popcount():
    t0 = time.perf_counter()
    for n in range(2, 4097):
        assert structural_counts(build_recursive(n, F(1, 10))).unbalanced_count == bin(n).count("1") - 1, n
    assert time.perf_counter() - t0 < 30


@pytest.mark.criterion("AC6 depth and match count")
def test_ac6_depth_and_match_count():
    for n in range(2, 4097):
        assert structural_counts(build_recursive(n, F(1, 10))).depth == (n - 1).bit_length(), n
    for n in range(2, 1025):
        assert structural_counts(build_linear(n, F(1, 10))).match_count == n - 1


@pytest.mark.criterion("AC7 unbalanced plan accuracy and composed bias")
def test_ac7_unbalanced_plans():
    qs = sampled_rationals(50, seed=7, lo=F(0), hi=F(1))
    checked = 0
    for q in qs:
        for k in range(1, 17):
            for eps in (F(1, 1000), F(1, 100)):
                try:
                    plan = build_unbalanced_plan(q, k, eps)
                except ConstructionError:
                    # only a k-bit truncation of zero is refused
                    assert q < F(1, 2**k)
                    continue
                x = plan.achieved_x
                assert abs(x - q) <= F(1, 2**k)
                assert evaluate_plan_exact(plan) == x
                assert evaluate_plan_exact(plan, cheater=0) <= x + 2 * eps
                assert evaluate_plan_exact(plan, cheater=1) <= (1 - x) + 2 * eps
                checked += 1
    assert checked > 50 * 16  # the rejected cases are the tiny-q exceptions


AC8_SIZES = (3, 7, 8, 13)
AC8_TRIALS = 10**6


@pytest.mark.criterion("AC8 simulation agreement and reproducibility")
def test_ac8_simulation_agreement():
    t0 = time.perf_counter()
    eps = F(1, 10)
    for n in AC8_SIZES:
        tree = build_recursive(n, eps)
        report = analyze(tree)
        honest = simulate(tree, StrategyProfile.all_honest(n), AC8_TRIALS, seed=1000 + n)
        for player in range(1, n + 1):
            agreement = compare_to_exact(honest, report, player)
            assert agreement.scenario == "all_honest" and agreement.passed, agreement
        for player in range(1, n + 1):
            lone = simulate(tree, StrategyProfile.lone_honest(player), AC8_TRIALS, seed=2000 + player)
            agreement = compare_to_exact(lone, report, player)
            assert agreement.scenario == "honest_worst_case" and agreement.passed, agreement

    tree = build_recursive(13, eps)
    profile = StrategyProfile.lone_honest(5)
    first = simulate(tree, profile, AC8_TRIALS, seed=42)
    again = simulate(tree, profile, AC8_TRIALS, seed=42)
    parallel = simulate(tree, profile, AC8_TRIALS, seed=42, workers=4)
    assert first.wins == again.wins == parallel.wins
    assert first.estimated_probability == parallel.estimated_probability
    assert time.perf_counter() - t0 < 120


@pytest.mark.criterion("AC9 physical protocol execution (excluded)")
def test_ac9_excluded():
    pytest.skip("physical execution of the underlying flip protocol is a modeling assumption, not testable")
