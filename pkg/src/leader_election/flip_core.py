"""Weak coin flips as abstract primitives.

A flip ``P(q, eps)`` is a two-party weak coin flip in which the first party
wins with probability ``q`` when both are honest, and a cheater can push its
own winning probability up by at most ``eps``. Nothing here models the
quantum protocol that realizes such a flip; only its outcome law is used.

Unbalanced flips are realized from balanced ones by the truncated binary
expansion chain (see :func:`build_unbalanced_plan`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

from .rational import as_rational, ceil_log2, parse_rational

HALF = Fraction(1, 2)


class ConstructionError(ValueError):
    """A flip, plan or protocol would leave some honest party without a guarantee."""


class ContractError(ValueError):
    """An operation was called with arguments outside its contract."""


@dataclass(frozen=True)
class FlipSpec:
    """``P(q, epsilon)``: the first party wins w.p. ``q`` if both are honest.

    By default the bias bound must leave each honest side a positive
    guarantee. ``allow_saturation`` admits flips whose bound reaches an honest
    share; that side's guarantee is then zero, and a cheater facing it wins
    for certain.
    """

    q: Fraction
    epsilon: Fraction = Fraction(0)
    allow_saturation: bool = field(default=False, compare=False)

    def __post_init__(self):
        q = as_rational(self.q)
        eps = as_rational(self.epsilon)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "epsilon", eps)
        if not 0 < q < 1:
            raise ConstructionError(f"flip probability q={q} must lie strictly in (0, 1)")
        if not 0 <= eps < HALF:
            raise ConstructionError(f"bias bound {eps} must lie in [0, 1/2)")
        if self.saturated and not self.allow_saturation:
            raise ConstructionError(
                f"P({q}, {eps}) leaves an honest party a nonpositive guarantee"
            )

    @property
    def balanced(self) -> bool:
        return self.q == HALF

    @property
    def saturated(self) -> bool:
        return self.q - self.epsilon <= 0 or (1 - self.q) - self.epsilon <= 0


class Outcome(NamedTuple):
    winner: int  # 0 = first party, 1 = second party


def first_win_probability(spec: FlipSpec, first_honest: bool, second_honest: bool) -> Fraction:
    """Exact probability that the first party wins, when at least one side is honest.

    A cheater always extracts the full bias advantage, capped at certainty for
    saturated flips. This is the single outcome law shared by
    :func:`resolve_flip` and the simulator.
    """
    if first_honest and second_honest:
        return spec.q
    if first_honest:
        return max(spec.q - spec.epsilon, Fraction(0))
    if second_honest:
        return min(1 - ((1 - spec.q) - spec.epsilon), Fraction(1))
    raise ContractError("no honest party: the outcome is the coalition's choice, not a probability")


def outcome_distribution(
    spec: FlipSpec,
    first_honest: bool,
    second_honest: bool,
    adversary_choice: Optional[int] = None,
) -> tuple[Fraction, Fraction]:
    """``(P[first wins], P[second wins])`` for one flip under the given honesty."""
    if not (first_honest or second_honest):
        choice = _check_choice(adversary_choice)
        return (Fraction(1), Fraction(0)) if choice == 0 else (Fraction(0), Fraction(1))
    p = first_win_probability(spec, first_honest, second_honest)
    return p, 1 - p


def resolve_flip(
    spec: FlipSpec,
    first_honest: bool,
    second_honest: bool,
    adversary_choice: Optional[int] = None,
    randomness=None,
) -> Outcome:
    """Play one flip.

    ``randomness`` is anything with a ``random()`` method returning a float in
    [0, 1) (``random.Random``, ``numpy.random.Generator``). It is not consulted
    when both parties cheat; the coalition then picks ``adversary_choice``.
    """
    if not (first_honest or second_honest):
        return Outcome(_check_choice(adversary_choice))
    if randomness is None:
        raise ContractError("a random source is required when a party is honest")
    p = first_win_probability(spec, first_honest, second_honest)
    # float vs Fraction comparison is exact in Python
    return Outcome(0 if randomness.random() < p else 1)


def _check_choice(choice) -> int:
    if choice is None:
        raise ContractError("adversary_choice is required when neither party is honest")
    if choice not in (0, 1):
        raise ContractError(f"adversary_choice must be 0 or 1, got {choice!r}")
    return int(choice)


# ---------------------------------------------------------------------------
# Unbalanced flips from balanced ones


@dataclass(frozen=True)
class UnbalancedPlan:
    """A chain of ``k`` balanced flips realizing first-party probability ``achieved_x``.

    Step ``i`` plays ``P(1/2, per_flip_epsilon)``. With bit 1 the first party
    wins outright by winning the step; with bit 0 the first party must win the
    step to continue, otherwise the second party wins outright. Exhausting all
    steps gives the win to the second party.
    """

    q_target: Fraction
    steps: tuple[int, ...]
    achieved_x: Fraction
    per_flip_epsilon: Fraction
    composed_bias_bound: Fraction = field(default=Fraction(0))

    @property
    def k(self) -> int:
        return len(self.steps)


def build_unbalanced_plan(q_target, k: int, per_flip_epsilon=0) -> UnbalancedPlan:
    q = as_rational(q_target)
    eps = as_rational(per_flip_epsilon)
    if not 0 < q < 1:
        raise ContractError(f"target probability {q} must lie strictly in (0, 1)")
    if k < 1:
        raise ContractError("a plan needs at least one step")
    FlipSpec(HALF, eps)  # rejects eps >= 1/2

    scaled = (q.numerator << k) // q.denominator  # floor(q * 2^k)
    steps = tuple((scaled >> (k - 1 - i)) & 1 for i in range(k))
    achieved = Fraction(scaled, 1 << k)
    if achieved == 0:
        raise ConstructionError(
            f"{k}-bit truncation of {q} is zero; the first party could never win"
        )
    # measured, not assumed: the largest gain either cheater can extract
    bound = max(
        _chain_value(steps, eps, cheater=0) - achieved,
        _chain_value(steps, eps, cheater=1) - (1 - achieved),
    )
    return UnbalancedPlan(q, steps, achieved, eps, max(bound, Fraction(0)))


def _chain_value(steps: Sequence[int], eps: Fraction, cheater: Optional[int]) -> Fraction:
    """Backward recursion over the chain.

    Returns the first party's win probability with no cheater, otherwise the
    cheater's best win probability. A cheating party controls its step-win
    probability anywhere in ``[0, 1/2 + eps]`` (conceding is always possible),
    so each step takes the better of the two extreme choices.
    """
    if cheater is None:
        value = Fraction(0)  # first party's chance from the step after the last
        for bit in reversed(steps):
            # bit 1: win here -> 1, lose -> continue; bit 0: win -> continue, lose -> 0
            value = HALF + HALF * value if bit else HALF * value
        return value

    top = HALF + eps
    # an exhausted chain goes to the second party
    value = Fraction(1) if cheater == 1 else Fraction(0)
    for bit in reversed(steps):
        # outcomes of this step, from the cheater's seat
        first_wins_outright = bit == 1
        if cheater == 0:
            on_win = Fraction(1) if first_wins_outright else value
            on_lose = value if first_wins_outright else Fraction(0)
        else:
            on_win = Fraction(1) if not first_wins_outright else value
            on_lose = value if not first_wins_outright else Fraction(0)
        value = max(top * on_win + (1 - top) * on_lose, on_lose)
    return value


def evaluate_plan_exact(plan: UnbalancedPlan, cheater: Optional[int] = None) -> Fraction:
    """Exact value of a plan.

    With no cheater this is the first party's honest win probability (equal to
    ``plan.achieved_x``). With ``cheater`` set to 0 or 1 it is that party's
    maximal win probability against an honest opponent.
    """
    if cheater is not None and cheater not in (0, 1):
        raise ContractError(f"cheater must be 0, 1 or None, got {cheater!r}")
    return _chain_value(plan.steps, plan.per_flip_epsilon, cheater)


def play_plan(plan: UnbalancedPlan, randomness, cheater: Optional[int] = None) -> Outcome:
    """Sample one execution of the chain; a cheater always plays to win each step."""
    step_first = first_win_probability(
        FlipSpec(HALF, plan.per_flip_epsilon), cheater != 0, cheater != 1
    ) if cheater is not None else HALF
    for bit in plan.steps:
        first_won = randomness.random() < step_first
        if bit and first_won:
            return Outcome(0)
        if not bit and not first_won:
            return Outcome(1)
    return Outcome(1)


# ---------------------------------------------------------------------------
# Round accounting


class RoundsModel:
    """Cost ``N_eps`` of one balanced flip with bias ``eps``.

    The underlying protocol's round count is opaque, so it is injected. The
    default unit model counts flip invocations.
    """

    def __init__(self, n_eps: Callable[[Fraction], int], name: str = "custom"):
        self._n_eps = n_eps
        self.name = name

    def __call__(self, eps) -> int:
        value = self._n_eps(as_rational(eps))
        if not isinstance(value, int) or value < 1:
            raise ContractError(f"round model returned {value!r}; need a positive integer")
        return value

    def __repr__(self) -> str:
        return f"RoundsModel({self.name})"

    @classmethod
    def unit(cls) -> "RoundsModel":
        return cls(lambda eps: 1, name="unit")

    @classmethod
    def constant(cls, n: int) -> "RoundsModel":
        return cls(lambda eps: n, name=f"constant {n}")

    @classmethod
    def from_table(cls, entries: dict) -> "RoundsModel":
        """Piecewise model from a ``{bias: rounds}`` table.

        A request for bias ``eps`` uses the entry with the largest tabulated
        bias not exceeding ``eps``: a flip with smaller bias also meets the
        weaker requirement.
        """
        table = sorted((as_rational(k), int(v)) for k, v in entries.items())
        if not table:
            raise ContractError("empty rounds table")

        def lookup(eps: Fraction) -> int:
            best = None
            for bias, rounds in table:
                if bias <= eps:
                    best = rounds
                else:
                    break
            if best is None:
                raise ContractError(f"rounds table has no entry with bias <= {eps}")
            return best

        return cls(lookup, name=f"table[{len(table)}]")

    @classmethod
    def load(cls, path) -> "RoundsModel":
        """Read lines ``num/den N`` (``#`` starts a comment)."""
        entries = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'num/den N'")
            entries[parse_rational(parts[0])] = int(parts[1])
        model = cls.from_table(entries)
        model.name = f"table {path}"
        return model


def repetitions_for(target_epsilon) -> int:
    """Chain length ``k = 1 + ceil(log2(2 / target_epsilon))``."""
    eps = as_rational(target_epsilon)
    if not 0 < eps < 1:
        raise ContractError(f"target bias {eps} must lie in (0, 1)")
    return 1 + ceil_log2(2 / eps)


def plan_rounds(q_target, target_epsilon, rounds_model: Optional[RoundsModel] = None) -> int:
    """Rounds needed for one ``P(q_target, target_epsilon)`` flip.

    A balanced flip is a single invocation at the full budget. Otherwise the
    chain runs ``k`` balanced flips at half the budget.
    """
    model = rounds_model or RoundsModel.unit()
    q = as_rational(q_target)
    eps = as_rational(target_epsilon)
    if not 0 < eps < 1:
        raise ContractError(f"target bias {eps} must lie in (0, 1)")
    if q == HALF:
        return model(eps)
    return repetitions_for(eps) * model(eps / 2)
