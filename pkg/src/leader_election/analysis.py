"""Exact evaluation of protocol trees.

Everything here is rational arithmetic: no randomness and no floats. A player's
fate depends only on the matches along its leaf-to-root path, and at each of
those it holds a *share*: ``q`` when it sits in the left subtree, ``1 - q``
otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Optional, TypeVar

from .flip_core import HALF, ContractError, RoundsModel, plan_rounds
from .protocols import Leaf, Match, ProtocolTree, fingerprint, iter_matches, validate_tree
from .rational import as_rational, format_rational, parse_rational

T = TypeVar("T")


def accumulate_paths(
    tree: ProtocolTree, start: T, step: Callable[[T, Match, Fraction], T]
) -> dict[int, T]:
    """Fold ``step(acc, match, share)`` down every root-to-leaf path.

    Returns the folded value per player. Shared prefixes are folded once.
    """
    result: dict[int, T] = {}
    complement: dict[int, Fraction] = {}  # builders share FlipSpec objects
    stack = [(tree, start)]
    while stack:
        node, acc = stack.pop()
        if type(node) is Leaf:
            result[node.player] = acc
            continue
        spec = node.spec
        q = spec.q
        r = complement.get(id(spec))
        if r is None:
            if not 0 < q < 1:
                raise ContractError(f"share {q} outside (0, 1)")
            r = complement[id(spec)] = 1 - q
        stack.append((node.right, step(acc, node, r)))
        stack.append((node.left, step(acc, node, q)))
    return result


def all_honest_probabilities(tree: ProtocolTree) -> dict[int, Fraction]:
    # fold unreduced (numerator, denominator) pairs and reduce once per leaf;
    # normalizing at every step dominates the cost on large trees
    def step(acc, match, share):
        return acc[0] * share.numerator, acc[1] * share.denominator

    pairs = accumulate_paths(tree, (1, 1), step)
    return {p: Fraction(num, den) for p, (num, den) in sorted(pairs.items())}


def _worst_step(acc: Fraction, match: Match, share: Fraction) -> Fraction:
    # clamp: a nonpositive factor means the budget wiped out the guarantee
    factor = share - match.spec.epsilon
    return acc * factor if factor > 0 else Fraction(0)


def honest_worst_case_all(tree: ProtocolTree) -> dict[int, Fraction]:
    """Guaranteed win probability of each player when everyone else cheats.

    Every opponent extracts its full bias at every flip, and the bound of each
    flip is taken to hold whatever happened in earlier flips or between other
    players.
    """
    return dict(sorted(accumulate_paths(tree, Fraction(1), _worst_step).items()))


def honest_worst_case(tree: ProtocolTree, player: int) -> Fraction:
    values = honest_worst_case_all(tree)
    if player not in values:
        raise ContractError(f"player {player} is not in this protocol")
    return values[player]


def coalition_upper_bound(tree: ProtocolTree, player: int) -> Fraction:
    """Most the coalition of everyone else can win against honest ``player``."""
    return 1 - honest_worst_case(tree, player)


def path_depths(tree: ProtocolTree) -> dict[int, int]:
    return accumulate_paths(tree, 0, lambda acc, m, share: acc + 1)


class StructuralCounts(NamedTuple):
    match_count: int
    depth: int
    unbalanced_count: int


def structural_counts(tree: ProtocolTree) -> StructuralCounts:
    matches = unbalanced = depth = 0
    is_unbalanced: dict[int, bool] = {}  # specs are shared across a tournament's matches
    stack = [(tree, 0)]
    pop, push = stack.pop, stack.append
    while stack:
        node, d = pop()
        if type(node) is Leaf:
            if d > depth:
                depth = d
            continue
        matches += 1
        spec = node.spec
        flag = is_unbalanced.get(id(spec))
        if flag is None:
            flag = is_unbalanced[id(spec)] = spec.q != HALF
        unbalanced += flag
        d += 1
        push((node.left, d))
        push((node.right, d))
    return StructuralCounts(matches, depth, unbalanced)


class RoundCounts(NamedTuple):
    total: int
    critical_path: int


def total_rounds(
    tree: ProtocolTree,
    rounds_model: Optional[RoundsModel] = None,
    target_epsilon_per_flip=None,
) -> RoundCounts:
    """Rounds summed over all flips, plus along the costliest root-to-leaf path.

    Disjoint subtrees play simultaneously, so the critical path is what a
    parallel schedule actually waits for. Each flip is costed at its own
    ``eps'`` unless ``target_epsilon_per_flip`` overrides it.
    """
    model = rounds_model or RoundsModel.unit()
    override = None if target_epsilon_per_flip is None else as_rational(target_epsilon_per_flip)
    cache: dict[tuple, int] = {}

    def cost(match: Match) -> int:
        eps = override if override is not None else match.spec.epsilon
        key = (match.spec.q, eps)
        if key not in cache:
            cache[key] = plan_rounds(match.spec.q, eps, model)
        return cache[key]

    total = 0
    per_path = accumulate_paths(tree, 0, lambda acc, m, share: acc + cost(m))
    for node in iter_matches(tree):
        total += cost(node)
    return RoundCounts(total, max(per_path.values()))


class BoundCheck(NamedTuple):
    passed: bool
    player: int  # the player with the smallest slack
    margin: Fraction  # that player's guarantee minus (1/n - epsilon)


def verify_honest_bound(tree: ProtocolTree, epsilon) -> BoundCheck:
    """Does every honest player keep at least ``1/n - epsilon``?"""
    eps = as_rational(epsilon)
    n = validate_tree(tree)
    worst = honest_worst_case_all(tree)
    target = Fraction(1, n) - eps
    player = min(worst, key=lambda p: (worst[p], p))
    margin = worst[player] - target
    return BoundCheck(margin >= 0, player, margin)


def tree_epsilon_prime(tree: ProtocolTree) -> Fraction:
    eps = [m.spec.epsilon for m in iter_matches(tree)]
    return max(eps, default=Fraction(0))


# ---------------------------------------------------------------------------


@dataclass
class AnalysisReport:
    n: int
    all_honest: dict[int, Fraction]
    honest_worst_case: dict[int, Fraction]
    coalition_upper_bound: dict[int, Fraction]
    match_count: int
    depth: int
    unbalanced_count: int
    total_rounds: Optional[int]  # None when some flip has zero bias (no finite N_0)
    critical_path_rounds: Optional[int]
    epsilon_prime_used: Fraction
    tree_fingerprint: str = ""
    rounds_model: str = "unit"
    honest_bound: Optional[dict] = field(default=None)

    def to_dict(self) -> dict:
        def rmap(m):
            return {str(p): format_rational(v) for p, v in m.items()}

        out = {
            "n": self.n,
            "all_honest": rmap(self.all_honest),
            "honest_worst_case": rmap(self.honest_worst_case),
            "coalition_upper_bound": rmap(self.coalition_upper_bound),
            "match_count": self.match_count,
            "depth": self.depth,
            "unbalanced_count": self.unbalanced_count,
            "total_rounds": self.total_rounds,
            "critical_path_rounds": self.critical_path_rounds,
            "epsilon_prime_used": format_rational(self.epsilon_prime_used),
            "tree_fingerprint": self.tree_fingerprint,
            "rounds_model": self.rounds_model,
        }
        if self.honest_bound is not None:
            out["honest_bound"] = dict(self.honest_bound)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisReport":
        def rmap(m):
            return {int(p): parse_rational(v) for p, v in m.items()}

        return cls(
            n=int(data["n"]),
            all_honest=rmap(data["all_honest"]),
            honest_worst_case=rmap(data["honest_worst_case"]),
            coalition_upper_bound=rmap(data["coalition_upper_bound"]),
            match_count=int(data["match_count"]),
            depth=int(data["depth"]),
            unbalanced_count=int(data["unbalanced_count"]),
            total_rounds=_opt_int(data["total_rounds"]),
            critical_path_rounds=_opt_int(data["critical_path_rounds"]),
            epsilon_prime_used=parse_rational(data["epsilon_prime_used"]),
            tree_fingerprint=data.get("tree_fingerprint", ""),
            rounds_model=data.get("rounds_model", "unit"),
            honest_bound=data.get("honest_bound"),
        )


def _opt_int(value):
    return None if value is None else int(value)


def analyze(
    tree: ProtocolTree,
    rounds_model: Optional[RoundsModel] = None,
    epsilon=None,
) -> AnalysisReport:
    """Full exact report. With ``epsilon`` also checks the ``1/n - epsilon`` guarantee."""
    model = rounds_model or RoundsModel.unit()
    n = validate_tree(tree)
    honest = all_honest_probabilities(tree)
    if sum(honest.values()) != 1:
        raise AssertionError("honest probabilities do not sum to one")
    worst = honest_worst_case_all(tree)
    counts = structural_counts(tree)
    if isinstance(tree, Leaf):
        rounds = RoundCounts(0, 0)
    elif any(m.spec.epsilon == 0 for m in iter_matches(tree)):
        rounds = RoundCounts(None, None)
    else:
        rounds = total_rounds(tree, model)
    check = None
    if epsilon is not None:
        bound = verify_honest_bound(tree, epsilon)
        check = {
            "epsilon": format_rational(as_rational(epsilon)),
            "passed": bound.passed,
            "player": bound.player,
            "margin": format_rational(bound.margin),
        }
    return AnalysisReport(
        n=n,
        all_honest=honest,
        honest_worst_case=worst,
        coalition_upper_bound={p: 1 - v for p, v in worst.items()},
        match_count=counts.match_count,
        depth=counts.depth,
        unbalanced_count=counts.unbalanced_count,
        total_rounds=rounds.total,
        critical_path_rounds=rounds.critical_path,
        epsilon_prime_used=tree_epsilon_prime(tree),
        tree_fingerprint=fingerprint(tree),
        rounds_model=model.name,
        honest_bound=check,
    )
