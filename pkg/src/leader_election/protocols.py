"""Leader election protocols as binary match trees.

Leaves are players ``1..n``; every internal node is one weak coin flip whose
``spec.q`` is the probability that the winner of the LEFT subtree wins the
match. The leader is whoever survives the root.
"""

from __future__ import annotations

import enum
import hashlib
from functools import lru_cache
from fractions import Fraction
from typing import Iterator, NamedTuple, Optional, Union

from .flip_core import HALF, ConstructionError, ContractError, FlipSpec
from .rational import as_rational, ceil_log2, floor_log2, format_rational, parse_rational


class Leaf(NamedTuple):
    player: int


class Match(NamedTuple):
    left: "ProtocolTree"
    right: "ProtocolTree"
    spec: FlipSpec


ProtocolTree = Union[Leaf, Match]


class ProtocolVariant(str, enum.Enum):
    LINEAR = "linear"
    RECURSIVE = "recursive"
    THREE = "three"
    SEVEN = "seven"


# ---------------------------------------------------------------------------
# traversal


def iter_postorder(tree: ProtocolTree) -> Iterator[ProtocolTree]:
    """Children before parents, left before right. Iterative, so chains of any depth work."""
    stack = [(tree, False)]
    while stack:
        node, expanded = stack.pop()
        if isinstance(node, Leaf) or expanded:
            yield node
            continue
        stack.append((node, True))
        stack.append((node.right, False))
        stack.append((node.left, False))


def iter_matches(tree: ProtocolTree) -> Iterator[Match]:
    return (node for node in iter_postorder(tree) if isinstance(node, Match))


def players(tree: ProtocolTree) -> list[int]:
    return [node.player for node in iter_postorder(tree) if isinstance(node, Leaf)]


def player_count(tree: ProtocolTree) -> int:
    return sum(1 for node in iter_postorder(tree) if isinstance(node, Leaf))


def validate_tree(tree: ProtocolTree) -> int:
    """Check that leaves are exactly ``1..n`` with no repeats; return ``n``."""
    seen = players(tree)
    n = len(seen)
    if sorted(seen) != list(range(1, n + 1)):
        raise ContractError(f"leaves must be players 1..{n} exactly once, got {sorted(seen)}")
    for match in iter_matches(tree):
        if not isinstance(match.spec, FlipSpec):
            raise ContractError("match without a FlipSpec")
    return n


def fingerprint(tree: ProtocolTree) -> str:
    """Stable digest of the tree's shape and every flip's exact parameters."""
    h = hashlib.sha256()
    for node in iter_postorder(tree):
        if isinstance(node, Leaf):
            h.update(f"L{node.player};".encode())
        else:
            h.update(
                f"M{format_rational(node.spec.q)},{format_rational(node.spec.epsilon)};".encode()
            )
    return h.hexdigest()


def shape(tree: ProtocolTree) -> tuple:
    """Tree structure with flip probabilities but without bias budgets."""
    built: dict[int, tuple] = {}
    for node in iter_postorder(tree):
        if isinstance(node, Leaf):
            built[id(node)] = ("leaf", node.player)
        else:
            built[id(node)] = (built[id(node.left)], built[id(node.right)], node.spec.q)
    return built[id(tree)]


# ---------------------------------------------------------------------------
# serialization: {type: "leaf", player} | {type: "match", q, epsilon_prime, left, right}


def tree_to_dict(tree: ProtocolTree) -> dict:
    built: dict[int, dict] = {}
    for node in iter_postorder(tree):
        if isinstance(node, Leaf):
            built[id(node)] = {"type": "leaf", "player": node.player}
        else:
            built[id(node)] = {
                "type": "match",
                "q": format_rational(node.spec.q),
                "epsilon_prime": format_rational(node.spec.epsilon),
                "left": built.pop(id(node.left)),
                "right": built.pop(id(node.right)),
            }
    return built[id(tree)]


def tree_from_dict(data: dict) -> ProtocolTree:
    stack = [(data, False)]
    out: list[ProtocolTree] = []
    while stack:
        record, expanded = stack.pop()
        kind = record.get("type")
        if kind == "leaf":
            out.append(Leaf(int(record["player"])))
        elif kind == "match":
            if not expanded:
                stack.append((record, True))
                stack.append((record["right"], False))
                stack.append((record["left"], False))
                continue
            right = out.pop()
            left = out.pop()
            spec = FlipSpec(parse_rational(record["q"]), parse_rational(record["epsilon_prime"]),
                            allow_saturation=True)
            out.append(Match(left, right, spec))
        else:
            raise ValueError(f"unknown node type {kind!r}")
    (tree,) = out
    validate_tree(tree)
    return tree


# ---------------------------------------------------------------------------
# construction


def epsilon_prime(variant, n: int, epsilon) -> Fraction:
    """Per-flip bias budget for a target overall bias ``epsilon``."""
    variant = ProtocolVariant(variant)
    eps = as_rational(epsilon)
    if n < 2:
        raise ContractError(f"a protocol needs at least two players, got n={n}")
    if eps <= 0:
        raise ContractError(f"target bias must be positive, got {eps}")
    if variant is ProtocolVariant.LINEAR:
        return eps / n
    if variant is ProtocolVariant.RECURSIVE:
        return eps / (2 * ceil_log2(n))
    if variant is ProtocolVariant.THREE:
        _require_n(variant, n, 3)
        return eps / 2
    _require_n(variant, n, 7)
    return eps / 21


def _require_n(variant, n, expected):
    if n != expected:
        raise ContractError(f"the {variant.value} protocol is defined for n={expected} only")


def _flip(q, eps, where: str, saturation_ok: bool) -> FlipSpec:
    try:
        return FlipSpec(q, eps, allow_saturation=saturation_ok)
    except ConstructionError as exc:
        raise ConstructionError(f"{where}: {exc}") from None


def _budget(variant, n, epsilon, override) -> tuple[Fraction, bool]:
    """Per-flip budget, and whether flips may saturate.

    A flip whose budget swallows an honest share leaves that player a zero
    guarantee. That is harmless only when the target ``1/n - epsilon`` is
    itself nonpositive; otherwise the construction is refused.
    """
    e = as_rational(override) if override is not None else epsilon_prime(variant, n, epsilon)
    vacuous = Fraction(1, n) - as_rational(epsilon) <= 0
    return e, vacuous


def build_linear(n: int, epsilon, *, eps_prime=None) -> Match:
    """Chain protocol: the running winner meets player ``i`` in ``P((i-1)/i, eps')``."""
    if n < 2:
        raise ContractError(f"the linear protocol needs n >= 2, got {n}")
    e, sat = _budget(ProtocolVariant.LINEAR, n, epsilon, eps_prime)
    tree: ProtocolTree = Leaf(1)
    for i in range(2, n + 1):
        tree = Match(tree, Leaf(i), _flip(Fraction(i - 1, i), e, f"match against player {i}", sat))
    return tree


# trees are immutable, so subtrees are shared between builds
@lru_cache(maxsize=4096)
def _tournament(first: int, size: int, e: Fraction, sat: bool) -> ProtocolTree:
    """Perfect balanced knockout over players ``first..first+size-1`` (size a power of two)."""
    level: list[ProtocolTree] = [Leaf(p) for p in range(first, first + size)]
    spec = _flip(HALF, e, f"tournament over players {first}..{first + size - 1}", sat)
    while len(level) > 1:
        level = [Match(level[i], level[i + 1], spec) for i in range(0, len(level), 2)]
    return level[0]


@lru_cache(maxsize=4096)
def _recursive(first: int, count: int, e: Fraction, sat: bool) -> ProtocolTree:
    k = floor_log2(count)
    block = 1 << k
    if block == count:
        return _tournament(first, count, e, sat)
    left = _tournament(first, block, e, sat)
    right = _recursive(first + block, count - block, e, sat)
    last = first + count - 1
    spec = _flip(Fraction(block, count), e, f"root over players {first}..{last}", sat)
    return Match(left, right, spec)


def build_recursive(n: int, epsilon, *, eps_prime=None) -> ProtocolTree:
    """Tournament over the largest power-of-two prefix, recursion on the rest,
    then one ``P(2^k/n, eps')`` between the two winners.

    ``eps'`` is fixed by the outermost ``n`` and shared by every flip.
    """
    if n < 1:
        raise ContractError(f"need at least one player, got n={n}")
    if n == 1:
        return Leaf(1)
    e, sat = _budget(ProtocolVariant.RECURSIVE, n, epsilon, eps_prime)
    return _recursive(1, n, e, sat)


def build_three(epsilon, *, eps_prime=None) -> Match:
    e, sat = _budget(ProtocolVariant.THREE, 3, epsilon, eps_prime)
    ab = Match(Leaf(1), Leaf(2), _flip(HALF, e, "A vs B", sat))
    return Match(ab, Leaf(3), _flip(Fraction(2, 3), e, "winner vs C", sat))


def build_seven(epsilon, *, eps_prime=None) -> Match:
    e, sat = _budget(ProtocolVariant.SEVEN, 7, epsilon, eps_prime)
    half = _flip(HALF, e, "first-stage pair", sat)
    first_four = Match(Match(Leaf(1), Leaf(2), half), Match(Leaf(3), Leaf(4), half), half)
    pair_vs_seven = _flip(Fraction(2, 3), e, "winner of 5-6 vs 7", sat)
    last_three = Match(Match(Leaf(5), Leaf(6), half), Leaf(7), pair_vs_seven)
    return Match(first_four, last_three, _flip(Fraction(4, 7), e, "final", sat))


def build(variant, n: Optional[int], epsilon, *, eps_prime=None) -> ProtocolTree:
    variant = ProtocolVariant(variant)
    if variant is ProtocolVariant.LINEAR:
        return build_linear(n, epsilon, eps_prime=eps_prime)
    if variant is ProtocolVariant.RECURSIVE:
        return build_recursive(n, epsilon, eps_prime=eps_prime)
    if variant is ProtocolVariant.THREE:
        if n not in (None, 3):
            _require_n(variant, n, 3)
        return build_three(epsilon, eps_prime=eps_prime)
    if n not in (None, 7):
        _require_n(variant, n, 7)
    return build_seven(epsilon, eps_prime=eps_prime)
