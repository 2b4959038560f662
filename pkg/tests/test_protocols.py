import json
import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leader_election.analysis import structural_counts
from leader_election.flip_core import ConstructionError, ContractError
from leader_election.protocols import (
    Leaf,
    Match,
    ProtocolVariant,
    build,
    build_linear,
    build_recursive,
    build_seven,
    build_three,
    epsilon_prime,
    fingerprint,
    iter_matches,
    players,
    shape,
    tree_from_dict,
    tree_to_dict,
    validate_tree,
)


def q_sequence(tree):
    return [m.spec.q for m in iter_matches(tree)]


# --- epsilon_prime ----------------------------------------------------------


def test_epsilon_prime_rules():
    assert epsilon_prime("linear", 10, F(1, 10)) == F(1, 100)
    assert epsilon_prime("recursive", 8, F(3, 10)) == F(1, 20)
    assert epsilon_prime("seven", 7, F(21, 100)) == F(1, 100)
    assert epsilon_prime("three", 3, F(1, 5)) == F(1, 10)
    # ceil(log2 5) = 3
    assert epsilon_prime("recursive", 5, F(3, 5)) == F(1, 10)


@pytest.mark.parametrize("args", [("linear", 1, F(1, 10)), ("recursive", 4, 0),
                                  ("three", 4, F(1, 10)), ("seven", 8, F(1, 10))])
def test_epsilon_prime_contract(args):
    with pytest.raises(ContractError):
        epsilon_prime(*args)


# --- builders ---------------------------------------------------------------


def test_linear_two_players():
    tree = build_linear(2, F(1, 10))
    assert tree == Match(Leaf(1), Leaf(2), tree.spec)
    assert tree.spec.q == F(1, 2) and tree.spec.epsilon == F(1, 20)


def test_linear_three_is_the_three_party_protocol():
    assert shape(build_linear(3, F(1, 10))) == shape(build_three(F(1, 10)))
    assert shape(build_three(F(1, 10))) == ((("leaf", 1), ("leaf", 2), F(1, 2)), ("leaf", 3), F(2, 3))


def test_linear_five_q_sequence():
    tree = build_linear(5, F(1, 10))
    assert q_sequence(tree) == [F(1, 2), F(2, 3), F(3, 4), F(4, 5)]
    assert {m.spec.epsilon for m in iter_matches(tree)} == {F(1, 50)}


def test_recursive_power_of_two_is_a_tournament():
    tree = build_recursive(4, F(1, 10))
    assert shape(tree) == (
        (("leaf", 1), ("leaf", 2), F(1, 2)),
        (("leaf", 3), ("leaf", 4), F(1, 2)),
        F(1, 2),
    )


def test_recursive_seven_matches_the_seven_player_protocol():
    tree = build_recursive(7, F(1, 10))
    right = shape(tree)[1]
    assert right == ((("leaf", 5), ("leaf", 6), F(1, 2)), ("leaf", 7), F(2, 3))
    assert tree.spec.q == F(4, 7)
    assert shape(build_seven(F(1, 10))) == shape(tree)


def test_recursive_six():
    tree = build_recursive(6, F(1, 10))
    assert tree.spec.q == F(2, 3)
    assert shape(tree.right) == (("leaf", 5), ("leaf", 6), F(1, 2))
    assert shape(tree.left) == shape(build_recursive(4, F(1, 10)))


def test_recursive_budget_fixed_by_outermost_n():
    tree = build_recursive(13, F(1, 10))
    assert {m.spec.epsilon for m in iter_matches(tree)} == {F(1, 10) / (2 * 4)}


def test_seven_budget():
    tree = build_seven(F(21, 100))
    assert {m.spec.epsilon for m in iter_matches(tree)} == {F(1, 100)}
    assert sorted(q_sequence(tree)) == [F(1, 2)] * 4 + [F(4, 7), F(2, 3)]


def test_single_player_is_leader():
    assert build_recursive(1, F(1, 10)) == Leaf(1)
    with pytest.raises(ContractError):
        build_recursive(0, F(1, 10))


def test_oversized_budget_names_offending_node():
    with pytest.raises(ConstructionError, match="player 4"):
        build_linear(4, F(1, 10), eps_prime=F(1, 4))


def test_saturated_flip_allowed_only_when_target_is_vacuous():
    # eps' = 1/180 swallows the last player's 1/257 share, but 1/257 - 1/10 < 0 anyway
    tree = build_recursive(257, F(1, 10))
    root = tree.spec
    assert root.q == F(256, 257) and root.epsilon == F(1, 180)
    assert root.saturated
    # the same budget against a meaningful target is refused
    with pytest.raises(ConstructionError, match="root over players 1..257"):
        build_recursive(257, F(1, 1000), eps_prime=F(1, 180))


def test_no_saturation_under_the_rules_for_small_epsilon():
    for n in range(2, 600):
        tree = build_recursive(n, F(1, 100))
        assert not any(m.spec.saturated for m in iter_matches(tree))


def test_build_dispatch():
    assert shape(build("three", None, F(1, 10))) == shape(build_three(F(1, 10)))
    assert shape(build(ProtocolVariant.SEVEN, 7, F(1, 10))) == shape(build_seven(F(1, 10)))
    with pytest.raises(ContractError):
        build("seven", 8, F(1, 10))


# --- invariants -------------------------------------------------------------


@pytest.mark.parametrize("builder", [build_linear, build_recursive])
def test_leaves_are_each_player_once(builder):
    for n in range(2, 200):
        tree = builder(n, F(1, 10))
        assert sorted(players(tree)) == list(range(1, n + 1))
        assert structural_counts(tree).match_count == n - 1


def _depth_by_recursion(tree):
    if isinstance(tree, Leaf):
        return 0
    return 1 + max(_depth_by_recursion(tree.left), _depth_by_recursion(tree.right))


def test_recursive_depth_is_ceil_log2_n():
    for n in range(1, 1025):
        tree = build_recursive(n, F(1, 10))
        assert _depth_by_recursion(tree) == (math.ceil(math.log2(n)) if n > 1 else 0)


def _unbalanced_by_formula(n):
    # independent of popcount: recurse on the power-of-two split
    if n & (n - 1) == 0:
        return 0
    k = n.bit_length() - 1
    return 1 + _unbalanced_by_formula(n - 2**k)


@settings(deadline=None)
@given(st.integers(min_value=2, max_value=4096))
def test_unbalanced_flips_equal_popcount_minus_one(n):
    count = sum(m.spec.q != F(1, 2) for m in iter_matches(build_recursive(n, F(1, 10))))
    assert count == bin(n).count("1") - 1 == _unbalanced_by_formula(n)


def test_validate_rejects_duplicate_players():
    spec = build_linear(2, F(1, 10)).spec
    with pytest.raises(ContractError):
        validate_tree(Match(Leaf(1), Leaf(1), spec))
    with pytest.raises(ContractError):
        validate_tree(Match(Leaf(1), Leaf(3), spec))


# --- serialization ----------------------------------------------------------


def test_serialization_schema():
    data = tree_to_dict(build_three(F(1, 5)))
    assert data == {
        "type": "match", "q": "2/3", "epsilon_prime": "1/10",
        "left": {"type": "match", "q": "1/2", "epsilon_prime": "1/10",
                 "left": {"type": "leaf", "player": 1}, "right": {"type": "leaf", "player": 2}},
        "right": {"type": "leaf", "player": 3},
    }


@pytest.mark.parametrize("tree", [build_recursive(13, F(1, 7)), build_linear(9, F(1, 3)),
                                  build_seven(F(1, 10)), build_recursive(1, F(1, 2))])
def test_serialization_round_trip(tree):
    again = tree_from_dict(json.loads(json.dumps(tree_to_dict(tree))))
    assert again == tree
    assert fingerprint(again) == fingerprint(tree)


def test_deep_chain_round_trip_without_recursion():
    tree = build_linear(1500, F(1, 10))
    assert fingerprint(tree_from_dict(tree_to_dict(tree))) == fingerprint(tree)


def test_fingerprint_sensitive_to_budget():
    assert fingerprint(build_recursive(5, F(1, 10))) != fingerprint(build_recursive(5, F(1, 11)))


def test_from_dict_rejects_garbage():
    with pytest.raises(ValueError):
        tree_from_dict({"type": "node"})
    with pytest.raises(ConstructionError):
        tree_from_dict({"type": "match", "q": "1/1", "epsilon_prime": "0/1",
                        "left": {"type": "leaf", "player": 1}, "right": {"type": "leaf", "player": 2}})
