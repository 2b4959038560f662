"""Seeded Monte Carlo execution of protocol trees under a strategy profile.

Model assumption: the outcome law of every match depends only on that match's
flip parameters and on whether each of its two participants is honest. A
cheater cannot gain inside one flip by what it did in earlier flips, and
nobody outside a match can shift it. This is what makes the exact analysis an
exact target for the single-honest-player profile; it is assumed here, not
derived.

Randomness is counter based. Trial ``t`` reads its draws from the Philox
blocks at counters ``t*s + 1 .. t*s + s`` (``s`` blocks of four 64-bit words
cover one word per match) under the key ``seed``. A trial's draws therefore
depend on ``(seed, t)`` alone, and the result is bit-identical however the
trials are split into chunks or across worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .flip_core import ContractError, first_win_probability, resolve_flip
from .protocols import Leaf, Match, ProtocolTree, fingerprint, iter_postorder, validate_tree

DEFAULT_CHUNK = 1 << 16
Z_LIMIT = 5.0
_TWO64 = 1 << 64


@dataclass(frozen=True)
class StrategyProfile:
    """Who plays honestly; everyone else is one coalition.

    With ``coalition_target`` the coalition tries to elect that member;
    otherwise it simply plays against the honest players.
    """

    honest: frozenset
    coalition_target: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "honest", frozenset(int(p) for p in self.honest))
        if self.coalition_target is not None and self.coalition_target in self.honest:
            raise ContractError("the coalition target must be a cheater")

    @classmethod
    def all_honest(cls, n: int) -> "StrategyProfile":
        return cls(frozenset(range(1, n + 1)))

    @classmethod
    def lone_honest(cls, player: int) -> "StrategyProfile":
        return cls(frozenset({player}))

    @classmethod
    def all_cheating(cls, target: Optional[int] = None) -> "StrategyProfile":
        return cls(frozenset(), target)

    def to_dict(self) -> dict:
        return {"honest": sorted(self.honest), "coalition_target": self.coalition_target}

    @classmethod
    def from_dict(cls, data: dict) -> "StrategyProfile":
        return cls(frozenset(data["honest"]), data.get("coalition_target"))


def coalition_choice(left: int, right: int, profile: StrategyProfile) -> int:
    """Which of two cheaters the coalition advances: 0 for left, 1 for right.

    Cheaters are interchangeable under the model except for being the target,
    so the one with the better downstream chance is the target if it is
    playing; ties go to the lower player index.
    """
    target = profile.coalition_target
    left_score = left == target
    right_score = right == target
    if left_score != right_score:
        return 0 if left_score else 1
    return 0 if left < right else 1


def play(tree: ProtocolTree, profile: StrategyProfile, randomness) -> int:
    """One trial, evaluated bottom-up through :func:`resolve_flip`. Returns the leader."""
    survivor: dict[int, int] = {}
    for node in iter_postorder(tree):
        if isinstance(node, Leaf):
            survivor[id(node)] = node.player
            continue
        left = survivor.pop(id(node.left))
        right = survivor.pop(id(node.right))
        lh, rh = left in profile.honest, right in profile.honest
        choice = None if (lh or rh) else coalition_choice(left, right, profile)
        outcome = resolve_flip(node.spec, lh, rh, choice, randomness)
        survivor[id(node)] = left if outcome.winner == 0 else right
    return survivor[id(tree)]


# ---------------------------------------------------------------------------
# vectorized engine


def _threshold(p: Fraction) -> int:
    """``T`` with ``P(raw < T) = T / 2^64`` within ``2^-64`` of ``p``; exact at 0.

    ``p == 1`` cannot be expressed in 64 bits and is flagged separately.
    """
    t = -((-p.numerator * _TWO64) // p.denominator)
    return min(max(t, 0), _TWO64 - 1)


@dataclass(frozen=True)
class _Compiled:
    n: int
    leaf_player: tuple  # node id -> player, or 0 for matches
    match_nodes: tuple  # per match, in postorder: (node id, left id, right id)
    thresholds: np.ndarray  # shape (matches, 3): both honest, only left honest, only right honest
    certain: np.ndarray  # same shape; left wins with probability exactly 1

    @property
    def stride(self) -> int:
        return max(1, -(-len(self.match_nodes) // 4))


def _compile(tree: ProtocolTree) -> _Compiled:
    n = validate_tree(tree)
    ids: dict[int, int] = {}
    leaf_player = []
    match_nodes = []
    thresholds = []
    certain = []
    for node in iter_postorder(tree):
        nid = len(leaf_player)
        ids[id(node)] = nid
        if isinstance(node, Leaf):
            leaf_player.append(node.player)
            continue
        leaf_player.append(0)
        match_nodes.append((nid, ids[id(node.left)], ids[id(node.right)]))
        laws = [first_win_probability(node.spec, lh, rh)
                for lh, rh in ((True, True), (True, False), (False, True))]
        thresholds.append([_threshold(p) for p in laws])
        certain.append([p == 1 for p in laws])
    table = np.array(thresholds, dtype=np.uint64).reshape(-1, 3)
    sure = np.array(certain, dtype=bool).reshape(-1, 3)
    return _Compiled(n, tuple(leaf_player), tuple(match_nodes), table, sure)


def _run_chunk(compiled: _Compiled, honest: np.ndarray, target: int, seed: int,
               start: int, stop: int) -> np.ndarray:
    size = stop - start
    counts_len = compiled.n + 1
    if not compiled.match_nodes:
        out = np.zeros(counts_len, dtype=np.int64)
        out[1] = size
        return out

    stride = compiled.stride
    gen = np.random.Philox(key=seed, counter=start * stride)
    raw = gen.random_raw(size * stride * 4).reshape(size, stride * 4)

    survivor: dict[int, np.ndarray] = {}
    for m, (nid, lid, rid) in enumerate(compiled.match_nodes):
        left = survivor.pop(lid, None)
        if left is None:
            left = np.full(size, compiled.leaf_player[lid], dtype=np.int32)
        right = survivor.pop(rid, None)
        if right is None:
            right = np.full(size, compiled.leaf_player[rid], dtype=np.int32)

        lh = honest[left]
        rh = honest[right]
        both_t, left_t, right_t = compiled.thresholds[m]
        thr = np.where(lh, np.where(rh, both_t, left_t), right_t)
        left_wins = raw[:, m] < thr
        if compiled.certain[m, 2]:  # only a saturated flip can make the left side certain
            left_wins |= ~lh & rh

        cheat = ~(lh | rh)
        if cheat.any():
            if target:
                ls, rs = left == target, right == target
                prefer_left = (ls & ~rs) | ((ls == rs) & (left < right))
            else:
                prefer_left = left < right
            left_wins = np.where(cheat, prefer_left, left_wins)
        survivor[nid] = np.where(left_wins, left, right)

    (root,) = survivor.values()
    return np.bincount(root, minlength=counts_len).astype(np.int64)


def _chunk_task(args):
    return _run_chunk(*args)


@dataclass
class SimulationResult:
    trials: int
    seed: int
    wins: dict[int, int]
    estimated_probability: dict[int, float]
    standard_error: dict[int, float]
    profile: StrategyProfile = field(default_factory=lambda: StrategyProfile(frozenset()))
    tree_fingerprint: str = ""

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "wins": {str(p): w for p, w in self.wins.items()},
            "estimated_probability": {str(p): v for p, v in self.estimated_probability.items()},
            "standard_error": {str(p): v for p, v in self.standard_error.items()},
            "profile": self.profile.to_dict(),
            "tree_fingerprint": self.tree_fingerprint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationResult":
        return cls(
            trials=int(data["trials"]),
            seed=int(data["seed"]),
            wins={int(p): int(w) for p, w in data["wins"].items()},
            estimated_probability={int(p): float(v) for p, v in data["estimated_probability"].items()},
            standard_error={int(p): float(v) for p, v in data["standard_error"].items()},
            profile=StrategyProfile.from_dict(data["profile"]),
            tree_fingerprint=data.get("tree_fingerprint", ""),
        )


def _chunks(trials: int, chunk: int) -> Iterable[tuple[int, int]]:
    for start in range(0, trials, chunk):
        yield start, min(start + chunk, trials)


def simulate(
    tree: ProtocolTree,
    profile: StrategyProfile,
    trials: int,
    seed: int,
    *,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> SimulationResult:
    """Run ``trials`` independent elections and count who becomes leader."""
    if trials < 1:
        raise ContractError("trials must be positive")
    if not 0 <= seed < _TWO64:
        raise ContractError("seed must be a 64-bit unsigned integer")
    if chunk_size < 1 or workers < 1:
        raise ContractError("chunk_size and workers must be positive")
    compiled = _compile(tree)
    n = compiled.n
    stray = [p for p in profile.honest if not 1 <= p <= n]
    if stray or (profile.coalition_target is not None and not 1 <= profile.coalition_target <= n):
        raise ContractError(f"profile names players outside 1..{n}")

    honest = np.zeros(n + 1, dtype=bool)
    honest[list(profile.honest)] = True
    target = profile.coalition_target or 0
    tasks = [(compiled, honest, target, seed, a, b) for a, b in _chunks(trials, chunk_size)]

    counts = np.zeros(n + 1, dtype=np.int64)
    if workers == 1 or len(tasks) == 1:
        for task in tasks:
            counts += _chunk_task(task)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_chunk_task, tasks):
                counts += part

    wins = {p: int(counts[p]) for p in range(1, n + 1)}
    est = {p: w / trials for p, w in wins.items()}
    se = {p: math.sqrt(v * (1.0 - v) / trials) for p, v in est.items()}
    return SimulationResult(trials, seed, wins, est, se, profile, fingerprint(tree))


# ---------------------------------------------------------------------------


class Agreement(NamedTuple):
    player: int
    scenario: str  # "all_honest", "honest_worst_case" or "lower_bound"
    exact: Fraction
    estimate: float
    standard_error: float
    z: float
    passed: bool


def compare_to_exact(result: SimulationResult, report, player: int) -> Agreement:
    """z-score of the sampled win rate against the exact analysis.

    All-honest and lone-honest profiles have exact targets and are checked
    two-sided at 5 sigma. Any other profile in which ``player`` is honest can
    only be held to the one-sided worst-case guarantee.
    """
    if result.trials < 1:
        raise ContractError("no trials to compare")
    if report.tree_fingerprint and result.tree_fingerprint != report.tree_fingerprint:
        raise ContractError("simulation and analysis describe different trees")
    if player not in report.all_honest:
        raise ContractError(f"player {player} is not in this protocol")

    honest = result.profile.honest
    if honest == frozenset(range(1, report.n + 1)):
        scenario, exact = "all_honest", report.all_honest[player]
    elif honest == frozenset({player}):
        scenario, exact = "honest_worst_case", report.honest_worst_case[player]
    elif player in honest:
        scenario, exact = "lower_bound", report.honest_worst_case[player]
    else:
        raise ContractError(f"player {player} cheats in this profile; there is no exact target")

    est = result.estimated_probability[player]
    se = result.standard_error[player]
    diff = est - float(exact)
    if se > 0:
        z = diff / se
    else:
        # degenerate sample (all or nothing): demand exact agreement
        z = 0.0 if Fraction(result.wins[player], result.trials) == exact else math.copysign(math.inf, diff or 1.0)
    passed = z >= -Z_LIMIT if scenario == "lower_bound" else abs(z) <= Z_LIMIT
    return Agreement(player, scenario, exact, est, se, z, passed)
