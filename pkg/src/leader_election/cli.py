"""Command-line front end.

    leader-election build    --variant recursive --n 7 --epsilon 21/100
    leader-election analyze  --variant recursive --n 7 --epsilon 21/100
    leader-election simulate --n 13 --epsilon 1/10 --honest 5 --trials 1000000 --seed 7
    leader-election verify   --variant recursive --n-range 2..256 --epsilon 1/10

Output is JSON. Rationals are written as "num/den" strings. Exit status is
0 on success, 1 when a verification fails and 2 for bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from fractions import Fraction
from typing import Optional, Sequence

from .analysis import analyze
from .flip_core import ConstructionError, ContractError, RoundsModel
from .protocols import ProtocolVariant, build, tree_to_dict
from .rational import format_rational, parse_rational
from .simulator import StrategyProfile, compare_to_exact, simulate
from .verification import check_protocols, check_unbalanced_plans, sample_probabilities


class UsageError(Exception):
    pass


def _epsilon(text: str) -> Fraction:
    try:
        value = parse_rational(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"epsilon must lie in (0, 1), got {text}")
    return value


def _rational(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _n_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    try:
        if not sep:
            return range(int(text), int(text) + 1)
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO..HI, got {text!r}") from None
    if lo_i < 1 or hi_i < lo_i:
        raise argparse.ArgumentTypeError(f"empty or invalid range {text!r}")
    return range(lo_i, hi_i + 1)


def _rational_list(text: str) -> list[Fraction]:
    return [_rational(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leader-election", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--variant", type=ProtocolVariant, default=ProtocolVariant.RECURSIVE,
                        choices=list(ProtocolVariant), metavar="{linear,recursive,three,seven}")
    common.add_argument("--epsilon", type=_epsilon, default=Fraction(1, 10),
                        help="overall target bias, e.g. 1/10")
    common.add_argument("--eps-prime", type=_rational, default=None,
                        help="override the per-flip budget (for stress tests)")
    common.add_argument("--rounds-model", default="unit",
                        help="'unit' or a table file of 'num/den N' lines")
    common.add_argument("--output", "-o", default="-", help="output file (default stdout)")

    for name, help_text in [("build", "print the protocol tree"),
                            ("analyze", "exact analysis report")]:
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--n", type=int, default=None)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo run with exact comparison")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--honest", default="all",
                   help="'all', 'none' or a comma list of honest players")
    p.add_argument("--target", type=int, default=None, help="player the coalition tries to elect")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("verify", parents=[common], help="exhaustive exact checks over a range")
    p.add_argument("--n-range", type=_n_range, default=None, help="LO..HI (default 2..256)")
    p.add_argument("--plan-q-samples", type=int, default=50)
    p.add_argument("--plan-k-max", type=int, default=16)
    p.add_argument("--plan-epsilons", type=_rational_list, default=[Fraction(1, 1000), Fraction(1, 100)])
    p.add_argument("--plan-seed", type=int, default=2009)
    return parser


def _default_n(variant: ProtocolVariant, n: Optional[int]) -> int:
    if variant is ProtocolVariant.THREE:
        return 3 if n is None else n
    if variant is ProtocolVariant.SEVEN:
        return 7 if n is None else n
    if n is None:
        raise UsageError(f"--n is required for the {variant.value} protocol")
    return n


def _rounds(spec: str) -> RoundsModel:
    if spec == "unit":
        return RoundsModel.unit()
    try:
        return RoundsModel.load(spec)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read rounds model {spec!r}: {exc}") from None


def _profile(text: str, n: int, target: Optional[int]) -> StrategyProfile:
    text = text.strip().lower()
    if text == "all":
        honest = frozenset(range(1, n + 1))
    elif text == "none":
        honest = frozenset()
    else:
        try:
            honest = frozenset(int(p) for p in text.split(",") if p.strip())
        except ValueError:
            raise UsageError(f"bad --honest list {text!r}") from None
    return StrategyProfile(honest, target)


@contextmanager
def _deep_recursion(limit: int = 20_000):
    # nested JSON for long chain protocols exceeds the default limit
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, limit))
    try:
        yield
    finally:
        sys.setrecursionlimit(old)


def _emit(payload: dict, output: str) -> None:
    with _deep_recursion():
        text = json.dumps(payload, indent=2)
    if output == "-":
        sys.stdout.write(text + "\n")
    else:
        with open(output, "w") as fh:
            fh.write(text + "\n")


def _cmd_build(args) -> int:
    n = _default_n(args.variant, args.n)
    tree = build(args.variant, n, args.epsilon, eps_prime=args.eps_prime)
    _emit(tree_to_dict(tree), args.output)
    return 0


def _cmd_analyze(args) -> int:
    n = _default_n(args.variant, args.n)
    tree = build(args.variant, n, args.epsilon, eps_prime=args.eps_prime)
    report = analyze(tree, _rounds(args.rounds_model), epsilon=args.epsilon)
    _emit(report.to_dict(), args.output)
    return 0


def _cmd_simulate(args) -> int:
    n = _default_n(args.variant, args.n)
    tree = build(args.variant, n, args.epsilon, eps_prime=args.eps_prime)
    report = analyze(tree, _rounds(args.rounds_model), epsilon=args.epsilon)
    profile = _profile(args.honest, n, args.target)
    result = simulate(tree, profile, args.trials, args.seed, workers=args.workers)
    comparisons = []
    for player in sorted(profile.honest):
        agreement = compare_to_exact(result, report, player)
        comparisons.append({
            "player": player,
            "scenario": agreement.scenario,
            "exact": format_rational(agreement.exact),
            "exact_decimal": float(agreement.exact),
            "estimate": agreement.estimate,
            "standard_error": agreement.standard_error,
            "z": agreement.z,
            "passed": agreement.passed,
        })
    _emit({"simulation": result.to_dict(), "analysis": report.to_dict(),
           "comparison": comparisons}, args.output)
    return 0 if all(c["passed"] for c in comparisons) else 1


def _cmd_verify(args) -> int:
    variant = args.variant
    if variant is ProtocolVariant.THREE:
        ns = range(3, 4)
    elif variant is ProtocolVariant.SEVEN:
        ns = range(7, 8)
    else:
        ns = args.n_range or range(2, 257)
        if variant is ProtocolVariant.LINEAR and ns.start < 2:
            raise UsageError("the linear protocol needs n >= 2")
    findings = check_protocols(variant, ns, args.epsilon, eps_prime=args.eps_prime)
    qs = sample_probabilities(args.plan_q_samples, args.plan_seed)
    findings += check_unbalanced_plans(qs, args.plan_k_max, args.plan_epsilons)
    ok = all(f.passed for f in findings)
    _emit({
        "variant": variant.value,
        "epsilon": format_rational(args.epsilon),
        "n_range": [ns.start, ns.stop - 1],
        "passed": ok,
        "checks": [f.to_dict() for f in findings],
    }, args.output)
    if not ok:
        for f in findings:
            if not f.passed:
                print(f"verification failed: {f.check}: {f.detail.get('witnesses')}", file=sys.stderr)
    return 0 if ok else 1


COMMANDS = {"build": _cmd_build, "analyze": _cmd_analyze,
            "simulate": _cmd_simulate, "verify": _cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConstructionError, ContractError) as exc:
        print(f"leader-election: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
