"""Exact rational helpers.

All probabilities and bias budgets are :class:`fractions.Fraction`. Across
serialization boundaries they travel as ``"num/den"`` strings so that no value
ever passes through floating point.
"""

from fractions import Fraction
from numbers import Rational as _RationalABC

Rational = Fraction


def as_rational(value) -> Fraction:
    """Coerce ints, Fractions and rational strings to a Fraction.

    Floats are refused: accepting them would silently import binary rounding
    error into an exact computation.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, _RationalABC)):
        return Fraction(value)
    if isinstance(value, str):
        return parse_rational(value)
    raise TypeError(f"expected an exact rational, got {type(value).__name__}")


def parse_rational(text: str) -> Fraction:
    text = text.strip()
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational number: {text!r}") from exc


def format_rational(value: Fraction) -> str:
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def ceil_log2(value) -> int:
    """Smallest integer ``m`` with ``2**m >= value``, for rational ``value > 0``."""
    value = as_rational(value)
    if value <= 0:
        raise ValueError("ceil_log2 needs a positive argument")
    num, den = value.numerator, value.denominator
    m = num.bit_length() - den.bit_length()
    # 2**m * den >= num, written without negative shifts
    def fits(m: int) -> bool:
        return (den << m) >= num if m >= 0 else den >= (num << -m)

    while not fits(m):
        m += 1
    while fits(m - 1):
        m -= 1
    return m


def floor_log2(n: int) -> int:
    if n < 1:
        raise ValueError("floor_log2 needs a positive integer")
    return n.bit_length() - 1
