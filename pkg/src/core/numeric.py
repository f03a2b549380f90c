"""
Conversions between exact rationals and mpmath reals.
"""

from fractions import Fraction
from numbers import Rational
from typing import Optional, Tuple, Union

import mpmath

from src.settings import settings

Number = Union[int, float, str, Fraction]


def as_fraction(value: Number) -> Fraction:
    """
    Coerce user input into an exact rational.

    Floats go through their shortest repr, so 0.05 becomes 1/20 rather than
    the nearest binary fraction. Strings accept "1/4" and "0.25" forms.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, Rational):
        return Fraction(int(value.numerator), int(value.denominator))
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, mpmath.mpf):
        return mpf_to_fraction(value)
    raise TypeError(f"cannot convert {value!r} to an exact rational")


def to_mpf(value, prec: Optional[int] = None) -> mpmath.mpf:
    """Convert a rational (or anything mpmath accepts) at the given precision."""
    prec = prec or settings.precision_bits
    with mpmath.workprec(prec):
        if isinstance(value, Fraction):
            return mpmath.fdiv(value.numerator, value.denominator)
        return mpmath.mpf(value)


def mpf_to_fraction(value: mpmath.mpf) -> Fraction:
    """Exact rational equal to a binary mpf."""
    man, exp = value.man_exp
    man = int(man)
    exp = int(exp)
    if exp >= 0:
        return Fraction(man * 2 ** exp)
    return Fraction(man, 2 ** (-exp))


def log_abs(value, prec: Optional[int] = None) -> Tuple[Optional[mpmath.mpf], int]:
    """
    Return (ln|value|, sign) for rationals far outside double range.

    Zero gives (None, 0).
    """
    prec = prec or settings.precision_bits
    if isinstance(value, Fraction):
        if value == 0:
            return None, 0
        sign = 1 if value > 0 else -1
        with mpmath.workprec(prec):
            return mpmath.log(abs(value.numerator)) - mpmath.log(value.denominator), sign
    with mpmath.workprec(prec):
        value = mpmath.mpf(value)
        if value == 0:
            return None, 0
        return mpmath.log(abs(value)), (1 if value > 0 else -1)
