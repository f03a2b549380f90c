"""
Entropy factors H, H~ and the dressing weights beta, beta~ of the dressed partition function.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import mpmath

from src.core.numeric import as_fraction, to_mpf
from src.errors import DomainError
from src.settings import settings


@dataclass(frozen=True)
class EntropyFactor:
    """H(p, j) = j ln p + H~(p, j) at one dimer fraction j."""
    p: Fraction
    j: Fraction
    H: mpmath.mpf
    Htilde: mpmath.mpf


def _xlogx(x):
    # 0 ln 0 := 0
    if x == 0:
        return mpmath.mpf(0)
    return x * mpmath.log(x)


def _check_domain(p, j):
    if j < 0 or j > p / 2 or 2 * j >= 1:
        raise DomainError(f"j = {j} outside [0, p/2] with 2j < 1 (p = {p})")


def eval_Htilde(p, j, prec: Optional[int] = None) -> mpmath.mpf:
    """H~(p, j) = (1-2j) ln(1-2j) + j - (p/2)(1 - 2j/p) ln(1 - 2j/p)."""
    p, j = as_fraction(p), as_fraction(j)
    _check_domain(p, j)
    prec = prec or settings.precision_bits
    with mpmath.workprec(prec):
        # both log arguments are formed exactly so j = p/2 hits 0 ln 0 exactly
        dimer_free = to_mpf(1 - 2 * j, prec)
        site_free = to_mpf(1 - 2 * j / p, prec)
        return _xlogx(dimer_free) + to_mpf(j, prec) - to_mpf(p, prec) / 2 * _xlogx(site_free)


def eval_H(p, j, prec: Optional[int] = None) -> EntropyFactor:
    """
    Evaluate H and H~ at dimer fraction j.

    Raises:
        DomainError: if j < 0, j > p/2 or 2j >= 1
    """
    p, j = as_fraction(p), as_fraction(j)
    _check_domain(p, j)
    prec = prec or settings.precision_bits
    with mpmath.workprec(prec):
        Htilde = eval_Htilde(p, j, prec)
        H = to_mpf(j, prec) * mpmath.log(to_mpf(p, prec)) + Htilde
    return EntropyFactor(p=p, j=j, H=H, Htilde=Htilde)


def beta_tilde(N: int, p, weight: int, prec: Optional[int] = None) -> mpmath.mpf:
    """beta~(N, w) = exp(N H~(p, w/N))."""
    prec = prec or settings.precision_bits
    with mpmath.workprec(prec):
        return mpmath.exp(N * eval_Htilde(p, Fraction(weight, N), prec))


def beta_factor(N: int, p, weight: int, prec: Optional[int] = None) -> mpmath.mpf:
    """beta(N, w) = exp(N H(p, w/N)) = p^w beta~(N, w)."""
    prec = prec or settings.precision_bits
    with mpmath.workprec(prec):
        return mpmath.exp(N * eval_H(p, Fraction(weight, N), prec).H)
