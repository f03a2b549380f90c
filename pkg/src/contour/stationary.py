"""
Stationary point of -w ln a + ln Gamma(w): the root of digamma(w) = ln a.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import mpmath

from src.errors import DomainError, NoRoot
from src.settings import settings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StationaryPoint:
    a: float
    w_star: mpmath.mpf
    z_star: mpmath.mpf
    asymptotic: float
    residual: mpmath.mpf

    @property
    def in_bracket(self) -> bool:
        """w* in (a, a+1), the form of the large-a approximation that holds for every a > 0."""
        return self.a < self.w_star < self.a + 1

    def to_dict(self):
        return {
            'a': self.a,
            'w_star': float(self.w_star),
            'z_star': float(self.z_star),
            'asymptotic': self.asymptotic,
            'deviation': float(self.w_star) - self.asymptotic,
            'residual': float(self.residual),
            'in_bracket': self.in_bracket,
        }


def stationary_point(a, prec: Optional[int] = None) -> StationaryPoint:
    """
    Solve digamma(w) = ln a on the bracket (a, a+1).

    digamma(a) < ln a < ln(a + 1/2) < digamma(a + 1) for every a > 0, and
    digamma is increasing there, so the bracket always holds the root.

    Raises:
        DomainError: if a <= 0
    """
    if a <= 0:
        raise DomainError(f"stationary point needs a > 0, got {a}")
    prec = prec or settings.precision_bits
    with mpmath.workprec(prec):
        a_mp = mpmath.mpf(a)
        target = mpmath.log(a_mp)

        def equation(w):
            return mpmath.digamma(w) - target

        lo, hi = a_mp, a_mp + 1
        if equation(lo) * equation(hi) >= 0:
            logger.error(f"digamma bracket ({lo}, {hi}) does not straddle ln a for a={a}")
            raise NoRoot(f"no sign change of digamma(w) - ln a on ({a}, {a} + 1)")
        w_star = mpmath.findroot(equation, (lo, hi), solver='illinois', maxsteps=200)
        residual = abs(equation(w_star))

    logger.debug(f"stationary point a={a}: w*={mpmath.nstr(w_star, 15)}")
    return StationaryPoint(
        a=float(a),
        w_star=w_star,
        z_star=-w_star,
        asymptotic=float(a) + 1,
        residual=residual,
    )
