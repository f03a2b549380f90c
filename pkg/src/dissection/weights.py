"""
Weight profile U_i = i^-(2+eps), the cap C of a residual index set and its box limits.

All three are exact: floor(x U_i) jumps at x = n * s_i with s_i = 1 / U_i, so the
cap is found by scanning jump points in increasing order.
"""

import heapq
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, Mapping, Optional

import mpmath

from src.core.numeric import as_fraction, mpf_to_fraction
from src.errors import EmptyResidual, InvalidParams
from src.settings import settings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightProfile:
    """U_i for every index of an instance, with the jump spacing s_i = 1/U_i."""
    eps: Fraction
    U: Dict[int, Fraction]
    spacing: Dict[int, Fraction]

    def is_decreasing(self) -> bool:
        values = [self.U[i] for i in sorted(self.U)]
        return all(a > b for a, b in zip(values, values[1:]))

    def restrict(self, indices: Iterable[int]) -> 'WeightProfile':
        keep = set(indices)
        return WeightProfile(
            self.eps,
            {i: u for i, u in self.U.items() if i in keep},
            {i: s for i, s in self.spacing.items() if i in keep},
        )


def weights(indexset: Iterable[int], eps=1, prec: Optional[int] = None) -> WeightProfile:
    """
    Build the profile U_i = i^-(2+eps).

    Integer exponents give exact rationals; other exponents are evaluated in
    mpmath and then held as the exact rational of that binary value, so the
    cap scan stays exact relative to the stored profile.
    """
    eps = as_fraction(eps)
    if eps <= 0:
        raise InvalidParams(f"eps must be positive, got {eps}")
    exponent = 2 + eps

    spacing: Dict[int, Fraction] = {}
    for i in sorted(set(indexset)):
        if exponent.denominator == 1:
            spacing[i] = Fraction(i) ** exponent.numerator
        else:
            with mpmath.workprec(prec or settings.precision_bits):
                power = mpmath.power(i, mpmath.fdiv(exponent.numerator, exponent.denominator))
            spacing[i] = mpf_to_fraction(power)

    return WeightProfile(eps, {i: 1 / s for i, s in spacing.items()}, spacing)


def compute_cap(residual: Iterable[int], profile: WeightProfile, remaining_budget: int) -> Fraction:
    """
    C = sup{x : sum_{i in residual} i floor(x U_i) <= remaining_budget}.

    Args:
        residual: nonempty index set still summed over
        profile: weight profile covering the residual
        remaining_budget: non-negative integer

    Returns:
        the first jump point at which the cost exceeds the budget

    Raises:
        EmptyResidual: if residual is empty
    """
    residual = sorted(set(residual))
    if not residual:
        raise EmptyResidual("cap requested for an empty residual; the chunk is fully assigned")
    if remaining_budget < 0:
        raise InvalidParams(f"remaining budget must be non-negative, got {remaining_budget}")

    heap = [(profile.spacing[i], i, 1) for i in residual]
    heapq.heapify(heap)
    cost = 0
    while True:
        x, i, n = heapq.heappop(heap)
        cost += i
        heapq.heappush(heap, ((n + 1) * profile.spacing[i], i, n + 1))
        # coordinates jumping at the same x must all be charged before testing
        while heap[0][0] == x:
            _, j, k = heapq.heappop(heap)
            cost += j
            heapq.heappush(heap, ((k + 1) * profile.spacing[j], j, k + 1))
        if cost > remaining_budget:
            return x


def box_limits(
    C: Fraction,
    profile: WeightProfile,
    residual: Iterable[int],
    remaining_budget: int,
) -> Dict[int, int]:
    """
    m(i) = floor(x U_i) at the left limit x -> C-, i.e. the jumps strictly below C.

    This is the largest box of the profile's shape that fits the budget; the
    floor taken at C itself can overshoot it.
    """
    limits: Dict[int, int] = {}
    for i in sorted(set(residual)):
        quotient = C / profile.spacing[i]
        limits[i] = quotient.numerator // quotient.denominator
        if quotient.denominator == 1:
            limits[i] -= 1

    used = box_weight(limits)
    if used > remaining_budget:
        logger.error(f"Box {limits} at C={C} uses {used} > remaining budget {remaining_budget}")
        raise InvalidParams(f"C = {C} is not the cap of residual {sorted(limits)}")
    return limits


def box_weight(limits: Mapping[int, int]) -> int:
    return sum(i * m for i, m in limits.items())
