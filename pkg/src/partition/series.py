"""
Truncated exponential series and their weight-graded products.

Z groups its terms by the weight w = sum(i * alpha_i); the coefficient of x^w in
prod_i sum_alpha (c_i x^i)^alpha / alpha! collects every term of that weight.
"""

from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple


class TermTable:
    """Cached exact terms c^k / k! for each index of an instance."""

    def __init__(self, activities: Mapping[int, Fraction], max_weight: int):
        self.activities = dict(activities)
        self.max_weight = max_weight
        self._terms: Dict[int, List[Fraction]] = {}

    def terms(self, i: int) -> List[Fraction]:
        """[c_i^k / k! for k = 0 .. max_weight // i]."""
        if i not in self._terms:
            self._terms[i] = exp_terms(self.activities[i], self.max_weight // i)
        return self._terms[i]

    def term(self, i: int, k: int) -> Fraction:
        table = self.terms(i)
        if k < len(table):
            return table[k]
        return exp_terms(self.activities[i], k)[k]

    def partial_sum(self, i: int, upper: int) -> Fraction:
        """sum_{k=0}^{upper} c_i^k / k!."""
        return sum(self.terms(i)[: upper + 1], Fraction(0))

    def product(self, assigned: Mapping[int, int]) -> Fraction:
        value = Fraction(1)
        for i, k in assigned.items():
            if k:
                value *= self.term(i, k)
        return value


def exp_terms(c: Fraction, count: int) -> List[Fraction]:
    """[c^k / k! for k = 0 .. count], built by the running ratio c / k."""
    terms = [Fraction(1)]
    for k in range(1, count + 1):
        terms.append(terms[-1] * c / k)
    return terms


def weight_coefficients(
    factors: Mapping[int, Tuple[Fraction, Optional[int]]],
    max_weight: int,
    table: Optional[TermTable] = None,
) -> List[Fraction]:
    """
    Coefficients of prod_i sum_{alpha <= cap_i} (c_i x^i)^alpha / alpha! up to x^max_weight.

    Args:
        factors: index -> (activity c_i, cap on alpha_i or None for no cap)
        max_weight: truncation degree (the remaining budget)
        table: optional shared term cache for the same activities

    Returns:
        list of exact rationals, entry w is the sum of all terms of weight w
    """
    if max_weight < 0:
        return []
    coefficients = [Fraction(0)] * (max_weight + 1)
    coefficients[0] = Fraction(1)

    for i, (c, cap) in sorted(factors.items()):
        top = max_weight // i
        if cap is not None:
            top = min(top, cap)
        terms = table.terms(i)[: top + 1] if table is not None else exp_terms(c, top)

        updated = [Fraction(0)] * (max_weight + 1)
        for w, value in enumerate(coefficients):
            if not value:
                continue
            for k, term in enumerate(terms):
                v = w + i * k
                if v > max_weight:
                    break
                updated[v] += value * term
        coefficients = updated

    return coefficients
