"""
Exact evaluators for Z, the dressed Z*, the factorized product and the target series.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Tuple, Union

import mpmath

from src.core.enumeration import count_occupations, enumerate_occupations
from src.core.models import CouplingSequence, ModelParams
from src.core.numeric import as_fraction, to_mpf
from src.errors import BudgetOverflow
from src.partition.entropy import beta_tilde
from src.partition.series import TermTable, weight_coefficients
from src.settings import settings

METHODS = ('series', 'enumerate')

BetaTilde = Callable[[int, int], Union[mpmath.mpf, Fraction, int]]


@dataclass(frozen=True)
class PartitionValue:
    """Value of a constrained sum with the bookkeeping of how it was formed."""
    value: Union[Fraction, mpmath.mpf]
    term_count: int
    budget_used: int
    method: str = 'series'


class PartitionEvaluator:
    """Evaluate Z and Z* for one instance."""

    def __init__(
        self,
        params: ModelParams,
        couplings: CouplingSequence,
        term_cap: Optional[int] = None,
        precision_bits: Optional[int] = None,
    ):
        self.params = params
        self.couplings = couplings
        self.term_cap = term_cap or settings.term_cap
        self.precision_bits = precision_bits or settings.precision_bits
        self.activities = couplings.activities(params)
        self.table = TermTable(self.activities, params.budget)
        self.logger = logging.getLogger(__name__)

    def term_count(self) -> int:
        return count_occupations(self.params.indices, self.params.budget)

    def eval_Z(self, method: str = 'series') -> PartitionValue:
        """
        Z = sum over admissible alpha of prod (J_i p^i N)^alpha_i / alpha_i!, exactly.

        Args:
            method: "series" groups terms by weight; "enumerate" walks every
                occupation. Both return the same rational.
        """
        count = self.term_count()
        if method == 'enumerate':
            self._check_cap(count)
            total = Fraction(0)
            for occupation in enumerate_occupations(self.params.indices, self.params.budget):
                total += self.table.product(occupation.as_dict())
        elif method == 'series':
            total = sum(self.weight_series(), Fraction(0))
        else:
            raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")

        self.logger.debug(
            f"Z(N={self.params.N}, p={self.params.p}, imax={self.params.imax}) "
            f"over {count} terms via {method}"
        )
        return PartitionValue(total, count, self.params.budget, method)

    def eval_Zstar(self, method: str = 'series', beta: Optional[BetaTilde] = None) -> PartitionValue:
        """
        Z* = sum over admissible alpha of beta~(N, w(alpha)) prod (J-bar_i p^i N)^alpha_i / alpha_i!.

        Args:
            method: "series" or "enumerate", as for eval_Z
            beta: replacement for beta~(N, w); a constant 1 reduces Z* to Z
        """
        beta = beta or self.beta_tilde
        count = self.term_count()
        with mpmath.workprec(self.precision_bits):
            total = mpmath.mpf(0)
            if method == 'enumerate':
                self._check_cap(count)
                for occupation in enumerate_occupations(self.params.indices, self.params.budget):
                    term = self.table.product(occupation.as_dict())
                    total += self._dress(beta(self.params.N, occupation.weight), term)
            elif method == 'series':
                for w, coefficient in enumerate(self.weight_series()):
                    if coefficient:
                        total += self._dress(beta(self.params.N, w), coefficient)
            else:
                raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
        return PartitionValue(total, count, self.params.budget, method)

    def beta_tilde(self, N: int, weight: int) -> mpmath.mpf:
        return beta_tilde(N, self.params.p, weight, self.precision_bits)

    def weight_series(self):
        """Coefficient w = sum of the Z terms with sum(i alpha_i) = w, for w <= budget."""
        factors = {i: (c, None) for i, c in self.activities.items()}
        return weight_coefficients(factors, self.params.budget, self.table)

    def factorized_Z(self) -> Fraction:
        """prod_i sum_{alpha_i <= floor(B/i)} (J_i p^i N)^alpha_i / alpha_i!."""
        value = Fraction(1)
        for i in self.params.indices:
            value *= self.table.partial_sum(i, self.params.budget // i)
        return value

    def complementary_sum(self) -> Fraction:
        """Terms of the bounding box alpha_i <= floor(B/i) whose weight exceeds B."""
        box = {i: self.params.budget // i for i in self.params.indices}
        top = sum(i * m for i, m in box.items())
        factors = {i: (self.activities[i], box[i]) for i in self.params.indices}
        coefficients = weight_coefficients(factors, top)
        return sum(coefficients[self.params.budget + 1:], Fraction(0))

    def imax_increment_bound(self) -> Tuple[Fraction, Fraction]:
        """
        |Z(imax+1) - Z(imax)| and its bound from the dominating couplings r^i.

        Every new term carries alpha_{imax+1} >= 1 and is dominated termwise by
        the same term with J_i replaced by r^i.
        """
        wider = self.params.with_imax(self.params.imax + 1)
        difference = eval_Z(wider, self.couplings).value - self.eval_Z().value

        radius = self.couplings.r
        dominating = CouplingSequence(
            {i: radius ** i for i in wider.indices}, radius
        )
        bound = eval_Z(wider, dominating).value - eval_Z(self.params, dominating).value
        return abs(difference), bound

    def _dress(self, beta_value, term: Fraction):
        if isinstance(beta_value, (int, Fraction)) and beta_value == 1:
            return to_mpf(term, self.precision_bits)
        return beta_value * to_mpf(term, self.precision_bits)

    def _check_cap(self, count: int):
        if count > self.term_cap:
            self.logger.error(
                f"Enumeration of {count} terms refused (cap {self.term_cap}, "
                f"N={self.params.N}, budget={self.params.budget})"
            )
            raise BudgetOverflow(count, self.term_cap, f"N={self.params.N}, imax={self.params.imax}")


def eval_Z(params: ModelParams, couplings: CouplingSequence, method: str = 'series',
           term_cap: Optional[int] = None) -> PartitionValue:
    return PartitionEvaluator(params, couplings, term_cap=term_cap).eval_Z(method)


def eval_Zstar(params: ModelParams, couplings: CouplingSequence, method: str = 'series',
               beta: Optional[BetaTilde] = None, precision_bits: Optional[int] = None,
               term_cap: Optional[int] = None) -> PartitionValue:
    evaluator = PartitionEvaluator(params, couplings, term_cap=term_cap, precision_bits=precision_bits)
    return evaluator.eval_Zstar(method, beta)


def factorized_Z(params: ModelParams, couplings: CouplingSequence) -> Fraction:
    return PartitionEvaluator(params, couplings).factorized_Z()


def target_series(couplings: CouplingSequence, p, imax: Optional[int] = None) -> Fraction:
    """sum_{i=2}^{imax} p^i J_i, exact for rational p and J."""
    p = as_fraction(p)
    top = imax if imax is not None else couplings.max_index()
    return sum((p ** i * couplings.get(i) for i in range(2, top + 1)), Fraction(0))

