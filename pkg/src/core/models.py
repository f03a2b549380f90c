"""
Instance parameters, coupling sequences and occupations shared by every module.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from src.core.numeric import Number, as_fraction
from src.errors import GrowthViolation, InvalidParams

logger = logging.getLogger(__name__)

DEFAULT_IMAX = 8

# Float inputs arrive through their repr; r**i of such a float can differ
# from the exact power in the last digit. Exact inputs get no slack.
GROWTH_RTOL = Fraction(1, 10 ** 12)


@dataclass(frozen=True)
class ModelParams:
    """The instance (N, p, r, imax, eps) every computation is relative to."""
    N: int
    p: Fraction
    r: Fraction = Fraction(1)
    imax: int = DEFAULT_IMAX
    eps: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, 'p', as_fraction(self.p))
        object.__setattr__(self, 'r', as_fraction(self.r))
        object.__setattr__(self, 'eps', as_fraction(self.eps))
        if int(self.N) != self.N:
            raise InvalidParams(f"N must be an integer, got {self.N}")
        object.__setattr__(self, 'N', int(self.N))

        if not 0 < self.p < 1:
            raise InvalidParams(f"p must lie in (0, 1), got {self.p}")
        if self.r <= 0:
            raise InvalidParams(f"r must be positive, got {self.r}")
        if self.imax < 2:
            raise InvalidParams(f"imax must be at least 2, got {self.imax}")
        if self.eps <= 0:
            raise InvalidParams(f"eps must be positive, got {self.eps}")
        if self.N < 4 or self.p * self.N / 2 < 2:
            raise InvalidParams(
                f"N = {self.N}, p = {self.p} leaves pN/2 < 2; only the empty occupation exists"
            )

    @property
    def budget(self) -> int:
        """B = floor(pN/2), the ceiling on sum(i * alpha_i)."""
        return math.floor(self.p * self.N / 2)

    @property
    def half_budget(self) -> Fraction:
        """M~ = pN/4, the free/boxed threshold (kept exact)."""
        return self.p * self.N / 4

    @property
    def indices(self) -> List[int]:
        return list(range(2, self.imax + 1))

    def with_N(self, N: int) -> 'ModelParams':
        return ModelParams(N=N, p=self.p, r=self.r, imax=self.imax, eps=self.eps)

    def with_imax(self, imax: int) -> 'ModelParams':
        return ModelParams(N=self.N, p=self.p, r=self.r, imax=imax, eps=self.eps)

    def to_dict(self) -> Dict:
        return {
            'N': self.N,
            'p': str(self.p),
            'r': str(self.r),
            'imax': self.imax,
            'eps': str(self.eps),
            'budget': self.budget,
            'half_budget': str(self.half_budget),
        }


@dataclass(frozen=True)
class CouplingSequence:
    """The J_i (or J-bar_i) together with the radius certifying |J_i| <= r^i."""
    values: Dict[int, Fraction]
    r: Fraction

    def get(self, i: int) -> Fraction:
        return self.values.get(i, Fraction(0))

    def positive(self, imax: Optional[int] = None) -> List[int]:
        """P: indices with J_i >= 0 (absent indices count as zero couplings)."""
        return [i for i in self._index_range(imax) if self.get(i) >= 0]

    def negative(self, imax: Optional[int] = None) -> List[int]:
        """N: indices with J_i < 0."""
        return [i for i in self._index_range(imax) if self.get(i) < 0]

    def activity(self, i: int, params: ModelParams) -> Fraction:
        """c_i = J_i p^i N, the per-cluster weight in Z."""
        return self.get(i) * params.p ** i * params.N

    def activities(self, params: ModelParams) -> Dict[int, Fraction]:
        return {i: self.activity(i, params) for i in params.indices}

    def max_index(self) -> int:
        return max(self.values) if self.values else 2

    def to_dict(self) -> Dict[str, str]:
        return {str(i): str(v) for i, v in sorted(self.values.items())}

    def _index_range(self, imax: Optional[int]) -> Iterable[int]:
        top = imax if imax is not None else self.max_index()
        return range(2, top + 1)


def validate_couplings(values: Mapping, r: Number) -> CouplingSequence:
    """
    Build a coupling sequence, enforcing the growth certificate.

    Args:
        values: mapping index i >= 2 -> J_i (int, float, str or Fraction)
        r: growth radius

    Returns:
        CouplingSequence with exact rational values

    Raises:
        GrowthViolation: reporting the first index with |J_i| > r^i
    """
    inexact_r = isinstance(r, float)
    r = as_fraction(r)
    if r <= 0:
        raise InvalidParams(f"r must be positive, got {r}")

    couplings: Dict[int, Fraction] = {}
    inexact = set()
    for key, raw in values.items():
        i = int(key)
        if i < 2:
            raise InvalidParams(f"coupling index must be >= 2, got {i}")
        couplings[i] = as_fraction(raw)
        if inexact_r or isinstance(raw, float):
            inexact.add(i)

    for i in sorted(couplings):
        bound = r ** i
        allowed = bound * (1 + GROWTH_RTOL) if i in inexact else bound
        if abs(couplings[i]) > allowed:
            logger.error(f"Growth certificate fails at i={i}: |{couplings[i]}| > {bound}")
            raise GrowthViolation(i, couplings[i], bound)

    sequence = CouplingSequence(couplings, r)
    logger.debug(
        f"Validated couplings P={sequence.positive()} N={sequence.negative()} r={r}"
    )
    return sequence


@dataclass(frozen=True)
class Occupation:
    """A multi-index alpha = (alpha_2, alpha_3, ...); absent entries are zero."""
    alpha: Tuple[Tuple[int, int], ...] = field(default_factory=tuple)

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int]) -> 'Occupation':
        items = []
        for i, a in sorted(mapping.items()):
            if a < 0:
                raise InvalidParams(f"alpha_{i} must be non-negative, got {a}")
            if a:
                items.append((int(i), int(a)))
        return cls(tuple(items))

    def get(self, i: int) -> int:
        for index, value in self.alpha:
            if index == i:
                return value
        return 0

    def as_dict(self) -> Dict[int, int]:
        return dict(self.alpha)

    @property
    def weight(self) -> int:
        return occupation_weight(self)

    def is_admissible(self, budget: int) -> bool:
        return self.weight <= budget

    def __str__(self) -> str:
        inner = ', '.join(f"{i}:{a}" for i, a in self.alpha)
        return '{' + inner + '}'


def occupation_weight(occupation: Occupation) -> int:
    """sum(i * alpha_i)."""
    return sum(i * a for i, a in occupation.alpha)
