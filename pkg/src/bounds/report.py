"""
BoundReport: one instantiated inequality lhs <= rhs.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Optional

import mpmath


def as_number(value) -> Optional[float]:
    """Plain float for reports; None stands for ln 0 = -inf."""
    if value is None:
        return None
    if isinstance(value, (Fraction, mpmath.mpf, int)):
        value = float(value)
    value = float(value)
    if math.isinf(value) and value < 0:
        return None
    return value


@dataclass(frozen=True)
class BoundReport:
    """
    lhs <= rhs checked on one instance.

    lhs None means ln 0: the left side is -inf and the bound holds.
    """
    name: str
    lhs: Optional[float]
    rhs: float
    margin: Optional[float]
    holds: bool
    details: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None

    @classmethod
    def compare(cls, name: str, lhs, rhs, details: Optional[Dict[str, Any]] = None,
                seed: Optional[int] = None, strict: bool = False) -> 'BoundReport':
        lhs, rhs = as_number(lhs), as_number(rhs)
        if lhs is None:
            return cls(name, None, rhs, None, True, details or {}, seed)
        margin = rhs - lhs
        holds = margin > 0 if strict else margin >= 0
        return cls(name, lhs, rhs, margin, holds, details or {}, seed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'lhs': self.lhs,
            'rhs': self.rhs,
            'margin': self.margin,
            'holds': self.holds,
            'seed': self.seed,
            'details': self.details,
        }
