"""
Exact enumeration of occupations under the weight constraint sum(i * alpha_i) <= budget.
"""

from typing import Dict, Iterable, Iterator, List, Mapping, Optional

from src.core.models import Occupation


def enumerate_occupations(
    indices: Iterable[int],
    budget: int,
    caps: Optional[Mapping[int, int]] = None,
    fixed: Optional[Mapping[int, int]] = None,
) -> Iterator[Occupation]:
    """
    Yield every occupation supported on `indices` with weight <= budget, once.

    The largest index varies slowest and the smallest fastest, so for {2, 3}
    the stream reads (0,0), (1,0), (2,0), ..., (0,1), (1,1), ...

    Args:
        indices: finite index set (may be empty)
        budget: non-negative integer ceiling
        caps: optional per-index upper bounds on alpha_i
        fixed: optional pre-assigned values; their weight is charged to the
            budget and they are included in every yielded occupation. This is
            how a stream is split by prefix across workers.
    """
    order = sorted(set(indices) - set(fixed or {}), reverse=True)
    base: Dict[int, int] = dict(fixed or {})
    remaining = budget - sum(i * a for i, a in base.items())
    if remaining < 0:
        return
    caps = caps or {}

    def walk(position: int, remaining: int, current: Dict[int, int]) -> Iterator[Occupation]:
        if position == len(order):
            yield Occupation.from_mapping(current)
            return
        i = order[position]
        top = remaining // i
        if i in caps:
            top = min(top, caps[i])
        for a in range(top + 1):
            current[i] = a
            yield from walk(position + 1, remaining - i * a, current)
        del current[i]

    yield from walk(0, remaining, dict(base))


def count_occupations(
    indices: Iterable[int],
    budget: int,
    caps: Optional[Mapping[int, int]] = None,
) -> int:
    """Number of occupations enumerate_occupations would yield, by weight counting."""
    if budget < 0:
        return 0
    caps = caps or {}
    ways: List[int] = [0] * (budget + 1)
    ways[0] = 1
    for i in sorted(set(indices)):
        top = budget // i
        if i in caps:
            top = min(top, caps[i])
        updated = [0] * (budget + 1)
        for w, count in enumerate(ways):
            if not count:
                continue
            for a in range(top + 1):
                v = w + i * a
                if v > budget:
                    break
                updated[v] += count
        ways = updated
    return sum(ways)
