"""
Free/boxed chunk dissection of the constrained sum, at every level.

A chunk fixes alpha_i = t_i on P (and on the overflow sets B_1..B_n of the
negative indices) and sums the remaining negative indices either under the
budget (free) or over a box (boxed). The chunks are disjoint and together
cover every admissible occupation exactly once.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import mpmath

from src.core.enumeration import count_occupations, enumerate_occupations
from src.core.models import CouplingSequence, ModelParams, Occupation
from src.core.numeric import to_mpf
from src.dissection.weights import WeightProfile, box_limits, compute_cap, weights
from src.errors import InvalidParams, TreeOverflow
from src.partition.entropy import beta_tilde
from src.partition.series import TermTable, weight_coefficients
from src.settings import settings

Layer = Tuple[Tuple[int, int], ...]
ChunkKey = Tuple[int, str, Tuple[Layer, ...]]


class ChunkKind(str, Enum):
    FREE = 'free'
    BOXED = 'boxed'


@dataclass(frozen=True)
class Chunk:
    """
    One node of the dissection.

    layers[0] is the assignment on P (zeros included), layers[k] the
    assignment on B_k. residual_limits are the inherited bounds
    alpha_i <= m_{k-1}(i) on the residual (empty at level 0).
    """
    level: int
    kind: ChunkKind
    layers: Tuple[Layer, ...]
    residual: Tuple[int, ...]
    caps: Tuple[Fraction, ...]
    R_cumulative: int
    remaining_budget: int
    box_limits: Dict[int, int] = field(default_factory=dict)
    residual_limits: Dict[int, int] = field(default_factory=dict)
    parent: Optional[ChunkKey] = None

    @property
    def key(self) -> ChunkKey:
        return chunk_key(self.level, self.kind, self.layers)

    @property
    def assigned(self) -> Dict[int, int]:
        values: Dict[int, int] = {}
        for layer in self.layers:
            values.update(layer)
        return values

    @property
    def fully_assigned(self) -> bool:
        return not self.residual

    def summation_caps(self) -> Dict[int, Optional[int]]:
        """Per residual index cap on alpha_i (None: only the budget applies)."""
        if self.kind is ChunkKind.BOXED:
            return {i: self.box_limits[i] for i in self.residual}
        return {i: self.residual_limits.get(i) for i in self.residual}

    def contains(self, occupation: Occupation) -> bool:
        if any(occupation.get(i) != t for i, t in self.assigned.items()):
            return False
        allowed = set(self.assigned) | set(self.residual)
        if any(i not in allowed for i, _ in occupation.alpha):
            return False
        residual_weight = 0
        for i, cap in self.summation_caps().items():
            a = occupation.get(i)
            if cap is not None and a > cap:
                return False
            residual_weight += i * a
        return residual_weight <= self.remaining_budget

    def to_dict(self) -> Dict:
        return {
            'level': self.level,
            'kind': self.kind.value,
            'assigned': {str(i): t for i, t in sorted(self.assigned.items())},
            'overflow_sets': [[i for i, _ in layer] for layer in self.layers[1:]],
            'residual': list(self.residual),
            'caps': [str(c) for c in self.caps],
            'box_limits': {str(i): m for i, m in sorted(self.box_limits.items())},
            'residual_limits': {str(i): m for i, m in sorted(self.residual_limits.items())},
            'R_cumulative': self.R_cumulative,
        }


def chunk_key(level: int, kind: ChunkKind, layers: Sequence[Layer]) -> ChunkKey:
    return (level, ChunkKind(kind).value, tuple(layers))


class ChunkTree:
    """Every chunk of one instance, in construction (depth-first) order."""

    def __init__(self, params: ModelParams, couplings: CouplingSequence, profile: WeightProfile):
        self.params = params
        self.couplings = couplings
        self.profile = profile
        self.chunks: List[Chunk] = []
        self.by_key: Dict[ChunkKey, Chunk] = {}

    def add(self, chunk: Chunk):
        self.chunks.append(chunk)
        self.by_key[chunk.key] = chunk

    def __len__(self) -> int:
        return len(self.chunks)

    def __iter__(self) -> Iterator[Chunk]:
        return iter(self.chunks)

    def __contains__(self, key) -> bool:
        return key in self.by_key

    def depth(self) -> int:
        return max((c.level for c in self.chunks), default=0)

    def term_count(self, chunk: Chunk) -> int:
        return term_count(chunk)

    def evaluate(self, dressed: bool = False, precision_bits: Optional[int] = None) -> List:
        evaluator = ChunkEvaluator(self.params, self.couplings, precision_bits)
        return [evaluator.value(chunk, dressed) for chunk in self.chunks]

    def to_json(self, values: Optional[Sequence] = None) -> str:
        records = []
        for n, chunk in enumerate(self.chunks):
            record = chunk.to_dict()
            record['term_count'] = term_count(chunk)
            if values is not None:
                record['value'] = str(values[n])
            records.append(record)
        document = {
            'params': self.params.to_dict(),
            'couplings': self.couplings.to_dict(),
            'chunk_count': len(self.chunks),
            'chunks': records,
        }
        return json.dumps(document, sort_keys=True, indent=2)


class ChunkBuilder:
    """Expands the dissection of one instance and classifies occupations into it."""

    def __init__(
        self,
        params: ModelParams,
        couplings: CouplingSequence,
        profile: Optional[WeightProfile] = None,
        node_cap: Optional[int] = None,
    ):
        self.params = params
        self.couplings = couplings
        self.positive = couplings.positive(params.imax)
        self.negative = couplings.negative(params.imax)
        self.profile = profile or weights(params.indices, params.eps)
        self.node_cap = node_cap or settings.node_cap
        self._caps: Dict[Tuple[Tuple[int, ...], int], Tuple[Fraction, Dict[int, int]]] = {}
        self.logger = logging.getLogger(__name__)

    def cap(self, residual: Sequence[int], remaining: int) -> Tuple[Fraction, Dict[int, int]]:
        """(C, m) for a residual set and remaining budget, cached."""
        key = (tuple(residual), remaining)
        if key not in self._caps:
            C = compute_cap(residual, self.profile, remaining)
            self._caps[key] = (C, box_limits(C, self.profile, residual, remaining))
        return self._caps[key]

    def build(self) -> ChunkTree:
        tree = ChunkTree(self.params, self.couplings, self.profile)
        budget = self.params.budget
        for t in enumerate_occupations(self.positive, budget):
            layer = tuple((i, t.get(i)) for i in self.positive)
            self._expand(tree, 0, (layer,), t.weight, tuple(self.negative), {}, (), None)

        self.logger.info(
            f"Built {len(tree)} chunks (depth {tree.depth()}) for N={self.params.N}, "
            f"p={self.params.p}, imax={self.params.imax}, budget={budget}, "
            f"P={self.positive}, N-set={self.negative}"
        )
        return tree

    def _expand(self, tree, level, layers, R, residual, limits, caps, parent):
        remaining = self.params.budget - R
        if R >= self.params.half_budget:
            self._add(tree, Chunk(level, ChunkKind.FREE, layers, residual, caps, R, remaining,
                                  residual_limits=dict(limits), parent=parent))
            return
        if not residual:
            self._add(tree, Chunk(level, ChunkKind.BOXED, layers, residual, caps, R, remaining,
                                  parent=parent))
            return

        C, m = self.cap(residual, remaining)
        boxed = Chunk(level, ChunkKind.BOXED, layers, residual, caps + (C,), R, remaining,
                      box_limits=m, residual_limits=dict(limits), parent=parent)
        self._add(tree, boxed)

        for size in range(1, len(residual) + 1):
            for overflow in itertools.combinations(residual, size):
                for layer, weight in self._overflow_assignments(overflow, m, limits, remaining):
                    rest = tuple(i for i in residual if i not in overflow)
                    self._expand(tree, level + 1, layers + (layer,), R + weight, rest,
                                 {i: m[i] for i in rest}, caps + (C,), boxed.key)

    def _overflow_assignments(self, overflow, m, limits, remaining) -> Iterator[Tuple[Layer, int]]:
        """t_i in (m(i), limits(i)] on the overflow set, total weight within the budget."""
        floor_weight = sum(i * (m[i] + 1) for i in overflow)
        if floor_weight > remaining:
            return
        extra_caps = {}
        for i in overflow:
            if i in limits:
                extra_caps[i] = limits[i] - m[i] - 1
                if extra_caps[i] < 0:
                    return
        for extra in enumerate_occupations(overflow, remaining - floor_weight, caps=extra_caps):
            layer = tuple((i, m[i] + 1 + extra.get(i)) for i in overflow)
            yield layer, floor_weight + extra.weight

    def _add(self, tree: ChunkTree, chunk: Chunk):
        if len(tree) >= self.node_cap:
            self.logger.error(
                f"Chunk tree for N={self.params.N}, imax={self.params.imax} "
                f"passed node cap {self.node_cap}"
            )
            raise TreeOverflow(self.node_cap, f"N={self.params.N}, budget={self.params.budget}")
        self.logger.debug(f"chunk level={chunk.level} kind={chunk.kind.value} R={chunk.R_cumulative}")
        tree.add(chunk)

    def classify(self, occupation: Union[Occupation, Mapping[int, int]]) -> ChunkKey:
        """Follow the dissection down to the unique chunk containing the occupation."""
        if not isinstance(occupation, Occupation):
            occupation = Occupation.from_mapping(occupation)
        if not occupation.is_admissible(self.params.budget):
            raise InvalidParams(f"{occupation} exceeds the budget {self.params.budget}")
        if any(i not in self.params.indices for i, _ in occupation.alpha):
            raise InvalidParams(f"{occupation} uses indices outside 2..{self.params.imax}")

        layers = [tuple((i, occupation.get(i)) for i in self.positive)]
        R = sum(i * t for i, t in layers[0])
        residual = list(self.negative)
        level = 0
        while True:
            if R >= self.params.half_budget:
                return chunk_key(level, ChunkKind.FREE, layers)
            if not residual:
                return chunk_key(level, ChunkKind.BOXED, layers)
            _, m = self.cap(residual, self.params.budget - R)
            overflow = [i for i in residual if occupation.get(i) > m[i]]
            if not overflow:
                return chunk_key(level, ChunkKind.BOXED, layers)
            layers.append(tuple((i, occupation.get(i)) for i in overflow))
            R += sum(i * occupation.get(i) for i in overflow)
            residual = [i for i in residual if i not in overflow]
            level += 1


class ChunkEvaluator:
    """
    Chunk values: assigned factors times the residual sum.

    Residual sums depend only on (residual caps, remaining budget), plus the
    assigned weight when dressed, so they are shared across chunks.
    """

    def __init__(self, params: ModelParams, couplings: CouplingSequence,
                 precision_bits: Optional[int] = None):
        self.params = params
        self.precision_bits = precision_bits or settings.precision_bits
        self.activities = couplings.activities(params)
        self.table = TermTable(self.activities, params.budget)
        self._residual: Dict[Tuple, List[Fraction]] = {}
        self._beta: Dict[int, mpmath.mpf] = {}

    def coefficients(self, chunk: Chunk) -> List[Fraction]:
        caps = chunk.summation_caps()
        key = (tuple(sorted(caps.items())), chunk.remaining_budget)
        if key not in self._residual:
            factors = {i: (self.activities[i], cap) for i, cap in caps.items()}
            self._residual[key] = weight_coefficients(factors, chunk.remaining_budget, self.table)
        return self._residual[key]

    def value(self, chunk: Chunk, dressed: bool = False):
        assigned = self.table.product(chunk.assigned)
        coefficients = self.coefficients(chunk)
        if not dressed:
            return assigned * sum(coefficients, Fraction(0))
        if not assigned:
            return mpmath.mpf(0)
        with mpmath.workprec(self.precision_bits):
            total = mpmath.mpf(0)
            for w, coefficient in enumerate(coefficients):
                if coefficient:
                    total += self.beta(chunk.R_cumulative + w) * to_mpf(coefficient, self.precision_bits)
            return to_mpf(assigned, self.precision_bits) * total

    def beta(self, weight: int) -> mpmath.mpf:
        if weight not in self._beta:
            self._beta[weight] = beta_tilde(self.params.N, self.params.p, weight, self.precision_bits)
        return self._beta[weight]


@dataclass(frozen=True)
class TSplit:
    """Z = T1 + T2 + T3: level-0 boxed, higher boxed, and free chunk sums."""
    T1: Union[Fraction, mpmath.mpf]
    T2: Union[Fraction, mpmath.mpf]
    T3: Union[Fraction, mpmath.mpf]
    chunk_counts: Dict[str, int]

    @property
    def total(self):
        return self.T1 + self.T2 + self.T3


def build_chunks(params: ModelParams, couplings: CouplingSequence,
                 node_cap: Optional[int] = None) -> ChunkTree:
    return ChunkBuilder(params, couplings, node_cap=node_cap).build()


def classify_occupation(occupation, couplings: CouplingSequence, params: ModelParams) -> ChunkKey:
    return ChunkBuilder(params, couplings).classify(occupation)


def eval_chunk(chunk: Chunk, couplings: CouplingSequence, params: ModelParams,
               dressed: bool = False, precision_bits: Optional[int] = None):
    return ChunkEvaluator(params, couplings, precision_bits).value(chunk, dressed)


def term_count(chunk: Chunk) -> int:
    """Number of occupations the chunk sums over."""
    caps = {i: cap for i, cap in chunk.summation_caps().items() if cap is not None}
    return count_occupations(chunk.residual, chunk.remaining_budget, caps)


def split_T(chunks: Sequence[Chunk], values: Sequence) -> TSplit:
    """
    Reduce chunk values into T1 (level-0 boxed), T2 (boxed, level >= 1) and T3 (free).

    values must be aligned with chunks; exact rationals stay exact.
    """
    if len(chunks) != len(values):
        raise InvalidParams(f"{len(chunks)} chunks but {len(values)} values")
    zero = Fraction(0) if all(isinstance(v, Fraction) for v in values) else mpmath.mpf(0)
    sums = {'T1': zero, 'T2': zero, 'T3': zero}
    counts = {'T1': 0, 'T2': 0, 'T3': 0}
    for chunk, value in zip(chunks, values):
        if chunk.kind is ChunkKind.FREE:
            name = 'T3'
        elif chunk.level == 0:
            name = 'T1'
        else:
            name = 'T2'
        sums[name] += value
        counts[name] += 1
    return TSplit(sums['T1'], sums['T2'], sums['T3'], counts)
