"""
High-occupation bound: Q(alpha) dominates every term of Z, and ln Q <= N f(x)
with f maximized by Lagrange multipliers over sum(i x_i) >= m~.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
from scipy.special import gammaln

from src.bounds.report import BoundReport
from src.core.enumeration import count_occupations, enumerate_occupations
from src.core.models import ModelParams, Occupation
from src.core.numeric import as_fraction, log_abs
from src.errors import BudgetOverflow, NoRoot, PreconditionViolated
from src.settings import settings

logger = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-12
SAMPLE_INDEX_CUTOFF = 10


def eval_Q(alpha, p, r, N: int, prec: Optional[int] = None) -> Tuple[Fraction, mpmath.mpf]:
    """
    Q = prod ((pr)^i N)^alpha_i / alpha_i!, exactly, together with ln Q.
    """
    if not isinstance(alpha, Occupation):
        alpha = Occupation.from_mapping(alpha)
    pr = as_fraction(p) * as_fraction(r)
    Q = Fraction(1)
    for i, a in alpha.alpha:
        activity = pr ** i * N
        for k in range(1, a + 1):
            Q *= activity / k
    ln_Q, _ = log_abs(Q, prec)
    return Q, ln_Q


def log_Q_batch(alphas: np.ndarray, indices: Sequence[int], p, r, N: int) -> np.ndarray:
    """ln Q for each row of an occupation matrix (columns follow indices)."""
    indices = np.asarray(indices, dtype=float)
    log_activity = indices * np.log(float(p) * float(r)) + np.log(N)
    return alphas @ log_activity - gammaln(alphas + 1).sum(axis=1)


@dataclass(frozen=True)
class OccupationBound:
    """
    Maximum of f(x) = sum_i [i x_i ln(pr) - x_i ln x_i + x_i] under sum(i x_i) >= m~.

    q solves sum q^i = m~; q_weighted solves sum i q^i = m~ and locates the
    constrained maximizer x_i = q_weighted^i. imax None means all i >= 2.
    constraint_residual and q_residual are the two equations' residuals.
    """
    m_tilde: float
    p: float
    r: float
    imax: Optional[int]
    q: Optional[float]
    q_weighted: float
    constrained: bool
    f_max: float
    constraint_residual: float
    q_residual: float
    N: Optional[int] = None

    @property
    def F(self) -> Optional[float]:
        return None if self.N is None else self.N * self.f_max

    @property
    def F_asym(self) -> Optional[float]:
        """-N m~ |ln(p / sqrt(m~))|, the small-p form of F."""
        if self.N is None:
            return None
        return -self.N * self.m_tilde * abs(float(np.log(self.p / np.sqrt(self.m_tilde))))

    def maximizer(self, indices: Sequence[int]) -> Dict[int, float]:
        base = self.q_weighted if self.constrained else self.p * self.r
        return {i: base ** i for i in indices}

    def f(self, x: Dict[int, float]) -> float:
        return objective(x, self.p, self.r)

    def to_dict(self) -> Dict:
        return {
            'm_tilde': self.m_tilde,
            'p': self.p,
            'r': self.r,
            'imax': self.imax,
            'q': self.q,
            'q_weighted': self.q_weighted,
            'constrained': self.constrained,
            'f_max': self.f_max,
            'F': self.F,
            'F_asym': self.F_asym,
            'constraint_residual': self.constraint_residual,
            'q_residual': self.q_residual,
        }


def objective(x: Dict[int, float], p: float, r: float) -> float:
    log_pr = float(np.log(p * r))
    total = 0.0
    for i, value in x.items():
        if value > 0:
            total += i * value * log_pr - value * np.log(value) + value
    return float(total)


def _power_sum(q, imax: Optional[int], weighted: bool):
    if imax is None:
        if weighted:
            return q ** 2 * (2 - q) / (1 - q) ** 2
        return q ** 2 / (1 - q)
    return mpmath.fsum((i if weighted else 1) * q ** i for i in range(2, imax + 1))


def _solve(m_tilde, imax: Optional[int], weighted: bool):
    lo = mpmath.mpf(0)
    if imax is None:
        hi = mpmath.mpf(1) - mpmath.mpf(10) ** -30
    else:
        hi = mpmath.mpf(1)
        while _power_sum(hi, imax, weighted) <= m_tilde:
            hi *= 2

    def equation(q):
        return _power_sum(q, imax, weighted) - m_tilde

    return mpmath.findroot(equation, (lo, hi), solver='illinois', maxsteps=400)


def occupation_bound(m_tilde, p, r=1, imax: Optional[int] = None, N: Optional[int] = None,
                     prec: Optional[int] = None) -> OccupationBound:
    """
    Solve the Lagrange problem at m~.

    Raises:
        PreconditionViolated: if m~ <= 0 or pr >= 1
        NoRoot: if sum_{i=2}^{imax} q^i = m~ has no root in (0, 1)
    """
    m_tilde, p, r = float(m_tilde), float(p), float(r)
    if m_tilde <= 0:
        raise PreconditionViolated(f"m~ must be positive, got {m_tilde}")
    if p * r >= 1:
        raise PreconditionViolated(f"pr = {p * r} must be below 1")

    with mpmath.workprec(prec or settings.precision_bits):
        target = mpmath.mpf(m_tilde)
        if imax is None:
            q = (-target + mpmath.sqrt(target ** 2 + 4 * target)) / 2
        elif m_tilde >= imax - 1:
            logger.error(f"m~={m_tilde} outside the range of sum_(i=2)^{imax} q^i on (0, 1)")
            raise NoRoot(f"sum of q^i for i = 2..{imax} stays below {imax - 1} <= m~ = {m_tilde}")
        else:
            q = _solve(target, imax, weighted=False)

        q_weighted = _solve(target, imax, weighted=True)
        residual = abs(_power_sum(q_weighted, imax, weighted=True) - target)
        q_residual = abs(_power_sum(q, imax, weighted=False) - target)

        pr = mpmath.mpf(p) * mpmath.mpf(r)
        constrained = _power_sum(pr, imax, weighted=True) < target
        if constrained:
            f_max = target * mpmath.log(pr / q_weighted) + _power_sum(q_weighted, imax, weighted=False)
        else:
            f_max = _power_sum(pr, imax, weighted=False)

    bound = OccupationBound(
        m_tilde=m_tilde, p=p, r=r, imax=imax, q=float(q), q_weighted=float(q_weighted),
        constrained=bool(constrained), f_max=float(f_max), constraint_residual=float(residual),
        q_residual=float(q_residual), N=N,
    )
    logger.debug(f"occupation bound m~={m_tilde} p={p} r={r} imax={imax}: f_max={bound.f_max}")
    return bound


def sample_feasible_x(bound: OccupationBound, rng: np.random.Generator, count: int) -> List[Dict[int, float]]:
    """Random x >= 0 with sum(i x_i) >= m~: half spread points, half near the maximizer."""
    top = bound.imax or SAMPLE_INDEX_CUTOFF
    indices = np.arange(2, top + 1)
    optimum = np.array([bound.maximizer(indices)[i] for i in indices])
    samples = []
    for k in range(count):
        if k % 2:
            x = optimum * np.exp(rng.normal(0.0, 0.3, size=len(indices)))
        else:
            x = rng.random(len(indices)) ** 3
        weight = float(indices @ x)
        if weight < bound.m_tilde:
            x = x * bound.m_tilde * (1 + rng.exponential(0.2)) / weight
        samples.append({int(i): float(v) for i, v in zip(indices, x)})
    return samples


def lagrange_optimality_check(bound: OccupationBound, count: int = 10000, seed: int = 0) -> BoundReport:
    """f(x) <= f_max for random feasible x."""
    rng = np.random.default_rng(seed)
    best = max(bound.f(x) for x in sample_feasible_x(bound, rng, count))
    return BoundReport.compare(
        'lagrange_optimality', best, bound.f_max,
        {'samples': count, 'm_tilde': bound.m_tilde, 'constrained': bound.constrained},
        seed=seed,
    )


def high_occupations(params: ModelParams, term_cap: Optional[int] = None) -> np.ndarray:
    """Matrix of all admissible occupations with sum(i alpha_i) >= M~ (columns 2..imax)."""
    term_cap = term_cap or settings.term_cap
    count = count_occupations(params.indices, params.budget)
    if count > term_cap:
        raise BudgetOverflow(count, term_cap, f"high-occupation sampling at N={params.N}")
    rows = [
        [occupation.get(i) for i in params.indices]
        for occupation in enumerate_occupations(params.indices, params.budget)
        if occupation.weight >= params.half_budget
    ]
    return np.array(rows, dtype=float).reshape(-1, len(params.indices))


def domination_check(params: ModelParams, samples: int = 10000, seed: int = 0,
                     prec: Optional[int] = None) -> BoundReport:
    """ln Q(alpha) <= F over random admissible alpha with sum(i alpha_i) >= pN/4."""
    rng = np.random.default_rng(seed)
    bound = occupation_bound(params.half_budget / params.N, params.p, params.r, params.imax, params.N, prec)
    pool = high_occupations(params)
    if not len(pool):
        return BoundReport.compare('high_occupation_domination', None, bound.F, {'samples': 0}, seed)
    chosen = pool[rng.integers(0, len(pool), size=samples)]
    logs = log_Q_batch(chosen, params.indices, params.p, params.r, params.N)
    worst = int(np.argmax(logs))
    violations = int(np.sum(logs > bound.F))
    details = {
        'samples': samples,
        'pool': len(pool),
        'violations': violations,
        'worst_alpha': {str(i): int(a) for i, a in zip(params.indices, chosen[worst]) if a},
        'F_asym': bound.F_asym,
        'q': bound.q,
        'q_weighted': bound.q_weighted,
        'constraint_residual': bound.constraint_residual,
        'q_residual': bound.q_residual,
    }
    return BoundReport.compare('high_occupation_domination', float(logs[worst]), bound.F, details, seed)
