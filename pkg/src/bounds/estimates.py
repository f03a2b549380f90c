"""
Explicit estimates on the free-chunk sum T3 and on the level-zero boxed sum T1.
"""

import itertools
import logging
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import mpmath
import numpy as np
from scipy.special import gammaln

from src.bounds.occupation import occupation_bound
from src.bounds.report import BoundReport
from src.core.enumeration import count_occupations, enumerate_occupations
from src.core.models import CouplingSequence, ModelParams
from src.core.numeric import log_abs, to_mpf
from src.dissection.chunks import Chunk, ChunkEvaluator, ChunkKind, ChunkTree, build_chunks
from src.errors import BudgetOverflow, PreconditionViolated
from src.partition.series import TermTable, weight_coefficients
from src.settings import settings

logger = logging.getLogger(__name__)

# (1/2 + i)! >= i! Gamma(3/2)
HALF_POWER_C = 2 / math.sqrt(math.pi)
# m~ of the A factor, as a share of p
A_MTILDE_SHARE = Fraction(1, 8)


def tail_g(a, n: int, prec: Optional[int] = None) -> mpmath.mpf:
    """g(a, n) = e^{|a|} sum_{i>n} |a|^i / i! = e^{2|a|} P(n+1, |a|)."""
    if n < 0:
        raise PreconditionViolated(f"g(a, n) needs n >= 0, got {n}")
    with mpmath.workprec(prec or settings.precision_bits):
        x = abs(to_mpf(a, prec)) if isinstance(a, Fraction) else abs(mpmath.mpf(a))
        if x == 0:
            return mpmath.mpf(0)
        return mpmath.exp(2 * x) * mpmath.gammainc(n + 1, 0, x, regularized=True)


def product_inequality_check(x: Sequence[float], seed: Optional[int] = None) -> BoundReport:
    """prod(1 + x_i) - 1 <= e sum x_i for x_i >= 0 with sum x_i <= 1."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise PreconditionViolated("product inequality needs x_i >= 0")
    total = float(x.sum())
    if total > 1:
        raise PreconditionViolated(f"product inequality needs sum x_i <= 1, got {total}")
    lhs = float(np.prod(1 + x) - 1)
    return BoundReport.compare('product_inequality', lhs, math.e * total, {'sum_x': total}, seed)


def half_power_series_check(a, prec: Optional[int] = None) -> BoundReport:
    """sum_k a^{k/2} / (k/2)! <= (1 + c sqrt(a)) e^a with c = 1 / Gamma(3/2)."""
    if a <= 0:
        raise PreconditionViolated(f"half-power series needs a > 0, got {a}")
    with mpmath.workprec(prec or settings.precision_bits):
        a_mp = mpmath.mpf(a)
        root = mpmath.sqrt(a_mp)
        total = mpmath.mpf(0)
        k = 0
        while True:
            term = root ** k * mpmath.rgamma(mpmath.mpf(k) / 2 + 1)
            total += term
            if k > 2 * a_mp + 10 and term < total * mpmath.eps:
                break
            k += 1
        rhs = (1 + root / mpmath.gamma(mpmath.mpf(3) / 2)) * mpmath.exp(a_mp)
    return BoundReport.compare('half_power_series', total, rhs, {'a': float(a), 'terms': k + 1})


def T3_overestimate(params: ModelParams, couplings: Optional[CouplingSequence] = None,
                    tree: Optional[ChunkTree] = None, prec: Optional[int] = None) -> List[BoundReport]:
    """
    |T3| <= sum of Q over sum(i alpha_i) >= pN/4, and |T3| <= A B with

        ln A <= N f_max at m~ = p/8 (the half powers alpha/2 carry half the weight)
        ln B <= sum_i [ln(1 + c sqrt(a_i)) + a_i],  a_i = (pr)^i N

    Couplings default to the dominating J_i = r^i. Both links are returned as
    separate records, in log form.
    """
    prec = prec or settings.precision_bits
    if couplings is None:
        couplings = CouplingSequence({i: params.r ** i for i in params.indices}, params.r)
    tree = tree or build_chunks(params, couplings)
    evaluator = ChunkEvaluator(params, couplings, prec)
    T3 = sum((evaluator.value(c) for c in tree if c.kind is ChunkKind.FREE), Fraction(0))
    ln_T3, _ = log_abs(T3, prec)

    pr = params.p * params.r
    dominating = {i: pr ** i * params.N for i in params.indices}
    coefficients = weight_coefficients({i: (c, None) for i, c in dominating.items()}, params.budget)
    threshold = math.ceil(params.half_budget)
    sum_Q = sum(coefficients[threshold:], Fraction(0))
    ln_sum_Q, _ = log_abs(sum_Q, prec)

    m_tilde = params.p * A_MTILDE_SHARE
    half = occupation_bound(m_tilde, params.p, params.r, params.imax, params.N, prec)
    ln_A = half.F
    ln_B = sum(math.log1p(HALF_POWER_C * math.sqrt(float(a))) + float(a) for a in dominating.values())
    asymptotic = occupation_bound(params.p / 4, params.p, params.r, params.imax, params.N, prec).F_asym

    details = {
        'N': params.N,
        'T3': str(T3),
        'm_tilde_A': str(m_tilde),
        'ln_A': ln_A,
        'ln_B': ln_B,
        'ln_A_asymptotic': asymptotic,
        'free_chunks': sum(1 for c in tree if c.kind is ChunkKind.FREE),
    }
    within = BoundReport.compare('T3_within_sum_Q', ln_T3, ln_sum_Q, {'N': params.N, 'T3': str(T3)})
    if not within.holds:
        logger.error(f"|T3| exceeds the Q sum at N={params.N}, p={params.p}")
    return [within, BoundReport.compare('T3_overestimate', ln_T3, ln_A + ln_B, details)]


def level_zero_boxed(tree: ChunkTree) -> List[Chunk]:
    return [c for c in tree if c.level == 0 and c.kind is ChunkKind.BOXED]


def A_beta(t: Dict[int, int], couplings: CouplingSequence, params: ModelParams) -> Fraction:
    """prod_{i in P} (J_i p^i N)^{t_i} / t_i!."""
    table = TermTable(couplings.activities(params), params.budget)
    positive = set(couplings.positive(params.imax))
    return table.product({i: k for i, k in t.items() if i in positive})


def B0(couplings: CouplingSequence, params: ModelParams, prec: Optional[int] = None) -> mpmath.mpf:
    """prod_{i in N} e^{J_i p^i N}."""
    with mpmath.workprec(prec or settings.precision_bits):
        exponent = sum((couplings.activity(i, params) for i in couplings.negative(params.imax)), Fraction(0))
        return mpmath.exp(to_mpf(exponent, prec))


def B_beta(chunk: Chunk, couplings: CouplingSequence, params: ModelParams) -> Fraction:
    """prod_{i in N} sum_{alpha <= m_0(i)} (J_i p^i N)^alpha / alpha! for a level-zero boxed chunk."""
    if chunk.level != 0 or chunk.kind is not ChunkKind.BOXED:
        raise PreconditionViolated(f"B_beta needs a level-zero boxed chunk, got {chunk.key}")
    table = TermTable(couplings.activities(params), params.budget)
    value = Fraction(1)
    for i in chunk.residual:
        value *= table.partial_sum(i, chunk.box_limits[i])
    return value


def _tail_sum(c: Fraction, m: int, prec: int) -> mpmath.mpf:
    """sum_{k>m} c^k / k!, summed directly so tiny tails keep their relative accuracy."""
    if c == 0:
        return mpmath.mpf(0)
    c = to_mpf(c, prec)
    term = c ** (m + 1) / mpmath.factorial(m + 1)
    total = mpmath.mpf(0)
    k = m + 1
    while True:
        total += term
        if k > 2 * abs(c) + 1 and abs(term) <= mpmath.eps * abs(total):
            return total
        k += 1
        term *= c / k


def _e_beta(chunk: Chunk, activities: Dict[int, Fraction], prec: int) -> mpmath.mpf:
    """
    B^beta - B0 = prod(e^{c_i} - R_i) - prod e^{c_i}, expanded over the nonempty
    subsets of tails R_i instead of subtracting two nearly equal products.
    """
    exps = [mpmath.exp(to_mpf(activities[i], prec)) for i in chunk.residual]
    tails = [_tail_sum(activities[i], chunk.box_limits[i], prec) for i in chunk.residual]
    total = mpmath.mpf(0)
    for mask in itertools.product((False, True), repeat=len(exps)):
        if not any(mask):
            continue
        term = mpmath.mpf(1)
        for e, R, take_tail in zip(exps, tails, mask):
            term *= -R if take_tail else e
        total += term
    return total


def e_beta_chain(params: ModelParams, couplings: CouplingSequence,
                 tree: Optional[ChunkTree] = None, prec: Optional[int] = None) -> List[BoundReport]:
    """
    The estimates on E^beta = B^beta - B0 over the level-zero boxed chunks:

        |sum A E| <= (sum A) sup |E|
        sum A <= e^{sum_P c_i}
        |E| <= e^{sum_N |c_i|} (prod (1 + g_i) - 1)
        |sum A E| <= e^{sum_i |c_i|} e sup sum g_i      (only when sup sum g_i <= 1)
    """
    prec = prec or settings.precision_bits
    tree = tree or build_chunks(params, couplings)
    activities = couplings.activities(params)
    negative = couplings.negative(params.imax)
    positive = couplings.positive(params.imax)

    with mpmath.workprec(prec):
        base = B0(couplings, params, prec)
        abs_negative = to_mpf(sum((abs(activities[i]) for i in negative), Fraction(0)), prec)
        positive_total = to_mpf(sum((activities[i] for i in positive), Fraction(0)), prec)

        sum_A = Fraction(0)
        sum_AE = mpmath.mpf(0)
        sup_E = mpmath.mpf(0)
        sup_g = mpmath.mpf(0)
        worst = None
        for chunk in level_zero_boxed(tree):
            A = A_beta(chunk.assigned, couplings, params)
            E = _e_beta(chunk, activities, prec)
            g = [tail_g(activities[i], chunk.box_limits[i], prec) for i in chunk.residual]
            bound = mpmath.exp(abs_negative) * (mpmath.fprod(1 + x for x in g) - 1)
            gap = abs(E) - bound
            if worst is None or gap > worst[0]:
                worst = (gap, abs(E), bound, chunk.key)
            sum_A += A
            sum_AE += to_mpf(A, prec) * E
            sup_E = max(sup_E, abs(E))
            sup_g = max(sup_g, mpmath.fsum(g))

        sum_A_mp = to_mpf(sum_A, prec)
        product_form = bool(sup_g <= 1)
        reports = [
            BoundReport.compare('e_beta_sup', abs(sum_AE), sum_A_mp * sup_E,
                                {'chunks': len(level_zero_boxed(tree)), 'B0': float(base),
                                 'sup_sum_g': float(sup_g), 'product_form_applies': product_form,
                                 'product_form_exercised': product_form and sup_g > 0}),
            BoundReport.compare('a_beta_sum', mpmath.log(sum_A_mp), positive_total,
                                {'sum_A': float(sum_A_mp)}),
        ]
        if worst is not None:
            reports.append(BoundReport.compare('e_beta_tail', worst[1], worst[2],
                                               {'worst_chunk': str(worst[3])}))
        if product_form:
            rhs = mpmath.exp(positive_total + abs_negative) * mpmath.e * sup_g
            reports.append(BoundReport.compare('e_beta_product', abs(sum_AE), rhs,
                                               {'sup_sum_g': float(sup_g)}))
        else:
            logger.debug(f"sup sum g = {mpmath.nstr(sup_g, 6)} > 1 at N={params.N}; product form skipped")
    return reports


def largest_term_approx(params: ModelParams, couplings: CouplingSequence,
                        term_cap: Optional[int] = None, prec: Optional[int] = None) -> BoundReport:
    """
    Compare sum A^beta with its largest term over the level-zero assignments on P.

    lhs is eps(N) = (ln sum - ln max) / N, bounded by ln(count) / N.
    """
    term_cap = term_cap or settings.term_cap
    prec = prec or settings.precision_bits
    positive = couplings.positive(params.imax)
    activities = couplings.activities(params)
    top = math.ceil(params.half_budget) - 1

    count = count_occupations(positive, top)
    if count > term_cap:
        raise BudgetOverflow(count, term_cap, f"largest-term scan at N={params.N}")
    table = TermTable(activities, params.budget)
    largest = max(table.product(t.as_dict()) for t in enumerate_occupations(positive, top))
    total = sum(weight_coefficients({i: (activities[i], None) for i in positive}, top, table), Fraction(0))

    ln_sum, _ = log_abs(total, prec)
    ln_max, _ = log_abs(largest, prec)
    ln_B0 = float(sum((activities[i] for i in couplings.negative(params.imax)), Fraction(0)))
    epsilon = (ln_sum - ln_max) / params.N
    details = {
        'N': params.N,
        'count': count,
        'ln_sum': float(ln_sum),
        'ln_max': float(ln_max),
        'ln_B0': ln_B0,
        'log_total_per_N': (float(ln_sum) + ln_B0) / params.N,
        'log_max_per_N': (float(ln_max) + ln_B0) / params.N,
    }
    return BoundReport.compare('largest_term', epsilon, math.log(count) / params.N, details)


def largest_term_scan(params: ModelParams, couplings: CouplingSequence,
                      N_grid: Sequence[int], prec: Optional[int] = None) -> List[BoundReport]:
    """
    eps(N) over an N-scan: one largest_term record per N, each within ln(count)/N,
    then a largest_term_scan record with the last eps as lhs and the first as rhs.
    """
    reports = [largest_term_approx(params.with_N(N), couplings, prec=prec) for N in N_grid]
    series = [r.lhs for r in reports]
    details = {
        'N_grid': list(N_grid),
        'epsilon': series,
        'monotone': all(b <= a for a, b in zip(series, series[1:])),
    }
    return reports + [BoundReport.compare('largest_term_scan', series[-1], series[0], details)]


def h_value(a, n) -> float:
    """ln h(a, n) with h = (a^n / n!) e^{-a}, n real."""
    return float(n * math.log(a) - gammaln(n + 1) - a)


def h_bound(a, n) -> BoundReport:
    """ln h(a, n) <= -n ln(n/a) + n - a."""
    if a <= 0 or n < 1:
        raise PreconditionViolated(f"h bound needs a > 0 and n >= 1, got a={a}, n={n}")
    rhs = -n * math.log(n / a) + n - a
    return BoundReport.compare('h_bound', h_value(a, n), rhs, {'a': float(a), 'n': float(n)})


def h_decay_scan(p, r, gamma, N_grid: Sequence[int]) -> List[BoundReport]:
    """
    Fit ln h(r^2 p^2 N, gamma p N) = c - gamma~ N over the grid.

    Returns the pointwise h_bound records (every N with gamma p N >= 1), then an
    h_decay record whose lhs is the fitted slope -gamma~, strictly below 0.
    """
    p, r, gamma = float(p), float(r), float(gamma)
    if gamma <= r * p:
        raise PreconditionViolated(f"decay needs gamma > rp, got gamma={gamma}, rp={r * p}")
    Ns = np.asarray(N_grid, dtype=float)
    logs = np.array([h_value(r * r * p * p * N, gamma * p * N) for N in Ns])
    pointwise = [h_bound(r * r * p * p * N, gamma * p * N) for N in Ns if gamma * p * N >= 1]
    slope, intercept = np.polyfit(Ns, logs, 1)
    details = {
        'gamma_tilde': float(-slope),
        'intercept': float(intercept),
        'ln_h': [float(v) for v in logs],
    }
    return pointwise + [BoundReport.compare('h_decay', float(slope), 0.0, details, strict=True)]


def stirling_chain_check(n_max: int = 10 ** 6) -> BoundReport:
    """n ln(n/e) + 1 <= ln n! for 1 <= n <= n_max (n = 1 is the equality case)."""
    worst = 0.0
    if n_max >= 2:
        n = np.arange(2, n_max + 1, dtype=float)
        gap = n * np.log(n) - n + 1 - gammaln(n + 1)
        worst = max(worst, float(gap.max()))
    return BoundReport.compare('stirling_chain', worst, 0.0, {'n_max': n_max})
