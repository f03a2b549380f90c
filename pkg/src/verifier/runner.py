"""
End-to-end verification runs behind the CLI subcommands.

Every run returns a plain dict report carrying its kind, status, imax, seed,
precision and a flat list of rows for CSV output. Reports depend only on the
RunConfig, so the same config always yields the same bytes.
"""

import logging
import math
from fractions import Fraction
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.bounds.estimates import (
    T3_overestimate,
    e_beta_chain,
    h_bound,
    h_decay_scan,
    half_power_series_check,
    largest_term_scan,
    product_inequality_check,
    stirling_chain_check,
    tail_g,
)
from src.bounds.occupation import domination_check, lagrange_optimality_check, occupation_bound
from src.bounds.report import BoundReport
from src.contour.integrals import (
    ContourSpec,
    alternating_sum,
    boxed_sum_via_contour,
    contour_identity_rhs,
    crossed_residues,
    direct_boxed_sum,
    dressed_beta,
    integrand_g,
    integrand_sine_form,
    vertical_contour_eval,
)
from src.contour.stationary import stationary_point
from src.core.models import CouplingSequence, ModelParams, validate_couplings
from src.core.numeric import as_fraction
from src.errors import ExtrapolationUnstable
from src.partition.evaluator import target_series
from src.verifier.config import RunConfig
from src.verifier.tasks import dispatch, limit_point, partition_instance

logger = logging.getLogger(__name__)

PASS = 'PASS'
FAIL = 'FAIL'

IDENTITY_A = (0.5, 1.0, 2.0, 5.0, 10.0, 20.0)
IDENTITY_N = tuple(range(11))
IDENTITY_F: Dict[str, Optional[Callable]] = {
    '1': None,
    'z': lambda z: z,
    'z^2': lambda z: z ** 2,
    'exp(z/10)': lambda z: np.exp(np.asarray(z, dtype=complex) / 10),
}
STATIONARY_A = (0.5, 1.0, 2.0, 5.0, 10.0, 100.0)
DEFORMATION_A = (1.0, 5.0, 10.0)
DEFORMATION_N = 4
RIGHT_SHIFT = 2
REFLECTION_POINTS = 100

# independent random streams per suite, all derived from the run seed
PARTITION_STREAM = 1
CONTOUR_STREAM = 2
BOUND_STREAM = 3
# random instances tried per required product-form draw
E_BETA_ATTEMPTS = 20


def random_instance(rng: np.random.Generator) -> Tuple[ModelParams, CouplingSequence]:
    """
    A desk-scale instance: imax <= 5, budget <= 12, p = 1/k and couplings
    J_i = k_i / 100 of either sign (so |J_i| <= 1 = r^i).
    """
    imax = int(rng.integers(2, 6))
    k = int(rng.integers(2, 7))
    budget = int(rng.integers(2, 13))
    params = ModelParams(N=2 * budget * k, p=Fraction(1, k), r=1, imax=imax)
    values = {i: Fraction(int(rng.integers(-100, 101)), 100) for i in params.indices}
    return params, validate_couplings(values, params.r)


def extrapolate(Ns: Sequence[int], values: Sequence[float], tolerance: float) -> Dict:
    """
    Fit c0 + c1/N over the largest half of the grid.

    Raises:
        ExtrapolationUnstable: if the largest fit residual exceeds tolerance
    """
    if any(v is None for v in values):
        raise ExtrapolationUnstable("ln Z undefined at some grid point (Z <= 0)")
    top = len(Ns) // 2
    Ns, values = list(Ns[top:]), list(values[top:])
    if len(Ns) < 2:
        return {'c0': float(values[-1]), 'c1': 0.0, 'residual': 0.0, 'fit_N': Ns}
    x = 1.0 / np.asarray(Ns, dtype=float)
    y = np.asarray(values, dtype=float)
    c1, c0 = np.polyfit(x, y, 1)
    residual = float(np.max(np.abs(y - (c0 + c1 * x))))
    if residual > tolerance:
        logger.error(f"1/N fit over N={Ns} leaves residual {residual:.3g} > {tolerance}")
        raise ExtrapolationUnstable(f"1/N fit residual {residual:.3g} exceeds {tolerance}")
    return {'c0': float(c0), 'c1': float(c1), 'residual': residual, 'fit_N': Ns}


def ordering(point: Dict, target: float, t1_tolerance: float) -> Dict:
    """T1 tracks the target while T2 and T3 fall below it."""
    t1 = point.get('ln_T1_per_N')
    t1_gap = None if t1 is None else abs(t1 - target)
    margins = {}
    for name in ('T2', 'T3'):
        value = point.get(f'ln_{name}_per_N')
        margins[name] = None if value is None else target - value
    holds = (
        t1_gap is not None and t1_gap <= t1_tolerance
        and all(m is None or m > 0 for m in margins.values())
    )
    return {'N': point['N'], 't1_gap': t1_gap, 't2_margin': margins['T2'],
            't3_margin': margins['T3'], 'holds': holds}


def _row(check: str, lhs, rhs, tolerance: float, a=None, n=None, f=None, z0=None, floor: float = 0.0) -> Dict:
    """One check of the contour matrix: relative tolerance with an absolute floor."""
    error = abs(lhs - rhs)
    allowed = max(tolerance * abs(lhs), floor)
    return {'check': check, 'a': a, 'n': n, 'f': f, 'z0': z0, 'lhs': float(lhs), 'rhs': float(rhs),
            'error': float(error), 'tolerance': float(allowed), 'passed': bool(error <= allowed)}


def _worst(reports: List[BoundReport]) -> BoundReport:
    failing = [r for r in reports if not r.holds]
    if failing:
        return failing[0]
    return min(reports, key=lambda r: math.inf if r.margin is None else r.margin)


class VerificationRunner:
    """Runs the verification suites for one RunConfig."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.precision_bits = config.precision_bits()
        self.logger = logging.getLogger(__name__)

    def header(self, kind: str, imax: int) -> Dict:
        return {'kind': kind, 'imax': imax, 'seed': self.config.seed, 'precision_bits': self.precision_bits}

    def rng(self, stream: int, *extra: int) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, stream, *extra])

    # verify-partition

    def run_verify_partition(self) -> Dict:
        """
        Chunk sums against Z on the configured instance and on seeded random
        instances, in exact rational arithmetic.
        """
        config = self.config
        params = config.params()
        couplings = config.instance_couplings(params.N)
        common = {'precision_bits': self.precision_bits, 'node_cap': config.node_cap,
                  'term_cap': config.term_cap}

        rng = self.rng(PARTITION_STREAM)
        instances = [random_instance(rng) for _ in range(config.random_instances)]
        calls = [{'params': params.to_dict(), 'couplings': couplings.to_dict(), 'with_rows': True, **common}]
        calls += [{'params': p.to_dict(), 'couplings': c.to_dict(), **common} for p, c in instances]

        self.logger.info(
            f"Verifying chunk partition for N={params.N}, p={params.p}, imax={params.imax} "
            f"and {len(instances)} random instances"
        )
        try:
            results = dispatch(partition_instance, calls)
        except Exception as e:
            self.logger.error(f"verify-partition aborted: {e}")
            raise

        base, random_results = results[0], results[1:]
        rows = base.pop('rows')
        passed = sum(1 for r in random_results if r['passed'])
        status = PASS if base['passed'] and passed == len(random_results) else FAIL
        self.logger.info(f"verify-partition {status}: gap {base['gap']}, {passed}/{len(random_results)} random")
        return {
            **self.header('verify-partition', params.imax),
            'status': status,
            'instance': base,
            'random_passed': passed,
            'random_total': len(random_results),
            'random_failures': [r for r in random_results if not r['passed']],
            'rows': rows,
        }

    # limit-scan

    def limit_points(self, params: ModelParams, grid: Sequence[int], target: Fraction,
                     with_split: bool = True) -> List[Dict]:
        calls = [
            {
                'params': params.with_N(N).to_dict(),
                'couplings': self.config.scan_coupling_sequence(N=N).to_dict(),
                'target': str(target),
                'precision_bits': self.precision_bits,
                'node_cap': self.config.node_cap,
                'with_split': with_split,
            }
            for N in grid
        ]
        return dispatch(limit_point, calls)

    def run_limit_scan(self) -> Dict:
        """
        (ln Z)/N over the N grid, its 1/N extrapolation against sum p^i J_i,
        the cutoff check at a larger imax, and the T-split ordering at the
        largest N.

        Raises:
            ExtrapolationUnstable: if a 1/N fit does not describe the data
        """
        config = self.config
        grid = config.N_grid
        params = config.scan_params(grid[0])
        couplings = config.scan_coupling_sequence(N=grid[-1])
        target = target_series(couplings, params.p, params.imax)
        target_value = float(target)

        self.logger.info(f"Limit scan p={params.p}, imax={params.imax} over N={grid}")
        points = self.limit_points(params, grid, target)
        fit = extrapolate(grid, [pt['ln_Z_per_N'] for pt in points], config.tolerance('extrapolation_residual'))
        gaps = [pt['gap'] for pt in points]
        gap_monotone = all(g is not None for g in gaps) and all(b <= a for a, b in zip(gaps, gaps[1:]))
        limit_gap = abs(fit['c0'] - target_value)

        wider = config.scan_params(grid[0], config.cutoff_imax)
        wide_points = self.limit_points(wider, grid, target_series(couplings, params.p, wider.imax), False)
        wide_fit = extrapolate(grid, [pt['ln_Z_per_N'] for pt in wide_points],
                               config.tolerance('extrapolation_residual'))
        cutoff_shift = abs(wide_fit['c0'] - fit['c0'])

        order = ordering(points[-1], target_value, config.tolerance('t1_gap'))
        split_exact = all(pt['split_exact'] for pt in points)

        p_scan = self.p_scan(grid[-1]) if config.p_scan else None
        status = PASS if (
            limit_gap <= config.tolerance('limit_gap')
            and gap_monotone
            and cutoff_shift <= config.tolerance('cutoff')
            and order['holds']
            and split_exact
        ) else FAIL
        self.logger.info(
            f"limit-scan {status}: extrapolated {fit['c0']:.12g} vs target {target_value:.12g} "
            f"(gap {limit_gap:.3g}), cutoff shift {cutoff_shift:.3g}"
        )
        return {
            **self.header('limit-scan', params.imax),
            'status': status,
            'p': str(params.p),
            'target': target_value,
            'target_exact': str(target),
            'extrapolated': fit['c0'],
            'fit': fit,
            'limit_gap': limit_gap,
            'gap_monotone': gap_monotone,
            'cutoff': {'imax': wider.imax, 'extrapolated': wide_fit['c0'], 'shift': cutoff_shift},
            'ordering': order,
            'split_exact': split_exact,
            'p_scan': p_scan,
            'rows': points,
        }

    def p_scan(self, N: int) -> Dict:
        """The T-split ordering at the largest N for each configured p."""
        config = self.config
        rows = []
        for p in sorted(as_fraction(v) for v in config.p_scan):
            params = ModelParams(N=N, p=p, r=config.r, imax=config.scan_imax, eps=config.eps)
            couplings = config.scan_coupling_sequence(N=N)
            target = target_series(couplings, p, params.imax)
            point = self.limit_points(params, [N], target)[0]
            rows.append({'p': str(p), **ordering(point, float(target), config.tolerance('t1_gap'))})

        largest = None
        for row in rows:
            if not row['holds']:
                break
            largest = row['p']
        return {'rows': rows, 'p0_empirical': largest}

    # contour-suite

    def run_contour_suite(self) -> Dict:
        """Identity grid, deformation bookkeeping, stationary table and reflection check."""
        config = self.config
        self.logger.info("Running contour suite")
        try:
            rows = self.identity_rows() + self.deformation_rows() + self.reflection_rows()
            stationary = self.stationary_rows()
        except Exception as e:
            self.logger.error(f"contour-suite aborted: {e}")
            raise

        failures = sum(1 for row in rows if not row['passed'])
        residual_tol = config.tolerance('stationary_residual')
        stationary_ok = all(row['in_bracket'] and row['residual'] <= residual_tol for row in stationary)
        status = PASS if failures == 0 and stationary_ok else FAIL
        self.logger.info(f"contour-suite {status}: {len(rows) - failures}/{len(rows)} checks")
        return {
            **self.header('contour-suite', config.imax),
            'status': status,
            'checks': len(rows),
            'failures': failures,
            'stationary': stationary,
            'rows': rows,
        }

    def identity_rows(self) -> List[Dict]:
        tolerance = self.config.tolerance('contour_identity')
        floor = self.config.tolerance('contour_floor')
        rows = []
        for a in IDENTITY_A:
            for n in IDENTITY_N:
                for name, f in IDENTITY_F.items():
                    lhs = alternating_sum(a, n, f, self.precision_bits)
                    rhs = contour_identity_rhs(a, n, f)
                    rows.append(_row('identity', lhs, rhs, tolerance, a, n, name, floor=floor))
        return rows

    def deformation_rows(self) -> List[Dict]:
        tolerance = self.config.tolerance('deformation')
        rows = []
        n = DEFORMATION_N
        for a in DEFORMATION_A:
            hugging = contour_identity_rhs(a, n)
            z_star = float(stationary_point(a, self.precision_bits).z_star)
            for z0 in (0.0, z_star):
                vertical = vertical_contour_eval(a, n, z0)
                rows.append(_row('deformation', vertical, hugging, tolerance, a, n, '1', z0, floor=tolerance))
            spec = ContourSpec.vertical_lines(n, RIGHT_SHIFT)
            shifted = vertical_contour_eval(a, n, RIGHT_SHIFT) + crossed_residues(a, spec, n)
            rows.append(_row('crossed_residues', shifted, hugging, tolerance, a, n, '1', RIGHT_SHIFT,
                             floor=tolerance))

        a_pair, n_pair = (1.0, 2.0), (2, 3)
        factors = [contour_identity_rhs(a, m) for a, m in zip(a_pair, n_pair)]
        product = factors[0] * factors[1]
        vertical = vertical_contour_eval(list(a_pair), list(n_pair))
        rows.append(_row('factorized_s2', vertical, product, tolerance, str(a_pair), str(n_pair), '1', 0,
                         floor=tolerance))
        # the second variable's left line past pole 0 drops its alpha_2 = 0 residue
        shifted = vertical_contour_eval(list(a_pair), list(n_pair), [0.0, 1.0])
        expected = factors[0] * (factors[1] - 1.0)
        rows.append(_row('factorized_s2_shifted', shifted, expected, tolerance, str(a_pair), str(n_pair), '1',
                         '[0, 1]', floor=tolerance))

        box = (2, 3)
        rows.append(_row('boxed_sum', boxed_sum_via_contour(a_pair, box), direct_boxed_sum(a_pair, box),
                         tolerance, str(a_pair), str(box), '1', floor=tolerance))
        dressed = ModelParams(N=400, p=Fraction(1, 4), r=1, imax=3)
        beta = dressed_beta(dressed, 0, (2, 3))
        rows.append(_row('boxed_sum_dressed', boxed_sum_via_contour(a_pair, box, beta),
                         direct_boxed_sum(a_pair, box, beta), tolerance, str(a_pair), str(box), 'beta~',
                         floor=tolerance))
        return rows

    def stationary_rows(self) -> List[Dict]:
        return [stationary_point(a, self.precision_bits).to_dict() for a in STATIONARY_A]

    def reflection_rows(self) -> List[Dict]:
        """The Gamma and sine forms of the integrand agree at random points off the poles."""
        rng = self.rng(CONTOUR_STREAM)
        tolerance = self.config.tolerance('contour_identity')
        rows = []
        while len(rows) < REFLECTION_POINTS:
            z = complex(rng.uniform(-3.0, 8.0), rng.uniform(-2.0, 2.0))
            a = float(rng.uniform(0.1, 20.0))
            if abs(z - round(z.real)) < 0.1:
                continue
            g = complex(integrand_g([z], [a]))
            sine = complex(integrand_sine_form([z], [a]))
            error = abs(g - sine)
            allowed = tolerance * abs(sine)
            rows.append({'check': 'reflection', 'a': a, 'n': None, 'f': '1', 'z0': str(z),
                         'lhs': abs(g), 'rhs': abs(sine), 'error': error, 'tolerance': allowed,
                         'passed': bool(error <= allowed)})
        return rows

    # bound-suite

    def run_bound_suite(self) -> Dict:
        """
        Every inequality family on its randomized grid; the first failing family
        stops the suite and its counterexample is serialized.

        Raises:
            GrowthViolation: before any bound runs, if a configured coupling breaks |J_i| <= r^i
        """
        config = self.config
        params = config.params()
        couplings = config.instance_couplings(params.N)
        config.scan_coupling_sequence()
        self.logger.info(f"Running bound suite (seed {config.seed}, {config.bound_draws} draws per family)")

        families = []
        counterexample = None
        for name, reports, summary in self.bound_families(params, couplings):
            worst = _worst(reports)
            violations = sum(1 for r in reports if not r.holds)
            families.append({'name': name, 'draws': len(reports), 'violations': violations,
                             'holds': violations == 0, 'worst': worst.to_dict(), **summary})
            self.logger.info(f"bound family {name}: {len(reports) - violations}/{len(reports)} hold")
            if violations:
                counterexample = worst.to_dict()
                self.logger.error(f"bound family {name} fails: {counterexample}")
                break

        status = PASS if counterexample is None else FAIL
        rows = [{'family': f['name'], 'draws': f['draws'], 'violations': f['violations'],
                 'lhs': f['worst']['lhs'], 'rhs': f['worst']['rhs'], 'margin': f['worst']['margin'],
                 'holds': f['holds']} for f in families]
        return {
            **self.header('bound-suite', params.imax),
            'status': status,
            'families': families,
            'counterexample': counterexample,
            'rows': rows,
        }

    def bound_families(self, params: ModelParams,
                       couplings: CouplingSequence) -> Iterator[Tuple[str, List[BoundReport], Dict]]:
        config = self.config
        seed = config.seed
        prec = self.precision_bits
        draws = config.bound_draws
        scan = config.scan_params(config.domination_N)
        scan_couplings = config.scan_coupling_sequence(scan.imax)

        yield 'stirling_chain', [stirling_chain_check(config.stirling_n_max)], {}

        solution = occupation_bound(scan.half_budget / scan.N, scan.p, scan.r, scan.imax, scan.N, prec)
        yield 'high_occupation_domination', [
            domination_check(scan, config.domination_samples, seed, prec),
            BoundReport.compare('lagrange_constraint', solution.constraint_residual,
                                config.tolerance('lagrange_constraint'), {'q_weighted': solution.q_weighted}, seed),
            BoundReport.compare('power_sum_constraint', solution.q_residual,
                                config.tolerance('lagrange_constraint'), {'q': solution.q}, seed),
        ], {}

        m_tilde = scan.p / 4
        yield 'lagrange_optimality', [
            lagrange_optimality_check(occupation_bound(m_tilde, scan.p, scan.r, imax, scan.N, prec), draws, seed)
            for imax in (scan.imax, None)
        ], {}

        rng = self.rng(BOUND_STREAM, 0)
        yield 'half_power_series', [
            half_power_series_check(float(a), prec) for a in rng.uniform(0.01, 20.0, draws)
        ], {}

        rng = self.rng(BOUND_STREAM, 1)
        vectors = []
        for _ in range(draws):
            size = int(rng.integers(1, 9))
            vectors.append(rng.dirichlet(np.ones(size)) * rng.uniform(0.0, 1.0))
        yield 'product_inequality', [product_inequality_check(x, seed) for x in vectors], {}

        rng = self.rng(BOUND_STREAM, 2)
        tails = []
        for _ in range(draws):
            a = float(rng.uniform(-20.0, 20.0))
            n = int(rng.integers(0, 31))
            tails.append(BoundReport.compare('tail_g_monotone', tail_g(a, n + 1, prec),
                                             tail_g(a, n, prec), {'a': a, 'n': n}, seed))
        yield 'tail_g_monotone', tails, {}

        chain, summary = self.e_beta_draws(params, couplings)
        yield 'e_beta_chain', chain, summary

        yield 'T3_overestimate', (T3_overestimate(params, couplings, prec=prec)
                                    + T3_overestimate(scan, scan_couplings, prec=prec)), {}

        rng = self.rng(BOUND_STREAM, 4)
        yield 'h_bound', [
            h_bound(float(a), float(n))
            for a, n in zip(rng.uniform(0.01, 50.0, draws), rng.uniform(1.0, 100.0, draws))
        ], {}

        yield 'h_decay', h_decay_scan(scan.p, scan.r, as_fraction(config.h_gamma), config.N_grid), {}

        yield 'largest_term', largest_term_scan(scan, scan_couplings, config.N_grid, prec), {}

    def e_beta_draws(self, params: ModelParams, couplings: CouplingSequence) -> Tuple[List[BoundReport], Dict]:
        """
        The E^beta chain on the configured instance plus random instances, drawn
        until bound_instances of them reach the product form 0 < sup sum g <= 1.

        The last record compares the required count (lhs) with the count reached (rhs).
        """
        config = self.config
        required = config.bound_instances
        rng = self.rng(BOUND_STREAM, 3)
        chain = e_beta_chain(params, couplings, prec=self.precision_bits)
        exercised = int(chain[0].details['product_form_exercised'])
        attempts = 0
        while exercised < required and attempts < E_BETA_ATTEMPTS * required:
            instance, sequence = random_instance(rng)
            reports = e_beta_chain(instance, sequence, prec=self.precision_bits)
            exercised += int(reports[0].details['product_form_exercised'])
            attempts += 1
            chain.extend(reports)
        if exercised < required:
            self.logger.warning(f"product form reached on {exercised}/{required} draws after {attempts} attempts")
        summary = {'product_form_draws': exercised, 'random_instances': attempts}
        chain.append(BoundReport.compare('e_beta_product_draws', required, exercised, dict(summary), config.seed))
        return chain, summary

    # all

    def run_all(self) -> Dict:
        reports = {
            'verify-partition': self.run_verify_partition(),
            'contour-suite': self.run_contour_suite(),
            'bound-suite': self.run_bound_suite(),
            'limit-scan': self.run_limit_scan(),
        }
        status = PASS if all(r['status'] == PASS for r in reports.values()) else FAIL
        rows = [{'kind': kind, 'status': report['status']} for kind, report in reports.items()]
        return {**self.header('all', self.config.imax), 'status': status, 'reports': reports, 'rows': rows}
