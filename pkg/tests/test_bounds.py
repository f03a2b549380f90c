import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from src.bounds.estimates import (
    B_beta,
    T3_overestimate,
    e_beta_chain,
    h_bound,
    h_decay_scan,
    half_power_series_check,
    largest_term_approx,
    largest_term_scan,
    level_zero_boxed,
    product_inequality_check,
    stirling_chain_check,
    tail_g,
)
from src.bounds.occupation import (
    domination_check,
    eval_Q,
    high_occupations,
    lagrange_optimality_check,
    log_Q_batch,
    occupation_bound,
)
from src.bounds.report import BoundReport, as_number
from src.core.models import ModelParams
from src.core.numeric import log_abs
from src.dissection.chunks import ChunkKind, build_chunks
from src.errors import NoRoot, PreconditionViolated


class TestBoundReport:
    def test_compare(self):
        report = BoundReport.compare('x', Fraction(1, 2), 1)
        assert report.holds
        assert report.margin == 0.5

    def test_equality_needs_non_strict(self):
        assert BoundReport.compare('x', 1, 1).holds
        assert not BoundReport.compare('x', 1, 1, strict=True).holds

    def test_log_of_zero_holds(self):
        report = BoundReport.compare('x', None, -5.0)
        assert report.holds
        assert report.margin is None
        assert as_number(float('-inf')) is None

    def test_to_dict(self):
        record = BoundReport.compare('x', 2, 1, {'a': 1}, seed=3).to_dict()
        assert record == {'name': 'x', 'lhs': 2.0, 'rhs': 1.0, 'margin': -1.0,
                          'holds': False, 'seed': 3, 'details': {'a': 1}}


class TestOccupationBound:
    def test_unconstrained_infinite_range(self):
        bound = occupation_bound(0.5, 0.05)
        # q^2 / (1 - q) = 1/2
        assert bound.q == pytest.approx(0.5, rel=1e-12)
        assert bound.constraint_residual < 1e-12

    def test_constrained_maximum_sits_on_the_constraint(self):
        bound = occupation_bound(1 / 40, 1 / 20, 1, 8)
        assert bound.constrained
        x = bound.maximizer(range(2, 9))
        assert sum(i * v for i, v in x.items()) == pytest.approx(1 / 40, rel=1e-10)
        assert bound.f(x) == pytest.approx(bound.f_max, rel=1e-10)

    def test_unconstrained_maximum(self):
        bound = occupation_bound(1e-6, 0.1, 1, 4)
        assert not bound.constrained
        assert bound.f_max == pytest.approx(0.01 + 0.001 + 0.0001)

    @pytest.mark.parametrize('imax', [8, None])
    def test_both_roots_are_audited(self, imax):
        bound = occupation_bound(1 / 40, 1 / 20, 1, imax)
        assert bound.q_residual < 1e-12
        assert bound.constraint_residual < 1e-12
        assert bound.to_dict()['q_residual'] == bound.q_residual
        assert bound.q > bound.q_weighted

    def test_F_scales_with_N(self):
        bound = occupation_bound(1 / 40, 1 / 20, 1, 8, N=400)
        assert bound.F == pytest.approx(400 * bound.f_max)
        assert bound.F_asym < 0

    @pytest.mark.parametrize('m_tilde, p, r, imax, error', [
        (0, 0.1, 1, None, PreconditionViolated),
        (0.1, 1.0, 1, None, PreconditionViolated),
        (2.0, 0.1, 1, 3, NoRoot),
    ])
    def test_preconditions(self, m_tilde, p, r, imax, error):
        with pytest.raises(error):
            occupation_bound(m_tilde, p, r, imax)

    @pytest.mark.parametrize('imax', [8, None])
    def test_lagrange_optimality(self, imax):
        bound = occupation_bound(1 / 40, 1 / 20, 1, imax)
        report = lagrange_optimality_check(bound, count=2000, seed=7)
        assert report.holds
        assert report.seed == 7


class TestDomination:
    def test_eval_Q(self):
        Q, ln_Q = eval_Q({2: 1}, Fraction(1, 4), 1, 48)
        assert Q == 3
        assert float(ln_Q) == pytest.approx(math.log(3))

    def test_batch_matches_exact(self, mixed_params):
        alphas = np.array([[1, 0, 0], [2, 1, 0], [0, 0, 1]], dtype=float)
        batch = log_Q_batch(alphas, mixed_params.indices, mixed_params.p, 1, mixed_params.N)
        for row, value in zip(alphas, batch):
            mapping = {i: int(a) for i, a in zip(mixed_params.indices, row)}
            _, ln_Q = eval_Q(mapping, mixed_params.p, 1, mixed_params.N)
            assert value == pytest.approx(float(ln_Q), abs=1e-12)

    def test_high_occupations_respect_the_threshold(self, mixed_params):
        pool = high_occupations(mixed_params)
        weights = pool @ np.array(mixed_params.indices, dtype=float)
        assert len(pool)
        assert np.all(weights >= 3)
        assert np.all(weights <= 6)

    def test_domination_holds(self, mixed_params):
        report = domination_check(mixed_params, samples=500, seed=1)
        assert report.holds
        assert report.details['violations'] == 0


def _holds_iff_ordered(report):
    return report.holds == (report.lhs is None or report.lhs <= report.rhs)


class TestT3:
    def test_dominating_couplings(self, mixed_params):
        within, overestimate = T3_overestimate(mixed_params)
        assert (within.name, overestimate.name) == ('T3_within_sum_Q', 'T3_overestimate')
        assert within.holds
        assert overestimate.holds

    def test_signed_couplings(self, wide_params, wide_couplings):
        tree = build_chunks(wide_params, wide_couplings)
        reports = T3_overestimate(wide_params, wide_couplings, tree)
        assert all(report.holds for report in reports)
        assert reports[1].details['free_chunks'] == sum(1 for c in tree if c.kind is ChunkKind.FREE)

    def test_A_factor_uses_an_eighth_of_p(self, wide_params):
        overestimate = T3_overestimate(wide_params)[1]
        assert overestimate.details['m_tilde_A'] == str(wide_params.p / 8)
        expected = occupation_bound(wide_params.p / 8, wide_params.p, wide_params.r, wide_params.imax, wide_params.N)
        assert overestimate.details['ln_A'] == pytest.approx(expected.F, rel=1e-12)

    def test_precision_reaches_the_logs(self, monkeypatch, mixed_params, mixed_couplings):
        seen = []

        def recording_log_abs(value, prec=None):
            seen.append(prec)
            return log_abs(value, prec)

        monkeypatch.setattr('src.bounds.estimates.log_abs', recording_log_abs)
        T3_overestimate(mixed_params, mixed_couplings, prec=96)
        largest_term_approx(mixed_params, mixed_couplings, prec=96)
        assert seen
        assert set(seen) == {96}

    def test_every_record_holds_iff_lhs_within_rhs(self, wide_params, wide_couplings, small_p_params,
                                                   alternating_couplings):
        reports = (T3_overestimate(wide_params, wide_couplings)
                   + largest_term_scan(small_p_params, alternating_couplings, [200, 400])
                   + h_decay_scan(Fraction(1, 20), 1, Fraction(1, 2), [200, 400, 600]))
        assert all(_holds_iff_ordered(report) for report in reports)


class TestLevelZero:
    def test_e_beta_chain(self, mixed_params, mixed_couplings):
        reports = e_beta_chain(mixed_params, mixed_couplings)
        names = {report.name for report in reports}
        assert {'e_beta_sup', 'a_beta_sum', 'e_beta_tail'} <= names
        assert all(report.holds for report in reports)

    def test_e_beta_chain_wide(self, wide_params, wide_couplings):
        assert all(report.holds for report in e_beta_chain(wide_params, wide_couplings))

    def test_B_beta_only_on_level_zero_boxed(self, wide_params, wide_couplings):
        tree = build_chunks(wide_params, wide_couplings)
        boxed = level_zero_boxed(tree)
        assert boxed
        assert B_beta(boxed[0], wide_couplings, wide_params) != 0
        other = next(c for c in tree if c.level >= 1 or c.kind is ChunkKind.FREE)
        with pytest.raises(PreconditionViolated):
            B_beta(other, wide_couplings, wide_params)

    def test_tail_g(self):
        assert tail_g(0, 3) == 0
        with mpmath.workprec(200):
            expected = mpmath.e * (mpmath.e - 1)
            assert mpmath.almosteq(tail_g(1, 0, 200), expected, rel_eps=mpmath.mpf(10) ** -50)
        with pytest.raises(PreconditionViolated):
            tail_g(1, -1)

    def test_largest_term(self, mixed_params, mixed_couplings):
        report = largest_term_approx(mixed_params, mixed_couplings)
        assert report.holds
        assert report.details['count'] == 2

    def test_largest_term_scan_records_every_N(self, small_p_params, alternating_couplings):
        reports = largest_term_scan(small_p_params, alternating_couplings, [200, 400, 800])
        assert [r.name for r in reports] == ['largest_term'] * 3 + ['largest_term_scan']
        assert [r.details['N'] for r in reports[:3]] == [200, 400, 800]
        assert len(reports[-1].details['epsilon']) == 3
        assert all(report.holds for report in reports)

    def test_e_beta_chain_flags_product_form(self, wide_params, wide_couplings):
        reports = e_beta_chain(wide_params, wide_couplings)
        details = reports[0].details
        applies = details['sup_sum_g'] <= 1
        assert details['product_form_applies'] == applies
        assert details['product_form_exercised'] == (applies and details['sup_sum_g'] > 0)
        assert ('e_beta_product' in {r.name for r in reports}) == applies


class TestElementaryInequalities:
    @pytest.mark.parametrize('x', [[0.1, 0.2], [0.0], [1.0], [0.25] * 4])
    def test_product_inequality(self, x):
        assert product_inequality_check(x).holds

    @pytest.mark.parametrize('x', [[-0.1, 0.2], [0.6, 0.6]])
    def test_product_inequality_preconditions(self, x):
        with pytest.raises(PreconditionViolated):
            product_inequality_check(x)

    @pytest.mark.parametrize('a', [0.01, 1, 10, 200])
    def test_half_power_series(self, a):
        assert half_power_series_check(a).holds

    def test_half_power_series_needs_positive_a(self):
        with pytest.raises(PreconditionViolated):
            half_power_series_check(0)

    @pytest.mark.parametrize('a, n', [(0.5, 1), (5, 5), (20, 3.5), (1, 100)])
    def test_h_bound(self, a, n):
        assert h_bound(a, n).holds

    def test_h_bound_preconditions(self):
        with pytest.raises(PreconditionViolated):
            h_bound(1, 0.5)

    def test_h_decay(self):
        reports = h_decay_scan(Fraction(1, 20), 1, Fraction(1, 2), range(200, 2001, 200))
        decay = reports[-1]
        assert decay.name == 'h_decay'
        assert decay.details['gamma_tilde'] > 0
        assert all(report.holds for report in reports)
        assert {r.name for r in reports[:-1]} == {'h_bound'}

    def test_h_decay_needs_gamma_above_rp(self):
        with pytest.raises(PreconditionViolated):
            h_decay_scan(0.1, 1, 0.05, [100, 200])

    def test_stirling_chain(self):
        report = stirling_chain_check(1000)
        assert report.holds
        assert report.lhs == 0.0

    def test_h_bound_example(self):
        params = ModelParams(N=400, p=Fraction(1, 20), imax=2)
        a = float(params.p ** 2 * params.N)
        n = 0.5 * float(params.p) * params.N
        assert h_bound(a, n).lhs < 0
