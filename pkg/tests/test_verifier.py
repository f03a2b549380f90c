import json
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from click.testing import CliRunner

from app import EXIT_ERROR, EXIT_FAIL, cli
from src.bounds.estimates import T3_overestimate
from src.bounds.report import BoundReport
from src.errors import ConfigError, ExtrapolationUnstable, GrowthViolation
from src.verifier.config import DEFAULT_TOLERANCES, RunConfig, load_config
from src.verifier.reports import render, write_report
from src.verifier.runner import (
    E_BETA_ATTEMPTS,
    FAIL,
    PASS,
    VerificationRunner,
    extrapolate,
    ordering,
    random_instance,
)
from src.verifier.tasks import dispatch, limit_point, partition_instance

ZERO = {str(i): 0 for i in range(2, 11)}


def write_json(path, document):
    path.write_text(json.dumps(document))
    return str(path)


@pytest.fixture
def small_partition_config():
    return RunConfig(random_instances=3)


@pytest.fixture
def zero_scan_config():
    return RunConfig(N_grid=[80, 160, 240], scan_couplings=ZERO, p_scan=['1/20', '1/40'])


@pytest.fixture
def small_bound_config():
    return RunConfig(bound_draws=20, bound_instances=3, domination_samples=200,
                     stirling_n_max=1000, N_grid=[200, 400, 800])


class TestRunConfig:
    def test_defaults(self):
        config = load_config()
        assert config.params().budget == 6
        assert config.tolerance('limit_gap') == DEFAULT_TOLERANCES['limit_gap']
        assert config.format == 'json'

    def test_overrides_skip_none(self, tmp_path):
        path = write_json(tmp_path / 'run.json', {'seed': 5, 'N': 96})
        config = load_config(path, seed=None, precision=120)
        assert (config.seed, config.N, config.precision_bits()) == (5, 96, 120)

    def test_partial_tolerances_keep_the_rest(self):
        config = RunConfig(tolerances={'cutoff': 1e-3})
        assert config.tolerance('cutoff') == 1e-3
        assert config.tolerance('t1_gap') == DEFAULT_TOLERANCES['t1_gap']

    @pytest.mark.parametrize('document', [
        {'tolerances': {'nonsense': 1.0}},
        {'N_grid': [400, 200]},
        {'N_grid': []},
        {'p': '3/2'},
        {'N': 10},
        {'unknown_key': 1},
        {'format': 'xml'},
    ])
    def test_invalid_documents(self, tmp_path, document):
        path = write_json(tmp_path / 'run.json', document)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / 'run.json'
        path.write_text('{not json')
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_coupling_file(self, tmp_path):
        path = write_json(tmp_path / 'couplings.json', {'2': 0.5, '3': '-1/4'})
        couplings = RunConfig(couplings=path).instance_couplings()
        assert couplings.values == {2: Fraction(1, 2), 3: Fraction(-1, 4)}

    def test_missing_coupling_file(self, tmp_path):
        config = RunConfig(couplings=str(tmp_path / 'absent.json'))
        with pytest.raises(ConfigError):
            config.instance_couplings()

    def test_coupling_table_per_N(self):
        config = RunConfig(coupling_table={'96': {'2': '-1/2'}})
        assert config.instance_couplings(96).get(2) == Fraction(-1, 2)
        assert config.instance_couplings(48).get(2) == Fraction(1, 2)
        assert config.scan_coupling_sequence(N=96).get(2) == Fraction(-1, 2)

    def test_alternating_scan_couplings(self):
        config = RunConfig(r='9/10', scan_imax=4, cutoff_imax=6)
        couplings = config.scan_coupling_sequence()
        assert sorted(couplings.values) == [2, 3, 4, 5, 6]
        assert couplings.get(3) == -Fraction(9, 10) ** 3

    def test_growth_violation_surfaces_from_the_couplings(self):
        with pytest.raises(GrowthViolation) as excinfo:
            RunConfig(couplings={'2': '1.5'}).instance_couplings()
        assert excinfo.value.index == 2


class TestHelpers:
    def test_random_instance(self, rng):
        for _ in range(20):
            params, couplings = random_instance(rng)
            assert 2 <= params.imax <= 5
            assert 2 <= params.budget <= 12
            assert all(abs(couplings.get(i)) <= 1 for i in params.indices)

    def test_extrapolate_recovers_the_intercept(self):
        Ns = list(range(200, 1401, 200))
        values = [0.3 + 2.0 / N for N in Ns]
        fit = extrapolate(Ns, values, 1e-9)
        assert fit['c0'] == pytest.approx(0.3, abs=1e-12)
        assert fit['c1'] == pytest.approx(2.0, rel=1e-9)
        assert fit['fit_N'] == Ns[3:]

    def test_extrapolate_single_point(self):
        assert extrapolate([100], [0.25], 1e-9)['c0'] == 0.25

    def test_extrapolate_rejects_scatter(self):
        with pytest.raises(ExtrapolationUnstable):
            extrapolate([100, 200, 300, 400, 500, 600], [0, 1, 0, 1, 0, 1], 1e-6)

    def test_extrapolate_rejects_undefined_logs(self):
        with pytest.raises(ExtrapolationUnstable):
            extrapolate([100, 200], [0.1, None], 1e-6)

    @pytest.mark.parametrize('point, holds', [
        ({'N': 800, 'ln_T1_per_N': 0.0101, 'ln_T2_per_N': 0.001, 'ln_T3_per_N': None}, True),
        ({'N': 800, 'ln_T1_per_N': 0.02, 'ln_T2_per_N': None, 'ln_T3_per_N': None}, False),
        ({'N': 800, 'ln_T1_per_N': 0.01, 'ln_T2_per_N': 0.05, 'ln_T3_per_N': None}, False),
        ({'N': 800, 'ln_T1_per_N': None, 'ln_T2_per_N': None, 'ln_T3_per_N': None}, False),
    ])
    def test_ordering(self, point, holds):
        assert ordering(point, 0.01, 1e-3)['holds'] is holds


class TestTasks:
    def test_partition_instance(self, mixed_params, mixed_couplings):
        result = partition_instance.apply_async(kwargs={
            'params': mixed_params.to_dict(),
            'couplings': mixed_couplings.to_dict(),
            'with_rows': True,
        }).get()
        assert result['passed']
        assert result['gap'] == '0'
        assert len(result['rows']) == result['chunks']

    def test_limit_point_zero_couplings(self, small_p_params, zero_couplings):
        result = limit_point.apply_async(kwargs={
            'params': small_p_params.to_dict(),
            'couplings': zero_couplings.to_dict(),
        }).get()
        assert result['ln_Z_per_N'] == 0.0
        assert result['gap'] == 0.0
        assert result['split_exact']
        assert result['ln_T2_per_N'] is None

    def test_dispatch_keeps_order(self, mixed_params, mixed_couplings, wide_params, wide_couplings):
        calls = [
            {'params': p.to_dict(), 'couplings': c.to_dict()}
            for p, c in [(wide_params, wide_couplings), (mixed_params, mixed_couplings)]
        ]
        results = dispatch(partition_instance, calls)
        assert [r['params']['N'] for r in results] == [96, 48]


class TestVerifyPartition:
    def test_passes(self, small_partition_config):
        report = VerificationRunner(small_partition_config).run_verify_partition()
        assert report['status'] == PASS
        assert report['random_total'] == 3
        assert report['random_failures'] == []
        assert report['instance']['chunks'] == len(report['rows'])

    def test_deterministic(self, small_partition_config):
        first = render(VerificationRunner(small_partition_config).run_verify_partition())
        second = render(VerificationRunner(small_partition_config).run_verify_partition())
        assert first == second

    def test_seed_changes_the_random_instances(self):
        first = VerificationRunner(RunConfig(random_instances=2, seed=1)).run_verify_partition()
        second = VerificationRunner(RunConfig(random_instances=2, seed=2)).run_verify_partition()
        assert first['seed'] != second['seed']
        assert first['instance'] == second['instance']


class TestLimitScan:
    def test_zero_couplings(self, zero_scan_config):
        report = VerificationRunner(zero_scan_config).run_limit_scan()
        assert report['status'] == PASS
        assert report['target'] == 0.0
        assert report['limit_gap'] == 0.0
        assert report['gap_monotone']
        assert report['cutoff']['imax'] == 10
        assert [row['N'] for row in report['rows']] == [80, 160, 240]

    def test_p_scan(self, zero_scan_config):
        report = VerificationRunner(zero_scan_config).run_limit_scan()
        assert [row['p'] for row in report['p_scan']['rows']] == ['1/40', '1/20']
        assert report['p_scan']['p0_empirical'] == '1/20'

    def test_zero_gap_tolerance_fails(self):
        config = RunConfig(N_grid=[200, 400], tolerances={'limit_gap': 0.0})
        report = VerificationRunner(config).run_limit_scan()
        assert report['status'] == FAIL
        assert report['limit_gap'] > 0

    @pytest.mark.slow
    def test_default_scan_reaches_the_target(self):
        report = VerificationRunner(RunConfig()).run_limit_scan()
        assert report['status'] == PASS
        assert report['limit_gap'] <= DEFAULT_TOLERANCES['limit_gap']
        assert report['gap_monotone']
        assert [row['N'] for row in report['rows']] == list(range(200, 2001, 200))


class TestContourSuite:
    def test_reflection_rows(self):
        rows = VerificationRunner(RunConfig()).reflection_rows()
        assert len(rows) == 100
        assert all(row['passed'] for row in rows)

    def test_stationary_rows(self):
        rows = VerificationRunner(RunConfig()).stationary_rows()
        assert [row['a'] for row in rows] == [0.5, 1.0, 2.0, 5.0, 10.0, 100.0]
        assert all(row['in_bracket'] for row in rows)

    @pytest.mark.slow
    def test_full_suite(self):
        report = VerificationRunner(RunConfig()).run_contour_suite()
        assert report['status'] == PASS
        assert report['failures'] == 0
        checks = {row['check'] for row in report['rows']}
        assert {'identity', 'deformation', 'crossed_residues', 'factorized_s2', 'boxed_sum_dressed',
                'reflection'} <= checks


class TestBoundSuite:
    def test_passes(self, small_bound_config):
        report = VerificationRunner(small_bound_config).run_bound_suite()
        assert report['status'] == PASS
        assert report['counterexample'] is None
        assert [f['name'] for f in report['families']] == [
            'stirling_chain', 'high_occupation_domination', 'lagrange_optimality',
            'half_power_series', 'product_inequality', 'tail_g_monotone', 'e_beta_chain',
            'T3_overestimate', 'h_bound', 'h_decay', 'largest_term',
        ]
        e_beta = next(f for f in report['families'] if f['name'] == 'e_beta_chain')
        assert e_beta['product_form_draws'] >= 3

    def test_e_beta_family_fails_without_product_form_draws(self, monkeypatch, small_bound_config):
        def never_product_form(params, couplings, tree=None, prec=None):
            return [BoundReport.compare('e_beta_sup', 0, 1, {'product_form_exercised': False})]

        monkeypatch.setattr('src.verifier.runner.e_beta_chain', never_product_form)
        report = VerificationRunner(small_bound_config).run_bound_suite()
        assert report['status'] == FAIL
        family = report['families'][-1]
        assert family['name'] == 'e_beta_chain'
        assert family['product_form_draws'] == 0
        assert family['random_instances'] == E_BETA_ATTEMPTS * 3
        assert report['counterexample']['name'] == 'e_beta_product_draws'

    def test_precision_reaches_the_bound_estimates(self, monkeypatch):
        seen = []

        def recording(*args, **kwargs):
            seen.append(kwargs.get('prec'))
            return T3_overestimate(*args, **kwargs)

        monkeypatch.setattr('src.verifier.runner.T3_overestimate', recording)
        config = RunConfig(bound_draws=20, bound_instances=3, domination_samples=200,
                           stirling_n_max=1000, N_grid=[200, 400, 800], precision=96)
        VerificationRunner(config).run_bound_suite()
        assert seen == [96, 96]

    def test_growth_violation_stops_the_suite(self):
        config = RunConfig(couplings={'2': '1.5'})
        with pytest.raises(GrowthViolation):
            VerificationRunner(config).run_bound_suite()


class TestReports:
    def test_json_is_sorted_and_plain(self):
        report = {'b': Fraction(1, 3), 'a': np.float64(0.5), 'c': mpmath.mpf(2), 'rows': []}
        text = render(report)
        assert text.endswith('\n')
        assert json.loads(text) == {'a': 0.5, 'b': '1/3', 'c': '2.0', 'rows': []}
        assert text.index('"a"') < text.index('"b"')

    def test_csv_rows(self):
        report = {'rows': [{'z': 1, 'a': {'k': 2}}, {'z': 2, 'a': [1, 2]}]}
        lines = render(report, 'csv').splitlines()
        assert lines[0] == 'a,z'
        assert len(lines) == 3

    def test_unknown_format(self):
        with pytest.raises(ConfigError):
            render({'rows': []}, 'xml')

    def test_write_report(self, tmp_path):
        path = tmp_path / 'report.json'
        text = write_report({'kind': 'x', 'rows': []}, str(path))
        assert path.read_text() == text


class TestCli:
    def test_verify_partition(self, tmp_path):
        config = write_json(tmp_path / 'run.json', {'random_instances': 2})
        out = tmp_path / 'report.json'
        result = CliRunner().invoke(cli, ['verify-partition', '--config', config, '--out', str(out)])
        assert result.exit_code == 0
        assert json.loads(out.read_text())['status'] == PASS

    def test_csv_output(self, tmp_path):
        config = write_json(tmp_path / 'run.json', {'random_instances': 1})
        out = tmp_path / 'report.csv'
        result = CliRunner().invoke(cli, ['verify-partition', '--config', config, '--out', str(out),
                                          '--format', 'csv'])
        assert result.exit_code == 0
        assert out.read_text().splitlines()[0].startswith('R_cumulative,')

    def test_fail_exit_code(self, tmp_path):
        config = write_json(tmp_path / 'run.json', {'N_grid': [200, 400], 'tolerances': {'limit_gap': 0.0}})
        out = tmp_path / 'report.json'
        result = CliRunner().invoke(cli, ['limit-scan', '--config', config, '--out', str(out)])
        assert result.exit_code == EXIT_FAIL
        assert json.loads(out.read_text())['status'] == FAIL

    def test_invalid_config_exit_code(self, tmp_path):
        config = write_json(tmp_path / 'run.json', {'N_grid': [400, 200]})
        result = CliRunner().invoke(cli, ['limit-scan', '--config', config])
        assert result.exit_code == EXIT_ERROR

    def test_growth_violation_exit_code(self, tmp_path):
        config = write_json(tmp_path / 'run.json', {'couplings': {'2': '1.5'}})
        result = CliRunner().invoke(cli, ['bound-suite', '--config', config])
        assert result.exit_code == EXIT_ERROR
