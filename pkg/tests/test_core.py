import itertools
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from src.core.enumeration import count_occupations, enumerate_occupations
from src.core.models import ModelParams, Occupation, occupation_weight, validate_couplings
from src.core.numeric import as_fraction, log_abs, mpf_to_fraction, to_mpf
from src.errors import GrowthViolation, InvalidParams


class TestValidateCouplings:
    def test_boundary_sequence_is_valid(self):
        r = Fraction(9, 10)
        couplings = validate_couplings({i: r ** i for i in range(2, 9)}, r)
        assert couplings.positive(8) == list(range(2, 9))
        assert couplings.negative(8) == []

    def test_float_boundary_sequence_is_valid(self):
        couplings = validate_couplings({i: 0.9 ** i for i in range(2, 9)}, 0.9)
        assert couplings.r == Fraction(9, 10)

    def test_zero_couplings_have_no_negative_indices(self):
        couplings = validate_couplings({i: 0 for i in range(2, 6)}, 1)
        assert couplings.negative(5) == []
        assert couplings.positive(5) == [2, 3, 4, 5]

    def test_growth_violation_reports_index(self):
        with pytest.raises(GrowthViolation) as excinfo:
            validate_couplings({2: 1.01, 3: 0.5}, 1)
        assert excinfo.value.index == 2

    @pytest.mark.parametrize('value', [Fraction(1) + Fraction(1, 10 ** 13), '1.0000000000001'])
    def test_exact_value_just_over_radius_rejected(self, value):
        with pytest.raises(GrowthViolation) as excinfo:
            validate_couplings({2: value}, 1)
        assert excinfo.value.index == 2

    def test_exact_radius_power_accepted(self):
        couplings = validate_couplings({3: -Fraction(27, 1000)}, Fraction(3, 10))
        assert couplings.negative(3) == [3]

    def test_first_violation_wins(self):
        with pytest.raises(GrowthViolation) as excinfo:
            validate_couplings({5: 2, 3: -2}, 1)
        assert excinfo.value.index == 3

    def test_index_below_two_rejected(self):
        with pytest.raises(InvalidParams):
            validate_couplings({1: 0.5}, 1)

    def test_activity(self, mixed_params, mixed_couplings):
        # J_3 p^3 N = -3/4 * 1/64 * 48
        assert mixed_couplings.activity(3, mixed_params) == Fraction(-9, 16)


class TestModelParams:
    def test_budget_and_half_budget(self, mixed_params):
        assert mixed_params.budget == 6
        assert mixed_params.half_budget == 3
        assert mixed_params.indices == [2, 3, 4]

    def test_budget_floors(self):
        params = ModelParams(N=50, p=Fraction(1, 4))
        assert params.budget == 6
        assert params.half_budget == Fraction(25, 8)

    @pytest.mark.parametrize('p', [0, 1, Fraction(3, 2), -0.1])
    def test_p_outside_unit_interval(self, p):
        with pytest.raises(InvalidParams):
            ModelParams(N=100, p=p)

    def test_budget_below_two_rejected(self):
        with pytest.raises(InvalidParams):
            ModelParams(N=10, p=Fraction(1, 4))

    def test_imax_below_two_rejected(self):
        with pytest.raises(InvalidParams):
            ModelParams(N=48, p=Fraction(1, 4), imax=1)

    def test_with_N_keeps_the_rest(self, mixed_params):
        other = mixed_params.with_N(96)
        assert (other.N, other.p, other.imax) == (96, mixed_params.p, 4)
        assert other.budget == 12


class TestEnumeration:
    def test_empty_index_set(self):
        occupations = list(enumerate_occupations([], 10))
        assert occupations == [Occupation()]

    def test_budget_two(self):
        occupations = [(o.get(2), o.get(3)) for o in enumerate_occupations({2, 3}, 2)]
        assert occupations == [(0, 0), (1, 0)]

    def test_budget_six_in_stream_order(self):
        occupations = [(o.get(2), o.get(3)) for o in enumerate_occupations({2, 3}, 6)]
        assert occupations == [(0, 0), (1, 0), (2, 0), (3, 0), (0, 1), (1, 1), (0, 2)]

    def test_caps(self):
        occupations = list(enumerate_occupations([2, 3], 6, caps={2: 1}))
        assert all(o.get(2) <= 1 for o in occupations)
        assert len(occupations) == 5

    def test_fixed_prefix(self):
        occupations = list(enumerate_occupations([2, 3], 6, fixed={3: 1}))
        assert [(o.get(2), o.get(3)) for o in occupations] == [(0, 1), (1, 1)]

    def test_fixed_prefix_over_budget(self):
        assert list(enumerate_occupations([2, 3], 2, fixed={3: 1})) == []

    @pytest.mark.parametrize('indices, budget, caps', [
        ([2, 3], 6, None),
        ([2, 3, 4, 5], 12, None),
        ([2, 3, 4, 5, 6, 7, 8], 20, None),
        ([3, 5, 7], 15, {3: 2, 7: 1}),
    ])
    def test_count_matches_enumeration(self, indices, budget, caps):
        occupations = list(enumerate_occupations(indices, budget, caps=caps))
        assert count_occupations(indices, budget, caps) == len(occupations)
        assert len(set(occupations)) == len(occupations)
        assert all(o.weight <= budget for o in occupations)


class TestOccupation:
    @pytest.mark.parametrize('mapping, weight', [
        ({}, 0),
        ({2: 3}, 6),
        ({2: 1, 5: 2}, 12),
    ])
    def test_weight(self, mapping, weight):
        assert occupation_weight(Occupation.from_mapping(mapping)) == weight

    def test_zeros_are_dropped(self):
        assert Occupation.from_mapping({2: 0, 3: 1}) == Occupation.from_mapping({3: 1})

    def test_negative_entry_rejected(self):
        with pytest.raises(InvalidParams):
            Occupation.from_mapping({2: -1})

    def test_admissible(self):
        occupation = Occupation.from_mapping({2: 1, 3: 1})
        assert occupation.is_admissible(5)
        assert not occupation.is_admissible(4)


class TestNumeric:
    @pytest.mark.parametrize('value, expected', [
        (0.05, Fraction(1, 20)),
        ('1/4', Fraction(1, 4)),
        (' 0.25 ', Fraction(1, 4)),
        (3, Fraction(3)),
    ])
    def test_as_fraction(self, value, expected):
        assert as_fraction(value) == expected

    def test_as_fraction_rejects_bool(self):
        with pytest.raises(TypeError):
            as_fraction(True)

    def test_log_abs_beyond_double_range(self):
        value, sign = log_abs(-Fraction(10 ** 400, 3), 200)
        assert sign == -1
        with mpmath.workprec(200):
            expected = 400 * mpmath.log(10) - mpmath.log(3)
            assert mpmath.almosteq(value, expected, rel_eps=mpmath.mpf(10) ** -40)

    def test_log_abs_zero(self):
        assert log_abs(Fraction(0)) == (None, 0)

    def test_mpf_round_trip_is_exact(self):
        value = to_mpf(Fraction(1, 3), 100)
        assert to_mpf(mpf_to_fraction(value), 100) == value


def _box(indices, budget):
    return [range(budget // i + 1) for i in indices]


class TestEnumerationGrid:
    """Enumeration against the bounding box alpha_i <= B // i, for k <= 6 and B <= 20."""

    @pytest.mark.parametrize('k', range(1, 7))
    @pytest.mark.parametrize('budget', range(0, 21))
    def test_matches_bounding_box_filter(self, k, budget):
        indices = list(range(2, k + 2))
        expected = set()
        for alpha in itertools.product(*_box(indices, budget)):
            if sum(i * a for i, a in zip(indices, alpha)) <= budget:
                expected.add(Occupation.from_mapping(dict(zip(indices, alpha))))
        occupations = list(enumerate_occupations(indices, budget))
        assert len(occupations) == len(set(occupations))
        assert set(occupations) == expected
        assert count_occupations(indices, budget) == len(expected)

    @pytest.mark.parametrize('indices, budget', [
        ([2, 3], 20),
        ([2, 3, 4, 5], 14),
        ([2, 3, 4, 5, 6, 7], 20),
        ([3, 5, 7], 18),
    ])
    def test_rejection_sampling_agrees(self, indices, budget):
        rng = np.random.default_rng([budget, len(indices)])
        highs = np.array([budget // i + 1 for i in indices])
        draws = 20000
        samples = rng.integers(0, highs, size=(draws, len(indices)))
        accepted = samples[samples @ np.array(indices) <= budget]

        enumerated = {tuple(o.get(i) for i in indices) for o in enumerate_occupations(indices, budget)}
        assert all(tuple(int(a) for a in row) in enumerated for row in accepted)

        share = len(enumerated) / math.prod(int(h) for h in highs)
        spread = math.sqrt(share * (1 - share) / draws)
        assert abs(len(accepted) / draws - share) <= 5 * spread + 1e-9
