"""
Shared instances for the test suite.
"""

from fractions import Fraction

import numpy as np
import pytest

from src.core.models import ModelParams, validate_couplings


@pytest.fixture
def mixed_params():
    """imax 4, N 48, p 1/4: budget 6, half-budget 3."""
    return ModelParams(N=48, p=Fraction(1, 4), r=1, imax=4)


@pytest.fixture
def mixed_couplings():
    return validate_couplings({2: '1/2', 3: '-3/4', 4: '1/3'}, 1)


@pytest.fixture
def wide_params():
    """imax 4, budget 12."""
    return ModelParams(N=96, p=Fraction(1, 4), r=1, imax=4)


@pytest.fixture
def wide_couplings():
    return validate_couplings({2: '-1/2', 3: '1/4', 4: '-1/3'}, 1)


@pytest.fixture
def zero_couplings():
    return validate_couplings({i: 0 for i in range(2, 9)}, 1)


@pytest.fixture
def small_p_params():
    """(p, r, N) = (1/20, 1, 400) at imax 8: budget 10."""
    return ModelParams(N=400, p=Fraction(1, 20), r=1, imax=8)


@pytest.fixture
def alternating_couplings():
    return validate_couplings({i: (-1) ** i for i in range(2, 11)}, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
