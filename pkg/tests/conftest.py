import numpy as np
import pytest

from maphom import coefficients


@pytest.fixture(scope="session")
def sine_coeff():
    return coefficients.sine_product()


@pytest.fixture(scope="session")
def laminate_coeff():
    return coefficients.laminate()


@pytest.fixture(scope="session")
def identity_coeff():
    return coefficients.identity()


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
