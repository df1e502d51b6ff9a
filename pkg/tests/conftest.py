import numpy as np
import pytest

from gaussnet.gaussian_core import GaussianMixture


@pytest.fixture(scope="session")
def sum_prior():
    """Twenty equal Gaussians spread over [0, 1], the uniform prior approximation."""
    h = 1 / 20
    return GaussianMixture(np.full(20, 0.05), (np.arange(20) + 0.5) * h,
                           np.full(20, (0.37935345537474 * h) ** 2), normalized=True)
