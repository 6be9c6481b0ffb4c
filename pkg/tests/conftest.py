import warnings

import numpy as np
import pytest


@pytest.fixture(autouse=True)
def _quiet_lambda_warning():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="lambda=.*")
        yield


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
