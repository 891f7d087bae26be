"""
Shared pipeline runs for the test modules.

The Ulam map (logistic, lambda = 4) has closed-form answers for most
quantities; the band-merging map exercises renormalization and a second
set of charts.
"""
import numpy as np
import pytest

from unimodal_response.core.config import RunConfig
from unimodal_response.core.pipeline import run_pipeline


def ulam_density(x):
    return 1.0 / (np.pi * np.sqrt(x * (1.0 - x)))


@pytest.fixture(scope="session")
def ulam_config():
    return RunConfig(map={"family": "logistic", "lambda": 4.0},
                     perturbations=["endpoint_vanishing", "constant", "identity"]).validate()


@pytest.fixture(scope="session")
def ulam_run(ulam_config):
    return run_pipeline(ulam_config)


@pytest.fixture(scope="session")
def band_merging_config():
    return RunConfig(map={"family": "logistic", "lambda": "band_merging"},
                     degree=32, cycle_order=12,
                     perturbations=["endpoint_vanishing", "constant"]).validate()


@pytest.fixture(scope="session")
def band_merging_run(band_merging_config):
    return run_pipeline(band_merging_config)


@pytest.fixture
def results_dir(tmp_path):
    return str(tmp_path / "results")
