"""Shared fixtures: session-scoped calibration tables at one million simulations.

Building each table takes a few seconds; every module that needs thresholds
shares these instances.
"""
import numpy as np
import pytest

from cpstream import build_table

# Published thresholds for the window statistic under the standard-normal
# null, used as reference values throughout the suite.
REFERENCE_COLUMN_100_25 = {
    0.1: 8.789,
    0.05: 10.507,
    0.01: 14.332,
    0.001: 19.578,
    1e-4: 24.676,
    1e-5: 29.740,
    1e-6: 34.720,
}
REFERENCE_50_12 = {0.1: 8.948, 0.05: 10.711, 0.01: 14.635, 0.001: 20.018}
REFERENCE_30_7 = {0.1: 9.245, 0.05: 11.084, 0.01: 15.173, 0.001: 20.786}


@pytest.fixture(scope="session")
def table_100_25():
    return build_table(100, 25, 1_000_000, seed=11)


@pytest.fixture(scope="session")
def table_50_12():
    return build_table(50, 12, 1_000_000, seed=13)


@pytest.fixture(scope="session")
def table_30_7():
    return build_table(30, 7, 1_000_000, seed=17)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
