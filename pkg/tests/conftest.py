import numpy as np
import pytest

from msxtalk import crosstalk, drift, motional


@pytest.fixture(scope="session")
def modes():
    return motional.harmonic_chain_modes()


@pytest.fixture(scope="session")
def fm_result(modes):
    return motional.fm_optimize(modes, (1, 2), 15, 200e-6)


@pytest.fixture(scope="session")
def cal_table1(modes, fm_result):
    return crosstalk.CrosstalkCalibration.from_pulse(crosstalk.TABLE_I, modes, fm_result.pulse)


@pytest.fixture(scope="session")
def fm_result_t2(modes):
    return motional.fm_optimize(modes, (1, 3), 15, 200e-6)


@pytest.fixture(scope="session")
def cal_table2(modes, fm_result_t2):
    return crosstalk.CrosstalkCalibration.from_pulse(crosstalk.TABLE_II, modes, fm_result_t2.pulse)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def static_model():
    return drift.DriftModel.static(repetitions=1)
