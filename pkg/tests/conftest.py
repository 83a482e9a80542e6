import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    'default', deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get('HYPOTHESIS_PROFILE', 'default'))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope='session')
def reference_network():
    from ratebalance.experiments import ExperimentConfig, build_network
    return build_network(ExperimentConfig())


# -- shared sweep runs ----------------------------------------------------

@pytest.fixture(scope='session')
def sweep_dir(tmp_path_factory):
    """Output directory of the reference sweeps; set RATEBALANCE_TEST_CACHE
    to keep the point cache between sessions."""
    keep = os.environ.get('RATEBALANCE_TEST_CACHE')
    if keep:
        os.makedirs(keep, exist_ok=True)
        return keep
    return str(tmp_path_factory.mktemp('sweeps'))


@pytest.fixture(scope='session')
def tradeoff_run(sweep_dir, reference_network):
    from ratebalance.experiments import ExperimentConfig, run_tradeoff_sweep
    return run_tradeoff_sweep(ExperimentConfig(), sweep_dir,
                              net=reference_network)


@pytest.fixture(scope='session')
def balance_run(sweep_dir, reference_network):
    from ratebalance.experiments import ExperimentConfig, run_balance_curve
    return run_balance_curve(ExperimentConfig(), sweep_dir,
                             net=reference_network)


@pytest.fixture(scope='session')
def snr_run(sweep_dir, reference_network):
    from ratebalance.experiments import ExperimentConfig, run_snr_sweep
    return run_snr_sweep(ExperimentConfig(), sweep_dir, net=reference_network)


# -- acceptance report ----------------------------------------------------

ACCEPTANCE = []


@pytest.fixture
def report():
    def record(number, title, passed, detail=''):
        ACCEPTANCE.append((number, title, bool(passed), detail))
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section('acceptance criteria')
    for number, title, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line('%-4s %2d. %s  %s' % (
            'PASS' if passed else 'FAIL', number, title, detail))
