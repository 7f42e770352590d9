import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cavitrans.config import RunConfig

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

TWO_PI = 2 * np.pi


@pytest.fixture(scope="session")
def cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def base(cfg):
    return cfg.atom_params()


@pytest.fixture(scope="session")
def deco(cfg):
    return cfg.decoherence_params()


@pytest.fixture(scope="session")
def tmodel(cfg):
    return cfg.transmission_model()


@pytest.fixture(scope="session")
def am_point(cfg, base):
    mc = cfg.modulation_config("am")
    return base.with_mw(mc.carrier_rabi_0, mc.carrier_detuning_0)


@pytest.fixture(scope="session")
def fm_point(cfg, base):
    mc = cfg.modulation_config("fm")
    return base.with_mw(mc.carrier_rabi_0, mc.carrier_detuning_0)


# --- acceptance reporting --------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record (criterion number, passed, measured detail) for the end-of-run summary."""

    def record(n, passed, detail):
        ACCEPTANCE[n] = (bool(passed), detail)
        print(f"criterion {n}: {'PASS' if passed else 'FAIL'} - {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
