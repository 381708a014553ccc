import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from equalpeak.host import ChainSpec, PlateSpec, build_chain_modal  # noqa: E402

TABLE3 = dict(length=1.0, width=0.7, thickness=1e-3, young_modulus=68e9,
              poisson_ratio=0.36, density=2700.0)
FORCE = (0.25, 0.175)
MEASURE = (0.75, 0.525)
TMD_POINTS = [(0.5, 0.35), (0.15, 0.28), (0.4, 0.105), (0.25, 0.525)]


@pytest.fixture(scope="session")
def two_dof():
    return build_chain_modal(ChainSpec((1.0, 1.0), (1.0, 1.0, 1.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def plate_spec():
    return PlateSpec(**TABLE3, force_location=FORCE, measurement_location=MEASURE,
                     absorber_locations=tuple(TMD_POINTS[:3]))


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
