import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from contiplan.kinematics import ArmGeometry, default_geometry  # noqa: E402
from contiplan.occupancy import SceneParams  # noqa: E402

ACCEPTANCE_LINES: list[str] = []
TIMINGS: dict[str, float] = {}


@pytest.fixture(scope="session")
def geometry() -> ArmGeometry:
    return default_geometry()


@pytest.fixture(scope="session")
def scene_params(geometry) -> SceneParams:
    return SceneParams.for_geometry(geometry)


@pytest.fixture(scope="session")
def wide_geometry(geometry) -> ArmGeometry:
    """Default arm with +-pi joint limits, so all-zero joints (a straight vertical arm) are legal."""
    joints = tuple(replace(j, lower=-np.pi, upper=np.pi) for j in geometry.joints)
    return replace(geometry, joints=joints)


@pytest.fixture(scope="session")
def desk_model(geometry):
    """The shipped desk-scale controller (CurrentPlusRelative, about 4,300 sweep samples)."""
    import time

    from contiplan.harness import train_desk_controller

    t0 = time.perf_counter()
    model = train_desk_controller(geometry, seed=0)
    TIMINGS["desk_train"] = time.perf_counter() - t0
    return model


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
