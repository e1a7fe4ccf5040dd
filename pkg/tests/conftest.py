import numpy as np
import pytest

from regrasp.harness import load_scene
from regrasp.kinematics import load_robot
from regrasp.object_gripper import GripperModel

from reference import box_model, l_model


@pytest.fixture(scope="session")
def gripper():
    return GripperModel()


@pytest.fixture(scope="session")
def robot():
    return load_robot()


@pytest.fixture(scope="session")
def box():
    return box_model()


@pytest.fixture(scope="session")
def lshape():
    return l_model()


@pytest.fixture(scope="session")
def box_scene():
    return load_scene("box")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results, key=lambda k: int(k[2:])):
            terminalreporter.write_line(results[key])
