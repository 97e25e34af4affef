import math

import numpy as np
import pytest

from calibdesign.models import load_shipped_model, two_link_model

# Test pose used by the planar two-link simulation studies.
Q0_2R = np.radians([-45.0, 20.0])
# A generic, non-singular test pose for the 6R model.
Q0_6R = np.radians([10.0, 35.0, 20.0, 30.0, 45.0, 0.0])


@pytest.fixture
def two_link():
    return two_link_model(1.0, 0.8, "link-lengths")


@pytest.fixture
def two_link_offsets():
    return two_link_model(1.0, 0.8, "joint-offsets")


@pytest.fixture
def two_link_full():
    return two_link_model(1.0, 0.8, "both")


@pytest.fixture(scope="session")
def six_r():
    return load_shipped_model("six_r")


def q2_plan(q2_deg, q1=0.0):
    """Two-link plan with the given second-joint angles (degrees)."""
    from calibdesign.plan import Plan

    return Plan.from_configs([[q1, math.radians(a)] for a in q2_deg])


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
