import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")

SLOW = os.environ.get("HANDFORGE_SLOW") == "1"


def pytest_collection_modifyitems(config, items):
    if SLOW:
        return
    skip = pytest.mark.skip(reason="slow; set HANDFORGE_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def space():
    from handforge.space import build_power_grasp_space

    return build_power_grasp_space()


@pytest.fixture(scope="session")
def reference_point(space):
    """A mid-range three-finger design used wherever a fixed hand is needed."""
    values = {}
    for p in space.params:
        if p.kind == "categorical":
            values[p.name] = p.choices[0]
        else:
            lo, hi = p.bounds
            values[p.name] = 0.5 * (lo + hi)
    values["finger_number"] = 3
    values["pad_max_height"] = 5.0
    return space.make_point(values)


@pytest.fixture(scope="session")
def reference_hand(reference_point):
    from handforge.hand import assemble_hand

    return assemble_hand(reference_point, name="reference")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
