import math

import numpy as np
import pytest

from kslab.grid import build_grid


@pytest.fixture
def interval64():
    return build_grid("interval", math.pi, 64)


@pytest.fixture
def rect():
    return build_grid("rectangle", (2 * math.pi, math.pi), (32, 16))


@pytest.fixture
def ball4():
    return build_grid("radial_ball", 1.0, 40, ambient_dim=4)


@pytest.fixture(params=["interval", "rectangle", "radial3", "radial6"])
def any_grid(request):
    return {
        "interval": lambda: build_grid("interval", 2.0, 37),
        "rectangle": lambda: build_grid("rectangle", (1.5, 2.5), (12, 9)),
        "radial3": lambda: build_grid("radial_ball", 1.3, 30, ambient_dim=3),
        "radial6": lambda: build_grid("radial_ball", 0.7, 25, ambient_dim=6),
    }[request.param]()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
