import numpy as np
import pytest

from stbd.channel import SystemDims, draw_channel, exp_pdp

DEFAULT_DIMS = dict(M=8, K=2, B=30, L=9, L_p=1)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def pdp9():
    return exp_pdp(9, 10e-9, 15e-9)


@pytest.fixture
def default_dims():
    return SystemDims(**DEFAULT_DIMS)


@pytest.fixture
def default_draw(default_dims, pdp9):
    return draw_channel(default_dims, pdp9, np.random.default_rng(7))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = []


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    passed = call.excinfo is None
    detail = dict(item.user_properties).get("measured", "")
    if not passed:
        detail = (detail + "; " if detail else "") + str(call.excinfo.value).splitlines()[0]
    item.config._criteria.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(config._criteria)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in rows:
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
