import re

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

_CRITERIA = {}


@pytest.fixture(autouse=True, scope="session")
def _single_thread():
    # timings and bit-exactness checks assume one BLAS thread
    with threadpool_limits(limits=1):
        yield


@pytest.fixture(autouse=True)
def _quiet_numpy():
    with np.errstate(all="raise", under="ignore"):
        yield


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[key] = (m.group(2), report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        name, outcome, detail = _CRITERIA[key]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {key:2d} {status}  {name}: {detail}")
