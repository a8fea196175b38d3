import re

import pytest

# criterion number -> (outcome, detail); filled by the acceptance module
ACCEPTANCE = {}
_DETAILS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full-scale sweep checks (long running)")


@pytest.fixture
def criterion_note(request):
    """Lets an acceptance test attach a one-line explanation to its result."""
    m = re.search(r"test_criterion_(\d+)", request.node.name)
    num = int(m.group(1))

    def note(text):
        _DETAILS[num] = text

    return note


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\w*\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    num = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ACCEPTANCE[num] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        detail = _DETAILS.get(num, "")
        tr.write_line(f"criterion {num:2d}: {ACCEPTANCE[num]}" + (f"  {detail}" if detail else ""))
