import numpy as np
import pytest

from contractivity.fields import affine_field

PAPER_A = np.array([[-10.0, 2.5], [9.0, -3.0]])
PAPER_B = np.array([-19.0, 20.0])
PAPER_X_STAR = np.array([-14.0 / 15.0, 58.0 / 15.0])

_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(num, title): acceptance criterion this test belongs to")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _acceptance_marker(report)
    if marker is None:
        return
    num, title = marker
    entry = _acceptance.setdefault(num, {"title": title, "failed": [], "passed": 0})
    if report.passed:
        entry["passed"] += 1
    elif not report.skipped:
        entry["failed"].append(report.nodeid.split("::")[-1])


def _acceptance_marker(report):
    for name, value in report.user_properties:
        if name == "acceptance":
            return value
    return None


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("acceptance")
    if m is not None:
        item.user_properties.append(("acceptance", (str(m.args[0]), m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_acceptance, key=lambda k: (len(k), k)):
        e = _acceptance[num]
        status = "PASS" if not e["failed"] and e["passed"] else "FAIL"
        detail = f"  (failed: {', '.join(e['failed'])})" if e["failed"] else ""
        tr.write_line(f"criterion {num:>4} {status}  {e['title']}{detail}")


@pytest.fixture
def paper_field():
    return affine_field(PAPER_A, PAPER_B)
