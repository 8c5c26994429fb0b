import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import criteria  # noqa: E402

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if m and (report.when == "call" or report.failed):
        n = int(m.group(1))
        if criteria.OUTCOMES.get(n) != "FAIL":
            criteria.OUTCOMES[n] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not criteria.OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(criteria.OUTCOMES):
        title = criteria.TITLES.get(n, "")
        detail = criteria.DETAILS.get(n, (None, "no measurement recorded"))[1]
        terminalreporter.write_line(f"criterion {n:2d} {criteria.OUTCOMES[n]}: {title}: {detail}")
