import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# One line per acceptance criterion, collected by tests/test_acceptance.py and
# repeated at the end of the run so it survives output capturing.
ACCEPTANCE_LINES = {}


def record_acceptance(label, passed, detail):
    status = "PASS" if passed else "FAIL"
    if passed is None:
        status = "SKIP"
    line = f"{label}: {status}  {detail}"
    ACCEPTANCE_LINES[label] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("-")[1])):
        terminalreporter.write_line(ACCEPTANCE_LINES[label])
