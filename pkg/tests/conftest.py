from collections import OrderedDict

import pytest

# criterion number -> (title, {check name: passed})
_CRITERIA: "OrderedDict[int, tuple]" = OrderedDict()


@pytest.fixture
def criterion():
    """Record named checks for an acceptance criterion; returns the failed names."""
    def record(number: int, title: str, checks: dict) -> list:
        entry = _CRITERIA.setdefault(number, (title, OrderedDict()))
        entry[1].update({k: bool(v) for k, v in checks.items()})
        failed = [k for k, v in checks.items() if not v]
        print(f"criterion {number}: {'PASS' if not failed else 'FAIL'} {title}"
              + (f" (failed: {'; '.join(failed)})" if failed else ""))
        return failed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, checks = _CRITERIA[number]
        failed = [k for k, v in checks.items() if not v]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {number:>2}: {status}  {title}"
        if failed:
            line += f"  [failed: {'; '.join(failed)}]"
        terminalreporter.write_line(line)
