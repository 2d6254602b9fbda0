"""Shared test plumbing: the acceptance report printed after the run."""

import pytest

_REPORT = {}


class AcceptanceReport:
    """Collects one verdict per acceptance criterion (several parts allowed)."""

    def record(self, criterion, part, ok, detail):
        _REPORT.setdefault(criterion, []).append((part, bool(ok), detail))


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceReport()


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_REPORT):
        parts = _REPORT[criterion]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{part}: {'ok' if ok else 'MISS'} ({d})" for part, ok, d in parts)
        terminalreporter.write_line(f"criterion {criterion}: {verdict}  {detail}")
