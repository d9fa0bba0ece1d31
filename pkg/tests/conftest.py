import time
from contextlib import contextmanager

import pytest

_ACCEPTANCE: list[tuple[int, str, bool, float, float, str]] = []


@pytest.fixture
def criterion():
    """``with criterion(k, title, budget) as rec: ...; rec.detail = "..."``.

    Records one pass/fail line with wall time; the test fails on an exception
    or when the budget is exceeded."""

    @contextmanager
    def run(number: int, title: str, budget: float):
        rec = type("Rec", (), {"detail": ""})()
        start = time.perf_counter()
        ok = False
        try:
            yield rec
            ok = True
        finally:
            elapsed = time.perf_counter() - start
            passed = ok and elapsed <= budget
            _ACCEPTANCE.append((number, title, passed, elapsed, budget, rec.detail))
        assert elapsed <= budget, f"criterion {number} took {elapsed:.2f} s > {budget} s"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, elapsed, budget, detail in sorted(_ACCEPTANCE):
        mark = "PASS" if passed else "FAIL"
        line = f"[{mark}] {number:2d}. {title} ({elapsed:.2f} s / {budget:g} s)"
        terminalreporter.write_line(line + (f"  {detail}" if detail else ""))
