import time
from contextlib import contextmanager

# criterion number -> (passed, seconds, detail)
ACCEPTANCE: dict[int, tuple[bool, float, str]] = {}


class Criterion:
    def __init__(self, number: int, budget: float):
        self.number = number
        self.budget = budget
        self.detail = ""
        self.elapsed = 0.0
        self.charged = 0.0
        self._t0 = time.perf_counter()

    def charge(self, seconds: float) -> None:
        """Bill timed work from shared runs instead of the wall clock so far."""
        self.charged += seconds
        self._t0 = time.perf_counter()

    def within_budget(self) -> None:
        self.elapsed = time.perf_counter() - self._t0 + self.charged
        assert self.elapsed < self.budget, f"took {self.elapsed:.1f} s, budget {self.budget:.0f} s"


@contextmanager
def criterion(number: int, budget: float):
    """Record the outcome of acceptance criterion ``number``; fail when over ``budget`` seconds."""
    c = Criterion(number, budget)
    try:
        yield c
        c.within_budget()
    except BaseException as exc:
        c.elapsed = c.elapsed or time.perf_counter() - c._t0 + c.charged
        reason = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        ACCEPTANCE[number] = (False, c.elapsed, f"{c.detail} {reason}".strip())
        raise
    ACCEPTANCE[number] = (True, c.elapsed, c.detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, secs, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({secs:.1f} s) {detail}")
