import time

import pytest

from engramlab.core import Rng

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return Rng(1234)


class Criterion:
    """Times one acceptance criterion and records a single pass/fail line."""

    def __init__(self, log, ac, title, limit_s):
        self.log, self.ac, self.title, self.limit_s = log, ac, title, limit_s
        self.t0 = time.perf_counter()
        self.checks = []

    def check(self, ok, detail):
        self.checks.append((bool(ok), detail))
        return bool(ok)

    def finish(self):
        elapsed = time.perf_counter() - self.t0
        in_time = elapsed < self.limit_s
        ok = all(c for c, _ in self.checks) and in_time
        detail = "; ".join(("" if c else "FAILED ") + d for c, d in self.checks)
        line = (f"{self.ac} {'PASS' if ok else 'FAIL'}  {self.title}: {detail} "
                f"[{elapsed:.1f} s, limit {self.limit_s:g} s{'' if in_time else ' EXCEEDED'}]")
        self.log.append(line)
        print(line)
        assert ok, line


@pytest.fixture
def criterion(request):
    log = request.config.stash.setdefault(_ACCEPTANCE, [])
    return lambda ac, title, limit_s: Criterion(log, ac, title, limit_s)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[0][2:])):
            terminalreporter.write_line(line)
