import time

import pytest

ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


class Criterion:
    """Timer plus verdict for one acceptance criterion."""

    def __init__(self, log, number, title, runtime_limit=None):
        self.log, self.number, self.title, self.limit = log, number, title, runtime_limit
        self.t0 = time.perf_counter()
        self.elapsed = None

    def finish(self, ok, detail, elapsed=None):
        self.elapsed = time.perf_counter() - self.t0 if elapsed is None else elapsed
        if self.limit is not None and self.elapsed >= self.limit:
            ok = False
            detail += f"; runtime {self.elapsed:.2f}s exceeds {self.limit}s"
        verdict = "PASS" if ok else "FAIL"
        line = f"criterion {self.number} {verdict}: {self.title}: {detail} ({self.elapsed:.2f}s)"
        self.log[self.number] = (ok, line)
        print(line)
        assert ok, line


@pytest.fixture
def criterion(request):
    log = request.config.stash[ACCEPTANCE_KEY]
    started = []

    def start(number, title, runtime_limit=None):
        c = Criterion(log, number, title, runtime_limit)
        started.append(c)
        return c

    yield start
    for c in started:
        if c.elapsed is None:
            log[c.number] = (False, f"criterion {c.number} FAIL: {c.title}: raised before a verdict")


def pytest_terminal_summary(terminalreporter, config):
    log = config.stash.get(ACCEPTANCE_KEY, {})
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(log):
        terminalreporter.write_line(log[number][1])
