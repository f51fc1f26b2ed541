import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def acceptance(request):
    """record(number, title, ok, detail, seconds): one summary line per criterion."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", {})

    def record(num, title, ok, detail, seconds):
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail} [{seconds:.1f} s]"
        lines[num] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
