import numpy as np
import pytest


def make_smooth(shape, rng, max_waves=8):
    """Sum of up to ``max_waves`` random sinusoids sampled on ``shape``."""
    axes = np.meshgrid(*[np.linspace(0, 1, n) for n in shape], indexing="ij")
    field = np.zeros(shape)
    for _ in range(rng.integers(1, max_waves + 1)):
        freq = rng.uniform(0.5, 6, len(shape))
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(f * a for f, a in zip(freq, axes))
        field += rng.uniform(0.2, 1) * np.sin(2 * np.pi * arg + phase)
    return field


@pytest.fixture
def smooth():
    return make_smooth


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record a one-line verdict for the end-of-run acceptance summary."""

    def record(criterion, passed, detail):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
