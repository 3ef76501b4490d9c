import math

import numpy as np
import pytest

from perfectpp.geometry import PointPattern, Window


def lens(d, r=1.0):
    """Overlap area of two discs of radius r whose centres are d apart."""
    if d >= 2 * r:
        return 0.0
    return 2 * r * r * math.acos(d / (2 * r)) - 0.5 * d * math.sqrt(4 * r * r - d * d)


def raster_union_area(centres, r, window, n=2000):
    """Brute-force pixel count of the union of discs clipped to the window."""
    xs = window.xmin + (np.arange(n) + 0.5) * window.width / n
    ys = window.ymin + (np.arange(n) + 0.5) * window.height / n
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    covered = np.zeros_like(X, dtype=bool)
    for cx, cy in centres:
        dx = X - cx
        dy = Y - cy
        if window.torus:
            dx -= window.width * np.round(dx / window.width)
            dy -= window.height * np.round(dy / window.height)
        covered |= dx * dx + dy * dy <= r * r
    return covered.mean() * window.area


@pytest.fixture
def unit():
    return Window(0.0, 1.0, 0.0, 1.0)


@pytest.fixture
def unit_torus():
    return Window(0.0, 1.0, 0.0, 1.0, "torus")


@pytest.fixture
def big():
    return Window(-5.0, 5.0, -5.0, 5.0)


def random_pattern(rng, n, window):
    return PointPattern(window.uniform(rng, n), window)


# one pass/fail line per acceptance criterion, printed after the run
_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    def record(label: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _CRITERIA.append((label, ok, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(_CRITERIA):
        terminalreporter.write_line(line)
