"""Input checks shared by the estimator API and the CLI."""
from __future__ import annotations

import numpy as np

from .geometry import PointPattern, Window


def check_window(window, boundary: str = "clip") -> Window:
    if isinstance(window, Window):
        return window
    if window is None:
        raise ValueError("a window is required")
    if isinstance(window, str):
        parts = window.split(",")
        if len(parts) != 4:
            raise ValueError(f"window must be xmin,xmax,ymin,ymax; got {window!r}")
        try:
            window = [float(p) for p in parts]
        except ValueError as err:
            raise ValueError(f"window must be four numbers; got {window!r}") from err
    window = list(window)
    if len(window) != 4:
        raise ValueError(f"window needs four bounds, got {len(window)}")
    return Window.from_bounds(window, boundary)


def check_pattern(X, window: Window | None = None) -> PointPattern:
    """Coerce an (n, 2) array or a PointPattern into a PointPattern in ``window``."""
    if isinstance(X, PointPattern):
        if window is not None and X.window != window:
            return PointPattern(X.coords, window, X.ids)
        return X
    if window is None:
        raise ValueError("a window is required to interpret raw coordinates")
    xy = np.asarray(X, dtype=float)
    if xy.size == 0:
        xy = xy.reshape(0, 2)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise ValueError(f"expected coordinates of shape (n, 2), got {xy.shape}")
    return PointPattern(xy, window)


def check_radii(radii) -> tuple[float, ...]:
    radii = tuple(float(r) for r in np.atleast_1d(radii))
    if any(not np.isfinite(r) or r <= 0 for r in radii):
        raise ValueError(f"radii must be positive and finite, got {radii}")
    return radii


def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:n`` -> n equally spaced values from lo to hi inclusive."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must be lo:hi:n, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as err:
        raise ValueError(f"grid must be lo:hi:n, got {text!r}") from err
    if n < 1 or lo <= 0 or hi < lo:
        raise ValueError(f"grid needs 0 < lo <= hi and n >= 1, got {text!r}")
    return np.linspace(lo, hi, n)
