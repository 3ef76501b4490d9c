"""Windows, point patterns, disc grains and dilation areas.

Areas of unions of discs are computed by strip quadrature: the plane is cut
into vertical columns of width ``h``; inside each column the covered length
is computed exactly from the chord of every disc through the column centre.
Single discs use a closed-form disc/rectangle intersection instead.

``added_area`` scales the exact area of the candidate disc by the fraction
of it left uncovered on a column grid anchored at the candidate. The same
columns are used whatever the neighbouring pattern is, so the result is
exactly antitone in the pattern and lies in ``[0, area of the disc]``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "Window",
    "Grain",
    "PointPattern",
    "disc_window_area",
    "dilation_area",
    "added_area",
    "default_step",
]

STEPS_PER_RADIUS = 50
BOUNDARY_MODES = ("clip", "torus")

_id_counter = itertools.count()


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangular observation window."""

    xmin: float = 0.0
    xmax: float = 1.0
    ymin: float = 0.0
    ymax: float = 1.0
    boundary: str = "clip"

    def __post_init__(self):
        for name in ("xmin", "xmax", "ymin", "ymax"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"window bound {name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(
                f"window needs xmin < xmax and ymin < ymax, got {self.bounds}"
            )
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")

    @classmethod
    def from_bounds(cls, bounds, boundary="clip") -> "Window":
        xmin, xmax, ymin, ymax = (float(b) for b in bounds)
        return cls(xmin, xmax, ymin, ymax, boundary)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.xmax, self.ymin, self.ymax)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def torus(self) -> bool:
        return self.boundary == "torus"

    def contains(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return (
            (xy[:, 0] >= self.xmin)
            & (xy[:, 0] <= self.xmax)
            & (xy[:, 1] >= self.ymin)
            & (xy[:, 1] <= self.ymax)
        )

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` i.i.d. uniform locations in the window, shape (n, 2)."""
        u = rng.random((n, 2))
        u[:, 0] = self.xmin + self.width * u[:, 0]
        u[:, 1] = self.ymin + self.height * u[:, 1]
        return u

    def with_boundary(self, boundary: str) -> "Window":
        return Window(self.xmin, self.xmax, self.ymin, self.ymax, boundary)


@dataclass(frozen=True)
class Grain:
    """Disc of the given radius; ``step`` is the quadrature column width."""

    radius: float
    step: float | None = None

    def __post_init__(self):
        r = float(self.radius)
        if not (math.isfinite(r) and r > 0):
            raise ValueError(f"grain radius must be positive and finite, got {self.radius}")
        object.__setattr__(self, "radius", r)
        step = r / STEPS_PER_RADIUS if self.step is None else float(self.step)
        if not step > 0:
            raise ValueError(f"quadrature step must be positive, got {self.step}")
        object.__setattr__(self, "step", step)

    @property
    def area(self) -> float:
        return math.pi * self.radius * self.radius

    @property
    def n_columns(self) -> int:
        """Columns across the disc diameter."""
        return max(2, int(math.ceil(2.0 * self.radius / self.step)))


def default_step(radii) -> float:
    return min(radii) / STEPS_PER_RADIUS


@dataclass(frozen=True)
class PointPattern:
    """Finite set of points in a window, each carrying a unique integer id."""

    coords: np.ndarray
    window: Window
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        xy = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(xy)):
            raise ValueError("point coordinates must be finite")
        if not np.all(self.window.contains(xy)) and len(xy):
            raise ValueError("all points must lie inside the window")
        if self.ids is None:
            ids = np.fromiter((next(_id_counter) for _ in range(len(xy))), dtype=np.int64, count=len(xy))
        else:
            ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
            if len(ids) != len(xy):
                raise ValueError("ids and coords differ in length")
            if len(np.unique(ids)) != len(ids):
                raise ValueError("point ids must be unique within a pattern")
        xy.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "coords", xy)
        object.__setattr__(self, "ids", ids)

    def __repr__(self):
        return f"PointPattern(n={self.n}, window={self.window.bounds}, boundary={self.window.boundary!r})"

    @classmethod
    def empty(cls, window: Window) -> "PointPattern":
        return cls(np.empty((0, 2)), window, np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def x(self) -> np.ndarray:
        return self.coords[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.coords[:, 1]

    def id_set(self) -> frozenset:
        return frozenset(self.ids.tolist())

    def without(self, index: int) -> "PointPattern":
        keep = np.ones(self.n, dtype=bool)
        keep[index] = False
        return PointPattern(self.coords[keep], self.window, self.ids[keep])

    def with_point(self, xy, point_id=None) -> "PointPattern":
        xy = np.asarray(xy, dtype=float).reshape(1, 2)
        if point_id is None:
            point_id = next(_id_counter)
            while point_id in set(self.ids.tolist()):
                point_id = next(_id_counter)
        return PointPattern(
            np.vstack([self.coords, xy]), self.window, np.append(self.ids, np.int64(point_id))
        )

    def subset(self, mask) -> "PointPattern":
        mask = np.asarray(mask)
        return PointPattern(self.coords[mask], self.window, self.ids[mask])

    def translate(self, dx: float, dy: float) -> "PointPattern":
        """Shift all points; torus windows wrap, clip windows require the result to fit."""
        xy = self.coords + np.array([dx, dy])
        if self.window.torus:
            w = self.window
            xy[:, 0] = w.xmin + np.mod(xy[:, 0] - w.xmin, w.width)
            xy[:, 1] = w.ymin + np.mod(xy[:, 1] - w.ymin, w.height)
        return PointPattern(xy, self.window, self.ids)


# --------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _chord_integral(p, q, r, c):
    """Integral over u in [p, q] of min(sqrt(r^2 - u^2), c), with [p, q] in [-r, r]."""
    if q <= p:
        return 0.0
    if c >= r:
        w = 0.0
    else:
        w = math.sqrt(r * r - c * c)
    total = 0.0
    # pieces: [p, -w] and [w, q] under the arc, [-w, w] flat at c
    lo = p
    hi = min(q, -w)
    if hi > lo:
        total += _arc_primitive(hi, r) - _arc_primitive(lo, r)
    lo = max(p, -w)
    hi = min(q, w)
    if hi > lo:
        total += c * (hi - lo)
    lo = max(p, w)
    hi = q
    if hi > lo:
        total += _arc_primitive(hi, r) - _arc_primitive(lo, r)
    return total


@njit(cache=True)
def _arc_primitive(u, r):
    v = r * r - u * u
    if v < 0.0:
        v = 0.0
    s = u / r
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    return 0.5 * (u * math.sqrt(v) + r * r * math.asin(s))


@njit(cache=True)
def _disc_rect_area(cx, cy, r, x0, x1, y0, y1):
    p = max(x0 - cx, -r)
    q = min(x1 - cx, r)
    if q <= p:
        return 0.0
    above = y1 - cy
    below = cy - y0
    total = 0.0
    if above > 0.0:
        total += _chord_integral(p, q, r, above)
    if below > 0.0:
        total += _chord_integral(p, q, r, below)
    return total


@njit(cache=True)
def _union_length(lo, hi, m, a, b):
    """Length of the union of intervals [lo[i], hi[i]] (i < m) inside [a, b]."""
    # insertion sort by lo; m is small in practice
    for i in range(1, m):
        kl = lo[i]
        kh = hi[i]
        j = i - 1
        while j >= 0 and lo[j] > kl:
            lo[j + 1] = lo[j]
            hi[j + 1] = hi[j]
            j -= 1
        lo[j + 1] = kl
        hi[j + 1] = kh
    total = 0.0
    reach = a
    for i in range(m):
        l = lo[i] if lo[i] > reach else reach
        h = hi[i] if hi[i] < b else b
        if h > l:
            total += h - l
        if hi[i] > reach:
            reach = hi[i]
        if reach >= b:
            break
    return total


@njit(cache=True)
def _min_image(d, period):
    return d - period * math.floor(d / period + 0.5)


@njit(cache=True)
def _uncovered_fraction(cx, cy, r, px, py, ncols, x0, x1, y0, y1, torus):
    """Fraction of the candidate disc (window-clipped) not covered by the discs at (px, py).

    Returns (uncovered column area, candidate column area).
    """
    width = x1 - x0
    height = y1 - y0
    reach = 2.0 * r
    n = px.shape[0]
    nbx = np.empty(n)
    nby = np.empty(n)
    m = 0
    for j in range(n):
        dx = px[j] - cx
        dy = py[j] - cy
        if torus:
            dx = _min_image(dx, width)
            dy = _min_image(dy, height)
        if dx * dx + dy * dy < reach * reach:
            nbx[m] = dx
            nby[m] = dy
            m += 1
    h = 2.0 * r / ncols
    lo = np.empty(m)
    hi = np.empty(m)
    covered_total = 0.0
    cand_total = 0.0
    for k in range(ncols):
        u = -r + (k + 0.5) * h
        if not torus:
            xc = cx + u
            if xc < x0 or xc > x1:
                continue
        s = math.sqrt(max(r * r - u * u, 0.0))
        a = -s
        b = s
        if not torus:
            if cy + b > y1:
                b = y1 - cy
            if cy + a < y0:
                a = y0 - cy
        if b <= a:
            continue
        cand_total += b - a
        cnt = 0
        for j in range(m):
            du = u - nbx[j]
            if du * du < r * r:
                t = math.sqrt(r * r - du * du)
                l = nby[j] - t
                hh = nby[j] + t
                if hh > a and l < b:
                    lo[cnt] = l
                    hi[cnt] = hh
                    cnt += 1
        if cnt > 0:
            covered_total += _union_length(lo, hi, cnt, a, b)
    return (cand_total - covered_total) * h, cand_total * h


@njit(cache=True)
def _union_area(px, py, r, h, x0, x1, y0, y1, torus):
    """Area of the union of discs clipped to (or wrapped onto) the window."""
    width = x1 - x0
    height = y1 - y0
    ncols = int(math.ceil(width / h))
    hc = width / ncols
    n = px.shape[0]
    cap = 3 * n + 1
    lo = np.empty(cap)
    hi = np.empty(cap)
    total = 0.0
    for k in range(ncols):
        xc = x0 + (k + 0.5) * hc
        cnt = 0
        for j in range(n):
            dx = xc - px[j]
            if torus:
                dx = _min_image(dx, width)
            if dx * dx < r * r:
                t = math.sqrt(r * r - dx * dx)
                l = py[j] - t
                hh = py[j] + t
                lo[cnt] = l
                hi[cnt] = hh
                cnt += 1
                if torus:
                    if l < y0:
                        lo[cnt] = l + height
                        hi[cnt] = hh + height
                        cnt += 1
                    if hh > y1:
                        lo[cnt] = l - height
                        hi[cnt] = hh - height
                        cnt += 1
        if cnt > 0:
            total += _union_length(lo, hi, cnt, y0, y1)
    return total * hc


# --------------------------------------------------------------------------
# public functions


def _check_torus_radius(window: Window, grain: Grain):
    if window.torus and 4.0 * grain.radius > min(window.width, window.height):
        raise ValueError(
            "torus boundary needs grain radius <= a quarter of the shorter window side"
        )


def disc_window_area(center, grain: Grain, window: Window) -> float:
    """Exact area of the disc at ``center`` inside the window (whole disc on a torus)."""
    _check_torus_radius(window, grain)
    if window.torus:
        return grain.area
    cx, cy = float(center[0]), float(center[1])
    return float(_disc_rect_area(cx, cy, grain.radius, *window.bounds))


def dilation_area(pattern: PointPattern, grain: Grain) -> float:
    """Area of the union of grains centred at the pattern's points, within the window."""
    n = pattern.n
    if n == 0:
        return 0.0
    if n == 1:
        return disc_window_area(pattern.coords[0], grain, pattern.window)
    _check_torus_radius(pattern.window, grain)
    w = pattern.window
    return float(
        _union_area(
            np.ascontiguousarray(pattern.x),
            np.ascontiguousarray(pattern.y),
            grain.radius,
            grain.step,
            w.xmin,
            w.xmax,
            w.ymin,
            w.ymax,
            w.torus,
        )
    )


def _added_area_xy(cx, cy, px, py, grain: Grain, window: Window, exact=None) -> float:
    """Kernel entry used by the samplers: raw coordinate arrays, no validation."""
    if exact is None:
        exact = grain.area if window.torus else _disc_rect_area(cx, cy, grain.radius, *window.bounds)
    if px.shape[0] == 0 or exact == 0.0:
        return exact
    free, cand = _uncovered_fraction(
        cx, cy, grain.radius, px, py, grain.n_columns,
        window.xmin, window.xmax, window.ymin, window.ymax, window.torus,
    )
    if cand <= 0.0:
        return exact
    return exact * free / cand


def added_area(candidate, pattern: PointPattern, grain: Grain) -> float:
    """Area the candidate's grain adds to the pattern's dilation.

    Always within ``[0, grain.area]`` and never increases when points are
    added to ``pattern``.
    """
    window = pattern.window
    cx, cy = float(candidate[0]), float(candidate[1])
    if not (math.isfinite(cx) and math.isfinite(cy)):
        raise ValueError("candidate coordinates must be finite")
    if not window.contains((cx, cy))[0]:
        raise ValueError(f"candidate {(cx, cy)} lies outside the window")
    _check_torus_radius(window, grain)
    return float(
        _added_area_xy(
            cx, cy,
            np.ascontiguousarray(pattern.x),
            np.ascontiguousarray(pattern.y),
            grain,
            window,
        )
    )
