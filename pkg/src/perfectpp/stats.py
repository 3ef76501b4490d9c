"""Second- and third-order summary functions and simulation envelopes.

K(r)  = |W| / (n (n-1)) * sum_{i != j} w_ij 1[d_ij <= r]
L(r)  = sqrt(K(r) / pi)
T(r)  = |W|^2 / (n (n-1) (n-2)) * #{ordered triples, all three distances <= r}

Under complete spatial randomness K(r) = pi r^2 and T(r) = T_CSR * r^4 where
T_CSR = int_0^1 2 pi s lens(s) ds is the area of pairs (a, b) with |a|, |b|
and |a - b| all at most 1 (see ``t_function_csr``). T is our reading of the
third-order function plotted next to L for the redwood data; it is an
interpretation and flagged as such on every curve.

Edge corrections: ``ripley`` (isotropic, exact circle/rectangle arcs),
``torus`` (periodic distances, unit weights) and ``none``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate

from .geometry import PointPattern, Window

__all__ = [
    "SummaryCurve",
    "EnvelopeBand",
    "default_r_grid",
    "pair_distances",
    "ripley_weights",
    "k_function",
    "l_function",
    "t_function",
    "t_function_csr",
    "summary",
    "envelope",
    "write_curve_csv",
    "write_envelope_csv",
]

STATISTICS = ("K", "L", "T")
CORRECTIONS = ("ripley", "torus", "none")
MIN_POINTS = {"K": 2, "L": 2, "T": 3}


@dataclass
class SummaryCurve:
    statistic: str
    r: np.ndarray
    values: np.ndarray
    correction: str
    metadata: dict = field(default_factory=dict)


@dataclass
class EnvelopeBand:
    statistic: str
    r: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    mean: np.ndarray
    data: np.ndarray
    n_sim: int
    correction: str = "ripley"
    metadata: dict = field(default_factory=dict)

    def inside_fraction(self) -> float:
        """Fraction of grid points where the data curve lies within [lo, hi]."""
        return float(np.mean((self.data >= self.lo) & (self.data <= self.hi)))


def default_r_grid(window: Window, n_steps: int = 512, rmax: float | None = None) -> np.ndarray:
    """``n_steps`` equal steps on (0, rmax]; rmax defaults to a quarter of the shorter side."""
    if rmax is None:
        rmax = 0.25 * min(window.width, window.height)
    return rmax * np.arange(1, n_steps + 1) / n_steps


def _check_grid(r, window: Window) -> np.ndarray:
    r = np.asarray(r, dtype=float).reshape(-1)
    if r.size == 0:
        raise ValueError("empty r grid")
    if np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValueError("r grid must be positive and strictly increasing")
    limit = 0.5 * min(window.width, window.height)
    if r[-1] > limit * (1 + 1e-12):
        raise ValueError(f"rmax {r[-1]:g} exceeds half the shorter window side ({limit:g})")
    return r


def _check_n(pattern: PointPattern, statistic: str):
    need = MIN_POINTS[statistic]
    if pattern.n < need:
        raise ValueError(
            f"{statistic} function needs at least {need} points, pattern has {pattern.n}"
        )


def _distance_matrix(xy: np.ndarray, window: Window, torus: bool) -> np.ndarray:
    d = xy[:, None, :] - xy[None, :, :]
    if torus:
        period = np.array([window.width, window.height])
        d -= period * np.round(d / period)
    return np.hypot(d[..., 0], d[..., 1])


def pair_distances(pattern: PointPattern, torus: bool = False):
    """Index arrays (i, j), i < j, and their distances."""
    D = _distance_matrix(pattern.coords, pattern.window, torus)
    i, j = np.triu_indices(pattern.n, k=1)
    return i, j, D[i, j]


def ripley_weights(xy: np.ndarray, d: np.ndarray, window: Window) -> np.ndarray:
    """Inverse fraction of the circle of radius ``d`` about ``xy`` that lies in the window.

    The circle loses an arc of half-angle acos(e/d) past each edge at
    distance e < d; arcs past adjacent edges overlap when the corner is
    inside the circle. Arcs past opposite edges never meet for centres
    inside the window.
    """
    xy = np.atleast_2d(xy)
    d = np.asarray(d, dtype=float)
    edges = np.stack(
        [
            xy[:, 0] - window.xmin,
            xy[:, 1] - window.ymin,
            window.xmax - xy[:, 0],
            window.ymax - xy[:, 1],
        ]
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(d > 0, edges / d, np.inf)
    half = np.arccos(np.clip(ratio, -1.0, 1.0))
    half = np.where(ratio >= 1.0, 0.0, half)
    outside = 2.0 * half.sum(axis=0)
    for a, b in ((0, 1), (1, 2), (2, 3), (3, 0)):
        outside -= np.maximum(0.0, half[a] + half[b] - 0.5 * np.pi)
    inside = 1.0 - outside / (2.0 * np.pi)
    return 1.0 / inside


def _cumulative(values: np.ndarray, weights: np.ndarray, r: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    v = values[order]
    c = np.concatenate([[0.0], np.cumsum(weights[order])])
    return c[np.searchsorted(v, r, side="right")]


def _resolve(pattern: PointPattern, r, correction, statistic):
    if correction not in CORRECTIONS:
        raise ValueError(f"correction must be one of {CORRECTIONS}, got {correction!r}")
    _check_n(pattern, statistic)
    if r is None:
        r = default_r_grid(pattern.window)
    return _check_grid(r, pattern.window)


def k_function(pattern: PointPattern, r=None, correction: str = "ripley") -> SummaryCurve:
    r = _resolve(pattern, r, correction, "K")
    n = pattern.n
    torus = correction == "torus"
    i, j, d = pair_distances(pattern, torus)
    # far pairs never count, and their circles may leave the window entirely
    near = d <= r[-1]
    i, j, d = i[near], j[near], d[near]
    if correction == "ripley":
        xy = pattern.coords
        # each unordered pair counts once from each end
        w = ripley_weights(xy[i], d, pattern.window) + ripley_weights(xy[j], d, pattern.window)
    else:
        w = np.full(d.shape, 2.0)
    values = pattern.window.area / (n * (n - 1)) * _cumulative(d, w, r)
    return SummaryCurve("K", r, values, correction)


def l_function(pattern: PointPattern, r=None, correction: str = "ripley") -> SummaryCurve:
    k = k_function(pattern, r, correction)
    return SummaryCurve("L", k.r, np.sqrt(np.maximum(k.values, 0.0) / np.pi), correction)


def _triangle_diameters(D: np.ndarray, rmax: float) -> np.ndarray:
    """Largest side of every triangle whose sides are all <= rmax."""
    n = D.shape[0]
    close = D <= rmax
    out = []
    for a in range(n - 2):
        nb = np.nonzero(close[a, a + 1 :])[0] + a + 1
        if nb.size < 2:
            continue
        sub = D[np.ix_(nb, nb)]
        p, q = np.triu_indices(nb.size, k=1)
        ok = sub[p, q] <= rmax
        if not np.any(ok):
            continue
        p, q = p[ok], q[ok]
        diam = np.maximum(np.maximum(D[a, nb[p]], D[a, nb[q]]), sub[p, q])
        out.append(diam)
    return np.concatenate(out) if out else np.empty(0)


def t_function(pattern: PointPattern, r=None, correction: str = "torus") -> SummaryCurve:
    """Third-order triangle-count function; ``ripley`` is not defined for triples."""
    if correction == "ripley":
        raise ValueError("T function supports correction 'torus' or 'none'")
    r = _resolve(pattern, r, correction, "T")
    n = pattern.n
    D = _distance_matrix(pattern.coords, pattern.window, correction == "torus")
    diam = _triangle_diameters(D, r[-1])
    counts = _cumulative(diam, np.full(diam.shape, 6.0), r)
    values = pattern.window.area**2 / (n * (n - 1) * (n - 2)) * counts
    return SummaryCurve(
        "T", r, values, correction,
        metadata={"definition": "triangle-count third-order function (interpretation)"},
    )


def _lens(s: float, radius: float = 1.0) -> float:
    if s >= 2 * radius:
        return 0.0
    return 2 * radius**2 * math.acos(s / (2 * radius)) - 0.5 * s * math.sqrt(4 * radius**2 - s * s)


T_CSR_CONSTANT = integrate.quad(lambda s: 2 * math.pi * s * _lens(s), 0.0, 1.0)[0]


def t_function_csr(r) -> np.ndarray:
    """T(r) for a homogeneous Poisson process."""
    return T_CSR_CONSTANT * np.asarray(r, dtype=float) ** 4


_ESTIMATORS = {"K": k_function, "L": l_function, "T": t_function}


def summary(pattern: PointPattern, statistic: str, r=None, correction: str | None = None) -> SummaryCurve:
    statistic = statistic.upper()
    if statistic not in _ESTIMATORS:
        raise ValueError(f"statistic must be one of {STATISTICS}, got {statistic!r}")
    if correction is None:
        correction = "torus" if statistic == "T" else "ripley"
    return _ESTIMATORS[statistic](pattern, r, correction)


def _replicate_curve(model, statistic, r, correction, seed, index, max_horizon):
    from .cftp import HorizonCapExceeded, perfect_sample

    try:
        res = perfect_sample(model, seed, replicate=index, max_horizon=max_horizon)
    except HorizonCapExceeded as err:
        raise HorizonCapExceeded(err.cap, index) from err
    try:
        return summary(res.sample, statistic, r, correction).values
    except ValueError as err:
        raise ValueError(f"replicate {index}: {err}") from err


def envelope(model, statistic: str, n_sim: int = 19, r=None, seed=0,
             data: PointPattern | None = None, correction: str | None = None,
             n_jobs: int = 1, max_horizon: float | None = None) -> EnvelopeBand:
    """Pointwise min/max/mean of a summary function over ``n_sim`` perfect samples.

    Replicate ``i`` uses the sub-stream ``(seed, i)``, so the band does not
    depend on ``n_jobs``.
    """
    from .cftp import DEFAULT_MAX_HORIZON

    if n_sim < 2:
        raise ValueError("n_sim must be >= 2")
    statistic = statistic.upper()
    if correction is None:
        correction = "torus" if statistic == "T" else "ripley"
    if r is None:
        r = default_r_grid(model.window)
    r = _check_grid(r, model.window)
    cap = DEFAULT_MAX_HORIZON if max_horizon is None else max_horizon
    jobs = Parallel(n_jobs=n_jobs)(
        delayed(_replicate_curve)(model, statistic, r, correction, seed, i, cap)
        for i in range(n_sim)
    )
    curves = np.vstack(jobs)
    data_curve = (
        summary(data, statistic, r, correction).values if data is not None else np.full(r.shape, np.nan)
    )
    return EnvelopeBand(
        statistic=statistic,
        r=r,
        lo=curves.min(axis=0),
        hi=curves.max(axis=0),
        mean=curves.mean(axis=0),
        data=data_curve,
        n_sim=n_sim,
        correction=correction,
    )


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def write_curve_csv(curve: SummaryCurve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "value"])
        for r, v in zip(curve.r, curve.values):
            w.writerow([_fmt(r), _fmt(v)])


def write_envelope_csv(band: EnvelopeBand, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "lo", "mean", "hi", "data"])
        for row in zip(band.r, band.lo, band.mean, band.hi, band.data):
            w.writerow([_fmt(v) for v in row])
