"""Maximum pseudo-likelihood fitting by Berman-Turner quadrature.

The log pseudo-likelihood is approximated by

    sum_j w_j (y_j log lambda_j - lambda_j),   y_j = z_j / w_j,

over quadrature nodes u_j that include every data point (z_j = 1) plus a
grid of dummy points (z_j = 0). With
``log lambda(u) = theta_0 - sum_i theta_i a_i(u)``, where a_i(u) is the area
the grain of radius r_i around u adds to the dilation of the other points,
this is a weighted Poisson log-likelihood with a log link, maximised here by
Newton's method (IRLS). gamma_i = exp(theta_i).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .geometry import Grain, PointPattern, Window, default_step
from .geometry import _added_area_xy

__all__ = [
    "QuadratureScheme",
    "FitResult",
    "DegenerateDesignError",
    "make_quadrature",
    "interaction_covariates",
    "log_pseudo_likelihood",
    "logpl_gradient",
    "fit_mple",
    "profile_radii",
    "write_fit_json",
    "write_profile_csv",
]

LN10 = math.log(10.0)
DEFAULT_DUMMY = (32, 32)
MAX_ITER = 100
REL_TOL = 1e-8
GRAD_TOL = 1e-7


class DegenerateDesignError(ValueError):
    pass


@dataclass
class QuadratureScheme:
    """Quadrature nodes; data nodes come first, in pattern order."""

    locations: np.ndarray
    weights: np.ndarray
    z: np.ndarray
    window: Window
    grid: tuple[int, int]
    data_index: np.ndarray  # index into the pattern for data nodes, -1 for dummies

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    @property
    def n_nodes(self) -> int:
        return len(self.weights)

    @property
    def y(self) -> np.ndarray:
        return self.z / self.weights

    def check_covers(self, pattern: PointPattern):
        """Every data point must be a node."""
        idx = self.data_index[self.z == 1]
        if sorted(idx.tolist()) != list(range(pattern.n)):
            raise ValueError("quadrature scheme does not contain every data point as a node")
        if not np.allclose(self.locations[self.z == 1], pattern.coords[idx]):
            raise ValueError("quadrature data nodes do not match the pattern")


def make_quadrature(pattern: PointPattern, window: Window | None = None, grid=DEFAULT_DUMMY) -> QuadratureScheme:
    """Data points plus one dummy at each grid-cell centre, with counting weights.

    A node in a cell holding k nodes gets weight cell_area / k.
    """
    window = pattern.window if window is None else window
    nx, ny = (int(g) for g in grid)
    if nx < 1 or ny < 1:
        raise ValueError("dummy grid dimensions must be >= 1")
    dx, dy = window.width / nx, window.height / ny
    gx = window.xmin + (np.arange(nx) + 0.5) * dx
    gy = window.ymin + (np.arange(ny) + 0.5) * dy
    dummy = np.column_stack([np.repeat(gx, ny), np.tile(gy, nx)])
    dummy_cell = np.repeat(np.arange(nx), ny) * ny + np.tile(np.arange(ny), nx)

    xy = pattern.coords
    cx = np.clip(((xy[:, 0] - window.xmin) / dx).astype(int), 0, nx - 1)
    cy = np.clip(((xy[:, 1] - window.ymin) / dy).astype(int), 0, ny - 1)
    data_cell = cx * ny + cy

    cells = np.concatenate([data_cell, dummy_cell])
    counts = np.bincount(cells, minlength=nx * ny)
    weights = dx * dy / counts[cells]
    return QuadratureScheme(
        locations=np.vstack([xy, dummy]),
        weights=weights,
        z=np.concatenate([np.ones(pattern.n), np.zeros(len(dummy))]),
        window=window,
        grid=(nx, ny),
        data_index=np.concatenate([np.arange(pattern.n), np.full(len(dummy), -1)]),
    )


def interaction_covariates(pattern: PointPattern, scheme: QuadratureScheme, radii, step=None) -> np.ndarray:
    """Added areas a_i(u_j) for every node, shape (n_nodes, len(radii)).

    A data node is compared against the pattern with itself removed.
    """
    radii = [float(r) for r in radii]
    if not radii:
        return np.empty((scheme.n_nodes, 0))
    step = default_step(radii) if step is None else step
    window = scheme.window
    px = np.ascontiguousarray(pattern.x)
    py = np.ascontiguousarray(pattern.y)
    keep = np.ones(pattern.n, dtype=bool)
    out = np.empty((scheme.n_nodes, len(radii)))
    for k, r in enumerate(radii):
        grain = Grain(r, step)
        for j, (ux, uy) in enumerate(scheme.locations):
            di = scheme.data_index[j]
            if di >= 0:
                keep[di] = False
                out[j, k] = _added_area_xy(ux, uy, px[keep], py[keep], grain, window)
                keep[di] = True
            else:
                out[j, k] = _added_area_xy(ux, uy, px, py, grain, window)
    return out


def _design(covariates: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(covariates)), -covariates])


def _logpl(theta, X, w, z):
    eta = X @ theta
    return float(np.sum(z * eta) - np.sum(w * np.exp(eta)))


def _gradient(theta, X, w, z):
    mu = np.exp(X @ theta)
    return X.T @ (z - w * mu)


def _information(theta, X, w):
    mu = np.exp(X @ theta)
    return X.T @ (X * (w * mu)[:, None])


@dataclass
class FitResult:
    log10_lambda: float
    log10_gammas: list
    radii: list
    logPL: float
    converged: bool
    iterations: int
    std_errors: list = field(default_factory=list)
    constrained: bool = False
    within_model_space: bool = True

    @property
    def log10_gamma1(self):
        return self.log10_gammas[0] if len(self.log10_gammas) > 0 else 0.0

    @property
    def log10_gamma2(self):
        return self.log10_gammas[1] if len(self.log10_gammas) > 1 else 0.0

    @property
    def r1(self):
        return self.radii[0] if len(self.radii) > 0 else None

    @property
    def r2(self):
        return self.radii[1] if len(self.radii) > 1 else None

    @property
    def lam(self) -> float:
        return 10.0**self.log10_lambda

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.log10_lambda, *self.log10_gammas]) * LN10

    def report(self) -> dict:
        return {
            "log10_lambda": self.log10_lambda,
            "log10_gamma1": self.log10_gamma1,
            "log10_gamma2": self.log10_gamma2,
            "r1": self.r1,
            "r2": self.r2,
            "logPL": self.logPL,
            "converged": self.converged,
            "iterations": self.iterations,
            "std_errors": list(self.std_errors),
        }


def log_pseudo_likelihood(model, pattern: PointPattern, scheme: QuadratureScheme) -> float:
    """Quadrature log pseudo-likelihood of a fitted or given model.

    Returns ``-inf`` if the conditional intensity vanishes at a data node.
    """
    scheme.check_covers(pattern)
    radii = [t.radius for t in model.terms]
    cov = interaction_covariates(pattern, scheme, radii, model.step)
    log_lam = model.log_lambda - cov @ model.log_gammas if radii else np.full(scheme.n_nodes, model.log_lambda)
    lam = np.exp(log_lam)
    if np.any((lam == 0) & (scheme.z == 1)):
        return -math.inf
    return float(np.sum(scheme.z * log_lam) - np.sum(scheme.weights * lam))


def logpl_gradient(theta, covariates, scheme: QuadratureScheme) -> np.ndarray:
    """Gradient of the quadrature log pseudo-likelihood in (theta_0, theta_1, ...)."""
    return _gradient(np.asarray(theta, float), _design(covariates), scheme.weights, scheme.z)


def _check_design(X: np.ndarray, names):
    for k in range(1, X.shape[1]):
        col = X[:, k]
        if np.ptp(col) <= 1e-12 * max(1.0, np.abs(col).max()):
            raise DegenerateDesignError(f"covariate {names[k]} is constant across quadrature nodes")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DegenerateDesignError(f"design matrix is rank deficient (covariates {names[1:]})")


def _newton(X, w, z, lower, upper, max_iter=MAX_ITER):
    """Damped (projected) Newton ascent on the weighted Poisson log-likelihood."""
    p = X.shape[1]
    theta = np.zeros(p)
    theta[0] = math.log(max(z.sum(), 0.5) / w.sum())
    theta = np.clip(theta, lower, upper)
    ll = _logpl(theta, X, w, z)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = _gradient(theta, X, w, z)
        H = _information(theta, X, w)
        # variables held at a bound with the gradient pushing outward stay fixed
        free = ~(((theta <= lower) & (g < 0)) | ((theta >= upper) & (g > 0)))
        step = np.zeros(p)
        if free.any():
            Hf = H[np.ix_(free, free)]
            step[free] = np.linalg.solve(Hf, g[free])
        t = 1.0
        while True:
            cand = np.clip(theta + t * step, lower, upper)
            ll_new = _logpl(cand, X, w, z)
            if ll_new >= ll or t < 1e-10:
                break
            t *= 0.5
        change = abs(ll_new - ll) / max(1.0, abs(ll))
        theta, ll = cand, ll_new
        g = _gradient(theta, X, w, z)
        free = ~(((theta <= lower) & (g < 0)) | ((theta >= upper) & (g > 0)))
        gfree = g[free]
        if change < REL_TOL:
            if gfree.size == 0 or np.max(np.abs(gfree)) < GRAD_TOL:
                converged = True
                break
            # gradient left at rounding level: Newton decrement is negligible
            Hf = _information(theta, X, w)[np.ix_(free, free)]
            if float(gfree @ np.linalg.solve(Hf, gfree)) < 1e-14 * max(1.0, abs(ll)):
                converged = True
                break
    return theta, ll, converged, it


def fit_mple(pattern: PointPattern, radii=(), scheme: QuadratureScheme | None = None,
             constrained: bool = False, step: float | None = None,
             covariates: np.ndarray | None = None) -> FitResult:
    """Fit lambda and log10 gammas for fixed interaction radii.

    ``radii`` lists the scale radii (empty for a Poisson fit). With
    ``constrained`` the first term is kept attractive (gamma >= 1) and the
    others repulsive (gamma <= 1).
    """
    if pattern.n < 1:
        raise ValueError("pattern must contain at least one point")
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii):
        raise ValueError("radii must be positive")
    if scheme is None:
        scheme = make_quadrature(pattern)
    scheme.check_covers(pattern)
    if covariates is None:
        covariates = interaction_covariates(pattern, scheme, radii, step)
    X = _design(covariates)
    names = ["intercept"] + [f"a{k + 1}(r={r:g})" for k, r in enumerate(radii)]
    _check_design(X, names)
    p = X.shape[1]
    lower = np.full(p, -np.inf)
    upper = np.full(p, np.inf)
    if constrained and radii:
        lower[1] = 0.0
        upper[2:] = 0.0
    theta, ll, converged, it = _newton(X, scheme.weights, scheme.z, lower, upper)
    info = _information(theta, X, scheme.weights)
    try:
        se = np.sqrt(np.diag(np.linalg.inv(info))) / LN10
    except np.linalg.LinAlgError:
        se = np.full(p, np.nan)
    within = bool(theta[1] >= 0 and np.all(theta[2:] <= 0)) if radii else True
    return FitResult(
        log10_lambda=float(theta[0] / LN10),
        log10_gammas=[float(v / LN10) for v in theta[1:]],
        radii=radii,
        logPL=ll,
        converged=converged,
        iterations=it,
        std_errors=[float(s) for s in se],
        constrained=constrained,
        within_model_space=within,
    )


def _profile_cell(pattern, r1, r2, scheme, constrained, step):
    try:
        return fit_mple(pattern, (r1, r2), scheme, constrained=constrained, step=step)
    except (DegenerateDesignError, np.linalg.LinAlgError, ValueError):
        return None


def profile_radii(pattern: PointPattern, r1_grid, r2_grid, scheme: QuadratureScheme | None = None,
                  constrained: bool = False, n_jobs: int = 1, step: float | None = None):
    """Fit at every (r1, r2) pair; return the best fit and the full table.

    The table is a list of (r1, r2, logPL) rows in r1-major order, logPL
    being NaN where the fit failed. Ties go to the smaller r1, then the
    smaller r2.
    """
    r1_grid = sorted(float(r) for r in r1_grid)
    r2_grid = sorted(float(r) for r in r2_grid)
    if not r1_grid or not r2_grid:
        raise ValueError("radius grids must be nonempty")
    if scheme is None:
        scheme = make_quadrature(pattern)
    cells = [(a, b) for a in r1_grid for b in r2_grid]
    fits = Parallel(n_jobs=n_jobs)(
        delayed(_profile_cell)(pattern, a, b, scheme, constrained, step) for a, b in cells
    )
    table = []
    best = None
    for (a, b), fit in zip(cells, fits):
        table.append((a, b, fit.logPL if fit is not None else math.nan))
        if fit is not None and (best is None or fit.logPL > best.logPL):
            best = fit
    if best is None:
        raise DegenerateDesignError("every profile cell failed to fit")
    return best, table


def write_fit_json(fit: FitResult, path):
    with open(path, "w") as fh:
        json.dump(fit.report(), fh, indent=2)
        fh.write("\n")


def write_profile_csv(table, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r1", "r2", "logPL"])
        for a, b, ll in table:
            w.writerow([f"{a:.17g}", f"{b:.17g}", f"{ll:.17g}"])
