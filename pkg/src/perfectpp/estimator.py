"""scikit-learn style wrappers.

``AreaInteractionMPLE`` fits a multiscale area-interaction model to one
point pattern (``fit``), scores patterns by log pseudo-likelihood
(``score``) and draws exact samples from the fitted model (``sample``).
``SummaryFunction`` turns a list of patterns into rows of K, L or T values.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .cftp import DEFAULT_MAX_HORIZON, perfect_sample
from .inference import fit_mple, log_pseudo_likelihood, make_quadrature, profile_radii
from .models import MultiscaleModel
from .stats import default_r_grid, summary
from .validation import check_pattern, check_radii, check_window


class AreaInteractionMPLE(BaseEstimator):
    """Maximum pseudo-likelihood fit of a multiscale area-interaction process.

    Parameters
    ----------
    window : Window or (xmin, xmax, ymin, ymax)
    radii : tuple of float
        Interaction radii; the first is the attractive scale.
    r1_grid, r2_grid : array-like, optional
        If both are given, ``fit`` profiles over them and ``radii`` is ignored.
    dummy : (int, int)
        Dummy grid for the quadrature.
    constrained : bool
        Keep gamma_1 >= 1 and the other gammas <= 1.
    boundary : {"clip", "torus"}
    """

    def __init__(self, window=(0.0, 1.0, 0.0, 1.0), radii=(0.07, 0.013), r1_grid=None, r2_grid=None,
                 dummy=(32, 32), constrained=False, boundary="clip", step=None, n_jobs=1):
        self.window = window
        self.radii = radii
        self.r1_grid = r1_grid
        self.r2_grid = r2_grid
        self.dummy = dummy
        self.constrained = constrained
        self.boundary = boundary
        self.step = step
        self.n_jobs = n_jobs

    def _window(self):
        return check_window(self.window, self.boundary)

    def fit(self, X, y=None):
        window = self._window()
        pattern = check_pattern(X, window)
        if pattern.n < 1:
            raise ValueError("cannot fit an empty pattern")
        scheme = make_quadrature(pattern, window, self.dummy)
        if self.r1_grid is not None and self.r2_grid is not None:
            fit, table = profile_radii(pattern, self.r1_grid, self.r2_grid, scheme,
                                       self.constrained, self.n_jobs, self.step)
            self.profile_ = table
        else:
            radii = check_radii(self.radii)
            fit = fit_mple(pattern, radii, scheme, constrained=self.constrained, step=self.step)
            self.profile_ = None
        self.fit_result_ = fit
        self.lambda_ = fit.lam
        self.log10_gammas_ = np.array(fit.log10_gammas)
        self.radii_ = tuple(fit.radii)
        self.std_errors_ = np.array(fit.std_errors)
        self.n_features_in_ = 2
        return self

    @property
    def model_(self) -> MultiscaleModel:
        check_is_fitted(self, "fit_result_")
        return MultiscaleModel(self.lambda_, list(zip(self.log10_gammas_, self.radii_)),
                               self._window(), self.step)

    def score(self, X, y=None) -> float:
        """Quadrature log pseudo-likelihood of ``X`` under the fitted model."""
        check_is_fitted(self, "fit_result_")
        pattern = check_pattern(X, self._window())
        return log_pseudo_likelihood(self.model_, pattern, make_quadrature(pattern, grid=self.dummy))

    def sample(self, n_samples=1, random_state=0, max_horizon=DEFAULT_MAX_HORIZON):
        """Exact draws from the fitted model as a list of (n_i, 2) arrays."""
        check_is_fitted(self, "fit_result_")
        model = self.model_
        seed = 0 if random_state is None else int(random_state)
        return [
            np.array(perfect_sample(model, seed, replicate=i, max_horizon=max_horizon).sample.coords)
            for i in range(n_samples)
        ]


class SummaryFunction(TransformerMixin, BaseEstimator):
    """Map each pattern to its K, L or T curve on a fixed r grid."""

    def __init__(self, statistic="L", window=(0.0, 1.0, 0.0, 1.0), rmax=None, rsteps=512,
                 correction=None, boundary="clip"):
        self.statistic = statistic
        self.window = window
        self.rmax = rmax
        self.rsteps = rsteps
        self.correction = correction
        self.boundary = boundary

    def fit(self, X=None, y=None):
        window = check_window(self.window, self.boundary)
        self.r_ = default_r_grid(window, self.rsteps, self.rmax)
        return self

    def transform(self, X):
        check_is_fitted(self, "r_")
        window = check_window(self.window, self.boundary)
        rows = [summary(check_pattern(p, window), self.statistic, self.r_, self.correction).values
                for p in X]
        return np.vstack(rows)
