"""Multiscale area-interaction processes.

A model is a rate ``lambda`` and a list of scale terms ``(log10_gamma, radius)``.
Its unnormalised density is

    lambda**N(X) * prod_i gamma_i ** (-m(X + G_i))

so the conditional intensity of a new point u is
``lambda * prod_i gamma_i ** (-added_area(u, X, G_i))``. Terms with gamma > 1
are attractive, gamma < 1 repulsive, gamma == 1 inert.

Everything is computed from natural logs of the parameters, so gamma values
as extreme as 1e-200 are handled without underflow.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import Grain, PointPattern, Window, added_area, default_step, dilation_area
from .geometry import _added_area_xy

__all__ = [
    "ScaleTerm",
    "MultiscaleModel",
    "MonotoneFactor",
    "papangelou",
    "log_papangelou",
    "factor_decomposition",
    "dominating_rate",
    "lower_thinning_probability",
    "upper_birth_probability",
    "lower_birth_probability",
    "log_density_unnormalized",
    "mh_oracle_sample",
    "mh_oracle_chain",
]

LN10 = math.log(10.0)


@dataclass(frozen=True)
class ScaleTerm:
    log10_gamma: float
    grain: Grain

    @property
    def log_gamma(self) -> float:
        return self.log10_gamma * LN10

    @property
    def radius(self) -> float:
        return self.grain.radius


class MultiscaleModel:
    """Area-interaction model with any number of interaction scales.

    Parameters
    ----------
    lam : float
        Rate per unit area of ``window``.
    terms : sequence of (log10_gamma, radius) pairs or ScaleTerm
    window : Window
    step : float, optional
        Quadrature column width shared by all grains; defaults to the
        smallest radius over 50.
    """

    def __init__(self, lam: float, terms, window: Window, step: float | None = None):
        lam = float(lam)
        if not (math.isfinite(lam) and lam > 0):
            raise ValueError(f"lambda must be positive and finite, got {lam}")
        pairs = []
        for t in terms:
            if isinstance(t, ScaleTerm):
                pairs.append((float(t.log10_gamma), t.radius))
            else:
                lg, r = t
                pairs.append((float(lg), float(r)))
        for lg, r in pairs:
            if not math.isfinite(lg):
                raise ValueError(f"log10_gamma must be finite, got {lg}")
            if not (math.isfinite(r) and r > 0):
                raise ValueError(f"radius must be positive and finite, got {r}")
        for (lg_a, r_a), (lg_b, r_b) in itertools.combinations(pairs, 2):
            if r_a == r_b and lg_a * lg_b < 0:
                raise ValueError(f"terms of opposite direction share radius {r_a}")
        if step is None and pairs:
            step = default_step([r for _, r in pairs])
        self.lam = lam
        self.window = window
        self.step = step
        self.terms = tuple(ScaleTerm(lg, Grain(r, step)) for lg, r in pairs)
        for term in self.terms:
            if window.torus and 4 * term.radius > min(window.width, window.height):
                raise ValueError("torus boundary needs every radius <= a quarter of the shorter side")

    @classmethod
    def two_scale(cls, lam, log10_gamma1, log10_gamma2, r1, r2, window, step=None):
        """Attractive term at ``r1`` (gamma1 >= 1), repulsive term at ``r2`` (gamma2 <= 1)."""
        if log10_gamma1 < 0:
            raise ValueError(f"log10_gamma1 must be >= 0, got {log10_gamma1}")
        if log10_gamma2 > 0:
            raise ValueError(f"log10_gamma2 must be <= 0, got {log10_gamma2}")
        return cls(lam, [(log10_gamma1, r1), (log10_gamma2, r2)], window, step)

    @classmethod
    def from_dict(cls, config: dict, step=None) -> "MultiscaleModel":
        window = Window.from_bounds(config["window"], config.get("boundary", "clip"))
        terms = [(t["log10_gamma"], t["radius"]) for t in config.get("terms", [])]
        return cls(config["lambda"], terms, window, step)

    @classmethod
    def from_json(cls, path, step=None) -> "MultiscaleModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), step)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "terms": [{"log10_gamma": t.log10_gamma, "radius": t.radius} for t in self.terms],
            "window": list(self.window.bounds),
            "boundary": self.window.boundary,
        }

    @property
    def log_lambda(self) -> float:
        return math.log(self.lam)

    @property
    def log_gammas(self) -> np.ndarray:
        return np.array([t.log_gamma for t in self.terms])

    @property
    def grains(self) -> tuple[Grain, ...]:
        return tuple(t.grain for t in self.terms)

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def interaction_range(self) -> float:
        return max((t.radius for t in self.terms), default=0.0)

    def __repr__(self):
        terms = ", ".join(f"(log10_gamma={t.log10_gamma:g}, r={t.radius:g})" for t in self.terms)
        return f"MultiscaleModel(lam={self.lam:g}, terms=[{terms}], window={self.window.bounds})"

    # log-space bounds per term: log intensity ranges over [lo, hi]
    def _term_log_bounds(self):
        out = []
        for t in self.terms:
            full = -t.log_gamma * t.grain.area
            out.append((min(full, 0.0), max(full, 0.0)))
        return out

    def log_dominating_rate(self) -> float:
        return self.log_lambda + sum(hi for _, hi in self._term_log_bounds())

    def log_lower_thinning(self) -> float:
        return sum(lo - hi for lo, hi in self._term_log_bounds())

    def added_areas(self, u, X: PointPattern) -> np.ndarray:
        return np.array([added_area(u, X, g) for g in self.grains])


@dataclass(frozen=True)
class MonotoneFactor:
    """One monotone factor f of the density and the bounds of its conditional intensity.

    ``direction`` is the monotonicity of f itself under set inclusion.
    A decreasing factor (attractive term) has conditional intensity <= 1 that
    grows with the configuration; an increasing repulsive factor has
    intensity >= 1 that shrinks with it. The rate factor is constant.
    """

    direction: str
    cond_intensity: Callable
    intensity_min: float
    intensity_max: float
    name: str = ""


def _check_point(model: MultiscaleModel, u):
    u = np.asarray(u, dtype=float).reshape(2)
    if np.any(np.isnan(u)):
        raise ValueError("NaN point")
    return u


def log_papangelou(model: MultiscaleModel, u, X: PointPattern) -> float:
    u = _check_point(model, u)
    a = model.added_areas(u, X)
    return model.log_lambda - float(np.dot(a, model.log_gammas)) if len(a) else model.log_lambda


def papangelou(model: MultiscaleModel, u, X: PointPattern) -> float:
    """Conditional intensity lambda(u; X)."""
    return math.exp(log_papangelou(model, u, X))


def factor_decomposition(model: MultiscaleModel) -> list[MonotoneFactor]:
    lam = model.lam
    factors = [
        MonotoneFactor("increasing", lambda u, X: lam, lam, lam, name="rate"),
    ]
    for i, t in enumerate(model.terms):
        full = math.exp(-t.log_gamma * t.grain.area)

        def f(u, X, t=t):
            return math.exp(-t.log_gamma * added_area(u, X, t.grain))

        if t.log10_gamma > 0:
            factors.append(MonotoneFactor("decreasing", f, full, 1.0, name=f"term{i}"))
        else:
            factors.append(MonotoneFactor("increasing", f, 1.0, full, name=f"term{i}"))
    return factors


def dominating_rate(model: MultiscaleModel) -> float:
    """Rate of the dominating Poisson process: product of factor maxima."""
    return math.exp(model.log_dominating_rate())


def lower_thinning_probability(model: MultiscaleModel) -> float:
    """Probability that a dominating point starts in the lower process."""
    return math.exp(model.log_lower_thinning())


def _log_bound_pair(model, a_upper, a_lower):
    """Log acceptance bounds given added areas against U and against L."""
    lg = model.log_gammas
    lu = -lg * a_upper
    ll = -lg * a_lower
    hi = np.maximum(lu, ll).sum()
    lo = np.minimum(lu, ll).sum()
    offset = model.log_dominating_rate() - model.log_lambda
    return hi - offset, lo - offset


def _check_sandwich(U: PointPattern, L: PointPattern):
    if not L.id_set() <= U.id_set():
        raise ValueError("lower pattern is not contained in the upper pattern")


def upper_birth_probability(model, u, U: PointPattern, L: PointPattern) -> float:
    _check_sandwich(U, L)
    u = _check_point(model, u)
    hi, _ = _log_bound_pair(model, model.added_areas(u, U), model.added_areas(u, L))
    return math.exp(min(hi, 0.0))


def lower_birth_probability(model, u, U: PointPattern, L: PointPattern) -> float:
    _check_sandwich(U, L)
    u = _check_point(model, u)
    _, lo = _log_bound_pair(model, model.added_areas(u, U), model.added_areas(u, L))
    return math.exp(min(lo, 0.0))


def log_density_unnormalized(model: MultiscaleModel, X: PointPattern) -> float:
    out = X.n * model.log_lambda
    for t in model.terms:
        if t.log_gamma != 0.0 and X.n:
            out -= t.log_gamma * dilation_area(X, t.grain)
    return out


# --------------------------------------------------------------------------
# Metropolis-Hastings birth/death oracle (approximate; used by tests only)


class _LogIntensity:
    """Fast log conditional intensity over raw coordinate arrays."""

    def __init__(self, model: MultiscaleModel):
        self.model = model
        self.log_gammas = model.log_gammas
        self.active = [i for i, t in enumerate(model.terms) if t.log_gamma != 0.0]

    def __call__(self, cx, cy, px, py) -> float:
        out = self.model.log_lambda
        for i in self.active:
            t = self.model.terms[i]
            out -= t.log_gamma * _added_area_xy(cx, cy, px, py, t.grain, self.model.window)
        return out


def mh_oracle_chain(model: MultiscaleModel, n_samples: int, burn_in: int, thin: int,
                    rng: np.random.Generator, init: np.ndarray | None = None) -> list[np.ndarray]:
    """Run one birth/death Metropolis-Hastings chain and return thinned states.

    Each step proposes a birth (uniform location) or a death (uniform point)
    with probability 1/2 each. Birth acceptance is
    ``min(1, lambda(u; X) |W| / (n + 1))``; death acceptance is the reciprocal
    ratio for the removed point.
    """
    if n_samples < 1 or thin < 1 or burn_in < 0:
        raise ValueError("need n_samples >= 1, thin >= 1, burn_in >= 0")
    window = model.window
    area = window.area
    log_area = math.log(area)
    logint = _LogIntensity(model)
    cap = 64
    xs = np.empty(cap)
    ys = np.empty(cap)
    n = 0
    if init is not None:
        init = np.asarray(init, dtype=float).reshape(-1, 2)
        n = len(init)
        cap = max(cap, 2 * n)
        xs = np.empty(cap)
        ys = np.empty(cap)
        xs[:n] = init[:, 0]
        ys[:n] = init[:, 1]
    out = []
    total = burn_in + n_samples * thin
    for step in range(1, total + 1):
        if rng.random() < 0.5:
            loc = window.uniform(rng, 1)[0]
            log_ratio = logint(loc[0], loc[1], xs[:n], ys[:n]) + log_area - math.log(n + 1)
            if math.log(rng.random()) < log_ratio:
                if n == cap:
                    cap *= 2
                    xs = np.resize(xs, cap)
                    ys = np.resize(ys, cap)
                xs[n] = loc[0]
                ys[n] = loc[1]
                n += 1
        elif n > 0:
            i = int(rng.integers(n))
            # move victim to the end so the rest is a contiguous view
            xs[i], xs[n - 1] = xs[n - 1], xs[i]
            ys[i], ys[n - 1] = ys[n - 1], ys[i]
            log_ratio = math.log(n) - log_area - logint(xs[n - 1], ys[n - 1], xs[: n - 1], ys[: n - 1])
            if math.log(rng.random()) < log_ratio:
                n -= 1
        else:
            rng.random()
        if step > burn_in and (step - burn_in) % thin == 0:
            out.append(np.column_stack([xs[:n], ys[:n]]).copy())
    return out


def mh_oracle_sample(model: MultiscaleModel, n_steps: int, rng: np.random.Generator,
                     init: np.ndarray | None = None) -> PointPattern:
    """State of a birth/death MH chain after ``n_steps`` proposals (approximate draw)."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    (state,) = mh_oracle_chain(model, 1, n_steps - 1, 1, rng, init)
    return PointPattern(state, model.window)
