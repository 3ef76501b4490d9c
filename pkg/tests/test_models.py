import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from perfectpp.geometry import PointPattern, Window
from perfectpp.models import (
    MultiscaleModel,
    dominating_rate,
    factor_decomposition,
    log_density_unnormalized,
    log_papangelou,
    lower_birth_probability,
    lower_thinning_probability,
    mh_oracle_chain,
    mh_oracle_sample,
    papangelou,
    upper_birth_probability,
)

UNIT = Window()
REDWOOD = dict(lam=0.118, log10_gamma1=math.log10(2000), log10_gamma2=-200.0, r1=0.07, r2=0.013)


def redwood_model(window=UNIT):
    return MultiscaleModel.two_scale(window=window, **REDWOOD)


def direct_isolated_intensity(lam, gammas, radii):
    return lam * np.prod([g ** (-math.pi * r * r) for g, r in zip(gammas, radii)])


class TestKnownValues:
    def test_isolated_point_redwood(self):
        m = redwood_model()
        empty = PointPattern.empty(UNIT)
        got = papangelou(m, (0.5, 0.5), empty)
        assert got == pytest.approx(0.13407, abs=1e-3)
        # log-space direct formula: gamma2 = 1e-200 would underflow in float powers
        log_direct = (math.log(0.118) - math.log(2000) * math.pi * 0.07**2
                      + 200 * math.log(10) * math.pi * 0.013**2)
        assert got == pytest.approx(math.exp(log_direct), rel=1e-12)

    def test_dominating_rate_redwood(self):
        m = redwood_model()
        expected = math.exp(math.log(0.118) + 200 * math.log(10) * math.pi * 0.013**2)
        assert dominating_rate(m) == pytest.approx(expected, rel=1e-12)
        assert dominating_rate(m) == pytest.approx(0.15071, abs=1e-3)

    def test_lower_thinning_redwood(self):
        m = redwood_model()
        expected = math.exp(-math.log(2000) * math.pi * 0.07**2 - 200 * math.log(10) * math.pi * 0.013**2)
        assert lower_thinning_probability(m) == pytest.approx(expected, rel=1e-12)
        assert lower_thinning_probability(m) == pytest.approx(0.69652, abs=1e-3)

    def test_poisson_case(self):
        m = MultiscaleModel.two_scale(100, 0.0, 0.0, 0.05, 0.02, UNIT)
        X = PointPattern([[0.5, 0.5], [0.51, 0.5]], UNIT)
        assert papangelou(m, (0.505, 0.5), X) == pytest.approx(100.0)
        assert dominating_rate(m) == pytest.approx(100.0)
        assert lower_thinning_probability(m) == 1.0
        assert log_density_unnormalized(m, X) == pytest.approx(2 * math.log(100))

    def test_three_scale_isolated(self):
        w = Window(-1, 2, -1, 2)
        m = MultiscaleModel(5.0, [(1.0, 0.1), (-0.5, 0.05), (0.3, 0.2)], w)
        got = papangelou(m, (0.5, 0.5), PointPattern.empty(w))
        assert got == pytest.approx(direct_isolated_intensity(5.0, [10, 10**-0.5, 10**0.3], [0.1, 0.05, 0.2]),
                                    rel=1e-12)


class TestValidation:
    def test_bad_lambda(self):
        with pytest.raises(ValueError):
            MultiscaleModel(0.0, [], UNIT)

    def test_wrong_direction_two_scale(self):
        with pytest.raises(ValueError):
            MultiscaleModel.two_scale(1.0, -1.0, -1.0, 0.05, 0.02, UNIT)
        with pytest.raises(ValueError):
            MultiscaleModel.two_scale(1.0, 1.0, 1.0, 0.05, 0.02, UNIT)

    def test_opposite_terms_same_radius(self):
        with pytest.raises(ValueError):
            MultiscaleModel(1.0, [(1.0, 0.05), (-1.0, 0.05)], UNIT)

    def test_nonfinite_gamma(self):
        with pytest.raises(ValueError):
            MultiscaleModel(1.0, [(math.inf, 0.05)], UNIT)

    def test_torus_radius(self):
        with pytest.raises(ValueError):
            MultiscaleModel(1.0, [(1.0, 0.3)], Window(0, 1, 0, 1, "torus"))

    def test_nan_point(self):
        with pytest.raises(ValueError):
            papangelou(redwood_model(), (math.nan, 0.5), PointPattern.empty(UNIT))

    def test_sandwich_precondition(self):
        m = redwood_model()
        U = PointPattern([[0.2, 0.2]], UNIT)
        L = PointPattern([[0.3, 0.3]], UNIT)
        with pytest.raises(ValueError):
            upper_birth_probability(m, (0.5, 0.5), U, L)

    def test_json_roundtrip(self, tmp_path):
        m = MultiscaleModel(2.0, [(1.5, 0.07), (-3.0, 0.013)], Window(0, 2, 0, 1, "clip"))
        path = tmp_path / "m.json"
        path.write_text(json.dumps(m.to_dict()))
        raw = json.loads(path.read_text())
        assert set(raw) == {"lambda", "terms", "window", "boundary"}
        assert set(raw["terms"][0]) == {"log10_gamma", "radius"}
        m2 = MultiscaleModel.from_json(path)
        assert m2.to_dict() == m.to_dict()


class TestFactors:
    def test_product_of_factors_is_intensity(self):
        m = MultiscaleModel.two_scale(50, math.log10(2), math.log10(0.5), 0.05, 0.02, UNIT)
        rng = np.random.default_rng(0)
        X = PointPattern(UNIT.uniform(rng, 15), UNIT)
        for u in UNIT.uniform(rng, 5):
            prod = np.prod([f.cond_intensity(u, X) for f in factor_decomposition(m)])
            assert prod == pytest.approx(papangelou(m, u, X), rel=1e-12)

    def test_bounds_and_directions(self):
        m = MultiscaleModel.two_scale(50, math.log10(2), math.log10(0.5), 0.05, 0.02, UNIT)
        factors = factor_decomposition(m)
        assert [f.direction for f in factors] == ["increasing", "decreasing", "increasing"]
        assert math.prod(f.intensity_max for f in factors) == pytest.approx(dominating_rate(m), rel=1e-12)
        ratio = math.prod(f.intensity_min / f.intensity_max for f in factors)
        assert ratio == pytest.approx(lower_thinning_probability(m), rel=1e-12)
        rng = np.random.default_rng(1)
        small = PointPattern(UNIT.uniform(rng, 5), UNIT)
        large = PointPattern(np.vstack([small.coords, UNIT.uniform(rng, 20)]), UNIT)
        u = (0.5, 0.5)
        attractive, repulsive = factors[1], factors[2]
        assert attractive.cond_intensity(u, small) <= attractive.cond_intensity(u, large)
        assert repulsive.cond_intensity(u, small) >= repulsive.cond_intensity(u, large)
        for f in factors:
            for X in (small, large):
                assert f.intensity_min * (1 - 1e-12) <= f.cond_intensity(u, X) <= f.intensity_max * (1 + 1e-12)


def random_model(rng, n_terms=None):
    n_terms = n_terms or int(rng.integers(1, 4))
    radii = rng.uniform(0.02, 0.12, n_terms)
    terms = []
    for r in radii:
        lg = rng.uniform(0.1, 3.0) * (1 if rng.random() < 0.5 else -1)
        terms.append((lg, r))
    if len(terms) > 1 and len({t[0] > 0 for t in terms}) == 1:
        terms[0] = (-terms[0][0], terms[0][1])
    return MultiscaleModel(float(rng.uniform(5, 100)), terms, UNIT)


def random_sandwich(rng, max_extra=10):
    n_l = int(rng.integers(0, 8))
    n_extra = int(rng.integers(0, max_extra + 1))
    # cluster points so discs overlap the candidate
    centre = UNIT.uniform(rng, 1)[0]
    pts = np.clip(centre + rng.normal(0, 0.08, (n_l + n_extra, 2)), 0, 1)
    U = PointPattern(pts, UNIT)
    L = U.subset(np.arange(n_l))
    u = np.clip(centre + rng.normal(0, 0.05, 2), 0, 1)
    return u, U, L


def intermediate_patterns(U, L):
    extra = [i for i, pid in enumerate(U.ids) if pid not in L.id_set()]
    base = [i for i, pid in enumerate(U.ids) if pid in L.id_set()]
    for k in range(len(extra) + 1):
        for chosen in itertools.combinations(extra, k):
            yield U.subset(np.array(base + list(chosen), dtype=int))


def brute_force_range(model, u, U, L):
    d = dominating_rate(model)
    vals = [papangelou(model, u, X) / d for X in intermediate_patterns(U, L)]
    return min(vals), max(vals)


def test_brute_force_sandwich_small():
    rng = np.random.default_rng(7)
    for _ in range(40):
        m = random_model(rng)
        u, U, L = random_sandwich(rng, 6)
        lo, hi = brute_force_range(m, u, U, L)
        assert lower_birth_probability(m, u, U, L) <= lo * (1 + 1e-9)
        assert hi <= upper_birth_probability(m, u, U, L) * (1 + 1e-9)
        assert upper_birth_probability(m, u, U, L) <= 1.0


def test_one_term_bounds_are_tight():
    rng = np.random.default_rng(8)
    for _ in range(30):
        m = random_model(rng, n_terms=1)
        u, U, L = random_sandwich(rng, 5)
        lo, hi = brute_force_range(m, u, U, L)
        assert lower_birth_probability(m, u, U, L) == pytest.approx(lo, rel=1e-9)
        assert upper_birth_probability(m, u, U, L) == pytest.approx(hi, rel=1e-9)


def test_coalesced_bounds_equal():
    m = MultiscaleModel.two_scale(50, math.log10(2), math.log10(0.5), 0.05, 0.02, UNIT)
    X = PointPattern([[0.5, 0.5], [0.52, 0.49]], UNIT)
    u = (0.51, 0.51)
    p = papangelou(m, u, X) / dominating_rate(m)
    assert upper_birth_probability(m, u, X, X) == pytest.approx(p, rel=1e-12)
    assert lower_birth_probability(m, u, X, X) == pytest.approx(p, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_coupling(seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng)
    u, U, L = random_sandwich(rng, 6)
    more = PointPattern(np.clip(u + rng.normal(0, 0.05, (3, 2)), 0, 1), UNIT)
    U2 = PointPattern(np.vstack([U.coords, more.coords]), UNIT, np.concatenate([U.ids, more.ids]))
    L2 = L.subset(np.arange(L.n // 2))
    assert upper_birth_probability(m, u, U2, L2) >= upper_birth_probability(m, u, U, L)
    assert lower_birth_probability(m, u, U2, L2) <= lower_birth_probability(m, u, U, L)


def test_extreme_gamma_finite():
    m = redwood_model()
    rng = np.random.default_rng(2)
    U = PointPattern(rng.uniform(0.45, 0.55, (10, 2)), UNIT)
    L = U.subset(np.arange(3))
    for u in [(0.5, 0.5), (0.0, 0.0), (0.9, 0.1)]:
        for p in (upper_birth_probability(m, u, U, L), lower_birth_probability(m, u, U, L), papangelou(m, u, U)):
            assert math.isfinite(p) and p > 0
    assert math.isfinite(log_density_unnormalized(m, U))
    # the strongly repulsive factor makes crowding extremely unlikely but still finite
    assert lower_birth_probability(m, (0.5, 0.5), U, L) > 0


def test_log_density_difference():
    m = MultiscaleModel(20, [(1.0, 0.08), (-0.7, 0.03), (0.4, 0.15)], UNIT)
    rng = np.random.default_rng(5)
    for _ in range(10):
        X = PointPattern(UNIT.uniform(rng, int(rng.integers(0, 12))), UNIT)
        u = UNIT.uniform(rng, 1)[0]
        Xu = X.with_point(u)
        diff = log_density_unnormalized(m, Xu) - log_density_unnormalized(m, X)
        # exact clipped-disc term versus union grid difference: relative area error ~1e-3 per term
        tol = 2e-3 * sum(abs(t.log_gamma) * t.grain.area for t in m.terms) + 1e-12
        assert abs(diff - log_papangelou(m, u, X)) <= tol


def test_mh_birth_ratio_matches_density():
    m = MultiscaleModel.two_scale(50, math.log10(2), math.log10(0.5), 0.05, 0.02, UNIT)
    rng = np.random.default_rng(3)
    X = PointPattern(UNIT.uniform(rng, 30), UNIT)
    u = (0.4, 0.6)
    # Hastings ratio for birth: density ratio * |W| / (n + 1)
    expected = math.exp(log_density_unnormalized(m, X.with_point(u)) - log_density_unnormalized(m, X)) \
        * UNIT.area / (X.n + 1)
    got = papangelou(m, u, X) * UNIT.area / (X.n + 1)
    assert got == pytest.approx(expected, rel=5e-3)


@pytest.mark.slow
def test_mh_poisson_reduction():
    m = MultiscaleModel.two_scale(40, 0.0, 0.0, 0.05, 0.02, UNIT)
    rng = np.random.default_rng(4)
    counts = [len(s) for s in mh_oracle_chain(m, 400, 2000, 50, rng)]
    # thinned chain is autocorrelated; 3 is about five effective standard errors
    assert abs(np.mean(counts) - 40) < 3


@pytest.mark.slow
def test_mh_start_independence():
    m = MultiscaleModel.two_scale(50, math.log10(2), math.log10(0.5), 0.05, 0.02, UNIT)
    a = [len(s) for s in mh_oracle_chain(m, 300, 3000, 40, np.random.default_rng(10))]
    start = UNIT.uniform(np.random.default_rng(11), 80)
    b = [len(s) for s in mh_oracle_chain(m, 300, 3000, 40, np.random.default_rng(12), init=start)]
    assert sps.ks_2samp(a, b).pvalue > 0.001


def test_mh_sample_shape():
    m = MultiscaleModel.two_scale(20, 0.5, -0.5, 0.05, 0.02, UNIT)
    s = mh_oracle_sample(m, 200, np.random.default_rng(0), None)
    assert isinstance(s, PointPattern)
    assert np.all(UNIT.contains(s.coords))
