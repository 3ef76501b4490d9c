import json
import math

import numpy as np
import pytest

from perfectpp.cftp import perfect_sample
from perfectpp.geometry import PointPattern, Window
from perfectpp import inference
from perfectpp.inference import (
    DegenerateDesignError,
    FitResult,
    QuadratureScheme,
    fit_mple,
    interaction_covariates,
    log_pseudo_likelihood,
    logpl_gradient,
    make_quadrature,
    profile_radii,
    write_fit_json,
    write_profile_csv,
)
from perfectpp.models import MultiscaleModel, papangelou

UNIT = Window()


@pytest.fixture(scope="module")
def clustered():
    m = MultiscaleModel.two_scale(60, 8.0, -30.0, 0.06, 0.02, UNIT)
    return perfect_sample(m, seed=17).sample


class TestQuadrature:
    def test_empty_two_by_two(self):
        s = make_quadrature(PointPattern.empty(UNIT), grid=(2, 2))
        assert s.n_nodes == 4
        np.testing.assert_allclose(s.weights, 0.25)
        assert np.all(s.z == 0)

    def test_shared_cell_weights(self):
        s = make_quadrature(PointPattern([[0.1, 0.1]], UNIT), grid=(2, 2))
        assert s.weights[0] == pytest.approx(0.125)
        shared = np.all(np.isclose(s.locations, [0.25, 0.25]), axis=1)
        assert s.weights[shared][0] == pytest.approx(0.125)

    @pytest.mark.parametrize("grid", [(1, 1), (3, 7), (32, 32)])
    def test_weights_partition_window(self, grid, clustered):
        w = Window(0, 2, -1, 0.5)
        rng = np.random.default_rng(0)
        p = PointPattern(w.uniform(rng, 40), w)
        s = make_quadrature(p, grid=grid)
        assert s.weights.sum() == pytest.approx(w.area, rel=1e-9)
        assert np.all(s.weights > 0)
        s.check_covers(p)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            make_quadrature(PointPattern.empty(UNIT), grid=(0, 3))

    def test_missing_data_node_rejected(self, clustered):
        s = make_quadrature(clustered)
        keep = s.data_index != 0
        bad = QuadratureScheme(s.locations[keep], s.weights[keep], s.z[keep], s.window, s.grid,
                               s.data_index[keep])
        with pytest.raises(ValueError):
            bad.check_covers(clustered)


class TestCovariates:
    def test_data_node_excludes_itself(self):
        p = PointPattern([[0.5, 0.5], [0.9, 0.9]], UNIT)
        s = make_quadrature(p, grid=(2, 2))
        cov = interaction_covariates(p, s, [0.05])
        # both points are isolated once the node itself is removed
        np.testing.assert_allclose(cov[:2, 0], math.pi * 0.0025, rtol=1e-12)

    def test_logpl_matches_papangelou(self, clustered):
        m = MultiscaleModel.two_scale(60, 1.0, -1.0, 0.06, 0.02, UNIT)
        s = make_quadrature(clustered, grid=(8, 8))
        lam = []
        for j, u in enumerate(s.locations):
            di = s.data_index[j]
            X = clustered.subset(np.arange(clustered.n) != di) if di >= 0 else clustered
            lam.append(papangelou(m, u, X))
        lam = np.array(lam)
        expected = np.sum(s.z * np.log(lam)) - np.sum(s.weights * lam)
        assert log_pseudo_likelihood(m, clustered, s) == pytest.approx(expected, rel=1e-10)

    def test_poisson_logpl(self):
        p = PointPattern(UNIT.uniform(np.random.default_rng(1), 30), UNIT)
        m = MultiscaleModel(25.0, [], UNIT)
        got = log_pseudo_likelihood(m, p, make_quadrature(p))
        assert got == pytest.approx(30 * math.log(25) - 25, rel=1e-12)

    def test_node_order_invariance(self, clustered):
        m = MultiscaleModel.two_scale(60, 1.0, -1.0, 0.06, 0.02, UNIT)
        s = make_quadrature(clustered, grid=(8, 8))
        perm = np.random.default_rng(0).permutation(s.n_nodes)
        t = QuadratureScheme(s.locations[perm], s.weights[perm], s.z[perm], s.window, s.grid, s.data_index[perm])
        assert log_pseudo_likelihood(m, clustered, t) == pytest.approx(log_pseudo_likelihood(m, clustered, s),
                                                                       rel=1e-12)

    def test_refinement(self, clustered):
        m = MultiscaleModel.two_scale(60, 1.0, -1.0, 0.06, 0.02, UNIT)
        vals = [log_pseudo_likelihood(m, clustered, make_quadrature(clustered, grid=(g, g)))
                for g in (16, 32, 64)]
        assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])

    def test_zero_intensity_sentinel(self):
        # isolated data nodes add a full disc, so the intensity underflows to 0 there
        p = PointPattern([[0.2, 0.2], [0.8, 0.8]], UNIT)
        m = MultiscaleModel(10.0, [(1e6, 0.05)], UNIT)
        assert log_pseudo_likelihood(m, p, make_quadrature(p, grid=(4, 4))) == -math.inf


class TestFit:
    def test_poisson_closed_form(self, clustered):
        s = make_quadrature(clustered, grid=(64, 64))
        fit = fit_mple(clustered, (), s)
        assert 10**fit.log10_lambda == pytest.approx(clustered.n / UNIT.area, rel=1e-6)
        assert fit.converged

    def test_gradient_zero_at_optimum(self, clustered):
        s = make_quadrature(clustered, grid=(32, 32))
        cov = interaction_covariates(clustered, s, [0.06, 0.02])
        fit = fit_mple(clustered, (0.06, 0.02), s, covariates=cov)
        assert fit.converged
        assert np.max(np.abs(logpl_gradient(fit.theta, cov, s))) < 1e-6

    def test_gradient_finite_differences(self, clustered):
        s = make_quadrature(clustered, grid=(16, 16))
        cov = interaction_covariates(clustered, s, [0.06, 0.02])
        rng = np.random.default_rng(3)

        def logpl(theta):
            m = MultiscaleModel(math.exp(theta[0]), list(zip(theta[1:] / math.log(10), [0.06, 0.02])), UNIT)
            return log_pseudo_likelihood(m, clustered, s)

        for _ in range(3):
            theta = np.array([math.log(60), rng.uniform(0, 30), rng.uniform(-30, 0)])
            g = logpl_gradient(theta, cov, s)
            fd = np.empty(3)
            for k in range(3):
                h = 1e-5 * max(1.0, abs(theta[k]))
                e = np.zeros(3)
                e[k] = h
                fd[k] = (logpl(theta + e) - logpl(theta - e)) / (2 * h)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6 * np.abs(g).max())

    def test_degenerate_design(self):
        # points far apart: nothing overlaps at this tiny radius, so a1 is constant
        p = PointPattern([[0.25, 0.25], [0.75, 0.75]], UNIT)
        with pytest.raises(DegenerateDesignError, match="a1"):
            fit_mple(p, (1e-4,), make_quadrature(p, grid=(4, 4)))

    def test_constrained_bounds(self):
        p = PointPattern(UNIT.uniform(np.random.default_rng(5), 80), UNIT)
        fit = fit_mple(p, (0.06, 0.02), constrained=True)
        assert fit.log10_gamma1 >= 0 and fit.log10_gamma2 <= 0
        assert fit.within_model_space

    def test_csr_interactions_near_zero(self):
        p = PointPattern(UNIT.uniform(np.random.default_rng(6), 150), UNIT)
        fit = fit_mple(p, (0.06, 0.02), make_quadrature(p, grid=(64, 64)))
        for est, se in zip(fit.log10_gammas, fit.std_errors[1:]):
            assert abs(est) < 3 * se
        assert 10**fit.log10_lambda == pytest.approx(150, rel=0.5)

    def test_empty_pattern(self):
        with pytest.raises(ValueError):
            fit_mple(PointPattern.empty(UNIT), (0.05,))

    def test_report_keys(self, clustered, tmp_path):
        fit = fit_mple(clustered, (0.06, 0.02))
        write_fit_json(fit, tmp_path / "f.json")
        keys = list(json.loads((tmp_path / "f.json").read_text()))
        assert keys == ["log10_lambda", "log10_gamma1", "log10_gamma2", "r1", "r2", "logPL",
                        "converged", "iterations", "std_errors"]


class TestProfile:
    def test_table_and_best(self, clustered, tmp_path):
        s = make_quadrature(clustered, grid=(16, 16))
        r1 = [0.05, 0.06, 0.07]
        r2 = [0.01, 0.02]
        best, table = profile_radii(clustered, r1, r2, s)
        assert len(table) == 6
        assert best.logPL == max(ll for _, _, ll in table)
        write_profile_csv(table, tmp_path / "p.csv")
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines[0] == "r1,r2,logPL" and len(lines) == 7

    def test_single_cell_equals_fit(self, clustered):
        s = make_quadrature(clustered, grid=(16, 16))
        best, _ = profile_radii(clustered, [0.06], [0.02], s)
        direct = fit_mple(clustered, (0.06, 0.02), s)
        assert best.logPL == direct.logPL
        assert best.log10_gammas == direct.log10_gammas

    def test_ties_prefer_smaller_radii(self, clustered, monkeypatch):
        def flat(pattern, r1, r2, scheme, constrained, step):
            return FitResult(1.0, [0.0, 0.0], [r1, r2], -5.0, True, 1, [0.0] * 3, False, True)

        monkeypatch.setattr(inference, "_profile_cell", flat)
        best, table = profile_radii(clustered, [0.07, 0.05, 0.06], [0.03, 0.01])
        assert (best.r1, best.r2) == (0.05, 0.01)
        assert [row[:2] for row in table][:2] == [(0.05, 0.01), (0.05, 0.03)]

    def test_failed_cells_are_nan(self):
        p = PointPattern([[0.25, 0.25], [0.75, 0.75]], UNIT)
        s = make_quadrature(p, grid=(4, 4))
        with pytest.raises(DegenerateDesignError):
            profile_radii(p, [1e-4], [2e-4], s)
