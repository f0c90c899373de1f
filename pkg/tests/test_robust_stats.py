import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from robust_rkm.errors import DataValidationError, DegenerateScatter, SubsetTooSmall
from robust_rkm.robust_stats import (
    DOWNWEIGHT,
    McdEstimate,
    WeightVector,
    chi2_cdf,
    chi2_quantile,
    compute_weights,
    consistency_factor,
    fast_mcd,
    mahalanobis_sq,
)


class TestChi2Quantile:
    def test_median_dof2_closed_form(self):
        # chi2(2) is Exp(1/2): median = 2 ln 2
        assert chi2_quantile(2, 0.5) == pytest.approx(2 * np.log(2), abs=1e-9)

    def test_dof2_alpha_0975_closed_form(self):
        # survival of Exp(1/2): q = -2 ln(0.025)
        assert chi2_quantile(2, 0.975) == pytest.approx(-2 * np.log(0.025), abs=1e-9)

    def test_dof3_alpha_0975_quadrature_oracle(self):
        q = chi2_quantile(3, 0.975)

        def density(x):
            return x**0.5 * np.exp(-x / 2) / (np.sqrt(2 * np.pi))

        mass, _ = integrate.quad(density, 0.0, q, limit=200)
        assert mass == pytest.approx(0.975, abs=1e-9)

    def test_roundtrip_cdf(self):
        for dof in (1, 2, 5, 30):
            for p in (0.01, 0.5, 0.9, 0.999):
                assert chi2_cdf(dof, chi2_quantile(dof, p)) == pytest.approx(p, abs=1e-9)

    def test_extreme_tails_hold_tolerance(self):
        # far-tail quantiles can be ~1e-18; the solver must not stop early
        for dof in (1, 3, 50, 300):
            for p in (1e-12, 1e-9, 1 - 1e-9):
                q = chi2_quantile(dof, p)
                assert abs(chi2_cdf(dof, q) - p) <= 1e-9

    def test_domain_errors(self):
        with pytest.raises(DataValidationError):
            chi2_quantile(2, 0.0)
        with pytest.raises(DataValidationError):
            chi2_quantile(2, 1.0)
        with pytest.raises(DataValidationError):
            chi2_quantile(0, 0.5)


class TestMahalanobis:
    def _est(self, mean, cov):
        cov = np.asarray(cov, dtype=float)
        return McdEstimate(
            mean=np.asarray(mean, dtype=float), cov=cov, raw_cov=cov,
            support=np.arange(5), det_raw=float(np.linalg.det(cov)), consistency=1.0,
        )

    def test_zero_at_the_mean(self):
        est = self._est([1.0, -2.0], np.eye(2))
        assert mahalanobis_sq(np.array([[1.0, -2.0]]), est)[0] == 0.0

    def test_euclidean_case(self):
        est = self._est([0.0, 0.0], np.eye(2))
        assert mahalanobis_sq(np.array([[3.0, 4.0]]), est)[0] == pytest.approx(25.0)

    def test_matches_explicit_inverse_oracle(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((2, 2))
        cov = a @ a.T + 0.5 * np.eye(2)
        mean = rng.standard_normal(2)
        pts = rng.standard_normal((5, 2))
        est = self._est(mean, cov)
        got = mahalanobis_sq(pts, est)
        # explicit 2x2 inverse
        inv = np.linalg.inv(cov)
        expected = [float((p - mean) @ inv @ (p - mean)) for p in pts]
        np.testing.assert_allclose(got, expected, rtol=1e-10)

    def test_singular_cov_raises(self):
        est = self._est([0.0, 0.0], np.zeros((2, 2)))
        with pytest.raises(DegenerateScatter):
            mahalanobis_sq(np.zeros((3, 2)), est)


class TestFastMcd:
    def test_clean_data_close_to_sample_mean(self):
        rng = np.random.default_rng(11)
        pts = rng.standard_normal((50, 2))
        est = fast_mcd(pts, n_mcd=37, restarts=50, seed=0)
        assert np.abs(est.mean).max() < 0.5
        assert np.linalg.norm(est.mean - pts.mean(axis=0)) < 0.5

    def test_planted_outliers_excluded_from_support(self):
        rng = np.random.default_rng(12)
        inliers = rng.standard_normal((40, 2))
        outliers = rng.standard_normal((10, 2)) + 100.0
        pts = np.vstack([inliers, outliers])
        # construction oracle: every outlier is farther from the inlier cloud
        # than every inlier
        d_in = np.linalg.norm(inliers - inliers.mean(0), axis=1).max()
        d_out = np.linalg.norm(outliers - inliers.mean(0), axis=1).min()
        assert d_out > d_in
        est = fast_mcd(pts, n_mcd=37, restarts=50, seed=0)
        assert est.support.shape[0] == 37
        assert not np.any(est.support >= 40)

    def test_exhaustive_minimum_at_tiny_n(self):
        rng = np.random.default_rng(13)
        pts = rng.standard_normal((8, 2))
        best_det = min(
            np.linalg.det(np.cov(pts[list(c)], rowvar=False, ddof=1))
            for c in itertools.combinations(range(8), 6)
        )
        est = fast_mcd(pts, n_mcd=6, restarts=500, seed=1)
        assert est.det_raw == pytest.approx(best_det, rel=1e-9)

    def test_cstep_determinants_non_increasing(self):
        rng = np.random.default_rng(14)
        pts = rng.standard_normal((60, 3))
        est = fast_mcd(pts, n_mcd=45, restarts=50, seed=2)
        assert est.det_traces
        for trace in est.det_traces:
            diffs = np.diff(trace)
            assert np.all(diffs <= np.asarray(trace[:-1]) * 1e-9)

    def test_subset_too_small(self):
        pts = np.random.default_rng(0).standard_normal((20, 2))
        with pytest.raises(SubsetTooSmall):
            fast_mcd(pts, n_mcd=10, restarts=10, seed=0)  # floor((20+2+1)/2) = 11

    def test_affine_equivariant_support(self):
        rng = np.random.default_rng(15)
        pts = rng.standard_normal((10, 2))
        a = np.array([[2.0, 0.3], [-0.5, 1.2]])
        b = np.array([5.0, -3.0])
        transformed = pts @ a.T + b
        # exhaustive oracle: determinants all scale by det(A)^2, argmin fixed
        combos = list(itertools.combinations(range(10), 7))
        det0 = [np.linalg.det(np.cov(pts[list(c)], rowvar=False, ddof=1)) for c in combos]
        det1 = [
            np.linalg.det(np.cov(transformed[list(c)], rowvar=False, ddof=1))
            for c in combos
        ]
        assert np.argmin(det0) == np.argmin(det1)
        e0 = fast_mcd(pts, n_mcd=7, restarts=400, seed=3)
        e1 = fast_mcd(transformed, n_mcd=7, restarts=400, seed=3)
        np.testing.assert_array_equal(e0.support, e1.support)
        np.testing.assert_array_equal(np.sort(e0.support), np.array(combos[np.argmin(det0)]))

    def test_deterministic_for_fixed_seed(self):
        pts = np.random.default_rng(16).standard_normal((30, 2))
        a = fast_mcd(pts, n_mcd=23, restarts=50, seed=9)
        b = fast_mcd(pts, n_mcd=23, restarts=50, seed=9)
        np.testing.assert_array_equal(a.support, b.support)
        np.testing.assert_array_equal(a.cov, b.cov)


class TestComputeWeights:
    def test_identical_points_degenerate(self):
        pts = np.ones((40, 2)) + 1e-320 * np.random.default_rng(0).standard_normal((40, 2))
        with pytest.raises(DegenerateScatter):
            compute_weights(pts, seed=0)

    def test_planted_outliers_downweighted(self):
        rng = np.random.default_rng(17)
        inliers = rng.standard_normal((160, 2))
        outliers = rng.standard_normal((40, 2)) + 50.0  # 50 sigma away
        pts = np.vstack([inliers, outliers])
        wv = compute_weights(pts, seed=3)
        assert np.all(wv.weights[160:] == DOWNWEIGHT)

    def test_clean_gaussian_false_alarm_rate(self):
        flagged = []
        for seed in range(20):
            pts = np.random.default_rng(100 + seed).standard_normal((1000, 2))
            wv = compute_weights(pts, alpha=0.975, seed=seed)
            flagged.append(np.mean(wv.weights == DOWNWEIGHT))
        assert np.mean(flagged) <= 0.08

    def test_weights_binary_valued(self):
        rng = np.random.default_rng(18)
        pts = rng.standard_normal((80, 3))
        wv = compute_weights(pts, seed=0)
        assert set(np.unique(wv.weights)) <= {1.0, DOWNWEIGHT}
        # invariant: weight 1 iff distance within threshold
        np.testing.assert_array_equal(wv.weights == 1.0, wv.distances_sq <= wv.threshold)

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(19)
        pts = np.vstack([rng.standard_normal((90, 2)), rng.standard_normal((10, 2)) + 8])
        counts = []
        for alpha in (0.9, 0.95, 0.975, 0.99):
            wv = compute_weights(pts, alpha=alpha, seed=7)
            counts.append(int(np.sum(wv.weights == 1.0)))
        assert counts == sorted(counts)

    def test_bad_fraction_rejected(self):
        pts = np.random.default_rng(0).standard_normal((30, 2))
        with pytest.raises(DataValidationError):
            compute_weights(pts, n_mcd_fraction=0.3, seed=0)


class TestWeightVector:
    def test_uniform_and_take(self):
        wv = WeightVector.uniform(10)
        assert np.all(wv.weights == 1.0)
        sub = wv.take(np.array([1, 3, 5]))
        assert len(sub) == 3

    def test_inconsistent_weights_rejected(self):
        with pytest.raises(DataValidationError):
            WeightVector(
                weights=np.array([1.0, DOWNWEIGHT]),
                distances_sq=np.array([5.0, 1.0]),  # flags disagree with distances
                threshold=2.0,
                alpha=0.975,
                n_mcd=1,
            )

    @settings(max_examples=30, deadline=None)
    @given(st.integers(5, 40), st.integers(0, 1000))
    def test_entries_always_binary(self, n, seed):
        rng = np.random.default_rng(seed)
        pts = rng.standard_normal((max(n, 12), 2)) * (1 + rng.uniform())
        try:
            wv = compute_weights(pts, seed=seed, restarts=20)
        except DegenerateScatter:
            return
        assert np.all((wv.weights == 1.0) | (wv.weights == DOWNWEIGHT))


def test_consistency_factor_median_case():
    # 1-d, central half of a Gaussian: factor ~ 1/0.1426
    c = consistency_factor(0.5, 1)
    from scipy import stats

    z = stats.norm.ppf(0.75)
    truncated_var = 1 - 2 * z * stats.norm.pdf(z) / 0.5
    assert c == pytest.approx(1.0 / truncated_var, rel=1e-10)
