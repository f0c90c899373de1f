import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import subspace_angles

from robust_rkm.errors import DataValidationError, ShortSpectrum
from robust_rkm.kernels import GramMatrix, KernelSpec, gram
from robust_rkm.rkm_core import (
    RkmHyper,
    dual_objective,
    fenchel_gap,
    interconnection,
    project_oos,
    solve_weighted_eig,
    stationarity_residuals,
)


def fenchel_block_matrix(d: np.ndarray, lam: float) -> np.ndarray:
    """Quadratic form of the weighted inequality: [[D/lam, -I], [-I, lam D^-1]]."""
    n = d.shape[0]
    eye = np.eye(n)
    top = np.hstack([np.diag(d) / lam, -eye])
    bottom = np.hstack([-eye, lam * np.diag(1.0 / d)])
    return np.vstack([top, bottom])


class TestFenchelGap:
    def test_equality_case(self):
        e = np.array([1.0, -2.0, 3.0])
        assert fenchel_gap(e, e, np.ones(3), 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_conjugacy_stationarity(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal(4)
        d = rng.uniform(0.5, 2.0, 4)
        lam = 0.7
        e = lam * h / d
        assert fenchel_gap(e, h, d, lam) == pytest.approx(0.0, abs=1e-12)

    def test_matches_block_matrix_oracle(self):
        rng = np.random.default_rng(1)
        e = rng.standard_normal(2)
        h = rng.standard_normal(2)
        d = np.array([2.0, 3.0])
        lam = 0.5
        v = np.concatenate([e, h])
        q = fenchel_block_matrix(d, lam)
        assert fenchel_gap(e, h, d, lam) == pytest.approx(0.5 * v @ q @ v, rel=1e-12)
        assert fenchel_gap(e, h, d, lam) >= 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 10), st.integers(0, 10_000))
    def test_never_negative(self, n, seed):
        rng = np.random.default_rng(seed)
        e = rng.standard_normal(n) * rng.uniform(0.1, 10)
        h = rng.standard_normal(n) * rng.uniform(0.1, 10)
        d = rng.uniform(1e-3, 1e3, n)
        lam = rng.uniform(1e-3, 1e3)
        gap = fenchel_gap(e, h, d, lam)
        assert gap >= -1e-12 * (np.dot(e, e) + np.dot(h, h))

    def test_block_matrix_psd(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = rng.integers(1, 6)
            d = rng.uniform(1e-2, 1e2, n)
            lam = rng.uniform(1e-2, 1e2)
            eigs = np.linalg.eigvalsh(fenchel_block_matrix(d, lam))
            assert eigs.min() >= -1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(DataValidationError):
            fenchel_gap(np.ones(3), np.ones(2), np.ones(3), 1.0)


class TestDualObjective:
    def test_zero_maps_give_zero(self):
        features = np.random.default_rng(3).standard_normal((4, 6))
        hyper = RkmHyper(eta=1.0, lambda_reg=1.0, latent_dim=2)
        val = dual_objective(features, np.zeros((4, 2)), np.zeros((2, 6)),
                             np.ones(6), hyper)
        assert val == 0.0

    def test_zero_at_eigensolution(self):
        rng = np.random.default_rng(4)
        n, s = 16, 3
        data = rng.standard_normal((n, 5))
        k = gram(data, KernelSpec("rbf", bandwidth=1.2))
        d = rng.uniform(0.1, 2.0, n)
        hyper = RkmHyper(eta=1.4, lambda_reg=1.0, latent_dim=s)
        model = solve_weighted_eig(k, d, hyper)
        features = data.T  # linear features would be data.T; rbf features are
        # implicit, so build an explicit factorization of K instead
        chol = np.linalg.cholesky(k.values + 1e-12 * np.eye(n))
        u = interconnection(chol.T, model.H, hyper.eta)
        val = dual_objective(chol.T, u, model.H, d, hyper, eigvals=model.eigvals)
        assert abs(val) <= 1e-8 * n

    def test_matches_naive_summation_oracle(self):
        rng = np.random.default_rng(5)
        n, s, df = 6, 2, 4
        features = rng.standard_normal((df, n))
        u = rng.standard_normal((df, s))
        h = rng.standard_normal((s, n))
        d = rng.uniform(0.5, 2.0, n)
        hyper = RkmHyper(eta=0.8, lambda_reg=1.7, latent_dim=s)
        total = 0.0
        for i in range(n):
            total += -features[:, i] @ u @ h[:, i]
            total += 0.5 * hyper.lambda_reg / d[i] * h[:, i] @ h[:, i]
        total += 0.5 * hyper.eta * np.sum(u * u)
        got = dual_objective(features, u, h, d, hyper)
        assert got == pytest.approx(total, rel=1e-12)

    def test_per_component_oracle(self):
        rng = np.random.default_rng(6)
        n, s, df = 5, 3, 4
        features = rng.standard_normal((df, n))
        u = rng.standard_normal((df, s))
        h = rng.standard_normal((s, n))
        d = rng.uniform(0.5, 2.0, n)
        lam = rng.uniform(0.5, 3.0, s)
        hyper = RkmHyper(eta=1.0, lambda_reg=1.0, latent_dim=s)
        total = 0.0
        for i in range(n):
            total += -features[:, i] @ u @ h[:, i]
            total += 0.5 / d[i] * np.sum(lam * h[:, i] ** 2)
        total += 0.5 * hyper.eta * np.sum(u * u)
        got = dual_objective(features, u, h, d, hyper, eigvals=lam)
        assert got == pytest.approx(total, rel=1e-12)


class TestSolveWeightedEig:
    def test_identity_spectrum(self):
        hyper = RkmHyper(eta=1.0, latent_dim=4)
        model = solve_weighted_eig(GramMatrix(values=np.eye(8)), np.ones(8), hyper)
        np.testing.assert_allclose(model.eigvals, 1.0, rtol=1e-12)
        np.testing.assert_allclose(model.H @ model.H.T, np.eye(4), atol=1e-10)

    def test_unit_weights_reduce_to_kernel_pca(self):
        rng = np.random.default_rng(7)
        k = gram(rng.standard_normal((12, 4)), KernelSpec("linear"))
        hyper = RkmHyper(eta=2.0, latent_dim=3)
        model = solve_weighted_eig(k, np.ones(12), hyper)
        ref_vals, ref_vecs = np.linalg.eigh(k.values / hyper.eta)
        ref_vals = ref_vals[::-1][:3]
        np.testing.assert_allclose(model.eigvals, ref_vals, rtol=1e-10)
        ang = subspace_angles(model.H.T, ref_vecs[:, ::-1][:, :3])
        assert ang.max() < 1e-6

    def test_matches_dense_nonsymmetric_oracle(self):
        rng = np.random.default_rng(8)
        n, s = 8, 3
        k = gram(rng.standard_normal((n, 5)), KernelSpec("rbf", bandwidth=1.0))
        d = np.ones(n)
        d[2] = d[5] = 1e-4
        hyper = RkmHyper(eta=1.3, latent_dim=s)
        model = solve_weighted_eig(k, d, hyper)
        dense = (d[:, None] * k.values) / hyper.eta
        vals, vecs = np.linalg.eig(dense)
        order = np.argsort(vals.real)[::-1]
        np.testing.assert_allclose(model.eigvals, vals.real[order][:s], rtol=1e-8)
        for j in range(s):
            oracle = vecs.real[:, order[j]]
            mine = model.H[j]
            sign = np.sign(oracle @ mine)
            np.testing.assert_allclose(mine, sign * oracle / np.linalg.norm(oracle),
                                       atol=1e-8)

    def test_residual_contract(self):
        rng = np.random.default_rng(9)
        n = 20
        k = gram(rng.standard_normal((n, 6)), KernelSpec("linear"))
        d = rng.uniform(0.2, 1.8, n)
        hyper = RkmHyper(eta=1.0, latent_dim=5)
        model = solve_weighted_eig(k, d, hyper)
        weighted = (d[:, None] * k.values) / hyper.eta
        for j in range(5):
            resid = np.linalg.norm(weighted @ model.H[j] - model.eigvals[j] * model.H[j])
            assert resid <= 1e-8 * np.linalg.norm(weighted)

    def test_short_spectrum_error(self):
        # rank-1 kernel cannot carry 3 latent dimensions
        v = np.linspace(1.0, 2.0, 6)[:, None]
        k = GramMatrix(values=v @ v.T)
        with pytest.raises(ShortSpectrum) as excinfo:
            solve_weighted_eig(k, np.ones(6), RkmHyper(latent_dim=3))
        assert excinfo.value.achievable == 1

    def test_normalize_by_eigenvalue(self):
        rng = np.random.default_rng(10)
        k = gram(rng.standard_normal((10, 4)), KernelSpec("linear"))
        hyper = RkmHyper(eta=1.0, latent_dim=2)
        unit = solve_weighted_eig(k, np.ones(10), hyper)
        scaled = solve_weighted_eig(k, np.ones(10), hyper, normalize_by_eigenvalue=True)
        np.testing.assert_allclose(
            scaled.H, unit.H * np.sqrt(unit.eigvals)[:, None], rtol=1e-12
        )

    def test_downweighting_shrinks_outlier_influence(self):
        rng = np.random.default_rng(11)
        clean = rng.standard_normal((20, 2)) @ np.diag([3.0, 0.5])
        outlier = np.array([[0.0, 60.0]])
        data = np.vstack([clean, outlier])
        hyper = RkmHyper(eta=1.0, latent_dim=1)

        def principal_direction(model, rows):
            # linear kernel: input-space direction is the latent-weighted data sum
            v = (model.H @ rows).ravel()
            return v / np.linalg.norm(v)

        ref = solve_weighted_eig(gram(clean, KernelSpec("linear")), np.ones(20), hyper)
        plain = solve_weighted_eig(gram(data, KernelSpec("linear")), np.ones(21), hyper)
        d = np.ones(21)
        d[20] = 1e-4
        robust = solve_weighted_eig(gram(data, KernelSpec("linear")), d, hyper)
        ref_dir = principal_direction(ref, clean)
        ang_plain = np.arccos(min(abs(principal_direction(plain, data) @ ref_dir), 1.0))
        ang_robust = np.arccos(min(abs(principal_direction(robust, data) @ ref_dir), 1.0))
        assert ang_robust < ang_plain


class TestStationarity:
    def test_exact_eigensolution_small_residual(self):
        rng = np.random.default_rng(12)
        data = rng.standard_normal((10, 4))
        k = gram(data, KernelSpec("linear"))
        d = rng.uniform(0.3, 1.5, 10)
        hyper = RkmHyper(eta=1.1, latent_dim=3)
        model = solve_weighted_eig(k, d, hyper)
        r1, r2 = stationarity_residuals(data.T, model, d)
        assert r1 <= 1e-8
        assert r2 == 0.0

    def test_random_latents_not_stationary(self):
        rng = np.random.default_rng(13)
        data = rng.standard_normal((10, 4))
        hyper = RkmHyper(eta=1.0, latent_dim=3)
        model = solve_weighted_eig(gram(data, KernelSpec("linear")), np.ones(10), hyper)
        scrambled = model.__class__(
            H=rng.standard_normal(model.H.shape),
            eigvals=model.eigvals,
            weights=model.weights,
            hyper=hyper,
        )
        r1, _ = stationarity_residuals(data.T, scrambled, np.ones(10))
        assert r1 > 1e-3

    def test_full_spectrum_all_residuals_small(self):
        rng = np.random.default_rng(14)
        data = rng.standard_normal((6, 8))  # d > N so the linear kernel is PD
        k = gram(data, KernelSpec("linear"))
        hyper = RkmHyper(eta=1.0, latent_dim=6)
        model = solve_weighted_eig(k, np.ones(6), hyper)
        r1, _ = stationarity_residuals(data.T, model, np.ones(6))
        assert r1 <= 1e-8


class TestProjectOos:
    def test_training_point_reproduces_latent_column(self):
        rng = np.random.default_rng(15)
        n = 6
        data = rng.standard_normal((n, 8))  # PD linear kernel
        k = gram(data, KernelSpec("linear"))
        hyper = RkmHyper(eta=1.0, latent_dim=n)
        model = solve_weighted_eig(k, np.ones(n), hyper)
        for m in range(n):
            h_star = project_oos(
                data[m], data, model.H, KernelSpec("linear"), hyper, model.eigvals
            )
            np.testing.assert_allclose(h_star, model.H[:, m], atol=1e-6)

    def test_far_rbf_point_projects_to_zero(self):
        rng = np.random.default_rng(16)
        data = rng.uniform(0, 1, (8, 3))
        hyper = RkmHyper(eta=1.0, latent_dim=2)
        model = solve_weighted_eig(gram(data, KernelSpec("rbf", bandwidth=0.5)),
                                   np.ones(8), hyper)
        far = np.full(3, 1e4)
        h_star = project_oos(far, data, model.H, KernelSpec("rbf", bandwidth=0.5),
                             hyper, model.eigvals)
        np.testing.assert_allclose(h_star, 0.0, atol=1e-12)

    def test_matches_naive_summation_oracle(self):
        rng = np.random.default_rng(17)
        n, s = 5, 2
        data = rng.standard_normal((n, 3))
        hyper = RkmHyper(eta=1.7, latent_dim=s)
        model = solve_weighted_eig(gram(data, KernelSpec("linear")), np.ones(n), hyper)
        x_star = rng.standard_normal(3)
        got = project_oos(x_star, data, model.H, KernelSpec("linear"), hyper,
                          model.eigvals)
        for j in range(s):
            total = sum(
                model.H[j, i] * float(np.dot(data[i], x_star)) for i in range(n)
            )
            assert got[j] == pytest.approx(total / (model.eigvals[j] * hyper.eta),
                                           rel=1e-12)
