"""Homogeneous noise synthesis: correlation, covariance, adjoint, streams."""

import numpy as np
import pytest
from scipy.integrate import quad

from skdvlab.grid import Field, deriv_values, inner, make_grid
from skdvlab.noise import (
    KernelSpec,
    NoiseState,
    PathStream,
    correlation,
    increment_from_white,
    pair_sum,
    parseval_density,
    smoother,
    smoother_adjoint,
    smoother_adjoint_values,
)

N_DRAWS = 100_000


class TestKernelSpec:
    def test_norms_closed_form(self, kernel):
        # gaussian A=1, l=2: |k|^2 = A^2 l sqrt(pi), int|k| = A l sqrt(2 pi),
        # int k'^2 = A^2 sqrt(pi) / (2 l)
        ell = 2.0
        assert kernel.l2_sq == pytest.approx(ell * np.sqrt(np.pi), rel=1e-12)
        assert kernel.l1 == pytest.approx(ell * np.sqrt(2 * np.pi), rel=1e-12)
        assert kernel.h1_sq - kernel.l2_sq == pytest.approx(
            np.sqrt(np.pi) / (2 * ell), rel=1e-10
        )

    def test_h1_hypothesis_finite(self, grid):
        for spec in (KernelSpec.gaussian(grid, 2.0, 1.0), KernelSpec.sech(grid, 1.0, 1.5)):
            assert np.isfinite(spec.h1_sq) and spec.h1_sq > 0
            assert np.isfinite(spec.l1) and spec.l1 > 0

    def test_rejects_non_decaying_kernel(self, grid):
        with pytest.raises(ValueError):
            KernelSpec.gaussian(grid, 1.0, 30.0)  # too wide for the box

    def test_tabulated_matches_gaussian(self, grid, kernel):
        tab = KernelSpec.tabulated(Field(grid, kernel.samples))
        assert tab.l2_sq == pytest.approx(kernel.l2_sq, rel=1e-14)
        assert correlation(tab, 1.0) == pytest.approx(correlation(kernel, 1.0), rel=1e-14)


class TestCorrelation:
    def test_c0_is_l2_norm(self, kernel):
        assert correlation(kernel, 0.0) == pytest.approx(kernel.l2_sq, rel=1e-12)

    @pytest.mark.parametrize("z", [0.0, 1.0, 2.0])
    def test_gaussian_closed_form(self, grid, z):
        # oracle: adaptive quadrature of int k(z+u)k(u)du for k = exp(-x^2/2)
        kern = KernelSpec.gaussian(grid, 1.0, 1.0)
        oracle = quad(
            lambda u: np.exp(-((z + u) ** 2) / 2) * np.exp(-(u**2) / 2), -40, 40
        )[0]
        assert oracle == pytest.approx(np.sqrt(np.pi) * np.exp(-(z**2) / 4), abs=1e-12)
        assert correlation(kern, z) == pytest.approx(oracle, abs=1e-8)

    def test_even_symmetry(self, kernel):
        for z in (0.7, 3.1):
            assert correlation(kernel, -z) == pytest.approx(correlation(kernel, z), rel=1e-12)


class TestSmoother:
    def test_adjoint_equals_smoother_for_even_kernel(self, kernel, grid, rng):
        f = Field(grid, rng.standard_normal(grid.npoints))
        a = smoother(kernel, f).values
        b = smoother_adjoint(kernel, f).values
        assert np.max(np.abs(a - b)) < 1e-12 * np.max(np.abs(a))

    def test_adjoint_identity(self, grid, rng):
        # use an asymmetric tabulated kernel so Phi* != Phi
        prof = np.exp(-((grid.x - 1.5) ** 2) / 3)
        kern = KernelSpec.tabulated(Field(grid, prof))
        f = Field(grid, rng.standard_normal(grid.npoints))
        g = Field(grid, rng.standard_normal(grid.npoints))
        lhs = inner(smoother(kern, f), g)
        rhs = inner(f, smoother_adjoint(kern, g))
        assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + abs(lhs)))

    def test_adjoint_commutes_with_derivative(self, kernel, grid, rng):
        f = rng.standard_normal(grid.npoints)
        a = smoother_adjoint_values(kernel, deriv_values(grid, f))
        b = deriv_values(grid, smoother_adjoint_values(kernel, f))
        assert np.max(np.abs(a - b)) < 1e-10 * max(1.0, np.max(np.abs(a)))

    def test_pair_sum_parseval(self, kernel, grid, rng):
        # sum_l (f, Phi e_l)(g, Phi e_l) computed directly against the
        # representer identity
        f = np.exp(-grid.x**2 / 30) * rng.standard_normal(grid.npoints)
        g = np.exp(-grid.x**2 / 30) * rng.standard_normal(grid.npoints)
        direct = 0.0
        basis = np.eye(grid.npoints) / np.sqrt(grid.dx)
        cols = smoother(kernel, Field(grid, np.zeros(grid.npoints))).values  # shape only
        from skdvlab.noise import smoother_values

        cols = smoother_values(kernel, basis)
        direct = float(
            np.sum(
                (grid.dx * cols @ f) * (grid.dx * cols @ g)
            )
        )
        assert float(pair_sum(kernel, f, g)) == pytest.approx(direct, rel=1e-10)


class TestParsevalDensity:
    def test_constant_density_gaussian(self, kernel, grid):
        d = parseval_density(kernel, grid).values
        assert np.max(np.abs(d - kernel.l2_sq)) < 1e-10 * kernel.l2_sq

    def test_constant_density_tabulated(self, grid):
        prof = np.exp(-((grid.x + 2.0) ** 2) / 5)
        kern = KernelSpec.tabulated(Field(grid, prof))
        d = parseval_density(kern, grid).values
        assert np.max(np.abs(d - kern.l2_sq)) < 1e-10 * kern.l2_sq

    def test_matches_correlation_at_zero(self, kernel, grid):
        d = parseval_density(kernel, grid).values
        assert d[0] == pytest.approx(correlation(kernel, 0.0), rel=1e-12)


@pytest.fixture(scope="module")
def draws(kernel_small):
    g = kernel_small.grid
    xi = np.empty((N_DRAWS, g.npoints))
    for p in range(N_DRAWS):
        xi[p] = PathStream(777, p).normals(0, g.npoints)
    return increment_from_white(kernel_small, xi, dt=0.01)


class TestIncrements:
    def test_mean_zero(self, kernel_small, draws):
        c0 = correlation(kernel_small, 0.0)
        se = np.sqrt(0.01 * c0 / N_DRAWS)
        assert np.max(np.abs(draws.mean(axis=0))) < 5 * se  # max over 512 sites

    def test_variance(self, kernel_small, draws):
        c0 = 0.01 * correlation(kernel_small, 0.0)
        var = draws.var(axis=0).mean()
        se = c0 * np.sqrt(2.0 / N_DRAWS)
        assert abs(var - c0) < 3 * se * 8  # sites are correlated; allow slack

    def test_covariance_at_lags(self, kernel_small, draws):
        # acceptance: empirical increment covariance matches dt*c_L at 20 lags
        g = kernel_small.grid
        dt = 0.01
        i = g.npoints // 2
        for lag in range(20):
            emp = float(np.mean(draws[:, i] * draws[:, i + lag]))
            expected = dt * correlation(kernel_small, lag * g.dx)
            se = dt * correlation(kernel_small, 0.0) / np.sqrt(N_DRAWS)
            assert abs(emp - expected) < 3 * se

    def test_brownian_scaling(self, kernel_small):
        g = kernel_small.grid
        xi = np.stack([PathStream(3, p).normals(0, g.npoints) for p in range(20_000)])
        v1 = increment_from_white(kernel_small, xi, 0.02).var(axis=0).mean()
        v2 = increment_from_white(kernel_small, xi, 0.01).var(axis=0).mean()
        assert v1 / v2 == pytest.approx(2.0, rel=0.05)

    def test_stationarity_covariance_rows(self, kernel_small, draws):
        # covariance row at site i equals the row at site j (shifted law)
        g = kernel_small.grid
        dt = 0.01
        c0 = dt * correlation(kernel_small, 0.0)
        se = c0 / np.sqrt(N_DRAWS)
        for lag in (1, 5, 17):
            a = float(np.mean(draws[:, 100] * draws[:, 100 + lag]))
            b = float(np.mean(draws[:, 300] * draws[:, 300 + lag]))
            assert abs(a - b) < 6 * se


class TestNoiseState:
    def test_reproducibility(self, kernel):
        a = NoiseState(kernel, master_seed=9, path_index=3)
        b = NoiseState(kernel, master_seed=9, path_index=3)
        for _ in range(3):
            da = a.sample_increment(1e-3)
            db = b.sample_increment(1e-3)
            assert np.array_equal(da.values, db.values)
        assert a.t == pytest.approx(3e-3)
        assert a.step == 3

    def test_distinct_paths_differ(self, kernel):
        a = NoiseState(kernel, master_seed=9, path_index=0)
        b = NoiseState(kernel, master_seed=9, path_index=1)
        assert not np.allclose(a.sample_increment(1e-3).values, b.sample_increment(1e-3).values)

    def test_independent_successive_increments(self, kernel_small):
        g = kernel_small.grid
        n = 20_000
        xi1 = np.stack([PathStream(5, p).normals(0, g.npoints) for p in range(n)])
        xi2 = np.stack([PathStream(5, p).normals(1, g.npoints) for p in range(n)])
        d1 = increment_from_white(kernel_small, xi1, 0.01)
        d2 = increment_from_white(kernel_small, xi2, 0.01)
        i = g.npoints // 3
        corr = np.mean(d1[:, i] * d2[:, i]) / (d1[:, i].std() * d2[:, i].std())
        assert abs(corr) < 3 / np.sqrt(n)

    def test_rejects_bad_dt(self, kernel):
        ns = NoiseState(kernel, master_seed=1)
        with pytest.raises(ValueError):
            ns.sample_increment(0.0)

    def test_shift_translates_increment(self, kernel):
        g = kernel.grid
        a = NoiseState(kernel, master_seed=4)
        b = NoiseState(kernel, master_seed=4)
        d0 = a.sample_increment(1e-2).values
        ds = b.sample_increment(1e-2, shift=5.0).values
        from skdvlab.grid import translate_values

        assert np.max(np.abs(ds - translate_values(g, d0, 5.0))) < 1e-10
