"""Soliton family, conserved functionals, linearized operator."""

import numpy as np
import pytest
from scipy.integrate import quad

from skdvlab.grid import Field, inner, make_grid, norm_l2, translate
from skdvlab.soliton import (
    LinearizedOperator,
    apply_L,
    coercivity_nu,
    criticality_residual,
    energy,
    lyapunov,
    mass,
    soliton,
    soliton_dc,
    soliton_dc2_values,
    soliton_dc_antiderivative_values,
    soliton_dc_values,
    soliton_dx,
    soliton_residual,
    soliton_values,
    unprojected_spectrum,
)

# Quadrature-oracle values for the traveling-wave profile (computed with
# scipy.integrate.quad against the closed form before the grid code existed):
#   m(phi_1) = 12, H(phi_1) = -7.2, |dx phi_1|^2 = 4.8, (phi_1, dc phi_1) = 18
ORACLE_MASS = 12.0
ORACLE_ENERGY = -7.2
ORACLE_DXPHI_SQ = 4.8
ORACLE_PHI_DCPHI = 18.0


def _phi(x, c=1.0):
    return 3 * c / np.cosh(np.sqrt(c) * x / 2) ** 2


class TestProfile:
    def test_peak_value(self, grid):
        # ODE-consistent amplitude: phi_c(0) = 3c
        phi = soliton(1.0, grid)
        assert phi.values.max() == pytest.approx(3.0, abs=1e-13)

    def test_decay_at_box_edge(self, grid):
        phi = soliton(1.0, grid)
        assert abs(phi.values[0]) < 1e-10

    def test_scaling_identity(self, grid):
        # phi_c(x) = c * phi_1(sqrt(c) x)
        for c in (0.5, 2.0):
            lhs = soliton_values(c, grid.x)
            rhs = c * soliton_values(1.0, np.sqrt(c) * grid.x)
            assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_rejects_nonpositive_speed(self, grid):
        with pytest.raises(ValueError):
            soliton(-1.0, grid)
        with pytest.raises(ValueError):
            soliton(0.0, grid)


class TestDerivatives:
    def test_dx_odd_and_zero_at_center(self, grid):
        dphi = soliton_dx(1.0, grid)
        i0 = np.argmin(np.abs(grid.x))
        assert dphi.values[i0] == pytest.approx(0.0, abs=1e-12)

    def test_dc_at_center(self, grid):
        # phi_c(0) = 3c, so dc phi(0) = 3 for every c
        for c in (0.5, 1.0, 2.0):
            i0 = np.argmin(np.abs(grid.x))
            assert soliton_dc(c, grid).values[i0] == pytest.approx(3.0, abs=1e-12)

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_dc_matches_finite_difference(self, grid, c):
        h = 1e-5
        fd = (soliton_values(c + h, grid.x) - soliton_values(c - h, grid.x)) / (2 * h)
        assert np.max(np.abs(soliton_dc_values(c, grid.x) - fd)) < 1e-8

    @pytest.mark.parametrize("c", [0.7, 1.3])
    def test_dc2_matches_finite_difference(self, grid, c):
        h = 1e-4
        fd = (
            soliton_dc_values(c + h, grid.x) - soliton_dc_values(c - h, grid.x)
        ) / (2 * h)
        assert np.max(np.abs(soliton_dc2_values(c, grid.x) - fd)) < 1e-6

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_dc_antiderivative(self, grid, c):
        # G(x) = int_{-inf}^x dc phi, G(+inf) = 6/sqrt(c)
        for xq in (-3.0, 0.0, 2.5):
            oracle = quad(lambda y: soliton_dc_values(c, np.array([y]))[0], -50, xq)[0]
            val = soliton_dc_antiderivative_values(c, np.array([xq]))[0]
            assert val == pytest.approx(oracle, abs=1e-8)
        G = soliton_dc_antiderivative_values(c, grid.x)
        assert G[-1] == pytest.approx(6 / np.sqrt(c), abs=1e-8)
        assert abs(G[0]) < 1e-10


class TestResidual:
    def test_soliton_solves_ode(self, grid):
        assert soliton_residual(1.0, grid) < 1e-8

    def test_residual_translation_invariant(self, grid):
        phi = soliton(1.0, grid)
        moved = translate(phi, 7.3)
        from skdvlab.grid import deriv_values

        res = (
            deriv_values(grid, moved.values, 2)
            - moved.values
            + 0.5 * moved.values**2
        )
        assert norm_l2(grid, res) < 1e-8

    def test_wrong_amplitude_detected(self, grid):
        phi2 = 2 * soliton_values(1.0, grid.x)
        from skdvlab.grid import deriv_values

        res = deriv_values(grid, phi2, 2) - phi2 + 0.5 * phi2**2
        assert norm_l2(grid, res) > 1.0


class TestFunctionals:
    def test_mass_energy_oracles(self, grid):
        phi = soliton(1.0, grid)
        oracle_m = 0.5 * quad(lambda x: _phi(x) ** 2, -50, 50)[0]
        assert oracle_m == pytest.approx(ORACLE_MASS, abs=1e-9)
        assert mass(phi) == pytest.approx(ORACLE_MASS, abs=1e-8)
        assert energy(phi) == pytest.approx(ORACLE_ENERGY, abs=1e-8)

    def test_mass_of_zero_field(self, grid):
        assert mass(Field(grid, np.zeros(grid.npoints))) == 0.0

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_mass_scaling(self, grid, c):
        assert mass(soliton(c, grid)) == pytest.approx(12 * c**1.5, rel=1e-6)

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_phi_dcphi_pairing(self, grid, c):
        val = inner(soliton(c, grid), soliton_dc(c, grid))
        assert val == pytest.approx(18 * np.sqrt(c), rel=1e-6)

    def test_lyapunov_definition(self, grid):
        phi = soliton(1.2, grid)
        assert lyapunov(phi, 0.9) == pytest.approx(energy(phi) + 0.9 * mass(phi))

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_criticality_of_q(self, grid, c):
        # dH/dc + c dm/dc = 0: phi_c is a critical point of H + c m
        assert criticality_residual(c, grid) < 1e-6


class TestLinearizedOperator:
    def test_kernel_identity(self, grid):
        op = LinearizedOperator(1.0, grid)
        dphi = soliton_dx(1.0, grid)
        assert norm_l2(grid, apply_L(op, dphi).values) < 1e-8 * norm_l2(grid, dphi.values)

    def test_generalized_kernel_identity(self, grid):
        op = LinearizedOperator(1.0, grid)
        phi = soliton(1.0, grid)
        dc = soliton_dc(1.0, grid)
        assert norm_l2(grid, apply_L(op, dc).values + phi.values) < 1e-8 * norm_l2(
            grid, phi.values
        )

    def test_matches_direct_evaluation(self, grid):
        op = LinearizedOperator(1.0, grid)
        v = Field(grid, np.exp(-grid.x**2 / 20) * np.cos(grid.x))
        from skdvlab.grid import deriv_values

        direct = (
            -deriv_values(grid, v.values, 2)
            + 1.0 * v.values
            - soliton_values(1.0, grid.x) * v.values
        )
        assert np.max(np.abs(apply_L(op, v).values - direct)) < 1e-12

    def test_self_adjoint(self, grid, rng):
        op = LinearizedOperator(1.0, grid)
        f = Field(grid, np.exp(-grid.x**2 / 15) * rng.standard_normal(grid.npoints))
        g = Field(grid, np.exp(-grid.x**2 / 15) * rng.standard_normal(grid.npoints))
        assert inner(apply_L(op, f), g) == pytest.approx(
            inner(f, apply_L(op, g)), abs=1e-10 * (1 + abs(inner(f, g)))
        )

    def test_orthogonality_of_generators(self, grid):
        assert abs(inner(soliton_dc(1.0, grid), soliton_dx(1.0, grid))) < 1e-12


class TestCoercivity:
    # dense eigensolves: run on the 512-point grid
    def test_nu_positive(self, grid_small):
        nu = coercivity_nu(1.0, grid_small)
        assert nu > 0

    def test_exactly_one_negative_eigenvalue(self, grid_small):
        lam = unprojected_spectrum(1.0, grid_small)
        scale = np.max(np.abs(lam))
        assert np.sum(lam < -1e-10 * scale) == 1

    def test_zero_eigenvalue_along_dxphi(self, grid_small):
        # Rayleigh quotient of dx phi under L is 0 up to discretization
        from skdvlab.grid import inner_values
        from skdvlab.soliton import apply_L_values

        op = LinearizedOperator(1.0, grid_small)
        d = soliton_dx(1.0, grid_small).values
        rq = float(inner_values(grid_small, apply_L_values(op, d), d)) / float(
            inner_values(grid_small, d, d)
        )
        assert abs(rq) < 1e-6
