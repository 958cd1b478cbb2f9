"""Soliton family, conserved functionals and the linearized operator.

The traveling-wave profile used throughout is

    phi_c(x) = 3c * sech^2(sqrt(c) x / 2),   c > 0,

the solution of phi'' - c phi + phi^2/2 = 0 consistent with the KdV
nonlinearity (1/2) d/dx (u^2).  Closed-form identities used as test oracles:

    m(phi_c)   = 12 c^{3/2}          H(phi_c) = -7.2 c^{5/2}
    |dx phi|^2 = 4.8 c^{5/2}         (phi, dc phi) = 18 sqrt(c)
    int phi    = 12 sqrt(c)          int dc phi    = 6 / sqrt(c)

The linearized operator around phi_{c0} is L = -dx^2 + c0 - phi_{c0}, the
Hessian of the Lyapunov functional Q_{c0} = H + c0 m.  It annihilates
dx phi_{c0}, and L dc phi_{c0} = -phi_{c0}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import GridMismatch
from .grid import Field, GridSpec, deriv_values, inner_values, norm_l2


def _require_speed(c: float) -> float:
    c = float(c)
    if c <= 0:
        raise ValueError(f"soliton speed must be positive, got {c}")
    return c


@dataclass(frozen=True)
class SolitonParams:
    """Speed and center of one soliton."""

    c: float
    x0: float = 0.0

    def __post_init__(self):
        _require_speed(self.c)


def soliton_values(c: float, x: np.ndarray) -> np.ndarray:
    c = _require_speed(c)
    u = 0.5 * np.sqrt(c) * x
    return 3.0 * c / np.cosh(u) ** 2


def soliton_dx_values(c: float, x: np.ndarray) -> np.ndarray:
    c = _require_speed(c)
    u = 0.5 * np.sqrt(c) * x
    return -3.0 * c**1.5 * np.tanh(u) / np.cosh(u) ** 2


def soliton_dc_values(c: float, x: np.ndarray) -> np.ndarray:
    c = _require_speed(c)
    u = 0.5 * np.sqrt(c) * x
    return 3.0 * (1.0 - u * np.tanh(u)) / np.cosh(u) ** 2


def soliton_dc2_values(c: float, x: np.ndarray) -> np.ndarray:
    """Second c-derivative, differentiated from the closed form."""
    c = _require_speed(c)
    u = 0.5 * np.sqrt(c) * x
    sech2 = 1.0 / np.cosh(u) ** 2
    th = np.tanh(u)
    # d/dc acts through u, du/dc = u/(2c)
    return 1.5 * (u / c) * sech2 * (2.0 * u - 3.0 * th - 3.0 * u * sech2)


def soliton_dc_antiderivative_values(c: float, x: np.ndarray) -> np.ndarray:
    """G(x) = int_{-inf}^x dc phi_c(y) dy, from the closed form.

    G(-inf) = 0 and G(+inf) = 6/sqrt(c).
    """
    c = _require_speed(c)
    u = 0.5 * np.sqrt(c) * x
    return 3.0 / np.sqrt(c) * (1.0 + np.tanh(u)) + 1.5 * x / np.cosh(u) ** 2


# broadcast-friendly variants: c may be shaped (..., 1) against x of shape (N,)

def phi_b(c, x):
    u = 0.5 * np.sqrt(c) * x
    return 3.0 * c / np.cosh(u) ** 2


def dxphi_b(c, x):
    u = 0.5 * np.sqrt(c) * x
    return -3.0 * c**1.5 * np.tanh(u) / np.cosh(u) ** 2


def dcphi_b(c, x):
    u = 0.5 * np.sqrt(c) * x
    return 3.0 * (1.0 - u * np.tanh(u)) / np.cosh(u) ** 2


def dc2phi_b(c, x):
    u = 0.5 * np.sqrt(c) * x
    sech2 = 1.0 / np.cosh(u) ** 2
    th = np.tanh(u)
    return 1.5 * (u / c) * sech2 * (2.0 * u - 3.0 * th - 3.0 * u * sech2)


def soliton(c: float, grid: GridSpec) -> Field:
    """phi_c sampled on the grid, centered at x = 0."""
    return Field(grid, soliton_values(c, grid.x))


def soliton_dx(c: float, grid: GridSpec) -> Field:
    return Field(grid, soliton_dx_values(c, grid.x))


def soliton_dc(c: float, grid: GridSpec) -> Field:
    return Field(grid, soliton_dc_values(c, grid.x))


def soliton_residual(c: float, grid: GridSpec) -> float:
    """L2 norm of phi'' - c phi + phi^2/2 on the grid."""
    phi = soliton_values(c, grid.x)
    res = deriv_values(grid, phi, 2) - c * phi + 0.5 * phi * phi
    return float(norm_l2(grid, res))


# ---------------------------------------------------------------------------
# conserved functionals
# ---------------------------------------------------------------------------

def mass_values(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    return 0.5 * grid.dx * np.sum(u * u, axis=-1)


def energy_values(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    du = deriv_values(grid, u)
    return grid.dx * (0.5 * np.sum(du * du, axis=-1) - np.sum(u**3, axis=-1) / 6.0)


def mass(u: Field) -> float:
    """m(u) = (1/2) int u^2."""
    return float(mass_values(u.grid, u.values))


def energy(u: Field) -> float:
    """H(u) = (1/2) int (dx u)^2 - (1/6) int u^3."""
    return float(energy_values(u.grid, u.values))


def lyapunov(u: Field, c0: float) -> float:
    """Q_{c0}(u) = H(u) + c0 m(u)."""
    return energy(u) + float(c0) * mass(u)


# ---------------------------------------------------------------------------
# linearized operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearizedOperator:
    """L = -dx^2 + c0 - phi_{c0} discretized spectrally."""

    c0: float
    grid: GridSpec

    def __post_init__(self):
        _require_speed(self.c0)
        object.__setattr__(self, "profile", soliton_values(self.c0, self.grid.x))


def apply_L(op: LinearizedOperator, v: Field) -> Field:
    if v.grid != op.grid:
        raise GridMismatch("operand grid differs from the operator grid")
    return Field(op.grid, apply_L_values(op, v.values))


def apply_L_values(op: LinearizedOperator, v: np.ndarray) -> np.ndarray:
    return -deriv_values(op.grid, v, 2) + op.c0 * v - op.profile * v


def operator_matrix(op: LinearizedOperator) -> np.ndarray:
    """Dense matrix of L, column by column from the spectral application."""
    n = op.grid.npoints
    d2 = np.fft.irfft(
        np.fft.rfft(np.eye(n), axis=-1) * (-op.grid.k**2), n=n, axis=-1
    )
    mat = -d2 + op.c0 * np.eye(n) - np.diag(op.profile)
    return 0.5 * (mat + mat.T)  # symmetric up to roundoff


def coercivity_nu(c0: float, grid: GridSpec) -> float:
    """Smallest eigenvalue of (Lv, v)/||v||_1^2 on {phi, dx phi}-perp.

    Solves the dense generalized eigenproblem restricted to the orthogonal
    complement of span{phi_{c0}, dx phi_{c0}}; raises if the projected form
    is not positive definite (discretization too coarse).
    """
    op = LinearizedOperator(float(c0), grid)
    lmat = operator_matrix(op)
    n = grid.npoints
    d1 = np.fft.irfft(
        np.fft.rfft(np.eye(n), axis=-1) * (1j * np.concatenate([grid.k[:-1], [0.0]])),
        n=n,
        axis=-1,
    )
    smat = np.eye(n) + d1.T @ d1  # H1 Gram (up to the common dx factor)
    smat = 0.5 * (smat + smat.T)

    constraints = np.vstack(
        [soliton_values(c0, grid.x), soliton_dx_values(c0, grid.x)]
    )
    basis = scipy.linalg.null_space(constraints)  # (n, n-2), orthonormal columns
    a = basis.T @ lmat @ basis
    b = basis.T @ smat @ basis
    lam = scipy.linalg.eigh(0.5 * (a + a.T), 0.5 * (b + b.T), eigvals_only=True)
    nu = float(lam[0])
    if nu <= 0:
        raise RuntimeError(
            f"projected quadratic form is not positive definite (nu={nu:.3e}); "
            "discretization too coarse"
        )
    return nu


def unprojected_spectrum(c0: float, grid: GridSpec) -> np.ndarray:
    """Eigenvalues of the dense discretized L (ascending)."""
    op = LinearizedOperator(float(c0), grid)
    return scipy.linalg.eigh(operator_matrix(op), eigvals_only=True)


def orthogonality_pair(c0: float, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """The (phi_{c0}, dx phi_{c0}) pair defining the modulation constraints."""
    return soliton_values(c0, grid.x), soliton_dx_values(c0, grid.x)


def criticality_residual(c: float, grid: GridSpec, dc: float = 1e-6) -> float:
    """|dH/dc + c dm/dc| / |dm/dc| by centered differences in c."""
    up = soliton(c + dc, grid)
    dn = soliton(c - dc, grid)
    dh = (energy(up) - energy(dn)) / (2 * dc)
    dm = (mass(up) - mass(dn)) / (2 * dc)
    return abs(dh + c * dm) / abs(dm)


def sup_inner_scaled(grid: GridSpec, u: np.ndarray, v: np.ndarray) -> float:
    """|<u, v>| / (||u|| ||v||), a scale-free orthogonality residual."""
    denom = norm_l2(grid, u) * norm_l2(grid, v)
    return float(np.abs(inner_values(grid, u, v)) / np.where(denom == 0, 1.0, denom))
