"""Periodic spectral grid: transforms, calculus, translation and inner products.

The real line is approximated by the periodic box [-L/2, L/2) sampled at N
evenly spaced nodes.  All calculus is spectral (rfft based) and therefore
exact for band-limited fields; quadrature is the rectangle rule, which is
spectrally accurate for smooth periodic integrands.

Low-level routines operate on plain ndarrays whose *last* axis is the grid
axis, so a whole ensemble of fields with shape (paths, N) goes through the
same code as a single field of shape (N,).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid on [-L/2, L/2) with N points.

    Attributes filled at construction: ``dx``, node coordinates ``x``,
    rfft wavenumbers ``k`` (integer multiples of 2*pi/L, k[0] = 0), the
    2/3-rule dealias mask and the (-1)^j phase that moves the coordinate
    origin to the box center for convolutions.
    """

    length: float
    npoints: int

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError(f"grid length must be positive, got {self.length}")
        if self.npoints < 8 or self.npoints % 2 != 0:
            raise ValueError(f"npoints must be an even integer >= 8, got {self.npoints}")
        dx = self.length / self.npoints
        object.__setattr__(self, "dx", dx)
        object.__setattr__(
            self, "x", -0.5 * self.length + dx * np.arange(self.npoints)
        )
        k = 2.0 * np.pi * np.fft.rfftfreq(self.npoints, d=dx)
        object.__setattr__(self, "k", k)
        kcut = (2.0 / 3.0) * k[-1]
        object.__setattr__(self, "dealias", (k <= kcut).astype(float))
        # e^{i k_j L/2} = (-1)^j, the origin phase for centered convolutions
        object.__setattr__(self, "alt", np.where(np.arange(k.size) % 2 == 0, 1.0, -1.0))

    @property
    def nmodes(self) -> int:
        return self.npoints // 2 + 1


def make_grid(length: float, npoints: int) -> GridSpec:
    """Build a periodic grid; rejects non-positive length and odd/tiny N."""
    return GridSpec(float(length), int(npoints))


@dataclass
class Field:
    """Real samples of a function of x on a shared grid."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[-1] != self.grid.npoints:
            raise GridMismatch(
                f"field has {self.values.shape[-1]} samples on an "
                f"{self.grid.npoints}-point grid"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def _check_same_grid(f: Field, g: Field) -> None:
    if f.grid is not g.grid and f.grid != g.grid:
        raise GridMismatch("fields live on different grids")


# ---------------------------------------------------------------------------
# array-level spectral calculus (last axis = grid axis)
# ---------------------------------------------------------------------------

def deriv_values(grid: GridSpec, u: np.ndarray, order: int = 1) -> np.ndarray:
    """Spectral derivative: mode k multiplied by (ik)**order.

    For odd orders the Nyquist mode is zeroed (its derivative is not
    representable with a real symmetric spectrum).
    """
    if order < 1:
        raise ValueError("derivative order must be a positive integer")
    uh = np.fft.rfft(u, axis=-1)
    mult = (1j * grid.k) ** order
    if order % 2 == 1:
        mult = mult.copy()
        mult[-1] = 0.0
    return np.fft.irfft(uh * mult, n=grid.npoints, axis=-1)


def translate_values(grid: GridSpec, u: np.ndarray, shift) -> np.ndarray:
    """Exact periodic translation: (T_y u)(x) = u(x + y).

    ``shift`` may be a scalar or an array broadcastable against the leading
    axes of ``u`` (one shift per ensemble member).
    """
    uh = np.fft.rfft(u, axis=-1)
    y = np.asarray(shift, dtype=float)
    phase = np.exp(1j * y[..., None] * grid.k) if y.ndim else np.exp(1j * y * grid.k)
    return np.fft.irfft(uh * phase, n=grid.npoints, axis=-1)


def inner_values(grid: GridSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """L2 inner product dx * sum(u v), batched over leading axes."""
    return grid.dx * np.sum(u * v, axis=-1)


def norm_l2(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    return np.sqrt(grid.dx * np.sum(u * u, axis=-1))


def norm_h1(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    du = deriv_values(grid, u)
    return np.sqrt(grid.dx * (np.sum(u * u, axis=-1) + np.sum(du * du, axis=-1)))


def convolve_values(grid: GridSpec, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Periodic approximation of the line convolution int f(x-y) g(y) dy.

    The (-1)^j spectral phase accounts for the x_0 = -L/2 origin so that
    inputs and output are all centered fields.
    """
    fh = np.fft.rfft(f, axis=-1)
    gh = np.fft.rfft(g, axis=-1)
    return grid.dx * np.fft.irfft(fh * gh * grid.alt, n=grid.npoints, axis=-1)


def spectral_coeffs(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Continuum-normalized Fourier coefficients u_hat(k) = dx*(-1)^j*rfft(u)."""
    return grid.dx * grid.alt * np.fft.rfft(u, axis=-1)


def spectral_energy(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Parseval sum (1/L) * sum_k |u_hat(k)|^2 over the full spectrum."""
    uh = spectral_coeffs(grid, u)
    w = np.full(grid.nmodes, 2.0)
    w[0] = 1.0
    if grid.npoints % 2 == 0:
        w[-1] = 1.0
    return np.sum(w * np.abs(uh) ** 2, axis=-1) / grid.length


# ---------------------------------------------------------------------------
# Field-level API
# ---------------------------------------------------------------------------

def derivative(f: Field, order: int = 1) -> Field:
    return Field(f.grid, deriv_values(f.grid, f.values, order))


def translate(f: Field, shift: float) -> Field:
    return Field(f.grid, translate_values(f.grid, f.values, float(shift)))


def inner(f: Field, g: Field) -> float:
    _check_same_grid(f, g)
    return float(inner_values(f.grid, f.values, g.values))


def convolve(f: Field, g: Field) -> Field:
    _check_same_grid(f, g)
    return Field(f.grid, convolve_values(f.grid, f.values, g.values))
