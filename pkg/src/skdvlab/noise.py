"""Spatially homogeneous Wiener process built by convolving white noise.

The process W has covariance operator Phi Phi*, where Phi f = k * f is the
convolution smoother.  Increments over dt are synthesized in transform space,

    dW = sqrt(dt) * Phi(xi / sqrt(dx)),    xi ~ iid N(0, 1) on the lattice,

so the grid covariance is exactly dt * c_L(x_i - x_j) with c_L the periodized
autocorrelation of the kernel.  Streams are counter-based (Philox) keyed by
(master seed, trajectory index) with a fixed counter offset per step index,
so parallel ensembles reproduce bit-for-bit regardless of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    Field,
    GridSpec,
    deriv_values,
    inner_values,
    spectral_coeffs,
)

_RAWS_PER_STEP = 1 << 20  # Philox counter stride between step blocks


@dataclass(frozen=True)
class KernelSpec:
    """Convolution kernel k with its grid samples and derived norms.

    ``multiplier`` is the continuum Fourier transform of k evaluated at the
    grid wavenumbers; applying the smoother is a single multiply in rfft
    space.  Derived norms (grid quadrature): ``l2_sq`` = int k^2,
    ``h1_sq`` = int (k^2 + k'^2), ``l1`` = int |k|.
    """

    grid: GridSpec
    shape: str
    samples: np.ndarray
    amplitude: float = 0.0
    width: float = 0.0

    def __post_init__(self):
        k = np.asarray(self.samples, dtype=float)
        if k.shape != (self.grid.npoints,):
            raise ValueError("kernel samples must match the grid")
        if not np.all(np.isfinite(k)):
            raise ValueError("kernel samples must be finite")
        peak = float(np.max(np.abs(k)))
        edge = max(abs(k[0]), abs(k[-1]))
        if peak == 0.0 or edge > 1e-10 * max(1.0, peak):
            raise ValueError(
                "kernel must decay below 1e-10 at the box edge; "
                "enlarge the box or narrow the kernel"
            )
        dk = deriv_values(self.grid, k)
        object.__setattr__(self, "l2_sq", float(self.grid.dx * np.sum(k * k)))
        object.__setattr__(
            self, "h1_sq", float(self.grid.dx * np.sum(k * k + dk * dk))
        )
        object.__setattr__(self, "l1", float(self.grid.dx * np.sum(np.abs(k))))
        object.__setattr__(self, "multiplier", spectral_coeffs(self.grid, k))

    @classmethod
    def gaussian(cls, grid: GridSpec, amplitude: float = 1.0, width: float = 2.0):
        k = amplitude * np.exp(-(grid.x**2) / (2.0 * width**2))
        return cls(grid, "gaussian", k, float(amplitude), float(width))

    @classmethod
    def sech(cls, grid: GridSpec, amplitude: float = 1.0, width: float = 1.5):
        k = amplitude / np.cosh(grid.x / width)
        return cls(grid, "sech", k, float(amplitude), float(width))

    @classmethod
    def tabulated(cls, profile: Field):
        return cls(profile.grid, "tabulated", profile.values.copy())


def make_kernel(grid: GridSpec, shape: str, amplitude: float, width: float) -> KernelSpec:
    if shape == "gaussian":
        return KernelSpec.gaussian(grid, amplitude, width)
    if shape == "sech":
        return KernelSpec.sech(grid, amplitude, width)
    raise ValueError(f"unknown kernel shape {shape!r}")


def correlation(kernel: KernelSpec, z: float) -> float:
    """Periodized autocorrelation c_L(z) = int k(z+u) k(u) du.

    Evaluated as the spectral sum (1/L) sum_k |k_hat|^2 e^{i k z}, valid for
    arbitrary real lag z.
    """
    g = kernel.grid
    w = np.full(g.nmodes, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    power = np.abs(kernel.multiplier) ** 2
    return float(np.sum(w * power * np.cos(g.k * z)) / g.length)


def smoother(kernel: KernelSpec, f: Field) -> Field:
    """Phi f = k * f."""
    return Field(f.grid, smoother_values(kernel, f.values))


def smoother_values(kernel: KernelSpec, u: np.ndarray) -> np.ndarray:
    uh = np.fft.rfft(u, axis=-1)
    return np.fft.irfft(uh * kernel.multiplier, n=kernel.grid.npoints, axis=-1)


def smoother_adjoint(kernel: KernelSpec, f: Field) -> Field:
    """Phi* f, convolution with the reflected kernel."""
    return Field(f.grid, smoother_adjoint_values(kernel, f.values))


def smoother_adjoint_values(kernel: KernelSpec, u: np.ndarray) -> np.ndarray:
    uh = np.fft.rfft(u, axis=-1)
    return np.fft.irfft(uh * np.conj(kernel.multiplier), n=kernel.grid.npoints, axis=-1)


def pair_sum(kernel: KernelSpec, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """sum_l (f, Phi e_l)(g, Phi e_l) = (Phi* f, Phi* g)."""
    return inner_values(
        kernel.grid, smoother_adjoint_values(kernel, f), smoother_adjoint_values(kernel, g)
    )


def parseval_density(kernel: KernelSpec, grid: GridSpec) -> Field:
    """Diagonal of the covariance density: sum_l (Phi e_l)^2(x).

    Computed honestly from the lattice basis e_l = delta_l / sqrt(dx); the
    result must be the constant |k|_{L2}^2.
    """
    n = grid.npoints
    basis = np.eye(n) / np.sqrt(grid.dx)
    cols = smoother_values(kernel, basis)  # row l = Phi e_l
    return Field(grid, np.sum(cols * cols, axis=0))


# ---------------------------------------------------------------------------
# counter-based streams
# ---------------------------------------------------------------------------

class PathStream:
    """Philox stream for one trajectory, keyed (master_seed, path_index).

    Each step's draws start at counter step_index << 20, so the mapping
    (seed, path, step) -> draws is independent of call history.
    """

    def __init__(self, master_seed: int, path_index: int = 0):
        self.master_seed = int(master_seed)
        self.path_index = int(path_index)
        key = np.array(
            [self.master_seed & 0xFFFFFFFFFFFFFFFF, self.path_index & 0xFFFFFFFFFFFFFFFF],
            dtype=np.uint64,
        )
        self._bitgen = np.random.Philox(key=key)
        self._state = self._bitgen.state

    def normals(self, step: int, n: int) -> np.ndarray:
        st = self._state
        st["state"]["counter"][:] = 0
        st["state"]["counter"][0] = np.uint64(step) * np.uint64(_RAWS_PER_STEP)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        self._bitgen.state = st
        return np.random.Generator(self._bitgen).standard_normal(n)


@dataclass
class NoiseState:
    """Reproducible state of the homogeneous Wiener process on one trajectory."""

    kernel: KernelSpec
    master_seed: int
    path_index: int = 0
    t: float = 0.0
    step: int = 0
    _stream: PathStream = field(init=False, repr=False)

    def __post_init__(self):
        self._stream = PathStream(self.master_seed, self.path_index)

    @property
    def grid(self) -> GridSpec:
        return self.kernel.grid

    def sample_white(self) -> np.ndarray:
        """iid standard normals for the current step; advances the step count."""
        xi = self._stream.normals(self.step, self.grid.npoints)
        self.step += 1
        return xi

    def sample_increment(self, dt: float, shift: float = 0.0) -> Field:
        """One Ito increment of W over dt, optionally as T_shift W.

        Advances the state time and the stream.  ``shift`` phase-shifts the
        kernel transform, realizing the translated process pathwise.
        """
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        xi = self.sample_white()
        self.t += dt
        return Field(self.grid, increment_from_white(self.kernel, xi, dt, shift))


def increment_from_white(
    kernel: KernelSpec, xi: np.ndarray, dt: float, shift: float = 0.0
) -> np.ndarray:
    """Build dW = sqrt(dt) Phi(xi/sqrt(dx)) from white draws (batched OK)."""
    g = kernel.grid
    mult = kernel.multiplier
    if shift != 0.0:
        mult = mult * np.exp(1j * g.k * shift)
    xh = np.fft.rfft(xi, axis=-1)
    return np.sqrt(dt / g.dx) * np.fft.irfft(xh * mult, n=g.npoints, axis=-1)
