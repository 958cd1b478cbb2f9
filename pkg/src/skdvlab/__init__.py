"""skdvlab: soliton dynamics of the stochastic KdV equation with
multiplicative homogeneous noise — spectral solver, modulation tracking,
limit dynamics, and the reduced peak-diffusion model."""

from ._accel import BACKEND
from .grid import Field, GridSpec, convolve, derivative, inner, make_grid, translate
from .noise import KernelSpec, NoiseState, correlation, parseval_density, smoother, smoother_adjoint
from .soliton import (
    LinearizedOperator,
    SolitonParams,
    apply_L,
    coercivity_nu,
    energy,
    lyapunov,
    mass,
    soliton,
    soliton_dc,
    soliton_dx,
    soliton_residual,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Field",
    "GridSpec",
    "KernelSpec",
    "LinearizedOperator",
    "NoiseState",
    "SolitonParams",
    "apply_L",
    "coercivity_nu",
    "convolve",
    "correlation",
    "derivative",
    "energy",
    "inner",
    "lyapunov",
    "make_grid",
    "mass",
    "parseval_density",
    "smoother",
    "smoother_adjoint",
    "soliton",
    "soliton_dc",
    "soliton_dx",
    "soliton_residual",
    "translate",
]
