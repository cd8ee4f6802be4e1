"""Fourier-side Boltzmann equation for Maxwellian molecules with fractional diffusion."""

from .charfun import RadialCharFn, RadialGrid, d_alpha, gaussian_charfn, kalpha_norm, stable_charfn, unit_charfn
from .collision import QuadratureSpec, bobylev_general, bobylev_isotropic, gain_isotropic
from .kernels import KernelModel, MomentConstants, constant_kernel, eval_b, singular_kernel
from .levy import LevyParams, f_p_density, fractional_moment, w_p
from .solver import SolverConfig, cutoff_continuation, evolve, picard_solve, stability_experiment

__version__ = "0.1.0"

__all__ = [
    "KernelModel", "MomentConstants", "constant_kernel", "singular_kernel", "eval_b",
    "RadialGrid", "RadialCharFn", "stable_charfn", "gaussian_charfn", "unit_charfn", "kalpha_norm", "d_alpha",
    "LevyParams", "w_p", "f_p_density", "fractional_moment",
    "QuadratureSpec", "bobylev_isotropic", "bobylev_general", "gain_isotropic",
    "SolverConfig", "evolve", "picard_solve", "cutoff_continuation", "stability_experiment",
]
