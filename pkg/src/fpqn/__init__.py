"""Quasi-Newton proximal fixed-point solvers for TV image deblurring."""

from .fidelity import GaussianFidelity, RayleighFidelity, estimate_beta
from .metrics import psnr
from .operators import (
    BlurKernel,
    SpectralOperator,
    blur_operator,
    box_kernel,
    build_Q,
    delta_kernel,
    gaussian_kernel,
    grad,
    grad_adjoint,
)
from .solvers import Problem, SolverConfig, SolverState, run

__version__ = "0.1.0"

__all__ = [
    "BlurKernel",
    "GaussianFidelity",
    "Problem",
    "RayleighFidelity",
    "SolverConfig",
    "SolverState",
    "SpectralOperator",
    "blur_operator",
    "box_kernel",
    "build_Q",
    "delta_kernel",
    "estimate_beta",
    "gaussian_kernel",
    "grad",
    "grad_adjoint",
    "psnr",
    "run",
]
