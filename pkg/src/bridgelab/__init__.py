"""Schrödinger bridges on one-dimensional grids and numerical checks of their flow identities."""
from .grid import Density, Field, Grid, GridError, gradient, integrate, laplacian, weighted_l2_norm
from .kernels import GridTooCoarseError, ReferenceProcess, TransitionKernel, build_kernel, fk_kernel
from .solver import (SchrodingerProblem, SchrodingerSolution, SinkhornConvergenceError, SupportMismatchError,
                     entropic_cost, sinkhorn)
from .flow import FlowSlice, propagate
from .config import ConfigError, RunConfig

__all__ = [
    "Density", "Field", "Grid", "GridError", "gradient", "integrate", "laplacian", "weighted_l2_norm",
    "GridTooCoarseError", "ReferenceProcess", "TransitionKernel", "build_kernel", "fk_kernel",
    "SchrodingerProblem", "SchrodingerSolution", "SinkhornConvergenceError", "SupportMismatchError",
    "entropic_cost", "sinkhorn", "FlowSlice", "propagate", "ConfigError", "RunConfig",
]
__version__ = "0.1.0"
