"""Numerical core: linear algebra, autodiff, Gaussians, Adam, RNG, gradient checks."""

from . import tensor
from .gaussian import diag_gaussian_logpdf, kl_diag_gaussian_to_std
from .gradcheck import GradReport, grad_check
from .linalg import cholesky_logdet, softmax_rows, sym_eig_smallest
from .optim import Adam, Param, adam_step
from .rng import RngStream
from .tensor import Tensor

__all__ = [
    "Adam",
    "GradReport",
    "Param",
    "RngStream",
    "Tensor",
    "adam_step",
    "cholesky_logdet",
    "diag_gaussian_logpdf",
    "grad_check",
    "kl_diag_gaussian_to_std",
    "softmax_rows",
    "sym_eig_smallest",
    "tensor",
]
