"""Diagonal-Gaussian primitives, as plain numpy and as graph operations."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def kl_diag_gaussian_to_std(mu, log_var) -> float:
    """KL( N(mu, diag(exp(log_var))) || N(0, I) )."""
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    if mu.shape != log_var.shape:
        raise ValueError("mu and log_var must have the same shape")
    return float(0.5 * np.sum(mu * mu + np.exp(log_var) - log_var - 1.0))


def diag_gaussian_logpdf(x, mu, log_var) -> float:
    x, mu, log_var = (np.asarray(a, dtype=np.float64) for a in (x, mu, log_var))
    if not x.shape == mu.shape == log_var.shape:
        raise ValueError("x, mu and log_var must have the same shape")
    return float(np.sum(-HALF_LOG_2PI - 0.5 * log_var - (x - mu) ** 2 / (2.0 * np.exp(log_var))))


def kl_to_std_t(mu: T.Tensor, log_var: T.Tensor) -> T.Tensor:
    """Summed KL over every entry; columns are independent samples."""
    return 0.5 * T.sum(T.square(mu) + T.exp(log_var) - log_var - 1.0)


def logpdf_t(x: T.Tensor, mu: T.Tensor, log_var: T.Tensor) -> T.Tensor:
    """Summed log-density of every entry of ``x``."""
    inv_var = T.exp(-log_var)
    quad = T.square(x - mu) * inv_var
    return T.sum(-0.5 * log_var - 0.5 * quad) - HALF_LOG_2PI * x.data.size
