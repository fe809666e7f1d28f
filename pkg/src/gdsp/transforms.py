"""Fourier transform and convolutional filtering of Gaussian graph signals.

Both operations are pushforwards under a linear map: ``U^T`` for the forward
transform, ``U`` for its inverse, and a Chebyshev polynomial of the Laplacian
for filtering. On a Dirac input they reduce to the classical GFT and graph
convolution.
"""

from __future__ import annotations

import numpy as np

from .gaussian import GaussianMeasure, pushforward
from .graph import ChebFilter, SpectralDecomp, chebyshev_response, materialize_filter

__all__ = ["gds_ft", "gds_ift", "gds_filter", "spectral_response"]


def _check_dim(mu: GaussianMeasure, sd: SpectralDecomp) -> None:
    if mu.dim != sd.n:
        raise ValueError(f"measure dimension {mu.dim} does not match graph size {sd.n}")


def gds_ft(mu: GaussianMeasure, sd: SpectralDecomp) -> GaussianMeasure:
    """Graph Fourier transform of a measure: the law of ``U^T X``."""
    _check_dim(mu, sd)
    return pushforward(sd.eigvecs.T, mu)


def gds_ift(mu_hat: GaussianMeasure, sd: SpectralDecomp) -> GaussianMeasure:
    """Inverse transform: the law of ``U Y`` for ``Y ~ mu_hat``."""
    _check_dim(mu_hat, sd)
    return pushforward(sd.eigvecs, mu_hat)


def gds_filter(mu: GaussianMeasure, sd: SpectralDecomp, f: ChebFilter) -> GaussianMeasure:
    """Filter a measure: ``N(F m, F S F^T)`` with ``F`` the Chebyshev filter matrix."""
    _check_dim(mu, sd)
    return pushforward(materialize_filter(sd, f), mu)


def spectral_response(sd: SpectralDecomp, f: ChebFilter) -> np.ndarray:
    """Per-frequency gains ``h(lambda_i)`` of ``f``, ordered like ``sd.eigvals``."""
    return chebyshev_response(f.as_array(), sd.rescaled_eigvals)
