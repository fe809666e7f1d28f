"""Gaussian-copula joint distributions over graph nodes.

Each node carries a normal marginal N(m_i, s_i^2); dependence between nodes is
a Gaussian copula with correlation matrix R. The joint law is then
N(m, D R D) with D = diag(s), whose coordinate marginals are exactly the
node marginals because diag(R) = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import GaussianMeasure

__all__ = [
    "Marginals",
    "CorrelationMatrix",
    "sigma_floor",
    "assemble_joint",
    "marginal_of",
    "project_correlation",
]


def sigma_floor(means) -> float:
    """Default lower bound for marginal standard deviations."""
    means = np.asarray(means, dtype=float)
    return 1e-6 * (1.0 + float(np.max(np.abs(means), initial=0.0)))


@dataclass(frozen=True, eq=False)
class Marginals:
    """Per-node normal marginals; ``stds`` are floored at ``floor``.

    ``floor`` defaults to ``1e-6 * (1 + max|mean|)``.
    """

    means: np.ndarray
    stds: np.ndarray
    floor: float | None = None

    def __post_init__(self):
        m = np.array(self.means, dtype=float).ravel()
        s = np.array(self.stds, dtype=float).ravel()
        if m.shape != s.shape:
            raise ValueError(f"means {m.shape} and stds {s.shape} differ in shape")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
            raise ValueError("marginal parameters must be finite")
        if np.any(s < 0):
            raise ValueError("standard deviations must be nonnegative")
        floor = sigma_floor(m) if self.floor is None else float(self.floor)
        if not floor > 0:
            raise ValueError("std floor must be positive")
        s = np.maximum(s, floor)
        m.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "stds", s)
        object.__setattr__(self, "floor", floor)

    @property
    def n(self) -> int:
        return self.means.size


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Symmetric PSD matrix with unit diagonal (Gaussian-copula parameter)."""

    r: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError(f"correlation matrix must be square, got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ValueError("correlation matrix has non-finite entries")
        if np.max(np.abs(r - r.T), initial=0.0) > 1e-10:
            raise ValueError("correlation matrix is not symmetric")
        if np.any(np.diag(r) != 1.0):
            raise ValueError("correlation matrix must have unit diagonal")
        if r.size and np.linalg.eigvalsh(r)[0] < -1e-8:
            raise ValueError("correlation matrix is not PSD")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    @classmethod
    def identity(cls, n: int) -> "CorrelationMatrix":
        return cls(np.eye(n))

    @property
    def n(self) -> int:
        return self.r.shape[0]


def assemble_joint(marg: Marginals, r: CorrelationMatrix) -> GaussianMeasure:
    """Joint Gaussian with the given marginals and copula: ``N(m, D R D)``."""
    if marg.n != r.n:
        raise ValueError(f"{marg.n} marginals but correlation matrix is {r.n}x{r.n}")
    d = marg.stds
    cov = d[:, None] * r.r * d[None, :]
    return GaussianMeasure(marg.means, cov)


def marginal_of(mu: GaussianMeasure, i: int) -> tuple[float, float]:
    """Mean and variance of coordinate ``i`` (pushforward under the projection)."""
    if not 0 <= i < mu.dim:
        raise IndexError(f"coordinate {i} out of range for dimension {mu.dim}")
    return float(mu.mean[i]), float(mu.cov[i, i])


def project_correlation(m, delta: float = 1e-6) -> CorrelationMatrix:
    """Map an arbitrary square matrix to a valid correlation matrix.

    Single pass of: symmetrise, clip eigenvalues at ``delta``, rescale to unit
    diagonal with ``S^-1 R S^-1`` where ``S = diag(sqrt(diag R))``, and finally
    write ones on the diagonal. Unlike alternating-projection schemes this is
    not the nearest correlation matrix, but it is a fixed point on valid
    inputs whose smallest eigenvalue is at least ``delta``.

    Parameters
    ----------
    m : array-like, (n, n)
        Matrix to project.
    delta : float
        Eigenvalue floor, must be positive.

    Returns
    -------
    CorrelationMatrix
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    r = 0.5 * (m + m.T)
    evals, evecs = np.linalg.eigh(r)
    r = (evecs * np.maximum(evals, delta)) @ evecs.T
    d = np.diag(r)
    assert np.all(d > 0), "PSD step produced a nonpositive diagonal"
    s_inv = 1.0 / np.sqrt(d)
    r = s_inv[:, None] * r * s_inv[None, :]
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 1.0)
    return CorrelationMatrix(r)
