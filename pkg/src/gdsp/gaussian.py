"""Gaussian measures on R^n and their 2-Wasserstein geometry.

A Dirac mass is the Gaussian with zero covariance, so the same closed forms
cover deterministic graph signals and Gaussian ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

__all__ = [
    "GaussianMeasure",
    "dirac",
    "sqrtm_psd",
    "bures_term",
    "w2",
    "w2_squared",
    "pushforward",
    "empirical_w2_oracle",
    "sinkhorn_cost",
]

_SYM_TOL = 1e-10
_PSD_TOL = 1e-10


def _check_symmetric(s: np.ndarray, tol: float, what: str = "matrix") -> None:
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"{what} must be square, got shape {s.shape}")
    scale = max(1.0, float(np.max(np.abs(s), initial=0.0)))
    if np.max(np.abs(s - s.T), initial=0.0) > tol * scale:
        raise ValueError(f"{what} is not symmetric")


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """Normal distribution N(mean, cov); ``cov`` may be singular.

    Slightly negative eigenvalues (>= -1e-10 relative) from round-off are
    clamped to zero at construction.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.array(self.mean, dtype=float).ravel()
        c = np.array(self.cov, dtype=float)
        if c.shape != (m.size, m.size):
            raise ValueError(f"cov shape {c.shape} does not match mean size {m.size}")
        if not np.all(np.isfinite(m)) or not np.all(np.isfinite(c)):
            raise ValueError("mean and cov must be finite")
        _check_symmetric(c, _SYM_TOL, "cov")
        c = 0.5 * (c + c.T)
        if m.size:
            evals, evecs = np.linalg.eigh(c)
            scale = max(1.0, float(np.max(np.abs(evals))))
            if evals[0] < -_PSD_TOL * scale:
                raise ValueError(f"cov is not PSD (min eigenvalue {evals[0]:.3g})")
            if evals[0] < 0:
                c = (evecs * np.maximum(evals, 0.0)) @ evecs.T
                c = 0.5 * (c + c.T)
        m.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def is_dirac(self) -> bool:
        return not np.any(self.cov)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``size`` points, returned as rows of a (size, dim) array."""
        evals, evecs = np.linalg.eigh(self.cov)
        root = evecs * np.sqrt(np.maximum(evals, 0.0))
        z = rng.standard_normal((size, self.dim))
        return self.mean + z @ root.T


def dirac(x) -> GaussianMeasure:
    """Point mass at ``x`` (a classical graph signal)."""
    x = np.asarray(x, dtype=float).ravel()
    return GaussianMeasure(x, np.zeros((x.size, x.size)))


def sqrtm_psd(s: np.ndarray) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix.

    Eigenvalues below zero (round-off) are clamped to 0 before the root.

    Parameters
    ----------
    s : ndarray, (n, n)
        Symmetric matrix with ``min eig >= -1e-8`` (relative).

    Returns
    -------
    ndarray, (n, n)
        Symmetric PSD ``r`` with ``r @ r ~= s``.
    """
    s = np.asarray(s, dtype=float)
    _check_symmetric(s, _SYM_TOL, "input")
    evals, evecs = np.linalg.eigh(0.5 * (s + s.T))
    scale = max(1.0, float(np.max(np.abs(evals), initial=0.0)))
    if evals.size and evals[0] < -1e-8 * scale:
        raise ValueError(f"input is not PSD (min eigenvalue {evals[0]:.3g})")
    r = (evecs * np.sqrt(np.maximum(evals, 0.0))) @ evecs.T
    return 0.5 * (r + r.T)


def bures_term(cov1: np.ndarray, cov2: np.ndarray) -> float:
    """``Tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2)``, clamped at 0."""
    root2 = sqrtm_psd(cov2)
    cross = root2 @ cov1 @ root2
    cross = sqrtm_psd(0.5 * (cross + cross.T))
    val = np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(cross)
    return max(float(val), 0.0)


def w2_squared(mu1: GaussianMeasure, mu2: GaussianMeasure) -> float:
    if mu1.dim != mu2.dim:
        raise ValueError(f"dimension mismatch: {mu1.dim} vs {mu2.dim}")
    dm = mu1.mean - mu2.mean
    return float(dm @ dm) + bures_term(mu1.cov, mu2.cov)


def w2(mu1: GaussianMeasure, mu2: GaussianMeasure) -> float:
    """Closed-form 2-Wasserstein distance between two Gaussians.

    ``W2^2 = |m1 - m2|^2 + Tr(S1 + S2 - 2 (S2^1/2 S1 S2^1/2)^1/2)``.
    Valid for singular covariances; between Diracs it is the Euclidean
    distance between the atoms.
    """
    if mu1.is_dirac and mu2.is_dirac:
        if mu1.dim != mu2.dim:
            raise ValueError(f"dimension mismatch: {mu1.dim} vs {mu2.dim}")
        return float(np.linalg.norm(mu1.mean - mu2.mean))
    return float(np.sqrt(w2_squared(mu1, mu2)))


def pushforward(f: np.ndarray, mu: GaussianMeasure) -> GaussianMeasure:
    """Law of ``F X`` for ``X ~ mu``: ``N(F m, F S F^T)``."""
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[1] != mu.dim:
        raise ValueError(f"operator shape {f.shape} incompatible with dimension {mu.dim}")
    cov = f @ mu.cov @ f.T
    return GaussianMeasure(f @ mu.mean, 0.5 * (cov + cov.T))


# scaling vectors stay within about exp(+-600) / n when every row and column
# of C / reg has an entry below this bound, inside the double range of
# exp(+-708); overflow anyway sends the caller to the log domain
_KERNEL_LIMIT = 600.0


def sinkhorn_cost(cost: np.ndarray, reg: float, max_iter: int = 5000,
                  tol: float = 1e-9, symmetric: bool = False, relax: float = 1.0) -> float:
    """Entropic OT value between uniform weights.

    Iterates until the L1 violation of the marginals is below ``tol``
    (kernel route) or the potentials move by less than ``tol`` (log route).
    Returns the dual value ``<f, a> + <g, b>`` of
    ``min_P <P, C> + reg KL(P | a b^T)``. Scaling iterations run on the Gibbs
    kernel ``exp(-C / reg)`` when every row and column keeps an entry well
    above underflow, otherwise (or if the kernel route overflows) in the log
    domain. ``symmetric=True`` (same point set on both sides)
    uses the averaged fixed-point update, which needs far fewer iterations.
    ``relax`` in (1, 2) over-relaxes the kernel-route scaling updates,
    ``u <- u^(1 - relax) (a / K v)^relax``; a relaxed run that fails to converge
    falls back to the plain iteration.
    """
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if symmetric and n != m:
        raise ValueError("symmetric problem needs a square cost matrix")
    near = max(np.max(cost.min(axis=1)), np.max(cost.min(axis=0)))
    if not 1.0 <= relax < 2.0:
        raise ValueError("relax must lie in [1, 2)")
    if near / reg < _KERNEL_LIMIT:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            val = np.nan
            if relax > 1.0 and not symmetric:
                val = _sinkhorn_relaxed(cost, reg, max_iter, tol, relax)
            if not np.isfinite(val):
                val = _sinkhorn_kernel(cost, reg, max_iter, tol, symmetric)
        if np.isfinite(val):
            return val
    return _sinkhorn_log(cost, reg, max_iter, tol, symmetric)


def _sinkhorn_kernel(cost, reg, max_iter, tol, symmetric):
    n, m = cost.shape
    a, b = np.full(n, 1.0 / n), np.full(m, 1.0 / m)
    k = np.exp(-cost / reg)
    u, v = np.ones(n), np.ones(m)
    if symmetric:
        for _ in range(max_iter):
            ku = k @ u
            if np.abs(u * ku - a).sum() < tol:
                break
            u = np.sqrt(u * a / ku)
        v = u
    else:
        kv = k @ v
        for _ in range(max_iter):
            u = a / kv
            ktu = k.T @ u
            v = b / ktu
            kv = k @ v
            # after the v update the column marginal is exact; check the rows
            if np.abs(u * kv - a).sum() < tol:
                break
    f = reg * np.log(u / a)
    g = reg * np.log(v / b)
    return float(f.mean() + g.mean())


def _sinkhorn_relaxed(cost, reg, max_iter, tol, relax):
    # returns nan unless both marginals converge, so the caller can fall back
    n, m = cost.shape
    a, b = np.full(n, 1.0 / n), np.full(m, 1.0 / m)
    k = np.exp(-cost / reg)
    u, v = np.ones(n), np.ones(m)
    kv = k @ v
    for _ in range(max_iter):
        u = u ** (1.0 - relax) * (a / kv) ** relax
        v = v ** (1.0 - relax) * (b / (k.T @ u)) ** relax
        kv = k @ v
        row = np.abs(u * kv - a).sum()
        if not np.isfinite(row):
            return np.nan
        # the column check costs one more product, so only run it near the end
        if row < tol and np.abs(v * (k.T @ u) - b).sum() < tol:
            return float(reg * (np.log(u / a).mean() + np.log(v / b).mean()))
    return np.nan


def _sinkhorn_log(cost, reg, max_iter, tol, symmetric):
    n, m = cost.shape
    log_a = np.full(n, -np.log(n))
    log_b = np.full(m, -np.log(m))
    f = np.zeros(n)
    g = np.zeros(m)
    for _ in range(max_iter):
        if symmetric:
            f_new = 0.5 * (f - reg * logsumexp((f[None, :] - cost) / reg + log_b[None, :], axis=1))
            g = f_new
        else:
            f_new = -reg * logsumexp((g[None, :] - cost) / reg + log_b[None, :], axis=1)
            g = -reg * logsumexp((f_new[:, None] - cost) / reg + log_a[:, None], axis=0)
        done = np.max(np.abs(f_new - f)) < tol * max(1.0, reg)
        f = f_new
        if done:
            break
    return float(f.mean() + g.mean())


def empirical_w2_oracle(samples_a, samples_b, reg: float | None = None,
                        method: str = "auto", exact_max: int = 64,
                        tol: float = 1e-9, reg_factor: float = 0.01) -> float:
    """W2 between two uniform empirical measures of equal size.

    Parameters
    ----------
    samples_a, samples_b : array-like, (k, d)
        Point clouds (rows are points). A 1-D array is read as k points in R.
    reg : float, optional
        Entropic regularisation for the Sinkhorn route. Defaults to
        ``reg_factor * median squared pairwise distance``.
    method : {"auto", "exact", "sinkhorn"}
        ``"exact"`` solves the transport LP, which for equal-size uniform
        measures is an assignment problem. ``"sinkhorn"`` returns the debiased
        Sinkhorn divergence ``OT(a,b) - (OT(a,a) + OT(b,b)) / 2``. ``"auto"``
        is exact in 1-D or up to ``exact_max`` points and Sinkhorn beyond.
    tol : float
        Marginal-violation tolerance of the Sinkhorn iterations.
    reg_factor : float
        Multiplier of the median squared distance when ``reg`` is not given.
        Larger values converge faster at the price of more entropic bias.

    Notes
    -----
    For uniform weights of equal size the squared-Euclidean transport cost
    splits exactly into ``|mean_a - mean_b|^2`` plus the cost between the
    centred clouds, so the Sinkhorn route regularises only the centred
    part (and ``reg`` defaults to the median over the centred clouds).

    Returns
    -------
    float
        Square root of the optimal mean squared-Euclidean transport cost.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("empty point set")
    if a.shape != b.shape:
        raise ValueError(f"point sets must have equal shapes, got {a.shape} and {b.shape}")
    if method == "auto":
        method = "exact" if a.shape[1] == 1 or a.shape[0] <= exact_max else "sinkhorn"
    if method == "exact":
        if a.shape[1] == 1:
            # 1-D optimal coupling is the monotone (sorted) matching
            d = np.sort(a[:, 0]) - np.sort(b[:, 0])
            return float(np.sqrt(np.mean(d * d)))
        cost = cdist(a, b, "sqeuclidean")
        rows, cols = linear_sum_assignment(cost)
        return float(np.sqrt(max(cost[rows, cols].mean(), 0.0)))
    if method != "sinkhorn":
        raise ValueError(f"unknown method {method!r}")
    shift = a.mean(axis=0) - b.mean(axis=0)
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    cost_ab = cdist(a, b, "sqeuclidean")
    if reg is None:
        med = np.median(cost_ab)
        reg = reg_factor * med if med > 0 else 1e-3
    ot_ab = sinkhorn_cost(cost_ab, reg, tol=tol, relax=1.5)
    ot_aa = sinkhorn_cost(cdist(a, a, "sqeuclidean"), reg, tol=tol, symmetric=True)
    ot_bb = sinkhorn_cost(cdist(b, b, "sqeuclidean"), reg, tol=tol, symmetric=True)
    centred = max(ot_ab - 0.5 * (ot_aa + ot_bb), 0.0)
    return float(np.sqrt(float(shift @ shift) + centred))
