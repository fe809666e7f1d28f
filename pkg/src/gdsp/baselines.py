"""Classical paired-sample graph filter learners used as comparison methods.

All four methods fit a filter mapping input columns ``X`` to target columns
``X*`` and therefore need column-aligned, fully observed pairs.

* ``gsp_ls``   least squares on the Chebyshev coefficients (closed form)
* ``gsp_rls``  least squares plus an l1 penalty on the coefficients
* ``gsp_lscm`` least squares plus a covariance-matching penalty
* ``gsp_lev``  heat-kernel mixture fitted by log-evidence maximisation
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .graph import ChebFilter, SpectralDecomp, materialize_filter

__all__ = [
    "PairedData",
    "LevResult",
    "ls_gram",
    "ls_objective",
    "gsp_ls",
    "gsp_rls",
    "rls_default_lambda",
    "gsp_lscm",
    "lscm_objective",
    "lscm_grad",
    "heat_kernel",
    "gsp_lev",
    "lev_objective",
    "predict",
]


@dataclass(frozen=True, eq=False)
class PairedData:
    """Input signals ``x`` and column-aligned targets ``x_star``, both (n, T)."""

    x: np.ndarray
    x_star: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        xs = np.array(self.x_star, dtype=float)
        if x.ndim != 2 or x.shape != xs.shape:
            raise ValueError(f"x {x.shape} and x_star {xs.shape} must be equal 2-D shapes")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xs))):
            raise ValueError("paired data must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x_star", xs)

    @property
    def n_cols(self) -> int:
        return self.x.shape[1]


def ls_gram(sd: SpectralDecomp, d: PairedData):
    """Gram matrix ``G_jk = <T_j X, T_k X>`` and vector ``b_k = <T_k X, X*>``."""
    feats = np.einsum("kij,jt->kit", sd.cheb_basis, d.x)
    g = np.einsum("kit,lit->kl", feats, feats)
    b = np.einsum("kit,it->k", feats, d.x_star)
    return g, b


def ls_objective(sd: SpectralDecomp, d: PairedData, theta) -> float:
    resid = materialize_filter(sd, np.asarray(theta, dtype=float)) @ d.x - d.x_star
    return float(np.sum(resid * resid))


def gsp_ls(sd: SpectralDecomp, d: PairedData) -> ChebFilter:
    """Exact minimiser of ``|F(theta) X - X*|_F^2`` via the 3x3 normal equations.

    A ridge of ``1e-10 * tr(G) / 3`` keeps rank-deficient systems solvable.
    """
    g, b = ls_gram(sd, d)
    ridge = 1e-10 * np.trace(g) / 3.0
    theta = np.linalg.solve(g + ridge * np.eye(3), b)
    return ChebFilter(tuple(theta))


def rls_default_lambda(sd: SpectralDecomp, d: PairedData, factor: float = 0.1) -> float:
    """``factor`` times the sup-norm of the least-squares gradient at ``theta = 0``."""
    _, b = ls_gram(sd, d)
    return factor * float(np.max(np.abs(2.0 * b)))


def gsp_rls(sd: SpectralDecomp, d: PairedData, lam: float | None = None,
            tol: float = 1e-10, max_iter: int = 10_000) -> ChebFilter:
    """Minimise ``|F(theta) X - X*|_F^2 + lam |theta|_1`` by proximal gradient.

    Accelerated (FISTA) iterations with step ``1 / (2 lambda_max(G))`` and
    soft-thresholding; stops when the coefficient change is at most ``tol``.
    ``lam=None`` uses :func:`rls_default_lambda`.
    """
    if lam is None:
        lam = rls_default_lambda(sd, d)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    g, b = ls_gram(sd, d)
    lip = 2.0 * float(np.linalg.eigvalsh(g)[-1])
    if lip <= 0:
        return ChebFilter((0.0, 0.0, 0.0))
    step = 1.0 / lip
    theta = np.zeros(3)
    y = theta.copy()
    t = 1.0
    for _ in range(max_iter):
        grad = 2.0 * (g @ y - b)
        z = y - step * grad
        theta_new = np.sign(z) * np.maximum(np.abs(z) - step * lam, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = theta_new + ((t - 1.0) / t_new) * (theta_new - theta)
        change = np.max(np.abs(theta_new - theta))
        theta, t = theta_new, t_new
        if change <= tol:
            break
    return ChebFilter(tuple(theta))


def _sample_cov(x: np.ndarray) -> np.ndarray:
    if x.shape[1] < 2:
        raise ValueError("covariance needs >= 2 columns")
    c = np.cov(x, ddof=1)
    return 0.5 * (c + c.T) + 1e-8 * np.eye(x.shape[0])


def lscm_objective(sd, d: PairedData, theta, lam, cov_x, cov_star) -> float:
    f = materialize_filter(sd, np.asarray(theta, dtype=float))
    resid = f @ d.x - d.x_star
    e = f @ cov_x @ f.T - cov_star
    return float(np.sum(resid * resid) + lam * np.sum(e * e))


def lscm_grad(sd, d: PairedData, theta, lam, cov_x, cov_star) -> np.ndarray:
    """Gradient in ``theta``; ``dJ/dF = 2 (F X - X*) X^T + 4 lam E F S_X``."""
    f = materialize_filter(sd, np.asarray(theta, dtype=float))
    resid = f @ d.x - d.x_star
    e = f @ cov_x @ f.T - cov_star
    g_f = 2.0 * resid @ d.x.T + 4.0 * lam * e @ f @ cov_x
    return np.einsum("ij,kij->k", g_f, sd.cheb_basis)


def gsp_lscm(sd: SpectralDecomp, d: PairedData, lam: float = 1.0,
             tol: float = 1e-10, max_iter: int = 10_000) -> ChebFilter:
    """Least squares with a covariance-matching penalty.

    Minimises ``|F X - X*|_F^2 + lam |F S_X F^T - S_X*|_F^2`` where the sample
    covariances use ``1/(T-1)`` plus a ``1e-8 I`` jitter. The quartic
    objective is minimised with L-BFGS on the analytic gradient, warm-started
    at the least-squares solution.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    cov_x = _sample_cov(d.x)
    cov_star = _sample_cov(d.x_star)
    theta0 = gsp_ls(sd, d).as_array()
    if lam == 0:
        return ChebFilter(tuple(theta0))
    res = minimize(
        lambda th: lscm_objective(sd, d, th, lam, cov_x, cov_star), theta0,
        jac=lambda th: lscm_grad(sd, d, th, lam, cov_x, cov_star), method="L-BFGS-B",
        options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-12},
    )
    if not np.all(np.isfinite(res.x)):
        raise FloatingPointError("GSP-LSCM produced non-finite coefficients")
    return ChebFilter(tuple(res.x))


def heat_kernel(sd: SpectralDecomp, tau: float) -> np.ndarray:
    """``exp(-tau L) = U exp(-tau Lambda) U^T``."""
    u = sd.eigvecs
    h = (u * np.exp(-tau * sd.eigvals)) @ u.T
    return 0.5 * (h + h.T)


@dataclass(frozen=True, eq=False)
class LevResult:
    taus: np.ndarray
    weights: np.ndarray
    alpha: float
    gamma: float
    filter_matrix: np.ndarray
    log_evidence: float


_LOG_PREC_BOUNDS = (np.log(1e-8), np.log(1e8))
_LOGIT_BOUNDS = (-50.0, 50.0)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def lev_objective(params, kernels, x, x_star, xxt):
    """Negative per-column log-evidence and its gradient.

    ``params = (logits..., log alpha, log gamma)``. Columns of ``X*`` are
    modelled as independent ``N(H x_t, C)`` with ``C = I / alpha + X X^T / gamma``.
    """
    k = kernels.shape[0]
    z, log_a, log_g = params[:k], params[k], params[k + 1]
    pi = _softmax(z)
    h = np.tensordot(pi, kernels, axes=1)
    n, t = x.shape
    a_inv, g_inv = np.exp(-log_a), np.exp(-log_g)
    c = a_inv * np.eye(n) + g_inv * xxt
    chol = np.linalg.cholesky(0.5 * (c + c.T))
    resid = x_star - h @ x
    c_inv = np.linalg.solve(chol.T, np.linalg.solve(chol, np.eye(n)))
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    quad = np.sum(resid * (c_inv @ resid))
    ll = -0.5 * (t * (n * np.log(2 * np.pi) + logdet) + quad)
    # gradients of ll, then negated and scaled per column
    g_h = c_inv @ resid @ x.T
    g_c = -0.5 * t * c_inv + 0.5 * c_inv @ resid @ resid.T @ c_inv
    h_k = np.einsum("ij,kij->k", g_h, kernels)
    g_z = pi * (h_k - pi @ h_k)
    g_log_a = -a_inv * np.trace(g_c)
    g_log_g = -g_inv * np.sum(g_c * xxt)
    grad = np.concatenate([g_z, [g_log_a, g_log_g]])
    return -ll / t, -grad / t


def gsp_lev(sd: SpectralDecomp, d: PairedData, taus=(0.5, 1.0, 2.0, 4.0),
            max_iter: int = 5000, tol: float = 1e-9) -> LevResult:
    """Heat-kernel mixture ``H = sum_tau pi_tau exp(-tau L)`` by log-evidence.

    Maximises ``sum_t log N(x*_t | H x_t, I/alpha + X X^T/gamma)`` over the
    simplex weights (softmax logits) and log-precisions ``alpha``, ``gamma``,
    which are kept in [1e-8, 1e8] so the covariance stays nonsingular.
    Optimisation is L-BFGS-B on the analytic gradient.
    """
    taus = np.asarray(taus, dtype=float).ravel()
    if taus.size == 0 or np.any(taus < 0):
        raise ValueError("taus must be a nonempty set of nonnegative scales")
    kernels = np.stack([heat_kernel(sd, tau) for tau in taus])
    xxt = d.x @ d.x.T
    k = taus.size
    x0 = np.zeros(k + 2)
    bounds = [_LOGIT_BOUNDS] * k + [_LOG_PREC_BOUNDS] * 2
    res = minimize(lev_objective, x0, args=(kernels, d.x, d.x_star, xxt), jac=True,
                   method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-10})
    if not np.isfinite(res.fun):
        raise FloatingPointError("GSP-LEV log-evidence is not finite")
    pi = _softmax(res.x[:k])
    h = np.tensordot(pi, kernels, axes=1)
    return LevResult(taus=taus, weights=pi, alpha=float(np.exp(res.x[k])),
                     gamma=float(np.exp(res.x[k + 1])), filter_matrix=h,
                     log_evidence=float(-res.fun * d.n_cols))


def predict(filter_matrix, x) -> np.ndarray:
    """Apply a learned filter to signals: ``F X``."""
    f = np.asarray(filter_matrix, dtype=float)
    x = np.asarray(x, dtype=float)
    if f.ndim != 2 or f.shape[1] != x.shape[0]:
        raise ValueError(f"filter shape {f.shape} incompatible with signals {x.shape}")
    return f @ x
