"""Copula-based graph filter learning (GDS-Cop).

The filtered model law ``N(F m, F D R D F^T)`` is fitted to a Gaussian target
``N(m*, S*)`` by minimising their squared 2-Wasserstein distance over the
Chebyshev coefficients ``theta`` of ``F`` and the copula correlation ``R``.
Minimisation alternates plain gradient steps on ``theta`` and ``R``; after
every step ``R`` is projected back onto the correlation matrices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from .copula import CorrelationMatrix, Marginals, project_correlation
from .gaussian import sqrtm_psd
from .graph import ChebFilter, SpectralDecomp, materialize_filter

__all__ = [
    "GdsCopProblem",
    "LearnSettings",
    "LearnTrace",
    "LearnError",
    "bures_objective",
    "bures_loss_and_grad_f",
    "grad_theta",
    "grad_r",
    "loss_and_grads",
    "finite_difference_grads",
    "learn_gds_cop",
    "auto_step_sizes",
    "write_trace_csv",
]

_EIG_FLOOR = 1e-12
_DIVERGENCE = 1e12


class LearnError(RuntimeError):
    """Numerical failure during learning; ``trace`` holds the last finite state."""

    def __init__(self, message: str, trace: "LearnTrace | None" = None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class GdsCopProblem:
    """Marginal model ``(m, D)`` on graph ``sd`` and Gaussian target ``(m*, S*)``."""

    sd: SpectralDecomp
    marg: Marginals
    target_mean: np.ndarray
    target_cov: np.ndarray

    def __post_init__(self):
        n = self.sd.n
        tm = np.array(self.target_mean, dtype=float).ravel()
        tc = np.array(self.target_cov, dtype=float)
        if self.marg.n != n or tm.size != n or tc.shape != (n, n):
            raise ValueError(
                f"dimension mismatch: graph {n}, marginals {self.marg.n}, "
                f"target mean {tm.size}, target cov {tc.shape}")
        if np.max(np.abs(tc - tc.T), initial=0.0) > 1e-10 * max(1.0, np.abs(tc).max()):
            raise ValueError("target covariance is not symmetric")
        tc = 0.5 * (tc + tc.T)
        object.__setattr__(self, "target_mean", tm)
        object.__setattr__(self, "target_cov", tc)

    @property
    def n(self) -> int:
        return self.sd.n

    @cached_property
    def target_root(self) -> np.ndarray:
        return sqrtm_psd(self.target_cov)

    def model_cov(self, r) -> np.ndarray:
        d = self.marg.stds
        return d[:, None] * _as_array(r) * d[None, :]


@dataclass(frozen=True)
class LearnSettings:
    """Step sizes, stopping rule and gradient mode for :func:`learn_gds_cop`.

    ``eta1``/``eta2`` left as ``None`` are set once, before the first step, to
    ``step_fraction`` times the inverse curvature of the objective at the
    initial point (see :func:`auto_step_sizes`) and halved whenever the loss
    increases from one iterate to the next. Explicit step sizes stay fixed.
    """

    eta1: float | None = None
    eta2: float | None = None
    epsilon: float = 1e-8
    delta: float = 1e-6
    max_iters: int = 5000
    seed: int = 0
    grad_mode: str = "analytic"
    step_fraction: float = 0.5

    def __post_init__(self):
        if any(e is not None and e < 0 for e in (self.eta1, self.eta2)):
            raise ValueError("learning rates must be nonnegative")
        if not (self.epsilon > 0 and self.delta > 0):
            raise ValueError("epsilon and delta must be positive")
        if not 0 < self.step_fraction <= 1:
            raise ValueError("step_fraction must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grad_mode not in ("analytic", "finite-difference"):
            raise ValueError(f"unknown grad_mode {self.grad_mode!r}")


@dataclass(frozen=True, eq=False)
class LearnTrace:
    loss_history: np.ndarray
    final_theta: np.ndarray
    final_r: CorrelationMatrix
    iterations: int
    converged: bool
    extras: dict = field(default_factory=dict)

    @property
    def final_filter(self) -> ChebFilter:
        return ChebFilter(tuple(self.final_theta))


def _as_array(r) -> np.ndarray:
    return np.asarray(r.r if isinstance(r, CorrelationMatrix) else r, dtype=float)


def bures_loss_and_grad_f(f, cov, mean, target_mean, target_cov, target_root=None,
                          with_grad=True):
    """Squared W2 between ``N(F m, F S F^T)`` and ``N(m*, S*)`` and its gradients.

    Returns ``(loss, grad_F, grad_S)``; the gradients are ``None`` when
    ``with_grad`` is false. The derivative of ``Tr sqrt(M)`` uses
    ``M^{-1/2} / 2`` with eigenvalues of ``M`` floored at 1e-12.
    """
    root = sqrtm_psd(target_cov) if target_root is None else target_root
    resid = f @ mean - target_mean
    p = f @ cov @ f.T
    p = 0.5 * (p + p.T)
    mid = root @ p @ root
    evals, evecs = np.linalg.eigh(0.5 * (mid + mid.T))
    bures = np.trace(p) + np.trace(target_cov) - 2.0 * np.sum(np.sqrt(np.maximum(evals, 0.0)))
    loss = float(resid @ resid + max(bures, 0.0))
    if not with_grad:
        return loss, None, None
    inv_sqrt = 0.5 / np.sqrt(np.maximum(evals, _EIG_FLOOR))
    g_mid = (evecs * inv_sqrt) @ evecs.T
    g_p = np.eye(p.shape[0]) - 2.0 * root @ g_mid @ root
    g_p = 0.5 * (g_p + g_p.T)
    g_f = 2.0 * np.outer(resid, mean) + 2.0 * g_p @ f @ cov
    g_cov = f.T @ g_p @ f
    return loss, g_f, 0.5 * (g_cov + g_cov.T)


def loss_and_grads(p: GdsCopProblem, theta, r):
    """Objective value and gradients with respect to ``theta`` and ``R``."""
    theta = np.asarray(theta, dtype=float)
    f = materialize_filter(p.sd, theta)
    loss, g_f, g_cov = bures_loss_and_grad_f(
        f, p.model_cov(r), p.marg.means, p.target_mean, p.target_cov, p.target_root)
    g_theta = np.einsum("ij,kij->k", g_f, p.sd.cheb_basis)
    d = p.marg.stds
    g_r = d[:, None] * g_cov * d[None, :]
    return loss, g_theta, g_r


def bures_objective(p: GdsCopProblem, theta, r) -> float:
    """``|F m - m*|^2 + Tr(F S F^T + S* - 2 (S*^1/2 F S F^T S*^1/2)^1/2)`` with ``S = D R D``."""
    f = materialize_filter(p.sd, np.asarray(theta, dtype=float))
    loss, _, _ = bures_loss_and_grad_f(f, p.model_cov(r), p.marg.means, p.target_mean,
                                       p.target_cov, p.target_root, with_grad=False)
    return loss


def grad_theta(p: GdsCopProblem, theta, r) -> np.ndarray:
    return loss_and_grads(p, theta, r)[1]


def grad_r(p: GdsCopProblem, theta, r) -> np.ndarray:
    return loss_and_grads(p, theta, r)[2]


def finite_difference_grads(p: GdsCopProblem, theta, r, h: float = 1e-5):
    """Central-difference gradients; steps are ``h * max(1, |x|)``.

    ``R`` is perturbed symmetrically (``E_ij + E_ji``) so the objective only
    ever sees symmetric covariances; the returned matrix is the symmetric
    gradient, directly comparable with :func:`grad_r`.
    """
    theta = np.asarray(theta, dtype=float)
    r = _as_array(r)
    g_theta = np.zeros(3)
    for k in range(3):
        step = h * max(1.0, abs(theta[k]))
        e = np.zeros(3)
        e[k] = step
        g_theta[k] = (bures_objective(p, theta + e, r) - bures_objective(p, theta - e, r)) / (2 * step)
    n = r.shape[0]
    g_r = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            step = h * max(1.0, abs(r[i, j]))
            e = np.zeros((n, n))
            e[i, j] += step
            e[j, i] += step if i != j else 0.0
            diff = (bures_objective(p, theta, r + e) - bures_objective(p, theta, r - e)) / (2 * step)
            if i == j:
                g_r[i, i] = diff
            else:
                g_r[i, j] = g_r[j, i] = 0.5 * diff
    return g_theta, g_r


def auto_step_sizes(p: GdsCopProblem, theta, r, fraction: float = 0.5,
                    seed: int = 0, power_iters: int = 20, h: float = 1e-6):
    """Fixed step sizes ``fraction / curvature`` for ``theta`` and ``R``.

    The ``theta`` curvature is the top eigenvalue of the 3x3 Hessian obtained
    by differencing the analytic gradient. The ``R`` curvature is estimated by
    power iteration on Hessian-vector products restricted to symmetric,
    zero-diagonal directions (the ones the projection keeps).
    """
    theta = np.asarray(theta, dtype=float)
    r = _as_array(r)
    hess = np.zeros((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        hess[:, k] = (grad_theta(p, theta + e, r) - grad_theta(p, theta - e, r)) / (2 * h)
    curv_theta = float(np.linalg.eigvalsh(0.5 * (hess + hess.T))[-1])

    n = r.shape[0]
    curv_r = 0.0
    if n > 1:
        v = np.random.default_rng(seed).standard_normal((n, n))
        v = v + v.T
        np.fill_diagonal(v, 0.0)
        v /= np.linalg.norm(v)
        for _ in range(power_iters):
            hv = (grad_r(p, theta, r + h * v) - grad_r(p, theta, r - h * v)) / (2 * h)
            np.fill_diagonal(hv, 0.0)
            norm = np.linalg.norm(hv)
            if not norm > 0:
                break
            curv_r, v = norm, hv / norm
    tiny = 1e-12
    eta1 = fraction / max(curv_theta, tiny)
    eta2 = fraction / max(curv_r, tiny) if curv_r > 0 else eta1
    return float(eta1), float(eta2)


def learn_gds_cop(p: GdsCopProblem, s: LearnSettings = LearnSettings(),
                  callback: Callable[[int, np.ndarray, CorrelationMatrix, float], None] | None = None,
                  theta0=None, r0: CorrelationMatrix | None = None) -> LearnTrace:
    """Alternating projected gradient descent on ``(theta, R)``.

    Starts from the identity filter and the independence copula unless
    ``theta0``/``r0`` are given. Each iteration evaluates the loss at the
    current point, stops once two consecutive losses differ by at most
    ``s.epsilon``, and otherwise takes a ``theta`` step of size ``eta1`` and an
    ``R`` step of size ``eta2`` (both gradients at the same point) followed by
    :func:`~gdsp.copula.project_correlation`. Automatic step sizes are halved
    after any iteration that raised the loss.

    ``callback(u, theta, R, loss)`` is invoked once per evaluated iterate.

    Raises
    ------
    LearnError
        If the loss exceeds 1e12 or any value turns non-finite.
    """
    theta = np.array([1.0, 0.0, 0.0]) if theta0 is None else np.array(theta0, dtype=float)
    r = CorrelationMatrix.identity(p.n) if r0 is None else r0
    eta1, eta2 = s.eta1, s.eta2
    adaptive = eta1 is None or eta2 is None
    if adaptive:
        auto1, auto2 = auto_step_sizes(p, theta, r, s.step_fraction, s.seed)
        eta1 = auto1 if eta1 is None else eta1
        eta2 = auto2 if eta2 is None else eta2
    history: list[float] = []
    converged = False

    def snapshot(conv):
        return LearnTrace(np.array(history), theta.copy(), r, len(history), conv,
                          extras={"eta1": eta1, "eta2": eta2})

    for u in range(s.max_iters):
        if s.grad_mode == "analytic":
            loss, g_theta, g_r = loss_and_grads(p, theta, r)
        else:
            loss = bures_objective(p, theta, r)
            g_theta, g_r = finite_difference_grads(p, theta, r)
        if not np.isfinite(loss) or loss > _DIVERGENCE:
            raise LearnError(f"objective diverged at iteration {u} (loss={loss:.3g})",
                             snapshot(False))
        if not (np.all(np.isfinite(g_theta)) and np.all(np.isfinite(g_r))):
            raise LearnError(f"non-finite gradient at iteration {u} (loss={loss:.6g})",
                             snapshot(False))
        history.append(loss)
        if callback is not None:
            callback(u, theta.copy(), r, loss)
        if len(history) >= 2 and abs(history[-1] - history[-2]) <= s.epsilon:
            converged = True
            break
        if u == s.max_iters - 1:
            break
        if adaptive and len(history) >= 2 and history[-1] > history[-2]:
            # the curvature probe at the start can underestimate later curvature
            eta1 = eta1 * 0.5 if s.eta1 is None else eta1
            eta2 = eta2 * 0.5 if s.eta2 is None else eta2
        theta = theta - eta1 * g_theta
        r = project_correlation(r.r - eta2 * g_r, s.delta)
    return snapshot(converged)


def write_trace_csv(trace: LearnTrace, path: str | Path) -> None:
    """Write the loss history as ``iter,loss`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "loss"])
        for i, v in enumerate(trace.loss_history):
            w.writerow([i, repr(float(v))])
