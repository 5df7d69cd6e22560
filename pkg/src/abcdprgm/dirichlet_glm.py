"""Dirichlet regression with a log link, fitted by Fisher scoring.

Row ``i`` of the response is ``Z*_i ~ Dir(alpha_i)`` with
``alpha_i = exp(x_i^T B)``.  All derivatives are taken with respect to
``vec(B) = B.ravel()`` (row-major), so the Jacobian of ``log alpha_i`` is
``x_i^T kron I_{p+1}``.

Writing ``r_i = log Z*_i - mu_i`` with ``mu_i = psi(alpha_i) - psi(sum alpha_i)``
and ``Sigma_i = diag(psi'(alpha_i)) - psi'(sum alpha_i)``:

* score: ``sum_i (x_i kron I) diag(alpha_i) r_i``
* Fisher information: ``sum_i (x_i kron I) diag(alpha_i) Sigma_i diag(alpha_i) (x_i^T kron I)``
* observed information (negative Hessian) ``= F + R`` with
  ``R = -sum_i (x_i kron I) diag(r_i o alpha_i) (x_i^T kron I)``, which has
  mean zero at the true parameter.

The coefficient vector ``beta`` enters through ``vec(B) = C beta``.  The
default fit maximizes over the unconstrained ``vec(B)`` and projects onto
the span of ``C`` by least squares; ``mode="constrained"`` scores directly
in ``beta``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import digamma, gammaln, polygamma

from .model import LOG_ALPHA_CLAMP, build_C

logger = logging.getLogger(__name__)

# relative size of log-likelihood rounding noise used by the line search
LL_NOISE = 1e-9


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class GlmData:
    """Design ``X`` (n, 3p + 1) at time t and star-lifted response (n, p + 1) at t + 1."""

    X: np.ndarray
    Zstar: np.ndarray
    logZ: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Zs = np.atleast_2d(np.asarray(self.Zstar, dtype=float))
        if X.shape[0] != Zs.shape[0]:
            raise ValueError("design and response disagree on the number of rows")
        if X.shape[1] != 3 * (Zs.shape[1] - 1) + 1:
            raise ValueError(f"design has {X.shape[1]} columns, expected 3p + 1 for p = {Zs.shape[1] - 1}")
        with np.errstate(divide="ignore"):
            logZ = np.log(Zs)
        if not np.all(np.isfinite(logZ)):
            raise ValueError("response must lie strictly inside the simplex (finite logs)")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Zstar", Zs)
        object.__setattr__(self, "logZ", logZ)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.Zstar.shape[1] - 1

    @property
    def n_params(self) -> int:
        return self.X.shape[1] * self.Zstar.shape[1]


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 100
    damp: float = 1.0
    min_n: int = 50
    mode: str = "two_step"
    max_halvings: int = 40

    def __post_init__(self):
        if self.mode not in ("two_step", "constrained"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class FitReport:
    Bv_hat: np.ndarray
    beta_hat: np.ndarray
    cov_beta: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    condition: float
    min_eigenvalue: float
    ridge: float = 0.0
    mode: str = "two_step"
    n: int = 0
    p: int = 0
    loglik_path: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "beta_hat": self.beta_hat.tolist(),
            "sd_beta": np.sqrt(np.clip(np.diag(self.cov_beta), 0, None)).tolist(),
            "cov_beta": self.cov_beta.tolist(),
            "Bv_hat": self.Bv_hat.tolist(),
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "condition": self.condition,
            "min_eigenvalue": self.min_eigenvalue,
            "ridge": self.ridge,
            "mode": self.mode,
            "n": self.n,
            "p": self.p,
            "loglik_path": list(self.loglik_path),
        }


def _B_matrix(B, data: GlmData) -> np.ndarray:
    return np.asarray(B, dtype=float).reshape(data.X.shape[1], data.p + 1)


def concentrations(B, data: GlmData) -> np.ndarray:
    eta = data.X @ _B_matrix(B, data)
    return np.exp(np.clip(eta, -LOG_ALPHA_CLAMP, LOG_ALPHA_CLAMP))


def log_likelihood(B, data: GlmData) -> float:
    a = concentrations(B, data)
    ll = (np.sum(a * data.logZ) - np.sum(gammaln(a)) + np.sum(gammaln(a.sum(axis=1)))
          - np.sum(data.logZ))
    return float(ll)


def _residuals(a, data):
    mu = digamma(a) - digamma(a.sum(axis=1, keepdims=True))
    return data.logZ - mu


def score(B, data: GlmData) -> np.ndarray:
    a = concentrations(B, data)
    return (data.X.T @ (a * _residuals(a, data))).ravel()


def _kron_sum(X, D):
    """``sum_i kron(x_i x_i^T, diag(D_i))`` in row-major vec ordering."""
    q, m = X.shape[1], D.shape[1]
    out = np.zeros((q, m, q, m))
    for k in range(m):
        out[:, k, :, k] = X.T @ (D[:, k, None] * X)
    return out.reshape(q * m, q * m)


def fisher_info(B, data: GlmData) -> np.ndarray:
    a = concentrations(B, data)
    X = data.X
    n, q = X.shape
    tri_sum = polygamma(1, a.sum(axis=1))
    F = _kron_sum(X, a * a * polygamma(1, a))
    V = (X[:, :, None] * a[:, None, :]).reshape(n, -1)
    F -= V.T @ (tri_sum[:, None] * V)
    return 0.5 * (F + F.T)


def remainder(B, data: GlmData) -> np.ndarray:
    """``H - F``: observed minus expected information."""
    a = concentrations(B, data)
    return -_kron_sum(data.X, _residuals(a, data) * a)


def observed_info(B, data: GlmData) -> np.ndarray:
    return fisher_info(B, data) + remainder(B, data)


def _solve_psd(M, b):
    """Solve with a Cholesky factorization, falling back to a small ridge.

    Returns ``(x, ridge)``.
    """
    dim = M.shape[0]
    ridge = 0.0
    try:
        cond = np.linalg.cond(M)
    except LinAlgError:
        cond = np.inf
    if np.isfinite(cond) and cond < 1e12:
        try:
            return cho_solve(cho_factor(M), b), ridge
        except LinAlgError:
            pass
    ridge = 1e-8 * np.trace(M) / dim
    try:
        return cho_solve(cho_factor(M + ridge * np.eye(dim)), b), ridge
    except LinAlgError as e:
        raise FitError("information matrix is singular even after ridge regularization") from e


def _line_search(theta, direction, ll, g, to_B, grad, data, opts):
    """Halve ``theta + step * direction`` until the log-likelihood does not drop.

    Log-likelihood differences below ``LL_NOISE * |ll|`` are rounding noise
    (the sum cancels over many large terms), so inside that band the step is
    judged by the directional derivative instead: for a concave quadratic
    along the line, the candidate is no worse than the start exactly when
    ``s(cand) . d >= -s(theta) . d``.
    """
    slope = float(g @ direction)
    eps = LL_NOISE * max(1.0, abs(ll))
    step = opts.damp
    for _ in range(opts.max_halvings):
        cand = theta + step * direction
        ll_new = log_likelihood(to_B(cand), data)
        if np.isfinite(ll_new) and ll_new - ll >= -eps:
            g_new = grad(cand)
            if ll_new - ll > eps or float(g_new @ direction) >= -slope:
                return cand, ll_new, g_new
        step *= 0.5
    return None


def fit(data: GlmData, opts: FitOptions | None = None) -> FitReport:
    """Fisher scoring for the Dirichlet GLM, started at ``beta = 0``.

    Each step ``theta += damp * F^{-1} s`` is halved until the
    log-likelihood does not decrease (see :func:`_line_search`).  Converges when the largest entry of
    ``F^{-1} s`` falls below ``tol``.
    """
    opts = opts or FitOptions()
    if data.n < opts.min_n:
        raise FitError(f"need at least {opts.min_n} observations, got {data.n}")
    p = data.p
    C = build_C(p)
    proj = np.linalg.solve(C.T @ C, C.T)

    if opts.mode == "two_step":
        to_B = lambda theta: theta
        grad = lambda theta: score(theta, data)
        info = lambda theta: fisher_info(theta, data)
        theta = C @ np.zeros(4)
    else:
        to_B = lambda theta: C @ theta
        grad = lambda theta: C.T @ score(C @ theta, data)
        info = lambda theta: C.T @ fisher_info(C @ theta, data) @ C
        theta = np.zeros(4)

    ll = log_likelihood(to_B(theta), data)
    path = [ll]
    converged = False
    ridge_used = 0.0
    it = 0
    g = grad(theta)
    for it in range(1, opts.max_iter + 1):
        direction, ridge = _solve_psd(info(theta), g)
        ridge_used = max(ridge_used, ridge)
        if np.max(np.abs(direction)) <= opts.tol:
            converged = True
            break
        accepted = _line_search(theta, direction, ll, g, to_B, grad, data, opts)
        if accepted is None:
            logger.warning("step halving failed at iteration %d", it)
            break
        theta, ll, g = accepted
        path.append(ll)

    if not converged:
        logger.warning("Fisher scoring did not converge after %d iterations", it)

    Bv = to_B(theta)
    F = fisher_info(Bv, data)
    eig = np.linalg.eigvalsh(F)
    condition = float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")
    if opts.mode == "two_step":
        Finv, ridge = _solve_psd(F, np.eye(F.shape[0]))
        beta_hat = proj @ Bv
        cov = proj @ Finv @ proj.T
    else:
        Finv, ridge = _solve_psd(C.T @ F @ C, np.eye(4))
        beta_hat = theta
        cov = Finv
    ridge_used = max(ridge_used, ridge)
    if ridge_used:
        logger.warning("ridge %.3g added to the information matrix", ridge_used)
    return FitReport(
        Bv_hat=Bv,
        beta_hat=beta_hat,
        cov_beta=0.5 * (cov + cov.T),
        loglik=ll,
        iterations=it,
        converged=converged,
        condition=condition,
        min_eigenvalue=float(eig[0]),
        ridge=ridge_used,
        mode=opts.mode,
        n=data.n,
        p=p,
        loglik_path=path,
    )


def theoretical_sd(report: FitReport) -> np.ndarray:
    """Asymptotic standard deviations of ``beta_hat``."""
    if not report.converged:
        warnings.warn("standard deviations of a non-converged fit", RuntimeWarning, stacklevel=2)
    cov = report.cov_beta
    if np.linalg.eigvalsh(cov)[0] < -1e-10 * max(np.abs(cov).max(), 1e-300):
        raise FitError("covariance is not positive semi-definite (ridge-dominated fit?)")
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))
