"""Latent position recovery from adjacency matrices.

* :func:`ase` -- adjacency spectral embedding.
* :func:`gaep` -- gradient descent on the masked reconstruction error plus
  an out-of-simplex penalty.
* :func:`sae` -- ASE rotated by the orthogonal matrix minimizing the penalty,
  found by Riemannian gradient descent on O(p) (:func:`rgd_orthogonal`).
* :func:`procrustes_align` -- oracle alignment to known positions.
* :func:`project_to_Dp` -- row-wise projection onto the shrunken simplex.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse.linalg
from scipy.special import expit

logger = logging.getLogger(__name__)

DENSE_EIGEN_MAX_N = 4000
MAX_STARTS = 48
ARMIJO = 1e-4
BACKTRACK = 0.5


@dataclass(frozen=True)
class EmbedOptions:
    """Options shared by GAEP, SAE and the orthogonal-group solver.

    ``lam=None`` means ``n / 10``.  ``init`` is a warm start: an (n, p)
    matrix for GAEP, an orthogonal (p, p) matrix for SAE.
    """

    p: int = 2
    lam: float | None = None
    mu: float = 50.0
    step: float = 1.0
    max_iters: int = 2000
    tol: float = 1e-8
    init: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.mu <= 0 or self.tol <= 0 or self.step <= 0:
            raise ValueError("mu, tol and step must be positive")


@dataclass
class EmbedResult:
    Z: np.ndarray
    objective: float
    iterations: int
    converged: bool
    history: list


@dataclass
class AlignmentResult:
    W: np.ndarray
    objective: float
    iterations: int
    converged: bool = True
    max_orth_error: float = 0.0


def _next_step(t, f, f_new, slope2):
    """Initial trial step for the next iteration.

    Minimizer of the quadratic through ``f``, the directional slope
    ``-slope2`` and ``f_new`` at step ``t``, kept within ``[t/10, 10 t]``.
    Plain doubling would let Armijo accept overshoots that bounce across
    a minimum.
    """
    curv = f_new - f + t * slope2
    if curv <= 0:
        return 2.0 * t
    return float(np.clip(slope2 * t * t / (2.0 * curv), 0.1 * t, 10.0 * t))


def _adjacency(Y) -> np.ndarray:
    return Y.Y if hasattr(Y, "Y") else np.asarray(Y, dtype=float)


def _top_eigen(A, k, which):
    """Top-k eigenpairs of a symmetric matrix, largest first.

    ``which`` is ``"LA"`` (largest algebraic) or ``"LM"`` (largest magnitude).
    """
    n = A.shape[0]
    if which == "LA" and k < n and n <= DENSE_EIGEN_MAX_N:
        # dense, but only the top-k eigenvectors are formed
        w, V = scipy.linalg.eigh(A, subset_by_index=[n - k, n - 1], driver="evr")
    elif n <= DENSE_EIGEN_MAX_N or k >= n - 1:
        w, V = scipy.linalg.eigh(A)
    else:
        v0 = np.ones(n) / np.sqrt(n)
        w, V = scipy.sparse.linalg.eigsh(A, k=k, which=which, v0=v0)
    order = np.argsort(-w if which == "LA" else -np.abs(w), kind="stable")[:k]
    return w[order], V[:, order]


def ase(Y, p: int) -> np.ndarray:
    """Adjacency spectral embedding ``U_p diag(lambda_p)^{1/2}``.

    Each eigenvector's sign is fixed so that its largest-magnitude entry is
    positive.
    """
    A = _adjacency(Y)
    if p < 1 or p > A.shape[0]:
        raise ValueError(f"p must be in [1, n], got {p}")
    w, V = _top_eigen(A, p, "LA")
    if np.any(w <= 0):
        raise ValueError(
            f"adjacency has only {int(np.count_nonzero(w > 0))} positive eigenvalue(s); need {p}"
        )
    idx = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[idx, np.arange(p)])
    return V * np.sqrt(w)


def scree(Y, k: int) -> np.ndarray:
    """The ``k`` largest-magnitude eigenvalues, signed, in decreasing magnitude."""
    A = _adjacency(Y)
    if k > A.shape[0]:
        raise ValueError("k must not exceed n")
    w, _ = _top_eigen(A, k, "LM")
    return w


def softplus(x, mu: float) -> np.ndarray:
    return np.logaddexp(0.0, mu * np.asarray(x, dtype=float)) / mu


def penalty(Z, mu: float = 50.0) -> float:
    """Out-of-simplex penalty: softplus of negative entries and row-sum excess."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    return float(softplus(-Z, mu).sum() + softplus(Z.sum(axis=1) - 1.0, mu).sum())


def penalty_gradient(Z, mu: float = 50.0) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    excess = expit(mu * (Z.sum(axis=1, keepdims=True) - 1.0))
    return -expit(-mu * Z) + excess


def reconstruction_error(A, Z) -> float:
    """``||M o (A - Z Z^T)||_F^2`` with M the hollow all-ones mask."""
    G = Z.T @ Z
    sq = np.einsum("ij,ij->i", Z, Z)
    full = np.sum(A * A) - 2.0 * np.einsum("ij,ij->", Z, A @ Z) + np.sum(G * G)
    return float(full - np.sum((np.diag(A) - sq) ** 2))


def reconstruction_gradient(A, Z) -> np.ndarray:
    """``-4 (M o (A - Z Z^T)) Z`` evaluated without forming Z Z^T."""
    sq = np.einsum("ij,ij->i", Z, Z)
    AZ = A @ Z - np.diag(A)[:, None] * Z
    return -4.0 * (AZ - Z @ (Z.T @ Z) + sq[:, None] * Z)


def gaep_objective(A, Z, lam: float, mu: float) -> float:
    return reconstruction_error(A, Z) + lam * penalty(Z, mu)


def gaep_gradient(A, Z, lam: float, mu: float) -> np.ndarray:
    return reconstruction_gradient(A, Z) + lam * penalty_gradient(Z, mu)


def gaep(Y, opts: EmbedOptions | None = None, *, return_result: bool = False):
    """Penalized gradient embedding.

    Minimizes ``||M o (Y - Z Z^T)||_F^2 + lam * penalty(Z, mu)`` by gradient
    descent with Armijo backtracking, starting from ``opts.init`` or the
    ASE.  Accepted steps never increase the objective.  Returns the best
    iterate; with ``return_result=True`` an :class:`EmbedResult` including
    the objective history and convergence flag.
    """
    opts = opts or EmbedOptions()
    A = _adjacency(Y)
    n = A.shape[0]
    lam = n / 10.0 if opts.lam is None else opts.lam
    Z = ase(A, opts.p) if opts.init is None else np.array(opts.init, dtype=float)
    if Z.shape != (n, opts.p):
        raise ValueError(f"warm start has shape {Z.shape}, expected {(n, opts.p)}")

    f = gaep_objective(A, Z, lam, opts.mu)
    history = [f]
    # Reconstruction curvature scales like ||Z^T Z||; start from its inverse.
    t = opts.step / max(8.0 * np.linalg.norm(Z.T @ Z, 2) + lam * opts.mu, 1e-12)
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        g = gaep_gradient(A, Z, lam, opts.mu)
        gg = float(np.sum(g * g))
        if gg == 0.0:
            converged = True
            break
        while True:
            Z_new = Z - t * g
            f_new = gaep_objective(A, Z_new, lam, opts.mu)
            if np.isfinite(f_new) and f_new <= f - ARMIJO * t * gg:
                break
            t *= BACKTRACK
            if t < 1e-300:
                break
        if not (np.isfinite(f_new) and f_new <= f):
            converged = True
            break
        rel = (f - f_new) / max(abs(f), 1e-300)
        t = _next_step(t, f, f_new, gg)
        Z, f = Z_new, f_new
        history.append(f)
        if rel <= opts.tol:
            converged = True
            break
    if not converged:
        logger.warning("GAEP did not converge in %d iterations", opts.max_iters)
    if return_result:
        return EmbedResult(Z=Z, objective=f, iterations=it, converged=converged, history=history)
    return Z


def skew(M) -> np.ndarray:
    return 0.5 * (M - M.T)


def orth_error(W) -> float:
    return float(np.max(np.abs(W.T @ W - np.eye(W.shape[0]))))


def rgd_orthogonal(grad_fn, objective_fn, W0, opts: EmbedOptions | None = None,
                   *, record=None) -> AlignmentResult:
    """Riemannian gradient descent on the orthogonal group.

    With Euclidean gradient ``G`` at ``W``, the Riemannian gradient is
    ``W (W^T G - G^T W) / 2 = W Omega``.  Each step moves along the geodesic
    ``W expm(-a Omega)``, with ``a`` found by Armijo backtracking, so every
    iterate stays orthogonal.  Stops when ``||Omega||_F <= tol``.

    ``record``, if given, is called with each accepted iterate.
    """
    opts = opts or EmbedOptions()
    W = np.array(W0, dtype=float)
    p = W.shape[0]
    if W.shape != (p, p) or orth_error(W) > 1e-8:
        raise ValueError("W0 must be a square orthogonal matrix")
    f = float(objective_fn(W))
    if not np.isfinite(f):
        raise FloatingPointError("objective is not finite at W0")
    if record is not None:
        record(W)
    t = opts.step
    converged = False
    worst = orth_error(W)
    it = 0
    for it in range(1, opts.max_iters + 1):
        G = np.asarray(grad_fn(W), dtype=float)
        Omega = skew(W.T @ G)
        nrm2 = float(np.sum(Omega * Omega))
        if np.sqrt(nrm2) <= opts.tol:
            converged = True
            break
        accepted = False
        while t > 1e-16:
            W_new = W @ scipy.linalg.expm(-t * Omega)
            f_new = float(objective_fn(W_new))
            if not np.isfinite(f_new):
                raise FloatingPointError("objective became non-finite")
            # Riemannian metric: <W Omega, W Omega> = ||Omega||^2
            if f_new <= f - ARMIJO * t * nrm2:
                accepted = True
                break
            t *= BACKTRACK
        if not accepted:
            converged = True
            break
        # re-orthonormalize against round-off drift
        U, _, Vt = np.linalg.svd(W_new)
        t = _next_step(t, f, f_new, nrm2)
        W, f = U @ Vt, f_new
        worst = max(worst, orth_error(W))
        if record is not None:
            record(W)
    return AlignmentResult(W=W, objective=f, iterations=it, converged=converged,
                           max_orth_error=worst)


def signed_permutations(p: int, limit: int = MAX_STARTS, seed: int = 0) -> list:
    """Signed permutation matrices; a seeded random subset if there are more than ``limit``."""
    perms = list(itertools.permutations(range(p)))
    signs = list(itertools.product((1.0, -1.0), repeat=p))
    total = len(perms) * len(signs)
    if total <= limit:
        pairs = [(pm, sg) for pm in perms for sg in signs]
    else:
        rng = np.random.default_rng(seed)
        picks = rng.choice(total, size=limit, replace=False)
        pairs = [(perms[k // len(signs)], signs[k % len(signs)]) for k in sorted(picks)]
        identity = (tuple(range(p)), (1.0,) * p)
        if identity not in pairs:
            pairs[0] = identity
    mats = []
    for pm, sg in pairs:
        P = np.zeros((p, p))
        P[np.arange(p), pm] = sg
        mats.append(P)
    return mats


def sae(Zhat, mu: float = 50.0, opts: EmbedOptions | None = None, *, multistart: bool = True,
        record=None):
    """Rotate an embedding to minimize the out-of-simplex penalty.

    Searches over O(p) with :func:`rgd_orthogonal`, started from every
    signed permutation (capped at 48) and from ``opts.init`` if given;
    returns ``(Zhat @ W, AlignmentResult)`` for the best start.  With
    ``multistart=False`` only the warm start (or the identity) is used.
    """
    Zhat = np.asarray(Zhat, dtype=float)
    if not np.all(np.isfinite(Zhat)):
        raise ValueError("Zhat must be finite")
    p = Zhat.shape[1]
    opts = opts or EmbedOptions(p=p)
    if opts.p != p:
        opts = replace(opts, p=p)

    starts = []
    if opts.init is not None:
        starts.append(np.asarray(opts.init, dtype=float))
    if multistart or not starts:
        starts.extend(signed_permutations(p, seed=opts.seed))

    def objective(W):
        return penalty(Zhat @ W, mu)

    def grad(W):
        return Zhat.T @ penalty_gradient(Zhat @ W, mu)

    best = None
    for W0 in starts:
        res = rgd_orthogonal(grad, objective, W0, opts, record=record)
        if best is None or res.objective < best.objective:
            best = res
    return Zhat @ best.W, best


def procrustes_align(Zhat, Zref):
    """Orthogonal ``W`` minimizing ``||Zref - Zhat W||_F``.

    Returns ``(W, Zhat @ W, degenerate)`` where ``degenerate`` flags a
    rank-deficient cross-product (the solution is then not unique).
    """
    Zhat = np.asarray(Zhat, dtype=float)
    Zref = np.asarray(Zref, dtype=float)
    if Zhat.shape != Zref.shape:
        raise ValueError(f"shape mismatch: {Zhat.shape} vs {Zref.shape}")
    U, s, Vt = np.linalg.svd(Zhat.T @ Zref)
    degenerate = bool(s[-1] <= s[0] * 1e-12) if s.size else True
    if degenerate:
        logger.warning("Procrustes cross-product is rank deficient; alignment not unique")
    W = U @ Vt
    return W, Zhat @ W, degenerate


def project_to_Dp(Z, delta: float = 1e-4) -> np.ndarray:
    """Project each row onto ``{z : z_j >= delta, sum(z) <= 1 - delta}``.

    Shifts by ``delta`` and projects onto the capped nonnegative orthant
    ``{w >= 0, sum(w) <= 1 - (p + 1) delta}``: clip at zero, and if the
    cap is still violated project onto the scaled simplex by sorting.
    """
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    p = Z.shape[1]
    cap = 1.0 - (p + 1) * delta
    if delta <= 0 or cap <= 0:
        raise ValueError(f"infeasible delta={delta} for p={p}: need 0 < (p + 1) delta < 1")
    W = Z - delta
    out = np.clip(W, 0.0, None)
    over = out.sum(axis=1) > cap
    if over.any():
        out[over] = _simplex_projection(W[over], cap)
    out += delta
    return out[0] if single else out


def _simplex_projection(V, s):
    """Rows of ``V`` projected onto ``{w >= 0, sum(w) = s}`` (sort-based)."""
    m = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - s
    ind = np.arange(1, m + 1)
    cond = U - css / ind > 0
    rho = m - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), rho] / (rho + 1)
    return np.maximum(V - theta[:, None], 0.0)


def two_to_inf(M) -> float:
    """Largest row norm."""
    return float(np.max(np.linalg.norm(np.atleast_2d(M), axis=1)))
