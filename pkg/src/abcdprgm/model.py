"""Core algebra of the attractor-based coevolving RDPG.

Latent positions live in the scaled simplex ``{z >= 0, sum(z) <= 1}`` of
R^p.  The Dirichlet update works on the *star-lifted* positions, which
append the complement ``1 - sum(z)`` so that each row sums to one.

The log-concentration of node ``i`` at time ``t + 1`` is linear in the
design row ``x_i = [z_i, a^w_i, a^b_i, 1]``::

    log alpha_{i,t+1} = x_i^T B

where ``B`` is a ``(3p + 1) x (p + 1)`` matrix determined by the four
coefficients ``beta``.  Vectorization in this package is row-major
(``B.ravel()``), which makes ``vec(X B) = (X kron I_{p+1}) vec(B)`` hold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9
LOG_ALPHA_CLAMP = 700.0


@dataclass(frozen=True)
class LatentState:
    """Latent positions ``Z`` (n x p), one row per node."""

    Z: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] < 1:
            raise ValueError(f"Z must be an n x p matrix with p >= 1, got {Z.shape}")
        object.__setattr__(self, "Z", Z)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    def is_valid(self, tol: float = SIMPLEX_TOL) -> np.ndarray:
        """Boolean mask of rows inside the scaled simplex."""
        return in_simplex(self.Z, tol)

    def star(self) -> "StarLatentState":
        return StarLatentState(lift_to_star(self.Z))


@dataclass(frozen=True)
class StarLatentState:
    """Star-lifted positions (n x (p + 1)) with unit row sums."""

    Zstar: np.ndarray

    def __post_init__(self):
        Zs = np.asarray(self.Zstar, dtype=float)
        if Zs.ndim != 2 or Zs.shape[1] < 2:
            raise ValueError(f"Zstar must be n x (p + 1) with p >= 1, got {Zs.shape}")
        if not np.allclose(Zs.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("rows of Zstar must sum to 1")
        if Zs.min(initial=0.0) < 0 or Zs.max(initial=0.0) > 1:
            raise ValueError("entries of Zstar must lie in [0, 1]")
        object.__setattr__(self, "Zstar", Zs)

    @property
    def n(self) -> int:
        return self.Zstar.shape[0]

    @property
    def p(self) -> int:
        return self.Zstar.shape[1] - 1

    @property
    def Z(self) -> np.ndarray:
        """The first p coordinates."""
        return self.Zstar[:, :-1]


@dataclass(frozen=True)
class Graph:
    """Symmetric, hollow, binary adjacency matrix."""

    Y: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y)
        if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
            raise ValueError(f"adjacency must be square, got {Y.shape}")
        if not np.isin(Y, (0, 1)).all():
            raise ValueError("adjacency must be binary")
        if not np.array_equal(Y, Y.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(Y) != 0):
            raise ValueError("adjacency must be hollow (zero diagonal)")
        object.__setattr__(self, "Y", Y.astype(float))

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    def degrees(self) -> np.ndarray:
        return self.Y.sum(axis=1)


@dataclass(frozen=True)
class GroupAssignment:
    """One group label per node; at least two distinct labels."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise ValueError("labels must be a 1-d array")
        if np.unique(labels).size < 2:
            raise ValueError("at least two groups are required")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def n_groups(self) -> int:
        return int(np.unique(self.labels).size)

    def same_group(self) -> np.ndarray:
        """n x n boolean matrix, True where two nodes share a label."""
        return self.labels[:, None] == self.labels[None, :]


def in_simplex(Z, tol: float = SIMPLEX_TOL) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    return (Z >= -tol).all(axis=1) & (Z.sum(axis=1) <= 1 + tol)


def lift_to_star(z) -> np.ndarray:
    """Append the complement coordinate ``1 - sum(z)``.

    Accepts a single p-vector or an n x p matrix.  Rows outside the scaled
    simplex (beyond ``SIMPLEX_TOL``) are rejected; project them first.
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = np.atleast_2d(z)
    ok = in_simplex(Z)
    if not ok.all():
        bad = np.flatnonzero(~ok)
        raise ValueError(
            f"{bad.size} row(s) outside the simplex (first: {bad[0]}); "
            "project onto the simplex interior before lifting"
        )
    Z = np.clip(Z, 0.0, None)
    last = np.clip(1.0 - Z.sum(axis=1, keepdims=True), 0.0, 1.0)
    Zs = np.hstack([Z, last])
    Zs /= Zs.sum(axis=1, keepdims=True)
    return Zs[0] if single else Zs


def compute_attractors(Z, Y, groups):
    """Within- and between-group attractors.

    Row ``i`` of ``Aw`` is the mean position of ``i``'s neighbours sharing
    its label, ``Ab`` the mean over neighbours with a different label.  A
    node with no such neighbours gets the zero vector.

    Parameters
    ----------
    Z : (n, p) array or LatentState
    Y : (n, n) array or Graph
    groups : (n,) labels or GroupAssignment

    Returns
    -------
    Aw, Ab : (n, p) arrays
    """
    Z = _as_array(Z, "Z")
    Y = _as_array(Y, "Y")
    labels = groups.labels if isinstance(groups, GroupAssignment) else np.asarray(groups)
    n = Z.shape[0]
    if Y.shape != (n, n) or labels.shape != (n,):
        raise ValueError("Z, Y and groups disagree on the number of nodes")
    # Between-group sums are the full neighbour sums minus the within-group ones.
    total = Y @ Z
    deg = Y.sum(axis=1) - np.diag(Y)
    within = np.zeros_like(total)
    deg_w = np.zeros(n)
    for label in np.unique(labels):
        idx = np.flatnonzero(labels == label)
        block = Y[np.ix_(idx, idx)].copy()
        np.fill_diagonal(block, 0.0)
        within[idx] = block @ Z[idx]
        deg_w[idx] = block.sum(axis=1)
    between = total - np.diag(Y)[:, None] * Z - within
    return _safe_mean(within, deg_w), _safe_mean(between, deg - deg_w)


def _safe_mean(S, deg):
    out = np.zeros_like(S)
    pos = deg > 0
    out[pos] = S[pos] / deg[pos, None]
    return out


def build_design_matrix(Z, Aw, Ab) -> np.ndarray:
    """``X = [Z | Aw | Ab | 1]`` with shape (n, 3p + 1)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Aw = np.atleast_2d(np.asarray(Aw, dtype=float))
    Ab = np.atleast_2d(np.asarray(Ab, dtype=float))
    if not (Z.shape == Aw.shape == Ab.shape):
        raise ValueError(f"shape mismatch: {Z.shape}, {Aw.shape}, {Ab.shape}")
    return np.hstack([Z, Aw, Ab, np.ones((Z.shape[0], 1))])


def build_B(beta, p: int) -> np.ndarray:
    """Lift ``beta`` to the (3p + 1) x (p + 1) coefficient matrix.

    Column ``j < p`` picks up coordinate ``j`` of each block; column ``p``
    (the complement coordinate) carries ``-beta_k`` on every entry of block
    ``k`` and ``beta_1 + beta_2 + beta_3 + beta_4`` as intercept.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    beta = _as_beta(beta)
    B = np.zeros((3 * p + 1, p + 1))
    eye = np.eye(p)
    for k in range(3):
        B[k * p:(k + 1) * p, :p] = beta[k] * eye
        B[k * p:(k + 1) * p, p] = -beta[k]
    B[3 * p, :p] = beta[3]
    B[3 * p, p] = beta.sum()
    return B


def build_C(p: int) -> np.ndarray:
    """Constraint matrix with ``build_B(beta, p).ravel() == build_C(p) @ beta``.

    Built column by column from the lift of each unit vector, which is exact
    because ``build_B`` is linear in ``beta``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    return np.column_stack([build_B(e, p).ravel() for e in np.eye(4)])


def project_to_beta(Bv, p: int) -> np.ndarray:
    """Least-squares projection of a vectorized B onto the span of C."""
    C = build_C(p)
    return np.linalg.solve(C.T @ C, C.T @ np.asarray(Bv, dtype=float))


def alpha_update(X, B, report: dict | None = None) -> np.ndarray:
    """Dirichlet concentrations ``exp(X B)``.

    Entries of ``X B`` are clamped to ``[-700, 700]`` before exponentiation.
    If ``report`` is given, the number of clamped entries is stored under
    ``"clamped"``.
    """
    eta = np.asarray(X, dtype=float) @ np.asarray(B, dtype=float)
    n_clamped = int(np.count_nonzero(np.abs(eta) > LOG_ALPHA_CLAMP))
    if n_clamped:
        logger.warning("clamped %d log-concentration entries to +/-%g", n_clamped, LOG_ALPHA_CLAMP)
        eta = np.clip(eta, -LOG_ALPHA_CLAMP, LOG_ALPHA_CLAMP)
    if report is not None:
        report["clamped"] = n_clamped
    return np.exp(eta)


def _as_beta(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape != (4,):
        raise ValueError(f"beta must have 4 entries, got {beta.shape[0]}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite")
    return beta


def _as_array(obj, name):
    if isinstance(obj, LatentState):
        return obj.Z
    if isinstance(obj, StarLatentState):
        return obj.Z
    if isinstance(obj, Graph):
        return obj.Y
    return np.asarray(obj, dtype=float)
