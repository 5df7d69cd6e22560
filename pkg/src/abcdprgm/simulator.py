"""Trajectory generation for the attractor-based coevolving RDPG."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .model import (
    Graph,
    GroupAssignment,
    StarLatentState,
    alpha_update,
    build_B,
    build_design_matrix,
    compute_attractors,
    lift_to_star,
)

logger = logging.getLogger(__name__)

DOT_TOL = 1e-9
NUDGE = 1e-12

# Initial cloud used in the Monte Carlo experiments: three lobes near the
# vertices of the 2-simplex, one per group.
MIXTURE_PARAMS = ((1.0, 1.0, 10.0), (1.0, 10.0, 1.0), (10.0, 1.0, 1.0))


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) from an int seed or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def replicate_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent stream for replicate ``key`` of a run seeded with ``seed``.

    Streams depend only on ``(seed, key)``, so replicates reproduce no matter
    which worker or in which order they run.
    """
    return make_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class InitSpec:
    """Distribution of the initial Dirichlet parameters.

    Either a *mixture*: ``params[k]`` is the Dirichlet parameter of group
    ``k`` and nodes are assigned to groups round-robin (``weights`` must
    then be equal); or a *prior*: every node draws its parameter i.i.d.
    from ``sampler``.  With ``sampler=None`` and a single entry in
    ``params`` all nodes use that one parameter.
    """

    params: tuple = MIXTURE_PARAMS
    weights: tuple | None = None
    sampler: object = None

    def __post_init__(self):
        params = tuple(tuple(float(a) for a in row) for row in self.params)
        if not params or len({len(r) for r in params}) != 1:
            raise ValueError("params must be a non-empty list of equal-length vectors")
        if any(a <= 0 for row in params for a in row):
            raise ValueError("Dirichlet parameters must be strictly positive")
        object.__setattr__(self, "params", params)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(params),) or np.any(w <= 0):
                raise ValueError("weights must be positive, one per parameter vector")
            if not np.allclose(w, w[0]):
                raise ValueError("fixed-size group assignment requires equal weights")

    @classmethod
    def symmetric(cls, p: int, concentration: float = 1.0) -> "InitSpec":
        return cls(params=((concentration,) * (p + 1),))

    @property
    def dim(self) -> int:
        return len(self.params[0])

    @property
    def is_mixture(self) -> bool:
        return self.sampler is None and len(self.params) > 1


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int = 2
    K: int = 3
    beta: tuple = (1.0, 1.0, -4.0, 5.0)
    T: int = 1
    init: InitSpec = field(default_factory=InitSpec)
    seed: int = 0

    def __post_init__(self):
        if not (self.n >= self.K >= 2):
            raise ValueError(f"need n >= K >= 2, got n={self.n}, K={self.K}")
        if self.p < 1 or self.T < 1:
            raise ValueError("need p >= 1 and T >= 1")
        beta = tuple(float(b) for b in self.beta)
        if len(beta) != 4 or not np.all(np.isfinite(beta)):
            raise ValueError("beta must be 4 finite numbers")
        object.__setattr__(self, "beta", beta)
        if self.init.dim != self.p + 1:
            raise ValueError(f"init parameters have dimension {self.init.dim}, expected {self.p + 1}")
        if self.init.is_mixture and len(self.init.params) != self.K:
            raise ValueError("a mixture init needs one parameter vector per group")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["init"] = {"params": [list(r) for r in self.init.params],
                     "custom_sampler": self.init.sampler is not None}
        return d


@dataclass
class Trajectory:
    states: list
    graphs: list
    groups: GroupAssignment
    config: SimConfig

    @property
    def T(self) -> int:
        return len(self.states) - 1


def sample_dirichlet(alpha, rng) -> np.ndarray:
    """Dirichlet draw(s) via normalized Gamma variates.

    ``alpha`` is a (p+1)-vector or an (n, p+1) matrix of positive
    parameters, one draw per row.  Draws are nudged off the boundary so
    that every coordinate is at least about 1e-12.
    """
    alpha = np.asarray(alpha, dtype=float)
    if not np.all(alpha > 0) or not np.all(np.isfinite(alpha)):
        raise ValueError("Dirichlet parameters must be finite and strictly positive")
    single = alpha.ndim == 1
    A = np.atleast_2d(alpha)
    G = rng.standard_gamma(A)
    s = G.sum(axis=1, keepdims=True)
    dead = s[:, 0] <= 0
    if dead.any():
        # every Gamma variate underflowed; fall back to the largest parameter's vertex
        G[dead] = np.eye(A.shape[1])[np.argmax(A[dead], axis=1)]
        s[dead] = 1.0
    X = G / s
    low = (X < NUDGE).any(axis=1)
    if low.any():
        X[low] = np.maximum(X[low], NUDGE)
        X[low] /= X[low].sum(axis=1, keepdims=True)
    return X[0] if single else X


def assign_groups(n: int, K: int) -> GroupAssignment:
    """Round-robin labels ``i mod K``; group sizes differ by at most one."""
    return GroupAssignment(np.arange(n) % K)


def init_latent(cfg: SimConfig, rng) -> tuple[StarLatentState, GroupAssignment]:
    groups = assign_groups(cfg.n, cfg.K)
    spec = cfg.init
    if spec.sampler is not None:
        alpha0 = np.asarray([spec.sampler(rng) for _ in range(cfg.n)], dtype=float)
        if alpha0.shape != (cfg.n, cfg.p + 1):
            raise ValueError("init sampler must return (p + 1)-vectors")
    elif spec.is_mixture:
        alpha0 = np.asarray(spec.params)[groups.labels]
    else:
        alpha0 = np.tile(spec.params[0], (cfg.n, 1))
    return StarLatentState(sample_dirichlet(alpha0, rng)), groups


def sample_graph(Zstar, rng) -> Graph:
    """Bernoulli edges with probability ``Z_i . Z_j`` on the first p coordinates."""
    Z = Zstar.Z if isinstance(Zstar, StarLatentState) else np.asarray(Zstar, dtype=float)[:, :-1]
    n = Z.shape[0]
    P = Z @ Z.T
    lo, hi = P.min(initial=0.0), P.max(initial=0.0)
    if lo < -DOT_TOL or hi > 1 + DOT_TOL:
        raise ValueError(f"edge probabilities outside [0, 1]: range [{lo:.3g}, {hi:.3g}]")
    if lo < 0 or hi > 1:
        logger.info("clipping edge probabilities within %.1e of [0, 1]", DOT_TOL)
        P = np.clip(P, 0.0, 1.0)
    U = rng.random((n, n))
    upper = np.triu(U < P, k=1)
    return Graph((upper | upper.T).astype(np.int8))


def step(Zstar, Y, groups, beta, rng) -> StarLatentState:
    """One update: ``Z*_{t+1} ~ Dir(exp(X_t B))``.  Uses nothing but its inputs."""
    Zs = Zstar.Zstar if isinstance(Zstar, StarLatentState) else np.asarray(Zstar, dtype=float)
    p = Zs.shape[1] - 1
    Z = Zs[:, :p]
    Aw, Ab = compute_attractors(Z, Y, groups)
    X = build_design_matrix(Z, Aw, Ab)
    alpha = alpha_update(X, build_B(beta, p))
    return StarLatentState(sample_dirichlet(alpha, rng))


def step_alpha_star(Zstar, Y, groups, beta) -> np.ndarray:
    """Concentrations evaluated directly in star coordinates.

    Independent of the design-matrix route; used as a cross-check.
    """
    Zs = np.asarray(Zstar, dtype=float)
    p = Zs.shape[1] - 1
    Aw, Ab = compute_attractors(Zs[:, :p], Y, groups)
    b1, b2, b3, b4 = beta
    return np.exp(b1 * Zs + b2 * lift_to_star(Aw) + b3 * lift_to_star(Ab) + b4)


def simulate_trajectory(cfg: SimConfig, rng=None) -> Trajectory:
    rng = make_rng(cfg.seed) if rng is None else rng
    state, groups = init_latent(cfg, rng)
    states, graphs = [state], []
    for t in range(cfg.T + 1):
        graphs.append(sample_graph(state, rng))
        if t < cfg.T:
            state = step(state, graphs[-1], groups, cfg.beta, rng)
            states.append(state)
    return Trajectory(states=states, graphs=graphs, groups=groups, config=cfg)


@dataclass(frozen=True)
class Separation:
    within: float
    between: float
    silhouette: float
    within_defined: bool
    silhouette_defined: bool


def group_separation(Zstar, groups) -> Separation:
    """Mean within/between-group Euclidean distances and silhouette score."""
    Z = Zstar.Z if isinstance(Zstar, StarLatentState) else np.asarray(Zstar, dtype=float)
    labels = groups.labels if isinstance(groups, GroupAssignment) else np.asarray(groups)
    n = Z.shape[0]
    D = squareform(pdist(Z))
    same = labels[:, None] == labels[None, :]
    iu = np.triu_indices(n, k=1)
    d, s = D[iu], same[iu]
    within_defined = bool(s.any())
    within = float(d[s].mean()) if within_defined else 0.0
    between = float(d[~s].mean()) if (~s).any() else 0.0

    n_labels = np.unique(labels).size
    sil_defined = 2 <= n_labels <= n - 1
    sil = _silhouette(D, labels) if sil_defined else float("nan")
    return Separation(within, between, sil, within_defined, sil_defined)


def _silhouette(D, labels):
    uniq, inv = np.unique(labels, return_inverse=True)
    onehot = np.eye(uniq.size)[inv]
    sums = D @ onehot
    counts = onehot.sum(axis=0)
    own = counts[inv]
    a = np.where(own > 1, sums[np.arange(len(inv)), inv] / np.maximum(own - 1, 1), 0.0)
    other = sums / counts
    other[np.arange(len(inv)), inv] = np.inf
    b = other.min(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(own > 1, (b - a) / np.maximum(a, b), 0.0)
    s = np.nan_to_num(s)
    return float(s.mean())
