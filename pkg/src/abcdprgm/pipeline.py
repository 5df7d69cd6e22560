"""Two-step estimation of beta and the Monte Carlo harness.

Three estimators differ only in where the latent positions come from:

``OL``  the true positions (oracle latent);
``OA``  ASE of each graph, Procrustes-aligned to the true positions;
``NO``  no oracle: GAEP or SAE, with the period-1 embedding warm-started at
        the period-0 result so both share one permutation of coordinates.

Downstream of the positions every estimator runs the same code:
projection into the simplex interior, attractors from the period-0 graph,
design matrix, and the Dirichlet GLM fit.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .dirichlet_glm import FitOptions, FitReport, GlmData, fit, theoretical_sd
from .embedding import (
    EmbedOptions,
    ase,
    gaep,
    procrustes_align,
    project_to_Dp,
    sae,
)
from .model import (
    GroupAssignment,
    LatentState,
    StarLatentState,
    build_design_matrix,
    compute_attractors,
    lift_to_star,
)
from .simulator import SimConfig, replicate_rng, simulate_trajectory

logger = logging.getLogger(__name__)

COMPONENTS = ("beta1", "beta2", "beta3", "beta4")
MAX_FAILURE_RATE = 0.2


class EstimatorKind(str, Enum):
    OL = "ol"
    OA = "oa"
    NO = "no"


@dataclass(frozen=True)
class Estimator:
    kind: EstimatorKind
    method: str | None = None

    def __post_init__(self):
        kind = EstimatorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is EstimatorKind.NO:
            method = self.method or "sae"
            if method not in ("gaep", "sae"):
                raise ValueError(f"unknown embedding method {method!r}")
            object.__setattr__(self, "method", method)
        elif self.method is not None:
            raise ValueError(f"{kind.name} does not take an embedding method")

    @classmethod
    def parse(cls, text: str) -> "Estimator":
        """``"ol"``, ``"oa"``, ``"no"``, ``"no:gaep"`` or ``"no:sae"``."""
        kind, _, method = text.strip().lower().partition(":")
        return cls(EstimatorKind(kind), method or None)

    @property
    def label(self) -> str:
        if self.kind is EstimatorKind.NO:
            return f"NO-{self.method}"
        return self.kind.name


OL = Estimator(EstimatorKind.OL)
OA = Estimator(EstimatorKind.OA)


@dataclass
class EstimationInputs:
    """Observed graphs plus whatever oracle information an estimator needs.

    ``Z0``/``Z1`` are the p-dimensional true positions (arrays, or
    ``LatentState``/``StarLatentState``); ``p`` defaults to their width.
    """

    Y0: np.ndarray
    Y1: np.ndarray | None
    groups: object
    Z0: object = None
    Z1: object = None
    p: int | None = None


def _positions(Z):
    if Z is None:
        return None
    if isinstance(Z, (LatentState, StarLatentState)):
        return Z.Z
    return np.asarray(Z, dtype=float)


def _adjacency(Y):
    return Y.Y if hasattr(Y, "Y") else np.asarray(Y, dtype=float)


def _groups(groups) -> GroupAssignment:
    if isinstance(groups, GroupAssignment):
        return groups
    labels = np.asarray(groups)
    if np.unique(labels).size < 2:
        raise ValueError("a single group leaves the between-group coefficient unidentifiable")
    return GroupAssignment(labels)


def fit_from_latents(Z0, Y0, Z1, groups, *, delta: float = 1e-4, project_design: bool = True,
                     fit_opts: FitOptions | None = None) -> FitReport:
    """Build the GLM from period-0/period-1 positions and fit it.

    The response is always projected into the shrunken simplex so its logs
    are finite; the design positions are projected when ``project_design``.
    """
    Z0 = _positions(Z0)
    Z1 = project_to_Dp(_positions(Z1), delta)
    if project_design:
        Z0 = project_to_Dp(Z0, delta)
    Aw, Ab = compute_attractors(Z0, _adjacency(Y0), _groups(groups))
    data = GlmData(build_design_matrix(Z0, Aw, Ab), lift_to_star(Z1))
    return fit(data, fit_opts)


def embed_pair(Y0, Y1, p: int, method: str, opts: EmbedOptions | None = None):
    """No-oracle embeddings of two consecutive graphs in a common frame."""
    opts = replace(opts or EmbedOptions(p=p), p=p, init=None)
    A0, A1 = _adjacency(Y0), _adjacency(Y1)
    if method == "gaep":
        Z0 = gaep(A0, opts)
        Z1 = gaep(A1, replace(opts, init=Z0))
    elif method == "sae":
        Z0, _ = sae(ase(A0, p), opts.mu, opts)
        X1 = ase(A1, p)
        W1, _, _ = procrustes_align(X1, Z0)
        Z1, _ = sae(X1, opts.mu, replace(opts, init=W1), multistart=False)
    else:
        raise ValueError(f"unknown embedding method {method!r}")
    return Z0, Z1


def estimate(estimator, inputs: EstimationInputs, *, delta: float = 1e-4,
             embed_opts: EmbedOptions | None = None, fit_opts: FitOptions | None = None,
             embedder=None) -> FitReport:
    """Estimate beta from two consecutive periods.

    ``embedder(Y0, Y1, p) -> (Z0_hat, Z1_hat)`` replaces the NO embedding
    step when given.
    """
    if isinstance(estimator, str):
        estimator = Estimator.parse(estimator)
    elif isinstance(estimator, EstimatorKind):
        estimator = Estimator(estimator)
    groups = _groups(inputs.groups)
    Z0, Z1 = _positions(inputs.Z0), _positions(inputs.Z1)
    p = inputs.p or (Z0.shape[1] if Z0 is not None else None)
    kind = estimator.kind

    if kind is EstimatorKind.OL:
        if Z0 is None or Z1 is None:
            raise ValueError("OL needs the true latent positions Z0 and Z1")
        return fit_from_latents(Z0, inputs.Y0, Z1, groups, delta=delta,
                                project_design=False, fit_opts=fit_opts)

    if inputs.Y1 is None:
        raise ValueError(f"{estimator.label} needs both graphs")
    if p is None:
        raise ValueError(f"{estimator.label} needs the embedding dimension p")

    if kind is EstimatorKind.OA:
        if Z0 is None or Z1 is None:
            raise ValueError("OA needs the true latent positions Z0 and Z1")
        _, E0, _ = procrustes_align(ase(inputs.Y0, p), Z0)
        _, E1, _ = procrustes_align(ase(inputs.Y1, p), Z1)
    elif embedder is not None:
        E0, E1 = embedder(inputs.Y0, inputs.Y1, p)
    else:
        E0, E1 = embed_pair(inputs.Y0, inputs.Y1, p, estimator.method, embed_opts)
    return fit_from_latents(E0, inputs.Y0, E1, groups, delta=delta,
                            project_design=True, fit_opts=fit_opts)


@dataclass(frozen=True)
class McConfig:
    n_grid: tuple = (1500, 3000)
    replicates: int = 10
    template: SimConfig = field(default_factory=lambda: SimConfig(n=1500))
    estimators: tuple = (OL,)
    seed: int = 0
    delta: float = 1e-4
    embed_opts: EmbedOptions | None = None
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        ests = tuple(Estimator.parse(e) if isinstance(e, str) else e for e in self.estimators)
        object.__setattr__(self, "estimators", ests)
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))


@dataclass
class McResult:
    records: list
    table: list
    failures: dict

    def to_csv(self, path=None) -> str:
        text = table_to_csv(self.table, ("n", "estimator", "component", "mean_error", "sd", "sd_ratio"))
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def errors(self, n: int, label: str) -> np.ndarray:
        """(replicates, 4) array of ``beta_hat - beta`` for successful fits."""
        rows = [r["error"] for r in self.records if r["n"] == n and r["estimator"] == label and r["ok"]]
        return np.asarray(rows, dtype=float).reshape(-1, 4)

    def sds(self, n: int, label: str) -> np.ndarray:
        rows = [r["sd"] for r in self.records if r["n"] == n and r["estimator"] == label and r["ok"]]
        return np.asarray(rows, dtype=float).reshape(-1, 4)


def _format(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def table_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_format(row[c]) for c in columns])
    return buf.getvalue()


def _run_replicate(cfg: McConfig, n: int, r: int) -> list:
    sim = replace(cfg.template, n=n, T=1)
    traj = simulate_trajectory(sim, replicate_rng(cfg.seed, n, r))
    beta = np.asarray(sim.beta)
    inputs = EstimationInputs(
        Y0=traj.graphs[0].Y, Y1=traj.graphs[1].Y, groups=traj.groups,
        Z0=traj.states[0].Z, Z1=traj.states[1].Z, p=sim.p,
    )
    out = []
    for est in cfg.estimators:
        rec = {"n": n, "replicate": r, "estimator": est.label, "ok": False}
        try:
            rep = estimate(est, inputs, delta=cfg.delta, embed_opts=cfg.embed_opts)
            sd = theoretical_sd(rep)
            if not rep.converged:
                raise RuntimeError("fit did not converge")
            rec.update(ok=True, beta_hat=rep.beta_hat.tolist(),
                       error=(rep.beta_hat - beta).tolist(), sd=sd.tolist())
        except Exception as exc:  # tallied, not fatal
            logger.warning("replicate n=%d r=%d %s failed: %s", n, r, est.label, exc)
            rec["message"] = f"{type(exc).__name__}: {exc}"
        out.append(rec)
    return out


def _task(args):
    return _run_replicate(*args)


def summarize(records, n_grid, estimators) -> list:
    table = []
    for n in n_grid:
        for est in estimators:
            ok = [r for r in records if r["n"] == n and r["estimator"] == est.label and r["ok"]]
            if not ok:
                continue
            E = np.asarray([r["error"] for r in ok])
            S = np.asarray([r["sd"] for r in ok])
            sd = E.std(axis=0, ddof=1) if len(ok) > 1 else np.full(4, np.nan)
            for j, comp in enumerate(COMPONENTS):
                table.append({
                    "n": n, "estimator": est.label, "component": comp,
                    "mean_error": float(E[:, j].mean()), "sd": float(sd[j]),
                    "sd_ratio": float(sd[j] / S[:, j].mean()),
                })
    return table


def monte_carlo(cfg: McConfig) -> McResult:
    """Simulate two-period data for every (n, replicate) and run each estimator.

    Replicate ``r`` at size ``n`` uses the stream ``(seed, n, r)``, and all
    estimators see the same simulated data.  Results are assembled in task
    order, so output is identical for any number of workers.
    """
    tasks = [(cfg, n, r) for n in cfg.n_grid for r in range(cfg.replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_task, tasks))
    else:
        chunks = [_task(t) for t in tasks]
    records = [rec for chunk in chunks for rec in chunk]

    failures = {}
    for n in cfg.n_grid:
        for est in cfg.estimators:
            bad = sum(1 for r in records if r["n"] == n and r["estimator"] == est.label and not r["ok"])
            failures[(n, est.label)] = bad
            if bad > MAX_FAILURE_RATE * cfg.replicates:
                raise RuntimeError(
                    f"{bad}/{cfg.replicates} replicates failed for n={n}, {est.label}"
                )
    return McResult(records=records, table=summarize(records, cfg.n_grid, cfg.estimators),
                    failures=failures)


@dataclass
class SweepResult:
    rows: list
    failures: dict

    def to_csv(self, path=None) -> str:
        text = table_to_csv(self.rows, ("dim", "component", "estimate", "sd", "lower", "upper"))
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def estimates(self, component: str = "beta3") -> dict:
        return {r["dim"]: r["estimate"] for r in self.rows if r["component"] == component}


def dimension_sweep(graphs, dims, method: str = "gaep", *, delta: float = 1e-4,
                    embed_opts: EmbedOptions | None = None) -> SweepResult:
    """No-oracle estimate of beta (with +/- 2 SD bands) at each embedding dimension.

    ``graphs`` is anything with ``Y0``, ``Y1`` and ``labels`` attributes,
    e.g. :class:`abcdprgm.realdata.PeriodGraphs`.
    """
    est = Estimator(EstimatorKind.NO, method)
    rows, failures = [], {}
    for d in dims:
        inputs = EstimationInputs(Y0=graphs.Y0, Y1=graphs.Y1, groups=graphs.labels, p=int(d))
        try:
            rep = estimate(est, inputs, delta=delta, embed_opts=embed_opts)
            sd = theoretical_sd(rep)
        except Exception as exc:
            logger.warning("dimension %d failed: %s", d, exc)
            failures[int(d)] = f"{type(exc).__name__}: {exc}"
            continue
        for j, comp in enumerate(COMPONENTS):
            b, s = float(rep.beta_hat[j]), float(sd[j])
            rows.append({"dim": int(d), "component": comp, "estimate": b, "sd": s,
                         "lower": b - 2 * s, "upper": b + 2 * s})
    return SweepResult(rows=rows, failures=failures)
