"""CSV/JSON serialization for trajectories, graphs, embeddings and run manifests."""

from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .model import Graph, GroupAssignment, StarLatentState


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_edges(Y, path) -> None:
    """Upper-triangle edge list with header ``i,j`` (0-based node indices)."""
    A = Y.Y if hasattr(Y, "Y") else np.asarray(Y)
    i, j = np.nonzero(np.triu(A, k=1))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("i", "j"))
        w.writerows(zip(i.tolist(), j.tolist()))


def read_edges(path, n: int | None = None) -> np.ndarray:
    """Adjacency matrix from an ``i,j`` edge list; ``n`` defaults to max index + 1."""
    pairs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pairs.append((int(row["i"]), int(row["j"])))
    size = n if n is not None else (max((max(p) for p in pairs), default=-1) + 1)
    Y = np.zeros((size, size), dtype=np.int8)
    for a, b in pairs:
        if a == b:
            raise ValueError(f"self-loop on node {a} in {path}")
        Y[a, b] = Y[b, a] = 1
    return Y


def write_matrix(M, path, prefix: str = "z", index_name: str = "node", extra=None) -> None:
    """One row per node: ``node[,extra...],z1..zk``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([index_name, *extra, *(f"{prefix}{k + 1}" for k in range(M.shape[1]))])
        for i, row in enumerate(M):
            w.writerow([i, *(col[i] for col in extra.values()), *(_fmt(v) for v in row)])


def read_matrix(path, prefix: str = "z"):
    """Inverse of :func:`write_matrix`; returns ``(M, columns)`` where ``columns``
    maps every non-matrix column name to its values."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = reader.fieldnames or []
        rows = list(reader)
    mcols = [c for c in names if c.startswith(prefix) and c[len(prefix):].isdigit()]
    M = np.array([[float(r[c]) for c in mcols] for r in rows]).reshape(len(rows), len(mcols))
    other = {c: [r[c] for r in rows] for c in names if c not in mcols}
    return M, other


def state_path(out_dir, t: int) -> Path:
    return Path(out_dir) / f"positions_t{t:03d}.csv"


def edges_path(out_dir, t: int) -> Path:
    return Path(out_dir) / f"edges_t{t:03d}.csv"


def write_trajectory(traj, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = traj.groups.labels.tolist()
    for t, (state, graph) in enumerate(zip(traj.states, traj.graphs)):
        write_matrix(state.Zstar, state_path(out, t), extra={"group": labels})
        write_edges(graph, edges_path(out, t))


def read_trajectory(out_dir):
    """Returns ``(states, graphs, groups)`` from a directory written by :func:`write_trajectory`."""
    out = Path(out_dir)
    states, graphs = [], []
    labels = None
    t = 0
    while state_path(out, t).exists():
        Zs, cols = read_matrix(state_path(out, t))
        states.append(StarLatentState(Zs))
        graphs.append(Graph(read_edges(edges_path(out, t), n=Zs.shape[0])))
        if labels is None:
            labels = np.array([int(g) for g in cols["group"]])
        t += 1
    if not states:
        raise FileNotFoundError(f"no trajectory files in {out}")
    return states, graphs, GroupAssignment(labels)


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def manifest(command: str, config: dict, seed) -> dict:
    import scipy

    return {
        "command": command,
        "config": config,
        "seed": seed,
        "versions": {
            "abcdprgm": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }


def write_period_graphs(graphs, out_dir) -> None:
    """``nodes.csv`` (node, player_id, group, rating0, rating1) plus one edge list per period."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = graphs.labels if graphs.labels is not None else np.full(graphs.n, -1)
    with open(out / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("node", "player_id", "group", "rating0", "rating1"))
        for i, pid in enumerate(graphs.node_ids):
            w.writerow((i, pid, int(labels[i]), _fmt(graphs.rating0[i]), _fmt(graphs.rating1[i])))
    write_edges(graphs.Y0, out / "edges_period0.csv")
    write_edges(graphs.Y1, out / "edges_period1.csv")


def read_period_graphs(out_dir):
    from .realdata import PeriodGraphs

    out = Path(out_dir)
    with open(out / "nodes.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = len(rows)
    labels = np.array([int(r["group"]) for r in rows])
    return PeriodGraphs(
        node_ids=[r["player_id"] for r in rows],
        Y0=read_edges(out / "edges_period0.csv", n=n),
        Y1=read_edges(out / "edges_period1.csv", n=n),
        rating0=np.array([float(r["rating0"]) for r in rows]),
        rating1=np.array([float(r["rating1"]) for r in rows]),
        labels=None if (labels < 0).all() else labels,
    )
