"""Command-line interface: ``abcdprgm <command> [options]``.

Every command accepts ``--seed``, ``--p``, ``--out-dir`` and ``--config``;
the JSON file given by ``--config`` overrides any flag of the same name
(dashes or underscores).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .dirichlet_glm import theoretical_sd
from .embedding import EmbedOptions, ase, gaep, sae
from .pipeline import (
    COMPONENTS,
    EstimationInputs,
    Estimator,
    EstimatorKind,
    McConfig,
    dimension_sweep,
    estimate,
    monte_carlo,
    table_to_csv,
)
from .realdata import build_groups, emit_scree, ingest_edge_list, parse_window
from .simulator import InitSpec, SimConfig, simulate_trajectory

logger = logging.getLogger("abcdprgm")


def _floats(text):
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _init_spec(kind: str, p: int, K: int) -> InitSpec:
    if kind == "mixture":
        if p != 2 or K != 3:
            raise SystemExit("--init mixture is defined for p=2, K=3; use --init uniform")
        return InitSpec()
    if kind == "uniform":
        return InitSpec.symmetric(p)
    raise SystemExit(f"unknown --init {kind!r}")


def _embed_opts(args, p) -> EmbedOptions:
    return EmbedOptions(p=p, lam=args.lam, mu=args.mu, max_iters=args.max_iters, seed=args.seed)


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(args, out: Path):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    io.write_json(io.manifest(args.command, cfg, args.seed), out / "manifest.json")


def _load_graph(args):
    """Adjacency from --edges, --trajectory/--t or --period-dir/--period."""
    if args.edges:
        return io.read_edges(args.edges, n=args.n)
    if args.trajectory:
        _, graphs, _ = io.read_trajectory(args.trajectory)
        return graphs[args.t].Y
    if args.period_dir:
        pg = io.read_period_graphs(args.period_dir)
        return pg.Y0 if args.period == 0 else pg.Y1
    raise SystemExit("one of --edges, --trajectory or --period-dir is required")


def cmd_simulate(args):
    init = _init_spec(args.init, args.p, args.K)
    cfg = SimConfig(n=args.n, p=args.p, K=args.K, beta=_floats(args.beta), T=args.T,
                    init=init, seed=args.seed)
    traj = simulate_trajectory(cfg)
    out = _out(args)
    io.write_trajectory(traj, out)
    _write_manifest(args, out)
    print(f"wrote {traj.T + 1} time steps to {out}")


def cmd_embed(args):
    Y = _load_graph(args)
    if args.method == "ase":
        Z = ase(Y, args.p)
    elif args.method == "gaep":
        Z = gaep(Y, _embed_opts(args, args.p))
    else:
        Z, res = sae(ase(Y, args.p), args.mu, _embed_opts(args, args.p))
    out = _out(args)
    io.write_matrix(Z, out / "embedding.csv")
    _write_manifest(args, out)
    print(f"wrote {out / 'embedding.csv'}")


def _fit_pair(args, est, Y0, Y1, groups, Z0=None, Z1=None, p=None):
    inputs = EstimationInputs(Y0=Y0, Y1=Y1, groups=groups, Z0=Z0, Z1=Z1, p=p)
    embed_opts = _embed_opts(args, p) if p else None
    return estimate(est, inputs, delta=args.delta, embed_opts=embed_opts)


def cmd_fit(args):
    est = Estimator.parse(args.estimator if args.estimator != "no" else f"no:{args.method}")
    out = _out(args)
    reports = []
    if args.period_dir:
        if est.kind is not EstimatorKind.NO:
            raise SystemExit("observed period graphs carry no latent positions; use --estimator no")
        pg = io.read_period_graphs(args.period_dir)
        if pg.labels is None:
            raise SystemExit(f"{args.period_dir} has no group labels")
        reports.append((0, _fit_pair(args, est, pg.Y0, pg.Y1, pg.labels, p=args.p)))
    elif args.trajectory:
        states, graphs, groups = io.read_trajectory(args.trajectory)
        pairs = [args.t] if args.t is not None else range(len(states) - 1)
        for t in pairs:
            p = args.p or states[t].p
            reports.append((t, _fit_pair(args, est, graphs[t].Y, graphs[t + 1].Y, groups,
                                         states[t].Z, states[t + 1].Z, p)))
    else:
        raise SystemExit("one of --trajectory or --period-dir is required")

    if len(reports) == 1:
        io.write_json(reports[0][1].to_dict(), out / "fit.json")
    else:
        rows = []
        for t, rep in reports:
            io.write_json(rep.to_dict(), out / f"fit_t{t:03d}.json")
            sd = theoretical_sd(rep)
            for j, comp in enumerate(COMPONENTS):
                rows.append({"t": t, "component": comp, "estimate": float(rep.beta_hat[j]),
                             "sd": float(sd[j])})
        (out / "fit_pairs.csv").write_text(table_to_csv(rows, ("t", "component", "estimate", "sd")))
    _write_manifest(args, out)
    for t, rep in reports:
        print(f"t={t}: beta_hat = {np.array2string(rep.beta_hat, precision=4)}")


def cmd_mc(args):
    p, K = args.p or 2, args.K
    template = SimConfig(n=max(K, 2), p=p, K=K, beta=_floats(args.beta),
                         init=_init_spec(args.init, p, K))
    cfg = McConfig(
        n_grid=_ints(args.n_grid), replicates=args.replicates, template=template,
        estimators=tuple(Estimator.parse(e) for e in args.estimators.split(",")),
        seed=args.seed, delta=args.delta, workers=args.workers,
        embed_opts=_embed_opts(args, p),
    )
    result = monte_carlo(cfg)
    out = _out(args)
    result.to_csv(out / "mc_results.csv")
    _write_manifest(args, out)
    failed = sum(result.failures.values())
    print(f"wrote {out / 'mc_results.csv'} ({failed} failed replicate fits)")


def cmd_ingest(args):
    pg = ingest_edge_list(args.matches, parse_window(args.window0), parse_window(args.window1),
                          min_games=args.min_games)
    split = build_groups(pg)
    pg.labels = np.where(split.mmr_group < 0, -1, 2 * split.mmr_group + split.trend_group)
    out = _out(args)
    io.write_period_graphs(pg, out / "all")
    io.write_period_graphs(split.away_graph(pg), out / "away")
    io.write_period_graphs(split.toward_graph(pg), out / "toward")
    _write_manifest(args, out)
    for flag in split.flags:
        print(f"warning: {flag}", file=sys.stderr)
    print(f"{pg.n} players kept; away graph {split.away.size}, toward graph {split.toward.size}")


def cmd_sweep(args):
    if args.period_dir:
        graphs = io.read_period_graphs(args.period_dir)
        if graphs.labels is None:
            raise SystemExit(f"{args.period_dir} has no group labels")
    elif args.trajectory:
        from .realdata import PeriodGraphs

        states, gs, groups = io.read_trajectory(args.trajectory)
        t = args.t or 0
        n = states[t].n
        graphs = PeriodGraphs(node_ids=list(range(n)), Y0=gs[t].Y, Y1=gs[t + 1].Y,
                              rating0=np.zeros(n), rating1=np.zeros(n), labels=groups.labels)
    else:
        raise SystemExit("one of --trajectory or --period-dir is required")
    result = dimension_sweep(graphs, _ints(args.dims), args.method, delta=args.delta,
                             embed_opts=_embed_opts(args, 2))
    out = _out(args)
    result.to_csv(out / "sweep.csv")
    _write_manifest(args, out)
    for d, msg in result.failures.items():
        print(f"dimension {d} failed: {msg}", file=sys.stderr)
    print(f"wrote {out / 'sweep.csv'}")


def cmd_scree(args):
    Y = _load_graph(args)
    out = _out(args)
    emit_scree(Y, min(args.k, Y.shape[0]), out / "scree.csv")
    _write_manifest(args, out)
    print(f"wrote {out / 'scree.csv'}")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=int, default=None, help="latent / embedding dimension")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--config", default=None, help="JSON file overriding flags")
    p.add_argument("--verbose", "-v", action="store_true")


def _add_graph_source(p):
    p.add_argument("--edges", help="edge list CSV with columns i,j")
    p.add_argument("--n", type=int, default=None, help="node count for --edges")
    p.add_argument("--trajectory", help="directory written by `simulate`")
    p.add_argument("--t", type=int, default=None, help="time step within --trajectory")
    p.add_argument("--period-dir", help="directory written by `ingest`")
    p.add_argument("--period", type=int, default=0, choices=(0, 1))


def _add_embed(p):
    p.add_argument("--mu", type=float, default=50.0)
    p.add_argument("--lam", type=float, default=None, help="GAEP penalty weight (default n/10)")
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--delta", type=float, default=1e-4)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abcdprgm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a trajectory")
    _add_common(s)
    s.add_argument("--n", type=int, default=300)
    s.add_argument("--K", type=int, default=3)
    s.add_argument("--T", type=int, default=1)
    s.add_argument("--beta", default="1,1,-4,5")
    s.add_argument("--init", default="mixture", choices=("mixture", "uniform"))
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("embed", help="embed one graph")
    _add_common(s)
    _add_graph_source(s)
    _add_embed(s)
    s.add_argument("--method", default="ase", choices=("ase", "gaep", "sae"))
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("fit", help="estimate beta from consecutive periods")
    _add_common(s)
    s.add_argument("--trajectory")
    s.add_argument("--t", type=int, default=None, help="fit only the pair (t, t+1)")
    s.add_argument("--period-dir")
    s.add_argument("--estimator", default="ol", choices=("ol", "oa", "no"))
    s.add_argument("--method", default="sae", choices=("gaep", "sae"))
    _add_embed(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("mc", help="Monte Carlo study")
    _add_common(s)
    s.add_argument("--n-grid", default="1500,3000")
    s.add_argument("--replicates", type=int, default=10)
    s.add_argument("--estimators", default="ol,oa,no:sae")
    s.add_argument("--beta", default="1,1,-4,5")
    s.add_argument("--K", type=int, default=3)
    s.add_argument("--init", default="mixture", choices=("mixture", "uniform"))
    s.add_argument("--workers", type=int, default=1)
    _add_embed(s)
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("ingest", help="build period graphs from a match list")
    _add_common(s)
    s.add_argument("--matches", required=True)
    s.add_argument("--window0", required=True, help="START:END (inclusive ISO dates)")
    s.add_argument("--window1", required=True)
    s.add_argument("--min-games", type=int, default=50)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("sweep", help="no-oracle estimates across embedding dimensions")
    _add_common(s)
    s.add_argument("--period-dir")
    s.add_argument("--trajectory")
    s.add_argument("--t", type=int, default=None)
    s.add_argument("--dims", default="2,3,4,5")
    s.add_argument("--method", default="gaep", choices=("gaep", "sae"))
    _add_embed(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("scree", help="largest-magnitude eigenvalues of a graph")
    _add_common(s)
    _add_graph_source(s)
    s.add_argument("--k", type=int, default=20)
    s.set_defaults(func=cmd_scree)
    return parser


def apply_config(args, parser=None):
    if not args.config:
        return args
    with open(args.config) as fh:
        overrides = json.load(fh)
    for key, value in overrides.items():
        name = key.replace("-", "_")
        if name in ("command", "func", "config"):
            continue
        if not hasattr(args, name):
            raise SystemExit(f"unknown option {key!r} in {args.config}")
        setattr(args, name, value)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = apply_config(parser.parse_args(argv), parser)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "embed" and args.p is None:
        args.p = 2
    if args.command in ("simulate",) and args.p is None:
        args.p = 2
    if args.command == "embed" and args.t is None:
        args.t = 0
    if args.command == "scree" and args.t is None:
        args.t = 0
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
