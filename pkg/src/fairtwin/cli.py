"""Command-line entry point wiring the workflow stages into subcommands.

Every stage writes its artifact plus a provenance sidecar carrying the exact
configuration, seed, and input hashes needed to reproduce it byte for byte.
Exit codes: 0 success, 1 validation problem, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


class CliError(Exception):
    """Validation-level failure (exit 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _load_config(path_or_name):
    if path_or_name is None:
        return {}
    p = Path(path_or_name)
    if not p.exists():
        from importlib.resources import files

        candidate = files("fairtwin") / "configs" / f"{path_or_name}.toml"
        if candidate.is_file():
            return tomllib.loads(candidate.read_text())
        raise CliError(f"config {path_or_name!r} not found (no such file or bundled config)")
    return tomllib.loads(p.read_text())


def _instance_from_config(cfg):
    from .instance import generate_instance

    icfg = cfg.get("instance", {})
    return generate_instance(
        int(icfg.get("seed", 7)),
        int(icfg.get("counties", 9)),
        int(icfg.get("existing", 14)),
        int(icfg.get("temporary", 9)),
        demand_range=(icfg.get("demand_min", 100.0), icfg.get("demand_max", 1000.0)),
        capacity_factor_range=(icfg.get("capacity_factor_min", 0.5), icfg.get("capacity_factor_max", 1.5)),
        coord_side=icfg.get("coord_side", 100.0),
        cost_per_patient=icfg.get("cost_per_patient", 1.0),
        fixed_cost_range=(icfg.get("fixed_cost_min", 500.0), icfg.get("fixed_cost_max", 2000.0)),
    )


def _train_config(cfg, seed):
    from .training import TrainConfig

    tcfg = cfg.get("train", {})
    known = {f.name for f in dataclass_fields(TrainConfig)}
    kwargs = {k: v for k, v in tcfg.items() if k in known}
    if "hidden" in kwargs:
        kwargs["hidden"] = tuple(kwargs["hidden"])
    return TrainConfig(seed=seed, **kwargs)


def _out_path(args, name):
    out_dir = Path(getattr(args, "out_dir", ".") or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / name


def cmd_gen_instance(args):
    from .instance import generate_instance, save_instance
    from .provenance import write_sidecar

    inst = generate_instance(
        args.seed, args.counties, args.existing, args.temporary,
        demand_range=tuple(args.demand_range),
        capacity_factor_range=tuple(args.capacity_factor_range),
        coord_side=args.coord_side,
        cost_per_patient=args.cost_per_patient,
        fixed_cost_range=tuple(args.fixed_cost_range),
    )
    out = Path(args.out)
    save_instance(inst, out)
    write_sidecar(out, "gen-instance", vars(args) | {"func": None}, seed=args.seed)
    print(f"wrote {out} ({inst.n_counties} counties, {inst.n_facilities} facilities, dim {inst.dim})")
    return 0


def cmd_sample(args):
    from .instance import load_instance
    from .pool import generate_pool, save_pool, uniform_contexts
    from .provenance import write_sidecar

    inst = load_instance(args.instance)
    pool = generate_pool(
        inst,
        uniform_contexts(args.contexts),
        args.per_context,
        lam=args.bias_weight,
        w=args.width,
        seed=args.seed,
    )
    out = Path(args.out)
    save_pool(pool, out, inst)
    write_sidecar(out, "sample", pool.generation_config, seed=args.seed, inputs={"instance": args.instance})
    extra = f", {pool.duplicate_warnings} duplicate slots dropped" if pool.duplicate_warnings else ""
    print(f"wrote {out} ({len(pool)} entries{extra})")
    return 0


def cmd_build_dataset(args):
    from .instance import load_instance
    from .pairs import build_pairs, save_dataset
    from .pool import load_pool
    from .provenance import file_hash, write_sidecar
    from .scoring import score_solution

    inst = load_instance(args.instance)
    pool = load_pool(args.pool, inst)
    scored = [
        score_solution(e.allocation, e.context, inst, j_orig=e.j_orig, j_weight=args.j_weight)
        for e in pool.entries
    ]
    ds = build_pairs(scored, inst, args.pairs, args.flip, args.seed, pool_hash=file_hash(args.pool))
    out = Path(args.out)
    save_dataset(ds, out)
    write_sidecar(out, "build-dataset", ds.provenance, seed=args.seed,
                  inputs={"instance": args.instance, "pool": args.pool})
    corrupted = sum(1 for p in ds.pairs if p.corrupted)
    print(f"wrote {out} ({len(ds)} pairs, {corrupted} corrupted)")
    return 0


def cmd_fit_latent(args):
    import numpy as np

    from .instance import flatten, load_instance
    from .latent import fit_pca, save_latent_map
    from .pool import load_pool
    from .provenance import write_sidecar

    inst = load_instance(args.instance)
    pool = load_pool(args.pool, inst)
    U = np.stack([flatten(e.allocation, inst) for e in pool.entries])
    lmap = fit_pca(U, args.dim)
    out = Path(args.out)
    save_latent_map(lmap, out)
    write_sidecar(out, "fit-latent", {"dim": args.dim}, inputs={"instance": args.instance, "pool": args.pool})
    covered = lmap.explained_variance.sum() / max(np.var(U, axis=0, ddof=1).sum(), 1e-300)
    print(f"wrote {out} (latent dim {lmap.latent_dim}, {covered:.1%} variance captured)")
    return 0


def cmd_train(args):
    from .costnet import save_costnet
    from .latent import load_latent_map
    from .pairs import load_dataset
    from .provenance import write_sidecar
    from .training import train

    cfg = _load_config(args.config)
    ds = load_dataset(args.dataset)
    lmap = load_latent_map(args.latent)
    tcfg = _train_config(cfg, args.seed)
    net, report = train(ds, lmap, tcfg)
    out = Path(args.out)
    save_costnet(net, out)
    write_sidecar(out, "train", report.config | {"best_epoch": report.best_epoch,
                  "best_val_loss": report.best_val_loss, "epochs_run": report.epochs_run},
                  seed=args.seed, inputs={"dataset": args.dataset, "latent": args.latent})
    print(f"wrote {out} (epochs {report.epochs_run}, best @{report.best_epoch}, "
          f"{report.monitor} loss {report.best_val_loss:.6f})")
    return 0


def cmd_export(args):
    from .costnet import load_costnet
    from .latent import load_latent_map
    from .pool import uniform_contexts
    from .provenance import write_sidecar
    from .quadcost import save_cost_table
    from .training import export_costs

    net = load_costnet(args.model)
    lmap = load_latent_map(args.latent)
    table = export_costs(
        net, lmap, uniform_contexts(args.grid),
        ridge=args.ridge, subspace_anchor=args.subspace_anchor,
        curvature_boost=args.curvature_boost, normalize_scale=args.normalize_scale,
    )
    out = Path(args.out)
    save_cost_table(table, out)
    write_sidecar(out, "export", table.provenance, inputs={"model": args.model, "latent": args.latent})
    print(f"wrote {out} ({len(table)} contexts)")
    return 0


def cmd_evaluate(args):
    from .engine import solve_milp
    from .evaluation import evaluate_context
    from .instance import load_instance
    from .provenance import write_sidecar
    from .quadcost import load_cost_table

    inst = load_instance(args.instance)
    table = load_cost_table(args.costs)
    if args.grid is not None and len(table) != args.grid:
        raise CliError(f"cost table has {len(table)} contexts, expected {args.grid}")
    nominal = solve_milp(inst, node_limit=args.node_limit, gap_tol=args.gap)
    results = []
    for cost in table:
        cr = evaluate_context(inst, cost, cost.context, nominal=nominal)
        results.append(cr.to_dict())
    wins = sum(1 for r in results if r["win"])
    out = Path(args.out)
    out.write_text(json.dumps({"wins": wins, "n_contexts": len(results), "contexts": results}, indent=1) + "\n")
    write_sidecar(out, "evaluate", {"grid": args.grid, "node_limit": args.node_limit, "gap": args.gap},
                  inputs={"instance": args.instance, "costs": args.costs})
    print(f"wrote {out} (wins {wins}/{len(results)})")
    return 0


def cmd_reproduce_table1(args):
    from .evaluation import emit_tradeoff_csv, format_win_table, run_experiment, save_report
    from .provenance import write_sidecar

    cfg = _load_config(args.config)
    if not cfg:
        raise CliError("reproduce-table1 requires --config (path or bundled name like 'paper')")
    inst = _instance_from_config(cfg)
    exp = cfg.get("experiment", {})
    seeds = args.seeds or exp.get("seeds", [1, 2, 3])
    report = run_experiment(
        inst,
        sizes=exp.get("sizes", [448, 896, 1344]),
        flips=exp.get("flips", [0.0, 0.1, 0.2, 0.3]),
        seeds=seeds,
        train_cfg=_train_config(cfg, 0),
        eval_grid_size=int(exp.get("eval_grid", 52)),
        train_grid_size=int(cfg.get("pool", {}).get("train_grid", 26)),
        n_per_context=int(cfg.get("pool", {}).get("per_context", 20)),
        lam=cfg.get("pool", {}).get("lambda"),
        lam_scale=cfg.get("pool", {}).get("lambda_scale"),
        w=cfg.get("pool", {}).get("width"),
        latent_dim=int(cfg.get("latent", {}).get("dim", 30)),
        ridge=cfg.get("export", {}).get("ridge"),
        subspace_anchor=float(cfg.get("export", {}).get("subspace_anchor", 0.0)),
        curvature_boost=float(cfg.get("export", {}).get("curvature_boost", 1.0)),
        normalize_scale=bool(cfg.get("export", {}).get("normalize_scale", False)),
        j_weight=float(cfg.get("scoring", {}).get("j_weight", 1.0)),
        cells=exp.get("cells"),
        n_jobs=args.jobs,
    )
    out = _out_path(args, "report.json")
    save_report(report, out)
    write_sidecar(out, "reproduce-table1", report.config, seed=seeds)
    csv_out = _out_path(args, "tradeoff.csv")
    emit_tradeoff_csv(report, csv_out)
    write_sidecar(csv_out, "reproduce-table1", report.config, seed=seeds)
    failed = [c for c in report.cells if c.error]
    print(format_win_table(report))
    if failed:
        print(f"{len(failed)} cell(s) failed:", file=sys.stderr)
        for c in failed:
            print(f"  size={c.size} flip={c.flip} seed={c.seed}: {c.error}", file=sys.stderr)
    print(f"wrote {out} and {csv_out}")
    return 0


def cmd_serve(args):
    import uvicorn

    from .server import create_app

    app = create_app(Path(args.data_dir))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser():
    parser = _Parser(prog="fairtwin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-instance", help="draw a synthetic allocation instance")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--counties", type=int, default=9)
    p.add_argument("--existing", type=int, default=14)
    p.add_argument("--temporary", type=int, default=9)
    p.add_argument("--demand-range", type=float, nargs=2, default=[100.0, 1000.0])
    p.add_argument("--capacity-factor-range", type=float, nargs=2, default=[0.5, 1.5])
    p.add_argument("--coord-side", type=float, default=100.0)
    p.add_argument("--cost-per-patient", type=float, default=1.0)
    p.add_argument("--fixed-cost-range", type=float, nargs=2, default=[500.0, 2000.0])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_instance)

    p = sub.add_parser("sample", help="generate the per-context feasible solution pool")
    p.add_argument("--instance", required=True)
    p.add_argument("--contexts", type=int, default=26)
    p.add_argument("--per-context", type=int, default=20)
    p.add_argument("--bias-weight", "--lambda", dest="bias_weight", type=float, default=None)
    p.add_argument("--width", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("build-dataset", help="subsample scored pairs into a preference dataset")
    p.add_argument("--instance", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--flip", type=float, default=0.0)
    p.add_argument("--j-weight", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("fit-latent", help="fit the PCA latent map on a pool")
    p.add_argument("--instance", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--dim", type=int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_latent)

    p = sub.add_parser("train", help="fit the cost network on a preference dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--latent", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="export solver-ready quadratic costs over a context grid")
    p.add_argument("--model", required=True)
    p.add_argument("--latent", required=True)
    p.add_argument("--grid", type=int, default=52)
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--subspace-anchor", type=float, default=0.0)
    p.add_argument("--curvature-boost", type=float, default=1.0)
    p.add_argument("--normalize-scale", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("evaluate", help="reintegrate exported costs and report wins")
    p.add_argument("--instance", required=True)
    p.add_argument("--costs", required=True)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--node-limit", type=int, default=10**6)
    p.add_argument("--gap", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reproduce-table1", help="run the full sweep and print the win table")
    p.add_argument("--config", required=True, help="TOML path or bundled name (paper, paper-reduced)")
    p.add_argument("--seeds", type=int, nargs="*", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_reproduce_table1)

    p = sub.add_parser("serve", help="serve live pairwise preference queries over HTTP")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", required=True)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
