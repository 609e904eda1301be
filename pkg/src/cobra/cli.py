"""Command-line entry point.

Subcommands: ``simulate`` (adversarial grid), ``experiment`` (response-time
log comparison), ``train`` / ``predict`` (network lifecycle around a stored
model repository), ``report`` (summaries and plot data from result files).

Configuration comes from an optional flat ``key=value`` file; command-line
flags override file values. All outputs are delimited or structured text,
written deterministically so identical invocations produce identical bytes.
Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import assembly, bnn, evaluate, ingest, sim
from .backend import backend_name
from .core import ADVISEE, AgentId, EvidenceStore
from .encap import KindPolicy, build_repository, load_repository

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

_CONFIG_INT_KEYS = {
    "n_advisors_malicious",
    "n_advisors_legit",
    "n_targets",
    "n_context_features",
    "rounds",
    "seed",
    "min_records",
    "cv_folds",
    "cv_max_rows",
    "epochs",
    "batch_size",
}
_CONFIG_FLOAT_KEYS = {
    "learning_rate",
    "momentum",
    "sharpness",
    "sigma_min",
    "sigma_max",
}


class CliError(Exception):
    """Configuration or usage problem; maps to exit code 2."""


def load_config(path: str | Path) -> dict:
    """Flat key=value file; '#' starts a comment."""
    out: dict = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{line_no}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _CONFIG_INT_KEYS:
            out[key] = int(value)
        elif key in _CONFIG_FLOAT_KEYS:
            out[key] = float(value)
        elif key == "patience":
            out[key] = None if value.lower() in ("none", "off") else int(value)
        elif key == "grid":
            out[key] = value
        elif key == "encap":
            out[key] = value
        else:
            raise CliError(f"{path}:{line_no}: unknown config key {key!r}")
    return out


def _parse_grid_spec(spec: str) -> tuple[int, int]:
    try:
        a, b = spec.lower().split("x")
        na, nb = int(a), int(b)
    except ValueError:
        raise CliError(f"--grid expects AxB (e.g. 10x10), got {spec!r}")
    if na < 1 or nb < 1:
        raise CliError("grid dimensions must be positive")
    return na, nb


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("COBRA_OUT") or "cobra-out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _sim_config(args) -> sim.SimConfig:
    values = load_config(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    if args.encap:
        values["encap"] = args.encap
    if args.epochs is not None:
        values["epochs"] = args.epochs
    grid_spec = args.grid or values.pop("grid", None)
    if grid_spec:
        na, nb = _parse_grid_spec(grid_spec)
        values["grid"] = sim.default_grid(na, nb)
    known = {f.name for f in dataclass_fields(sim.SimConfig)}
    unknown = set(values) - known
    if unknown:
        raise CliError(f"config keys not understood: {sorted(unknown)}")
    try:
        return sim.SimConfig(**values)
    except ValueError as exc:
        raise CliError(str(exc))


def cmd_simulate(args) -> int:
    config = _sim_config(args)
    out = _out_dir(args)
    results = sim.run_grid(config, jobs=args.jobs)
    sim.write_grid_results(results, out / "grid_results.csv")
    sim.write_cell_seeds(results, out / "cell_seeds.csv")
    summary = sim.grid_summary(results)
    lines = [
        f"cells: {summary['cells']} (ok {summary['ok']}, skipped {summary['skipped']})",
        f"cells >=0.85: {summary['acc_ge_085']}/{summary['ok']}",
        f"cells >=0.80: {summary['acc_ge_080']}/{summary['ok']}",
    ]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    if summary["ok"] == 0:
        print("no cell produced a result", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_experiment(args) -> int:
    out = _out_dir(args)
    records, rejects = ingest.parse_records(args.data)
    if args.subsample and len(records) > args.subsample:
        records = ingest.sample_records(records, args.subsample, args.seed or 0)
        print(f"subsampled to {len(records)} records")
    if rejects:
        with (out / "rejects.csv").open("w") as fh:
            fh.write("line,reason\n")
            for r in rejects:
                fh.write(f"{r.line_no},{r.reason}\n")
    by_user = ingest.group_users(records)
    if not by_user:
        raise CliError(f"{args.data}: no usable records")
    methods = _parse_methods(args.methods)
    hp = bnn.TrainHyperparams(
        epochs=args.epochs if args.epochs is not None else 30,
        seed=args.seed or 0,
    )
    stores = {
        user: ingest.to_evidence(recs, user) for user, recs in by_user.items()
    }
    pooled: dict[str, list[evaluate.MethodResult]] = {m: [] for m in methods}
    skipped = []
    folds = args.folds
    for user in sorted(stores):
        advisee_store = stores[user]
        if len(advisee_store) < folds:
            skipped.append((user, f"{len(advisee_store)} rows < {folds} folds"))
            continue
        advisors = tuple(sorted(u for u in stores if u != user))
        inputs = evaluate.CompareInputs(
            advisee_evidence=_as_advisee(advisee_store),
            advisor_evidence={a: stores[a] for a in advisors},
            advisors=advisors,
            min_records=args.min_records,
            folds=folds,
            seed=args.seed or 0,
            hyperparams=hp,
        )
        for res in evaluate.compare(inputs, methods):
            pooled[res.method].append(res)
    rows = _pool_results(pooled)
    if not rows:
        raise CliError("every user was skipped; not enough records per user")
    evaluate.write_comparison(rows, out / "comparison.csv")
    evaluate.write_plot_data(rows, out / "comparison_plotdata.csv")
    for user, reason in skipped:
        print(f"skipped user {user}: {reason}")
    _print_table(rows)
    _write_histories(stores, methods, hp, args, out)
    return EXIT_OK


def _as_advisee(store: EvidenceStore) -> EvidenceStore:
    # ingest stores are tagged with the advisor role; the advisee's own
    # store is the same data under its own identity
    return EvidenceStore(
        AgentId(store.owner.id, ADVISEE),
        store.feature_names,
        store.target_ids,
        store.codes,
        store.contexts,
        store.outcomes,
    )


def _pool_results(pooled) -> list[evaluate.MethodResult]:
    rows = []
    for method, results in pooled.items():
        if not results:
            continue
        m = sum(r.report.m for r in results)
        acc = sum(r.report.acc * r.report.m for r in results) / m
        err = float(
            np.sqrt(sum(r.report.rmse**2 * r.report.m for r in results) / m)
        )
        tp = sum(r.report.confusion.tp for r in results)
        tn = sum(r.report.confusion.tn for r in results)
        fp = sum(r.report.confusion.fp for r in results)
        fn = sum(r.report.confusion.fn for r in results)
        rows.append(
            evaluate.MethodResult(
                method=method,
                report=evaluate.MetricsReport(
                    acc=acc,
                    rmse=err,
                    confusion=evaluate.Confusion(tp, tn, fp, fn),
                    m=m,
                    train_seconds=sum(r.report.train_seconds for r in results),
                    predict_seconds=sum(r.report.predict_seconds for r in results),
                ),
            )
        )
    rows.sort(key=lambda r: (-r.report.acc, r.method))
    return rows


def _write_histories(stores, methods, hp, args, out: Path) -> None:
    """Training history of the first trainable user per Cobra method."""
    cobra = [m for m in methods if m in evaluate.COBRA_METHODS]
    if not cobra:
        return
    for user in sorted(stores):
        store = stores[user]
        if len(store) < args.folds:
            continue
        advisors = tuple(sorted(u for u in stores if u != user))
        for method in cobra:
            kind, dense = evaluate.COBRA_METHODS[method]
            repo = build_repository(
                {a: stores[a] for a in advisors}, KindPolicy(kind, hp.seed), args.min_records
            )
            ts = assembly.init_training_data(_as_advisee(store), repo, advisors)
            hbar = assembly.training_set_entropies(ts)
            build = bnn.build_dense_topology if dense else bnn.build_topology
            net = bnn.init_network(build(hbar, ts.input_is_context()), seed=hp.seed)
            _, history = bnn.train(net, ts.features, ts.labels, hp)
            bnn.write_history(history, out / f"history_{method}.csv")
        break


def _print_table(rows) -> None:
    print("method,acc,rmse")
    for r in rows:
        print(f"{r.method},{r.report.acc:.4f},{r.report.rmse:.4f}")


def _parse_methods(spec: str | None) -> tuple[str, ...]:
    if not spec:
        return evaluate.DEFAULT_METHODS
    methods = tuple(m.strip() for m in spec.split(",") if m.strip())
    for m in methods:
        if m not in evaluate.ALL_METHODS:
            raise CliError(
                f"unknown method {m!r}; choose from {', '.join(evaluate.ALL_METHODS)}"
            )
    return methods


def cmd_train(args) -> int:
    out = _out_dir(args)
    ts = assembly.load_training_set(args.training_set)
    hbar = assembly.training_set_entropies(ts)
    build = bnn.build_dense_topology if args.dense else bnn.build_topology
    topo = build(hbar, ts.input_is_context())
    names = tuple(ts.context_names) + tuple(ts.advisor_ids)
    net = bnn.init_network(topo, seed=args.seed or 0, input_names=names)
    hp = bnn.TrainHyperparams(
        epochs=args.epochs if args.epochs is not None else 100,
        seed=args.seed or 0,
    )
    net, history = bnn.train(net, ts.features, ts.labels.astype(np.float64), hp)
    bnn.save_network(net, out / "network.json")
    bnn.write_history(history, out / "history.csv")
    print(f"trained {topo.edge_count}-edge network for {len(history)} epochs")
    return EXIT_OK


def cmd_predict(args) -> int:
    net = bnn.load_network(args.network)
    if net.input_names is None:
        raise CliError(f"{args.network}: network carries no input names")
    repo = load_repository(args.repo)
    try:
        context = [float(v) for v in args.context.split(",")]
    except ValueError:
        raise CliError(f"--context must be comma-separated numbers, got {args.context!r}")
    n_ctx = int(net.topology.is_context.sum())
    if len(context) != n_ctx:
        raise CliError(f"network expects {n_ctx} context features, got {len(context)}")
    advisors = net.input_names[n_ctx:]
    ctx = np.asarray(context)
    row = list(context) + [
        assembly.advisor_opinion(repo, a, args.target, ctx) for a in advisors
    ]
    print(f"{bnn.forward(net, np.asarray(row)):.10f}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = _out_dir(args)
    wrote = False
    if args.results:
        rows = _read_grid_results(args.results)
        ok = [r for r in rows if r["status"] == "ok"]
        lines = [
            f"cells: {len(rows)} (ok {len(ok)}, skipped {len(rows) - len(ok)})",
            f"cells >=0.85: {sum(1 for r in ok if r['acc'] >= 0.85)}/{len(ok)}",
            f"cells >=0.80: {sum(1 for r in ok if r['acc'] >= 0.80)}/{len(ok)}",
        ]
        (out / "report_summary.txt").write_text("\n".join(lines) + "\n")
        with (out / "acc_grid_plotdata.csv").open("w") as fh:
            fh.write("alpha,beta,acc\n")
            for r in ok:
                fh.write(f"{r['alpha']!r},{r['beta']!r},{r['acc']!r}\n")
        for line in lines:
            print(line)
        wrote = True
    if args.table:
        text = Path(args.table).read_text()
        (out / "methods_plotdata.csv").write_text(_table_to_plotdata(text))
        wrote = True
    if not wrote:
        raise CliError("report needs --results and/or --table")
    return EXIT_OK


def _read_grid_results(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("alpha,beta,acc"):
        raise CliError(f"{path}: not a grid results file")
    rows = []
    for line in lines[1:]:
        alpha, beta, acc, err, n_ev, n_mod, status = line.split(",")
        rows.append(
            {
                "alpha": float(alpha),
                "beta": float(beta),
                "acc": float(acc),
                "rmse": float(err),
                "n_evidence": int(n_ev),
                "n_models": int(n_mod),
                "status": status,
            }
        )
    return rows


def _table_to_plotdata(text: str) -> str:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("method,acc,rmse"):
        raise CliError("comparison table has an unexpected header")
    out = ["method,metric,value"]
    for line in lines[1:]:
        parts = line.split(",")
        out.append(f"{parts[0]},acc,{parts[1]}")
        out.append(f"{parts[0]},rmse,{parts[2]}")
    return "\n".join(out) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cobra",
        description="Context-aware trust assessment toolkit",
    )
    parser.add_argument(
        "--version", action="version", version=f"cobra 0.1.0 ({backend_name()} backend)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (default $COBRA_OUT or ./cobra-out)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("simulate", help="run the adversarial evaluation grid")
    common(p)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--grid", help="grid size AxB (default 10x10)")
    p.add_argument("--encap", choices=("dt", "gnb", "hyb"), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1, help="parallel cell workers")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="compare methods on a response-time log")
    common(p)
    p.add_argument("data", help="response-time log file")
    p.add_argument("--methods", help=f"comma list (default {','.join(evaluate.DEFAULT_METHODS)})")
    p.add_argument("--subsample", type=int, default=100_000)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--min-records", type=int, default=4, dest="min_records")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("train", help="train a network from a stored training set")
    common(p)
    p.add_argument("--training-set", required=True, dest="training_set")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--dense", action="store_true", help="fully-connected ablation")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a target in a context")
    common(p)
    p.add_argument("--network", required=True)
    p.add_argument("--repo", required=True, help="model repository directory")
    p.add_argument("--target", required=True)
    p.add_argument("--context", required=True, help="comma-separated feature values")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="summaries and plot data from result files")
    common(p)
    p.add_argument("--results", help="grid results file from 'simulate'")
    p.add_argument("--table", help="comparison table from 'experiment'")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - unexpected failure path
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry_point() -> None:
    sys.exit(main())
