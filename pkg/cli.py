#!/usr/bin/env python3
"""
Command-line entry point for simulation, feature building, estimation, comparison and pricing.
"""
import argparse
import logging
import sys
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from config import Settings, configure_logging, load_settings
from demandbench.services import (
    DemandBenchError,
    InfeasibleProblemError,
    build_feature_table,
    descriptive_stats,
    estimate_all,
    optimize,
    product_distances,
    product_elasticities,
    run_comparison,
    save_model,
    simulate_panel,
    train,
    write_report,
)
from demandbench.services.harness import write_manifest
from demandbench.services.storage import RunStorage, read_catalog_view, read_csv, read_panel, read_problem


logger = logging.getLogger("demandbench.cli")


def _storage(args: argparse.Namespace, settings: Settings) -> RunStorage:
    return RunStorage(args.out or settings.experiment_out_dir)


def _manifest(storage: RunStorage, settings: Settings, args: argparse.Namespace) -> None:
    options = {k: str(v) if isinstance(v, Path) else v for k, v in vars(args).items() if k != "handler"}
    write_manifest(storage.root, {"settings": settings.model_dump(mode="json"), "args": options}, args.command)


def cmd_simulate(args: argparse.Namespace, settings: Settings) -> int:
    overrides = {}
    for name in ("epsilon", "n_products", "n_days", "n_consumers"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    if args.seed is not None:
        overrides["seed"] = args.seed
    catalog, panel = simulate_panel(settings.market_config(**overrides))

    storage = _storage(args, settings)
    storage.write_panel(panel)
    storage.write_catalog(catalog)
    storage.write_frame(_stats_frame(panel), "stats.csv")
    _manifest(storage, settings, args)
    print(f"panel={storage.path('panel.csv')} rows={len(panel)}")
    return 0


def cmd_featurize(args: argparse.Namespace, settings: Settings) -> int:
    overrides = {}
    for name in ("window", "ewma_lambda", "deviation_threshold", "origin_weekday"):
        if getattr(args, name) is not None:
            overrides[name] = getattr(args, name)
    if args.filter:
        overrides["apply_filter"] = True
    panel = read_panel(args.panel)
    view = read_catalog_view(args.catalog) if args.catalog else None
    table = build_feature_table(panel, view, settings.feature_config(**overrides))

    storage = _storage(args, settings)
    path = storage.write_frame(table, "features.csv")
    _manifest(storage, settings, args)
    print(f"features={path} rows={len(table)} columns={table.shape[1]}")
    return 0


def cmd_fit_ml(args: argparse.Namespace, settings: Settings) -> int:
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.seed is not None:
        overrides["seed"] = args.seed
    panel = read_panel(args.panel)
    features = read_csv(args.features, ["product_id", "day"])
    model = train(panel, features, settings.train_config(**overrides))

    storage = _storage(args, settings)
    save_model(model, storage.path(args.model_name))
    storage.write_loss_history(model.history.to_frame())
    storage.write_frame(product_elasticities(model, features, panel), "ml_elasticities.csv")
    _manifest(storage, settings, args)
    print(f"model={storage.path(args.model_name)} final_train_loss={model.history.epoch_train_loss[-1]:.6g}")
    return 0


def cmd_fit_ols(args: argparse.Namespace, settings: Settings) -> int:
    config = settings.econometric_config(
        **{k: v for k, v in (("degree", args.degree), ("k", args.k)) if v is not None}
    )
    panel = read_panel(args.panel)
    view = read_catalog_view(args.catalog)
    distances = product_distances(view, config.k)
    report = estimate_all(panel, distances, config.degree, config.log1p_zero_sales)

    storage = _storage(args, settings)
    path = storage.write_frame(report, "ols_estimates.csv")
    _manifest(storage, settings, args)
    ok = int((report["status"] == "ok").sum())
    print(f"estimates={path} ok={ok} failed={len(report) - ok}")
    return 0


def cmd_compare(args: argparse.Namespace, settings: Settings) -> int:
    overrides = {}
    if args.epsilons:
        overrides["epsilons"] = args.epsilons
    if args.seeds:
        overrides["seeds"] = args.seeds
    elif args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.out:
        overrides["out_dir"] = Path(args.out)
    spec = settings.experiment_spec(**overrides)

    report = run_comparison(spec)
    paths = write_report(report, spec)
    print(f"report={spec.out_dir} files={len(paths)}")
    return 0


def cmd_optimize(args: argparse.Namespace, settings: Settings) -> int:
    problem = read_problem(args.problem, margin_target=args.margin_target)
    n_starts = args.n_starts or settings.optimizer_n_starts
    solution = optimize(
        problem,
        n_starts=n_starts,
        seed=args.seed or 0,
        config=settings.optimizer_config(n_starts=n_starts),
    )

    storage = _storage(args, settings)
    path = storage.write_solution(solution, problem)
    _manifest(storage, settings, args)
    if not solution.feasible:
        raise InfeasibleProblemError("no feasible price vector found", solution.binding_constraint)
    print(f"solution={path} revenue={solution.revenue:.6g} winning_start={solution.winning_start}")
    return 0


def _stats_frame(panel: pd.DataFrame) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in descriptive_stats(panel)])


def cmd_stats(args: argparse.Namespace, settings: Settings) -> int:
    panel = read_panel(args.panel)
    storage = _storage(args, settings)
    path = storage.write_frame(_stats_frame(panel), "stats.csv")
    _manifest(storage, settings, args)
    print(f"stats={path}")
    return 0


def cmd_serve(args: argparse.Namespace, settings: Settings) -> int:
    import uvicorn

    uvicorn.run("main:app", host=args.host, port=args.port, log_level=settings.log_level.lower())
    return 0


def _add_common(parser: argparse.ArgumentParser, default) -> None:
    """Options accepted both before and after the subcommand name."""
    parser.add_argument("--config", type=Path, default=default, help="Flat key=value settings file (DEMANDBENCH_ prefixed keys)")
    parser.add_argument("--seed", type=int, default=default, help="Seed override for the command")
    parser.add_argument("--out", type=Path, default=default, help="Output directory (default: experiment_out_dir)")
    parser.add_argument("--log-level", default=default, help="Logging level (default: from settings)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demandbench",
        description="Simulate logit markets, estimate price elasticities and optimize prices",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Simulate a panel with frequent price changes
  demandbench simulate --epsilon 0.1 --seed 3 --out runs/sim

  # Build features and fit both estimators
  demandbench featurize --panel runs/sim/panel.csv --catalog runs/sim/catalog.csv --out runs/sim
  demandbench fit-ml --panel runs/sim/panel.csv --features runs/sim/features.csv --out runs/sim
  demandbench fit-ols --panel runs/sim/panel.csv --catalog runs/sim/catalog.csv --out runs/sim

  # Full comparison over the configured epsilon grid and seeds
  demandbench --config bench.env compare --out runs/compare

  # Revenue-maximizing prices with a 30% overall margin floor
  demandbench optimize --problem problem.csv --margin-target 0.3 --out runs/pricing
        """
    )
    _add_common(parser, None)
    common = argparse.ArgumentParser(add_help=False)
    # subcommand copies must not overwrite values given before the subcommand
    _add_common(common, argparse.SUPPRESS)
    subparsers = parser.add_subparsers(dest="command", required=True)

    simulate = subparsers.add_parser("simulate", parents=[common], help="Simulate a sales panel")
    simulate.add_argument("--epsilon", type=float, help="Daily price-change probability")
    simulate.add_argument("--n-products", type=int)
    simulate.add_argument("--n-days", type=int)
    simulate.add_argument("--n-consumers", type=int)
    simulate.set_defaults(handler=cmd_simulate)

    featurize = subparsers.add_parser("featurize", parents=[common], help="Build the feature table of a panel")
    featurize.add_argument("--panel", type=Path, required=True)
    featurize.add_argument("--catalog", type=Path, help="Catalog CSV with product_id, f* and optional path")
    featurize.add_argument("--window", type=int)
    featurize.add_argument("--ewma-lambda", type=float)
    featurize.add_argument("--deviation-threshold", type=float)
    featurize.add_argument("--origin-weekday", type=int)
    featurize.add_argument("--filter", action="store_true", help="Keep only rows passing the price-deviation filter")
    featurize.set_defaults(handler=cmd_featurize)

    fit_ml = subparsers.add_parser("fit-ml", parents=[common], help="Train the structural network")
    fit_ml.add_argument("--panel", type=Path, required=True)
    fit_ml.add_argument("--features", type=Path, required=True)
    fit_ml.add_argument("--epochs", type=int)
    fit_ml.add_argument("--batch-size", type=int)
    fit_ml.add_argument("--model-name", default="model.json")
    fit_ml.set_defaults(handler=cmd_fit_ml)

    fit_ols = subparsers.add_parser("fit-ols", parents=[common], help="Fit the spatial-competition regression")
    fit_ols.add_argument("--panel", type=Path, required=True)
    fit_ols.add_argument("--catalog", type=Path, required=True)
    fit_ols.add_argument("--degree", type=int)
    fit_ols.add_argument("--k", type=int)
    fit_ols.set_defaults(handler=cmd_fit_ols)

    compare = subparsers.add_parser("compare", parents=[common], help="Compare both estimators over an epsilon grid")
    compare.add_argument("--epsilons", type=float, nargs="+")
    compare.add_argument("--seeds", type=int, nargs="+")
    compare.set_defaults(handler=cmd_compare)

    optimize_parser = subparsers.add_parser("optimize", parents=[common], help="Optimize prices for a pricing problem")
    optimize_parser.add_argument("--problem", type=Path, required=True)
    optimize_parser.add_argument("--margin-target", type=float, help="Overall margin floor (omit to disable)")
    optimize_parser.add_argument("--n-starts", type=int)
    optimize_parser.set_defaults(handler=cmd_optimize)

    stats = subparsers.add_parser("stats", parents=[common], help="Descriptive statistics of a panel")
    stats.add_argument("--panel", type=Path, required=True)
    stats.set_defaults(handler=cmd_stats)

    serve = subparsers.add_parser("serve", parents=[common], help="Run the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the command line."""
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.config)
        configure_logging(args.log_level or settings.log_level)
        return args.handler(args, settings)
    except DemandBenchError as e:
        print(f"error={type(e).__name__} code={e.code} message={e.message}", file=sys.stderr)
        return 1
    except ValidationError as e:
        message = "; ".join(err["msg"] for err in e.errors())
        print(f"error=ConfigurationError code=configuration_error message={message}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error=InputError code=input_error message={e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception("unhandled error in %s", args.command)
        print(f"error={type(e).__name__} code=internal_error message={e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
