"""
Estimator comparison experiment and report emission.
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
import scipy

from demandbench import __version__
from demandbench.models import (
    ComparisonRow,
    DescriptiveStatRow,
    ExperimentSpec,
    MethodSummary,
)
from demandbench.services.econometric import estimate_all, product_distances
from demandbench.services.errors import DemandBenchError, InputError
from demandbench.services.features import build_feature_table
from demandbench.services.market_sim import simulate_panel, true_point_elasticity, validate_panel
from demandbench.services.ml_estimator import product_elasticities, train
from demandbench.services.storage import RunStorage, write_json


logger = logging.getLogger(__name__)

METHODS = ("ml", "ols")
MSE_COLUMNS = ["epsilon", "inverse_epsilon", "method", "mse", "median_mse", "negative_share"]


@dataclass
class ComparisonReport:
    """Per-estimate rows plus the loss curve of every trained cell."""
    rows: list[ComparisonRow] = field(default_factory=list)
    loss_histories: dict[tuple[float, int], pd.DataFrame] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows], columns=list(ComparisonRow.model_fields))


def _failure_rows(epsilon: float, seed: int, methods: Sequence[str], error: Exception) -> list[ComparisonRow]:
    code = getattr(error, "code", "error")
    return [
        ComparisonRow(
            epsilon=epsilon, seed=seed, method=method, product_id=-1,
            estimate=None, truth=float("nan"), squared_error=None, status=code, error=str(error),
        )
        for method in methods
    ]


def _method_rows(epsilon: float, seed: int, method: str, estimates: pd.DataFrame, truth: pd.Series) -> list[ComparisonRow]:
    rows = []
    for record in estimates.to_dict(orient="records"):
        product_id = int(record["product_id"])
        estimate = record["estimate"]
        estimate = float(estimate) if estimate is not None and np.isfinite(estimate) else None
        true_value = float(truth.loc[product_id])
        rows.append(ComparisonRow(
            epsilon=epsilon,
            seed=seed,
            method=method,
            product_id=product_id,
            estimate=estimate,
            truth=true_value,
            squared_error=None if estimate is None else (estimate - true_value) ** 2,
            status=record["status"],
            error=record.get("error"),
        ))
    return rows


def run_cell(spec: ExperimentSpec, epsilon: float, seed: int, report: ComparisonReport) -> None:
    """Simulate one (epsilon, seed) panel and score both estimators on that same panel."""
    market = spec.market.model_copy(update={"epsilon": epsilon, "seed": seed})
    try:
        catalog, panel = simulate_panel(market)
        view = catalog.estimator_view()
        features = build_feature_table(panel, view, spec.features)
    except DemandBenchError as e:
        logger.warning(f"[COMPARE] epsilon={epsilon} seed={seed} failed before estimation: {e}")
        report.rows.extend(_failure_rows(epsilon, seed, METHODS, e))
        return

    mean_prices = panel.groupby("product_id")["price"].mean().sort_index()
    truth = pd.Series(true_point_elasticity(catalog, mean_prices.to_numpy()), index=mean_prices.index)

    try:
        train_panel = panel.merge(features[["product_id", "day"]], on=["product_id", "day"])
        model = train(train_panel, features, spec.train.model_copy(update={"seed": seed}))
        ml = product_elasticities(model, features, panel).rename(columns={"elasticity": "estimate"})
        report.rows.extend(_method_rows(epsilon, seed, "ml", ml, truth))
        report.loss_histories[(epsilon, seed)] = model.history.to_frame()
    except DemandBenchError as e:
        logger.warning(f"[COMPARE] epsilon={epsilon} seed={seed} ml failed: {e}")
        report.rows.extend(_failure_rows(epsilon, seed, ["ml"], e))

    try:
        distances = product_distances(view, spec.econometric.k)
        ols = estimate_all(panel, distances, spec.econometric.degree, spec.econometric.log1p_zero_sales)
        ols = ols.rename(columns={"beta_hat": "estimate"})
        report.rows.extend(_method_rows(epsilon, seed, "ols", ols, truth))
    except DemandBenchError as e:
        logger.warning(f"[COMPARE] epsilon={epsilon} seed={seed} ols failed: {e}")
        report.rows.extend(_failure_rows(epsilon, seed, ["ols"], e))


def run_comparison(spec: ExperimentSpec) -> ComparisonReport:
    """
    Run every (epsilon, seed) cell in a fixed order.

    Args:
        spec: Experiment grid, sizes and seeds

    Returns:
        ComparisonReport with one row per (epsilon, seed, method, product); failed cells are rows too
    """
    report = ComparisonReport()
    for epsilon in spec.epsilons:
        for seed in spec.seeds:
            run_cell(spec, epsilon, seed, report)
            cell = [r for r in report.rows if r.epsilon == epsilon and r.seed == seed]
            for method in METHODS:
                errors = [r.squared_error for r in cell if r.method == method and r.squared_error is not None]
                mse = f"{np.mean(errors):.6g}" if errors else "n/a"
                logger.info(f"[COMPARE] epsilon={epsilon} seed={seed} method={method} mse={mse}")
    return report


def sign_share(estimates: Sequence[float]) -> float:
    """
    Fraction of strictly negative estimates.

    Raises:
        InputError: If there is no finite estimate
    """
    values = np.asarray(estimates, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise InputError("sign share needs at least one estimate")
    return float(np.mean(values < 0))


def summarize(report: ComparisonReport) -> list[MethodSummary]:
    """MSE, median-over-seeds MSE and negative share per (epsilon, method)."""
    frame = report.to_frame()
    scored = frame[frame["squared_error"].notna()]
    summaries = []
    for (epsilon, method), _ in frame.groupby(["epsilon", "method"], sort=True):
        ok = scored[(scored["epsilon"] == epsilon) & (scored["method"] == method)]
        if ok.empty:
            summaries.append(MethodSummary(
                epsilon=epsilon, method=method, mse=None, median_mse=None, negative_share=None, n_estimates=0,
            ))
            continue
        per_seed = ok.groupby("seed")["squared_error"].mean()
        summaries.append(MethodSummary(
            epsilon=float(epsilon),
            method=method,
            mse=float(ok["squared_error"].mean()),
            median_mse=float(per_seed.median()),
            negative_share=sign_share(ok["estimate"].to_numpy(dtype=float)),
            n_estimates=len(ok),
        ))
    return summaries


def mse_table(summaries: list[MethodSummary]) -> pd.DataFrame:
    """MSE-versus-epsilon curve data."""
    rows = [
        {
            "epsilon": s.epsilon,
            "inverse_epsilon": 1.0 / s.epsilon if s.epsilon > 0 else np.inf,
            "method": s.method,
            "mse": s.mse,
            "median_mse": s.median_mse,
            "negative_share": s.negative_share,
        }
        for s in summaries
    ]
    return pd.DataFrame(rows, columns=MSE_COLUMNS)


def density_export(estimates: dict[str, Sequence[float]], bins: int = 30) -> pd.DataFrame:
    """
    Histogram of each method's estimates over bin edges shared by all methods.

    Returns:
        Frame with method, bin_left, bin_right, mass; masses sum to 1 per method

    Raises:
        InputError: If a method has no finite estimate
    """
    cleaned = {}
    for method, values in estimates.items():
        values = np.asarray(values, dtype=float)
        values = values[np.isfinite(values)]
        if values.size == 0:
            raise InputError(f"method {method!r} has no finite estimates")
        cleaned[method] = values
    if not cleaned:
        raise InputError("density export needs at least one method")

    edges = np.histogram_bin_edges(np.concatenate(list(cleaned.values())), bins=bins)
    frames = []
    for method in sorted(cleaned):
        counts, _ = np.histogram(cleaned[method], bins=edges)
        frames.append(pd.DataFrame({
            "method": method,
            "bin_left": edges[:-1],
            "bin_right": edges[1:],
            "mass": counts / counts.sum(),
        }))
    return pd.concat(frames, ignore_index=True)


def _summary_row(name: str, values: np.ndarray) -> DescriptiveStatRow:
    return DescriptiveStatRow(
        statistic=name,
        mean=float(values.mean()),
        std=float(values.std()),
        p10=float(np.percentile(values, 10)),
        p90=float(np.percentile(values, 90)),
    )


def descriptive_stats(panel: pd.DataFrame) -> list[DescriptiveStatRow]:
    """
    Mean, std and 10th/90th percentiles across products of each product's
    mean log price, price coefficient of variation and mean log sales.

    Log sales averages over a product's positive-sales days; products that never sell are left out of that row.
    """
    panel = validate_panel(panel)
    grouped = panel.groupby("product_id")
    log_price = grouped["price"].apply(lambda s: np.log(s).mean()).to_numpy()
    price_cv = grouped["price"].apply(lambda s: s.std(ddof=0) / s.mean()).to_numpy()
    selling = panel[panel["sales"] > 0]
    rows = [_summary_row("log_price", log_price), _summary_row("price_cv", price_cv)]
    if not selling.empty:
        log_sales = selling.groupby("product_id")["sales"].apply(lambda s: np.log(s).mean()).to_numpy()
        rows.append(_summary_row("log_sales", log_sales))
    return rows


def config_digest(config: dict[str, Any]) -> str:
    """sha256 of the canonical JSON form of a config."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(out_dir: str | Path, config: dict[str, Any], command: str) -> Path:
    """Run manifest with the config hash and library versions; no timestamps, so reruns are byte-identical."""
    return write_json(
        {
            "command": command,
            "config_sha256": config_digest(config),
            "config": json.loads(json.dumps(config, default=str)),
            "versions": {
                "demandbench": __version__,
                "numpy": np.__version__,
                "pandas": pd.__version__,
                "scipy": scipy.__version__,
            },
        },
        Path(out_dir) / "manifest.json",
    )


def write_report(report: ComparisonReport, spec: ExperimentSpec, out_dir: str | Path | None = None) -> list[Path]:
    """Comparison rows, MSE curve, density bins, loss curves and the manifest."""
    storage = RunStorage(out_dir or spec.out_dir)
    frame = report.to_frame()
    paths = [
        storage.write_frame(frame, "comparison.csv"),
        storage.write_frame(mse_table(summarize(report)), "mse.csv"),
    ]
    scored = frame[frame["estimate"].notna()]
    if not scored.empty:
        estimates = {m: g["estimate"].to_numpy(dtype=float) for m, g in scored.groupby("method")}
        paths.append(storage.write_frame(density_export(estimates, spec.bins), "density.csv"))
    for (epsilon, seed), history in sorted(report.loss_histories.items()):
        paths.append(storage.write_loss_history(history, f"loss_eps{epsilon:g}_seed{seed}.csv"))
    paths.append(write_manifest(storage.root, spec.model_dump(mode="json"), "compare"))
    logger.info(f"[COMPARE] wrote {len(paths)} files to {storage.root}")
    return paths
