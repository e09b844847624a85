"""
CSV and JSON persistence for panels, catalogs, feature tables, pricing problems and reports.
"""
import io
import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from demandbench.models import PricingProblem, PricingSolution, ProductPricing
from demandbench.services.errors import InputError
from demandbench.services.market_sim import PANEL_COLUMNS, ProductCatalog, validate_panel


logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
PROBLEM_COLUMNS = ["product_id", "alpha", "beta", "cost", "margin_lb", "margin_ub"]
LOSS_COLUMNS = ["step", "epoch", "train_loss", "val_loss"]


def read_csv(source: str | Path | bytes, required: list[str] | None = None) -> pd.DataFrame:
    """
    Read a CSV from a path or raw bytes and check its header.

    Raises:
        InputError: If the file cannot be parsed or required columns are missing
    """
    try:
        frame = pd.read_csv(io.BytesIO(source) if isinstance(source, bytes) else source, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise InputError(f"cannot parse CSV: {e}") from e
    missing = [c for c in (required or []) if c not in frame.columns]
    if missing:
        raise InputError(f"CSV is missing columns {missing}")
    return frame


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    """Write with full float precision and a stable line terminator."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_json(payload: dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


class RunStorage:
    """Files of one run directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def write_panel(self, panel: pd.DataFrame, name: str = "panel.csv") -> Path:
        return write_csv(panel[PANEL_COLUMNS], self.path(name))

    def write_catalog(self, catalog: ProductCatalog, name: str = "catalog.csv") -> tuple[Path, Path]:
        """
        catalog.csv carries ids, true price coefficients and features; ground_truth.json
        carries what no estimator may read.
        """
        frame = catalog.estimator_view()
        frame.insert(1, "beta_true", catalog.beta)
        catalog_path = write_csv(frame, self.path(name))
        truth_path = write_json(
            {
                "beta": [float(x) for x in catalog.beta],
                "delta": [float(x) for x in catalog.delta],
                "significant_mask": catalog.significant_mask.tolist(),
                "initial_prices": [float(x) for x in catalog.initial_prices],
            },
            self.path("ground_truth.json"),
        )
        return catalog_path, truth_path

    def write_frame(self, frame: pd.DataFrame, name: str) -> Path:
        return write_csv(frame, self.path(name))

    def write_loss_history(self, history: pd.DataFrame, name: str = "loss_history.csv") -> Path:
        return write_csv(history[LOSS_COLUMNS], self.path(name))

    def write_solution(self, solution: PricingSolution, problem: PricingProblem, name: str = "solution.csv") -> Path:
        """Per-product prices and margins; the summary goes to a JSON sidecar."""
        ids = [p.product_id for p in problem.products]
        if solution.feasible:
            frame = pd.DataFrame({"product_id": ids, "price": solution.prices, "margin": solution.product_margins})
        else:
            frame = pd.DataFrame({"product_id": ids, "price": np.nan, "margin": np.nan})
        write_json(solution.model_dump(mode="json"), self.path(Path(name).with_suffix(".json").name))
        return write_csv(frame, self.path(name))


def read_panel(source: str | Path | bytes) -> pd.DataFrame:
    """Read and validate a SalesPanel CSV."""
    frame = read_csv(source, PANEL_COLUMNS)
    return validate_panel(frame)


def read_catalog_view(source: str | Path | bytes) -> pd.DataFrame:
    """Estimator view of a catalog CSV; truth columns are dropped."""
    frame = read_csv(source, ["product_id"])
    keep = ["product_id", *[c for c in frame.columns if c.startswith("f")]]
    if "path" in frame.columns:
        keep.append("path")
    return frame[keep].sort_values("product_id").reset_index(drop=True)


def read_problem(
    source: str | Path | bytes,
    margin_target: float | None = None,
    price_floor: float = 1e-6,
) -> PricingProblem:
    """Pricing problem from a CSV of product rows; the overall margin target is passed separately."""
    frame = read_csv(source, PROBLEM_COLUMNS)
    products = []
    for row, record in enumerate(frame.to_dict(orient="records")):
        cap = record.get("price_cap")
        if cap is not None and not np.isfinite(cap):
            cap = None
        try:
            products.append(ProductPricing(
                product_id=int(record["product_id"]),
                alpha=float(record["alpha"]),
                beta=float(record["beta"]),
                cost=float(record["cost"]),
                margin_lb=float(record["margin_lb"]),
                margin_ub=float(record["margin_ub"]),
                price_cap=cap,
            ))
        except ValueError as e:
            raise InputError(f"invalid pricing row: {e}", row=row) from e
    if not products:
        raise InputError("pricing problem has no products")
    return PricingProblem(products=products, margin_target=margin_target, price_floor=price_floor)
