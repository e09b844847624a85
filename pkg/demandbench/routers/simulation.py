"""
Market simulation routes.
"""
import numpy as np
from fastapi import APIRouter

from demandbench.models import ErrorResponse, MarketConfig, SimulateResponse
from demandbench.services import descriptive_stats, simulate_panel
from demandbench.services.market_sim import price_matrix


router = APIRouter(prefix="/simulate", tags=["Simulation"])


@router.post(
    "",
    response_model=SimulateResponse,
    responses={
        400: {"model": ErrorResponse, "description": "Invalid market configuration"},
        500: {"model": ErrorResponse, "description": "Simulation failed"}
    }
)
def simulate(config: MarketConfig):
    """
    Simulate a logit market and summarize the resulting sales panel.

    The panel itself is not returned; use the `simulate` CLI command to write it to disk.
    """
    catalog, panel = simulate_panel(config)
    prices = price_matrix(panel)
    return SimulateResponse(
        n_rows=len(panel),
        n_products=catalog.n_products,
        n_days=config.n_days,
        total_sales=int(panel["sales"].sum()),
        mean_beta_true=float(catalog.beta.mean()),
        price_changes=int((np.diff(prices, axis=0) != 0).sum()),
        stats=descriptive_stats(panel),
    )
