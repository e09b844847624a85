"""
Pricing routes.
"""
from fastapi import APIRouter, Query

from config import settings
from demandbench.models import ErrorResponse, PricingProblem, PricingSolution
from demandbench.services import InfeasibleProblemError, optimize


router = APIRouter(prefix="/pricing", tags=["Pricing"])


@router.post(
    "/optimize",
    response_model=PricingSolution,
    responses={
        400: {"model": ErrorResponse, "description": "Invalid pricing problem"},
        422: {"model": ErrorResponse, "description": "No feasible price vector"}
    }
)
def optimize_prices(
    problem: PricingProblem,
    n_starts: int = Query(settings.optimizer_n_starts, ge=1, description="Random starts"),
    seed: int = Query(0, ge=0, description="Seed of the start generator"),
):
    """Maximize revenue under the margin constraints."""
    solution = optimize(problem, n_starts=n_starts, seed=seed, config=settings.optimizer_config(n_starts=n_starts))
    if not solution.feasible:
        raise InfeasibleProblemError("no feasible price vector found", solution.binding_constraint)
    return solution
