"""
Report routes: descriptive statistics, sign shares and density bins.
"""
from fastapi import APIRouter, File, UploadFile

from demandbench.models import (
    DensityBin,
    DensityRequest,
    DensityResponse,
    DescriptiveStatsResponse,
    ErrorResponse,
    EstimatesRequest,
    SignShareResponse,
)
from demandbench.services import density_export, descriptive_stats, sign_share
from demandbench.services.storage import read_panel


router = APIRouter(prefix="/reports", tags=["Reports"])


@router.post(
    "/stats",
    response_model=DescriptiveStatsResponse,
    responses={400: {"model": ErrorResponse, "description": "Invalid panel"}}
)
async def panel_stats(panel: UploadFile = File(..., description="Sales panel CSV")):
    """Product-level descriptive statistics of a panel."""
    frame = read_panel(await panel.read())
    return DescriptiveStatsResponse(
        n_products=int(frame["product_id"].nunique()),
        rows=descriptive_stats(frame),
    )


@router.post(
    "/sign-share",
    response_model=SignShareResponse,
    responses={400: {"model": ErrorResponse, "description": "No finite estimates"}}
)
def estimates_sign_share(request: EstimatesRequest):
    """Fraction of strictly negative elasticity estimates."""
    return SignShareResponse(count=len(request.estimates), negative_share=sign_share(request.estimates))


@router.post(
    "/density",
    response_model=DensityResponse,
    responses={400: {"model": ErrorResponse, "description": "A method has no finite estimates"}}
)
def estimates_density(request: DensityRequest):
    """Histogram of each method's estimates over shared bin edges."""
    frame = density_export(request.estimates, request.bins)
    return DensityResponse(bins=[DensityBin(**record) for record in frame.to_dict(orient="records")])
