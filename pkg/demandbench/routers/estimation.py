"""
Estimation routes.
"""
from fastapi import APIRouter, File, Query, UploadFile

from demandbench.models import ErrorResponse, OlsEstimateResponse, OlsEstimateRow
from demandbench.services import estimate_all, product_distances, sign_share
from demandbench.services.storage import read_catalog_view, read_panel


router = APIRouter(prefix="/estimate", tags=["Estimation"])


@router.post(
    "/ols",
    response_model=OlsEstimateResponse,
    responses={
        400: {"model": ErrorResponse, "description": "Invalid panel or catalog"},
        500: {"model": ErrorResponse, "description": "Estimation failed"}
    }
)
async def estimate_ols(
    panel: UploadFile = File(..., description="Sales panel CSV"),
    catalog: UploadFile = File(..., description="Catalog CSV with product_id and f* columns"),
    degree: int = Query(3, ge=0, description="Polynomial degree of the distance weighting"),
    k: int = Query(12, ge=1, description="Dimensions kept by the product-space factorization"),
):
    """
    Fit the spatial-competition regression for every product.

    Products whose regression fails are returned with a status and error instead of an estimate.
    """
    panel_frame = read_panel(await panel.read())
    view = read_catalog_view(await catalog.read())
    distances = product_distances(view, k)
    report = estimate_all(panel_frame, distances, degree)

    rows = [OlsEstimateRow(**record) for record in report.astype(object).where(report.notna(), None).to_dict(orient="records")]
    estimates = [r.beta_hat for r in rows if r.beta_hat is not None]
    return OlsEstimateResponse(
        count=len(rows),
        negative_share=sign_share(estimates) if estimates else None,
        estimates=rows,
    )
