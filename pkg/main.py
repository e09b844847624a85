"""
Demand Bench API
FastAPI application exposing market simulation, demand estimation, price optimization and reports.
"""
import logging

from fastapi import FastAPI, Request, status
from fastapi.responses import JSONResponse

from config import configure_logging, settings
from demandbench.models import HealthResponse
from demandbench.routers import estimation_router, pricing_router, reports_router, simulation_router
from demandbench.services.errors import (
    ConfigurationError,
    DemandBenchError,
    DimensionError,
    InputError,
)


configure_logging(settings.log_level)
logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="Demand estimation benchmark: logit market simulation, structural network and spatial-competition regression estimators, and a constrained revenue optimizer",
)


# Include routers
app.include_router(simulation_router)
app.include_router(estimation_router)
app.include_router(pricing_router)
app.include_router(reports_router)


# Health check endpoint
@app.get(
    "/",
    response_model=HealthResponse,
    tags=["Health"]
)
async def health_check():
    """Health check endpoint."""
    return {
        "status": "healthy",
        "app_name": settings.app_name,
        "version": settings.app_version,
        "environment": settings.environment
    }


# Exception handlers
@app.exception_handler(DemandBenchError)
async def domain_exception_handler(request: Request, exc: DemandBenchError):
    """Map domain errors to 400 for bad input and 422 for well-formed but unsolvable requests."""
    if isinstance(exc, (InputError, ConfigurationError, DimensionError)):
        status_code = status.HTTP_400_BAD_REQUEST
    else:
        status_code = status.HTTP_422_UNPROCESSABLE_ENTITY
    logger.warning(f"[API] {request.method} {request.url.path} -> {status_code} {exc.code}: {exc.message}")
    return JSONResponse(
        status_code=status_code,
        content={
            "detail": exc.message,
            "code": exc.code
        }
    )


@app.exception_handler(Exception)
async def general_exception_handler(request: Request, exc: Exception):
    """Handle unexpected exceptions."""
    logger.exception(f"[API] {request.method} {request.url.path} failed")
    return JSONResponse(
        status_code=500,
        content={
            "detail": "An unexpected error occurred",
            "error": str(exc)
        }
    )
