"""
API routers.
"""
from demandbench.routers.estimation import router as estimation_router
from demandbench.routers.pricing import router as pricing_router
from demandbench.routers.reports import router as reports_router
from demandbench.routers.simulation import router as simulation_router

__all__ = ['simulation_router', 'estimation_router', 'pricing_router', 'reports_router']
