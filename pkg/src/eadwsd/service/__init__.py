"""HTTP layer: pydantic wire models and the FastAPI app factory."""

from .app import ServiceState, create_app

__all__ = ["ServiceState", "create_app"]
