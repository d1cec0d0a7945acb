"""FastAPI service wrapping the measurement and diagnostics pipeline."""

from .routes import create_app

__all__ = ["create_app"]
