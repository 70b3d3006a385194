"""HTTP service wrapping the engine; the CLI is a thin client of this layer."""

from .app import create_app

__all__ = ["create_app"]
