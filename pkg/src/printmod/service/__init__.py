"""Service layer: system orchestrator, HTTP API, and command-line entry."""

from .system import ModerationSystem

__all__ = ["ModerationSystem"]
