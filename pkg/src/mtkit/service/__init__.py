"""Pipeline CLI and the blinded annotation campaign service."""

from .annotation import (
    AnnotationError,
    AnnotationTask,
    DuplicateSessionError,
    Rating,
    RatingStore,
    create_session,
    export_ratings,
)
from .config import load_config, section

__all__ = [
    "AnnotationError",
    "AnnotationTask",
    "DuplicateSessionError",
    "Rating",
    "RatingStore",
    "create_session",
    "export_ratings",
    "load_config",
    "section",
]
