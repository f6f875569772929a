"""Python access to the surveillance pipeline core."""

from ._core import (
    ConflictError,
    Error,
    NotFoundError,
    ParseError,
    ValidationError,
    extract_noun_groups,
    format_percent,
    frequency_cutoff,
    generate_synthetic,
    metrics,
    odds_ratio,
    run,
    run_stage,
    tag_text,
)

__all__ = [
    "ConflictError",
    "Error",
    "NotFoundError",
    "ParseError",
    "ValidationError",
    "extract_noun_groups",
    "format_percent",
    "frequency_cutoff",
    "generate_synthetic",
    "metrics",
    "odds_ratio",
    "run",
    "run_stage",
    "tag_text",
]
__version__ = "0.1.0"
