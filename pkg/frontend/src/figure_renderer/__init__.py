"""Phase-portrait rendering for heavyball-lab trajectory CSV files.

The renderer is a pure consumer: it parses the versioned trajectory CSV
schema, draws the position curves with start/end markers plus optional
hyperbola and level-set overlays, and never recomputes any dynamics.  A
checksum of every input file is embedded in the image metadata for
provenance.
"""
from .renderer import (
    CSV_SCHEMA,
    RenderResult,
    RenderSpec,
    SchemaMismatch,
    TrajectorySeries,
    load_trajectory_csv,
    render,
)

__version__ = "0.1.0"

__all__ = [
    "CSV_SCHEMA",
    "RenderResult",
    "RenderSpec",
    "SchemaMismatch",
    "TrajectorySeries",
    "load_trajectory_csv",
    "render",
]
