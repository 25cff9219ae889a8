"""Bounded-memory GLM estimation over fixed-size data chunks.

Fits maximum likelihood, mean-bias-reduced, and Jeffreys-prior
penalized likelihood estimates by iteratively reweighted least squares,
streaming the data through an incremental QR factor so memory use
depends on the column count only. Includes a simulation harness for
high-dimensional logistic regression with post-fit signal-recovery
rescaling.
"""

from .chunks import (
    DEFAULT_CHUNK_SIZE,
    Chunk,
    ChunkSchema,
    ChunkSource,
    CsvSource,
    MemorySource,
    array_source,
    open_source,
    write_csv,
)
from .errors import (
    ChunkGlmError,
    DegenerateRegressorError,
    DegreesOfFreedomError,
    DivergenceError,
    NotApplicableError,
    NotRewindableError,
    ParseError,
    RankError,
    ReadError,
    SchemaError,
    ShapeError,
)
from .families import (
    MU_EPS,
    DeviancePoint,
    FamilyLink,
    PointQuantities,
    a_derivatives,
    deviance_point,
    inverse_link,
    point_quantities,
)
from .fitter import (
    FitConfig,
    FitResult,
    IterationState,
    WarmStart,
    adjusted_iteration_one_pass,
    adjusted_iteration_two_pass,
    fit,
    ml_iteration,
    standard_errors,
    update_phi_moment,
    update_phi_scoring,
)
from .highdim import (
    SimSetting,
    SimSummary,
    generate,
    read_grid,
    recovery_slope,
    rescale_estimate,
    run_grid,
    run_setting,
    target_beta,
    write_summary_csv,
    write_summary_json,
)
from .qr import TriangularAccumulator

__version__ = "0.1.0"

__all__ = [
    "Chunk",
    "ChunkGlmError",
    "ChunkSchema",
    "ChunkSource",
    "CsvSource",
    "DEFAULT_CHUNK_SIZE",
    "DegenerateRegressorError",
    "DegreesOfFreedomError",
    "DeviancePoint",
    "DivergenceError",
    "FamilyLink",
    "FitConfig",
    "FitResult",
    "IterationState",
    "MU_EPS",
    "MemorySource",
    "NotApplicableError",
    "NotRewindableError",
    "ParseError",
    "PointQuantities",
    "RankError",
    "ReadError",
    "SchemaError",
    "ShapeError",
    "SimSetting",
    "SimSummary",
    "TriangularAccumulator",
    "WarmStart",
    "a_derivatives",
    "adjusted_iteration_one_pass",
    "adjusted_iteration_two_pass",
    "array_source",
    "deviance_point",
    "fit",
    "generate",
    "inverse_link",
    "ml_iteration",
    "open_source",
    "point_quantities",
    "read_grid",
    "recovery_slope",
    "rescale_estimate",
    "run_grid",
    "run_setting",
    "standard_errors",
    "target_beta",
    "update_phi_moment",
    "update_phi_scoring",
    "write_csv",
    "write_summary_csv",
    "write_summary_json",
]
