"""Kadanoff sand pile model: simulation, prediction and exact analysis."""

from .core import (
    Configuration,
    NotFireableError,
    Parameters,
    add_grain,
    fire,
    heights,
    is_fireable,
    is_stable,
    weighted_mass,
)
from .strategies import (
    Avalanche,
    RunTrace,
    ShotVector,
    TraceStep,
    check_diamond,
    find_interval_l,
    iter_process,
    peaks_of,
    replay,
    run_process,
    stabilize_leftmost,
    stabilize_random,
    strategy_counts,
)
from .pseudolocal import (
    PeakSequence,
    StructureReport,
    predict_peaks,
    predict_suffix,
    verify_avalanche_structure,
)
from .analysis import (
    GrowthReport,
    JordanData,
    ProjectionLaw,
    build_u_vectors,
    char_poly_coeffs,
    growth_report,
    growth_sweep,
    jordan_data,
    min_grains_for_prefix,
    project_e3,
    shot_identity_residual,
    verify_projection_law,
    verify_recurrence,
)

__version__ = "0.1.0"

__all__ = [
    "Avalanche",
    "Configuration",
    "GrowthReport",
    "JordanData",
    "NotFireableError",
    "Parameters",
    "PeakSequence",
    "ProjectionLaw",
    "RunTrace",
    "ShotVector",
    "StructureReport",
    "TraceStep",
    "add_grain",
    "build_u_vectors",
    "char_poly_coeffs",
    "check_diamond",
    "find_interval_l",
    "fire",
    "growth_report",
    "growth_sweep",
    "heights",
    "is_fireable",
    "is_stable",
    "iter_process",
    "jordan_data",
    "min_grains_for_prefix",
    "peaks_of",
    "predict_peaks",
    "predict_suffix",
    "project_e3",
    "replay",
    "run_process",
    "shot_identity_residual",
    "stabilize_leftmost",
    "stabilize_random",
    "strategy_counts",
    "verify_avalanche_structure",
    "verify_projection_law",
    "verify_recurrence",
    "weighted_mass",
    "__version__",
]
