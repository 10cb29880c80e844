"""Hybrid 5G + GNSS attitude determination.

Carrier-phase double differences from a multi-antenna GNSS receiver and 5G
angle-of-arrival measurements are combined in one weighted least-squares model;
integer ambiguities are resolved with an SO(3)-constrained lattice search.
"""

__version__ = "0.1.0"

from .estimator import (  # noqa: E402
    FixedSolution,
    FloatSolution,
    assemble_hybrid,
    constrained_search,
    fiveg_only_solve,
    gnss_only_solve,
    hybrid_solve,
    solve_float,
)
from .estimators import HybridAttitudeEstimator  # noqa: E402
from .simulation import ScenarioConfig, run_campaign, run_trial  # noqa: E402

__all__ = [
    "FixedSolution", "FloatSolution", "HybridAttitudeEstimator", "ScenarioConfig",
    "assemble_hybrid", "constrained_search", "fiveg_only_solve", "gnss_only_solve",
    "hybrid_solve", "run_campaign", "run_trial", "solve_float",
]
