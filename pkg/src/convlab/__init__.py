"""convlab: geodesics, Jacobi fields and convexity/injectivity radii
on complete Riemannian manifolds."""

from .charts import ManifoldChart
from .convexity import (Budget, BallConvexityVerdict, RadiiEstimate,
                        RadiusValue, ball_convexity_check, radii_estimate,
                        scc_check, uniquely_geodesic_check)
from .errors import (BadParams, BudgetExceeded, ConfigError, ConvlabError,
                     LeftDomain, NoConvergence, NonFiniteState,
                     NotPositiveDefinite, OracleMismatch, OutOfDomain,
                     OutOfRange, RadiusBeyondInjectivity, UnknownModel)
from .geodesics import (GeodesicPath, SegmentSet, exp_map,
                        minimizing_segments, shoot)
from .jacobi import (JacobiField, JacobiSweep, conjugate_radius, g_eval,
                     index_matrix, propagate_jacobi, scc_breakdown_radius,
                     wronskian_defect)
from .models import ModelRecord, chart_from_json, get_model, model_names
from .reports import (AnalysisConfig, canonical_json, load_config,
                      run_analyze, run_check_theorems, run_cutlocus)
from .theorems import (BergerResult, ConditionReport, CutPointRecord,
                       berger_check, classify_cut_point, condition_check)

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig", "BadParams", "BallConvexityVerdict", "BergerResult",
    "Budget", "BudgetExceeded", "ConditionReport", "ConfigError",
    "ConvlabError", "CutPointRecord", "GeodesicPath", "JacobiField",
    "JacobiSweep", "LeftDomain", "ManifoldChart", "ModelRecord",
    "NoConvergence", "NonFiniteState", "NotPositiveDefinite",
    "OracleMismatch", "OutOfDomain", "OutOfRange", "RadiiEstimate",
    "RadiusBeyondInjectivity", "RadiusValue", "SegmentSet", "UnknownModel",
    "ball_convexity_check", "berger_check", "canonical_json",
    "chart_from_json", "classify_cut_point", "condition_check",
    "conjugate_radius", "exp_map", "g_eval", "get_model", "index_matrix",
    "load_config", "minimizing_segments", "model_names", "propagate_jacobi",
    "radii_estimate", "run_analyze", "run_check_theorems", "run_cutlocus",
    "scc_breakdown_radius", "scc_check", "shoot", "uniquely_geodesic_check",
    "wronskian_defect",
]
