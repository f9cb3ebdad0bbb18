"""Randomized multilevel algorithms for parametric integration.

Approximates s -> integral of f(s, t) over the t-block of the unit cube, for
integrands of finite Sobolev smoothness, by an exact coarse-level integral of
a randomly shifted piecewise interpolant plus Monte Carlo estimates of
per-level detail means.  Includes exact regime/rate calculators, hard-instance
generators, and an experiment harness verifying convergence orders and the
adaptive-vs-non-adaptive speedup.
"""

from .problem import INF, ProblemSpec
from .partition import (cell_anchor, join_index, locate_cell, num_cells,
                        rescale_to_cell, restrict_from_cell, split_index)
from .interpolation import (BasisExpansion, DetailFrame, LagrangeBasis,
                            PiecewiseExpansion, base_interpolate, detail_apply,
                            detail_frame, level_interpolate, shift_matrix)
from .discrete_mean import (DenseTensor, MeanEstimate, ValueTensor,
                            discrete_norm, exact_mean, mc_mean_adaptive,
                            mc_mean_nonadaptive)
from .multilevel import (BudgetError, CardinalityLedger, EmbeddingError,
                         MultilevelOutput, Schedule, ULevelTensor,
                         detail_function, exact_base_integral, min_budget,
                         run_adaptive, run_deterministic, run_nonadaptive,
                         schedule, theta_block)
from .rates import (RegimeReport, compact_check, embedding_check, gap_exponent,
                    phi1, phi2, regime_report, solvable_check, theory_envelopes)
from .instances import (ErrorStats, TestInstance, bump_instance, expected_error,
                        lq_error, smooth_instance)

__version__ = "0.1.0"

__all__ = [
    "INF", "ProblemSpec",
    "cell_anchor", "join_index", "locate_cell", "num_cells",
    "rescale_to_cell", "restrict_from_cell", "split_index",
    "BasisExpansion", "DetailFrame", "LagrangeBasis", "PiecewiseExpansion",
    "base_interpolate", "detail_apply", "detail_frame", "level_interpolate",
    "shift_matrix",
    "DenseTensor", "MeanEstimate", "ValueTensor", "discrete_norm",
    "exact_mean", "mc_mean_adaptive", "mc_mean_nonadaptive",
    "BudgetError", "CardinalityLedger", "EmbeddingError", "MultilevelOutput",
    "Schedule", "ULevelTensor", "detail_function", "exact_base_integral",
    "min_budget", "run_adaptive", "run_deterministic", "run_nonadaptive",
    "schedule", "theta_block",
    "RegimeReport", "compact_check", "embedding_check", "gap_exponent",
    "phi1", "phi2", "regime_report", "solvable_check", "theory_envelopes",
    "ErrorStats", "TestInstance", "bump_instance", "expected_error",
    "lq_error", "smooth_instance",
]
