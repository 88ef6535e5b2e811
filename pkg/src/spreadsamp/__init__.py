"""spreadsamp: fast selection of spatially balanced samples.

A library for drawing well-spread random samples from geo-referenced finite
populations, with Monte Carlo diagnostics, design-based estimators, and a
replication/timing harness. The flagship design selects a sample in exactly
n draw-by-draw steps with multiplicative probability updates driven by a
row/column-balanced distance matrix; quadratic-cost competitors (distance-
product exchange chains, local pivotal competitions, spatially correlated
Poisson sampling) are included for comparison.
"""

from .designs import (DesignSpec, SampleDraw, default_proposals, draw_hpwd, draw_lpm,
                      draw_pwd, draw_scps, draw_srs, hpwd_step, make_sampler,
                      parse_design, pwd_log_index, substream)
from .diagnostics import (BalanceResult, ExactDesign, InclusionEstimates, PijFit,
                          cv_pi, enumerate_pwd_exact, estimate_inclusion,
                          fit_pij_model, spatial_balance_index)
from .distance import (DistanceMatrix, StandardizedDistance, apply_gamma,
                       build_distances, dump_matrix, nearest_neighbors, standardize)
from .errors import (ConvergenceError, DegenerateFrameError, EstimatorUndefinedError,
                     FrameFormatError, InsufficientDataError, InternalInvariantError,
                     NumericDegeneracyError, ParameterError, SpreadSampError,
                     VarianceInestimableError)
from .estimation import EstimateResult, estimate_total, ht_total, syg_variance
from .frame import (Frame, OutcomeSpec, PopulationRecipe, attach_gaussian_outcome,
                    build_population, generate_grid, generate_neyman_scott,
                    read_frame, write_frame)
from .simulate import (ComparisonConfig, ReplicationReport, TimingReport,
                       benchmark_timing, config_from_json, recipe_from_json,
                       run_comparison, timing_frame)

__version__ = "0.1.0"
