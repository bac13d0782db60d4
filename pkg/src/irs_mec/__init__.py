"""IRS-assisted wideband MEC latency minimisation."""

from .bcd import (SCHEMES, ConvergenceTrace, Solution, SolveResult,
                  SolverOptions, evaluate, run_scheme, solve)
from .comm_opt import (BpsSubproblemData, DualState, all_rates, all_sinr,
                       assemble_bps_data, g3, newton_like_outer,
                       optimize_bps_element_continuous,
                       optimize_bps_element_discrete, rate, sinr,
                       solve_receivers, solve_unit_ball_qp, update_rho,
                       update_upsilon, wmmse_inner)
from .compute_alloc import (ComputeAllocation, ComputeProfile, allocate_computing,
                            allocate_edge, latency, optimal_split,
                            relaxed_split, weighted_latency)
from .reflection import (BandwidthMode, BpsVector, CarrierPlan, ModelReport,
                         ReflectionMode, ReflectionParams,
                         build_reflection_matrices, discrete_phase_set,
                         eval_response, quantize_bps, validate_model)
from .scenario import (ChannelSet, ComputingRanges, FadingModel, Geometry,
                       PathLossModel, Scenario, effective_channel,
                       effective_channels, synth_compute_profile,
                       synth_default_scenario, synth_scenario)

__version__ = "0.1.0"
