"""Outer block-coordinate descent tying computing and communication design.

One solve alternates the computing stage (offload volumes and edge CPU given
rates) with the communication stage (receivers and phase shifts given the
offload volumes) until the weighted latency stalls.  The reported solution is
the best iterate seen, so the outer trace is non-increasing by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .comm_opt import (InnerLoopOptions, LineSearchOptions, OuterLoopOptions,
                       all_rates, newton_like_outer)
from .compute_alloc import (all_latencies, allocate_computing,
                            weighted_latency)
from .errors import ConfigError, ValidationError
from .reflection import (BpsVector, ReflectionMode, build_reflection_matrices,
                         quantize_bps)
from .scenario import STREAM_THETA_INIT, Scenario, effective_channels, rng_for

SCHEMES = ("ProposedPractical", "IdealDesign", "NoIrs", "RandomPhase")


@dataclass
class SolverOptions:
    """All loop tolerances and caps, with the shipped defaults."""

    eps: float = 1e-3               # outer relative-change tolerance
    l3_max: int = 10                # outer iteration cap
    reflection_mode: ReflectionMode = ReflectionMode.PRACTICAL
    resolution_bits: int | None = 3
    eps1: float = 1e-9              # computing-stage tolerance
    l1_max: int = 20
    eps2: float = 1e-3              # dual residual tolerance
    l2_max: int = 30
    gamma: float = 0.5              # dual damping base
    tau: float = 0.1                # dual contraction margin
    line_search_max: int = 64
    alg3_tol: float = 1e-4
    alg3_max: int = 40
    max_sweeps: int = 8
    theta_tol: float = 1e-4
    step0: float = math.pi / 16.0
    shrink: float = 0.5
    freeze_bps: bool = False

    def inner(self) -> InnerLoopOptions:
        return InnerLoopOptions(
            reflection_mode=self.reflection_mode,
            resolution_bits=self.resolution_bits,
            tol=self.alg3_tol, max_iterations=self.alg3_max,
            max_sweeps=self.max_sweeps, theta_tol=self.theta_tol,
            line_search=LineSearchOptions(step0=self.step0,
                                          shrink=self.shrink,
                                          tol=self.theta_tol),
            freeze_bps=self.freeze_bps)

    def outer(self) -> OuterLoopOptions:
        return OuterLoopOptions(gamma=self.gamma, tau=self.tau,
                                eps2=self.eps2, l2_max=self.l2_max,
                                line_search_max=self.line_search_max)


@dataclass(eq=False)
class Solution:
    """Joint decision variables plus the rates and latencies they induce."""

    offload_bits: np.ndarray
    edge_cpu: np.ndarray
    receivers: np.ndarray
    theta: BpsVector
    rates: np.ndarray
    latencies: np.ndarray
    weighted_latency: float


@dataclass
class ConvergenceTrace:
    level: str
    values: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.values)


@dataclass
class SolveResult:
    solution: Solution
    traces: dict
    outer_iterations: int


def evaluate(scenario: Scenario, offload_bits, edge_cpu, receivers,
             theta: BpsVector, mode: ReflectionMode) -> Solution:
    """Recompute rates and latencies of a candidate point from scratch.

    Raises :class:`ValidationError` listing every violated constraint.
    """
    channels, profile = scenario.channels, scenario.profile
    offload_bits = np.asarray(offload_bits, dtype=float)
    edge_cpu = np.asarray(edge_cpu, dtype=float)
    violations = []
    if np.any(offload_bits != np.round(offload_bits)):
        violations.append("offload volumes must be integral")
    if np.any(offload_bits < 0) or np.any(offload_bits > profile.data_bits):
        violations.append("offload volumes outside [0, D_k]")
    if np.any(edge_cpu < 0):
        violations.append("negative edge CPU share")
    budget = profile.edge_cpu_total
    if float(np.sum(edge_cpu)) > budget * (1.0 + 1e-6):
        violations.append("edge CPU budget exceeded")
    norms_sq = np.sum(np.abs(receivers) ** 2, axis=2)
    if np.any(norms_sq > 1.0 + 1e-9):
        violations.append("receive vector norm above one")
    if theta.size and (np.max(theta.theta) > math.pi + 1e-12
                       or np.min(theta.theta) < -math.pi - 1e-12):
        violations.append("phase shift outside [-pi, pi]")
    if violations:
        raise ValidationError("; ".join(violations))

    reflection = build_reflection_matrices(theta, scenario.plan,
                                           scenario.reflect_params, mode)
    rates = all_rates(channels, reflection, receivers, scenario.plan)
    latencies = all_latencies(profile, offload_bits, edge_cpu, rates)
    weighted = float(np.dot(profile.weights, latencies))
    return Solution(offload_bits=np.round(offload_bits), edge_cpu=edge_cpu,
                    receivers=receivers, theta=theta, rates=rates,
                    latencies=latencies, weighted_latency=weighted)


def _matched_filters(heff: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(heff, axis=2, keepdims=True)
    return np.where(norms > 0, heff / np.maximum(norms, 1e-300),
                    np.zeros_like(heff))


def _initial_theta(scenario: Scenario, opts: SolverOptions) -> np.ndarray:
    rng = rng_for(scenario.seed, STREAM_THETA_INIT)
    theta = rng.uniform(-math.pi, math.pi, scenario.channels.num_elements)
    if opts.resolution_bits is not None:
        theta = np.asarray(quantize_bps(theta, opts.resolution_bits))
    return np.atleast_1d(theta)


def solve(scenario: Scenario, opts: SolverOptions = SolverOptions()) -> SolveResult:
    """Full alternating optimisation from a seeded random phase start."""
    channels, profile, plan = scenario.channels, scenario.profile, scenario.plan
    params = scenario.reflect_params
    mode = opts.reflection_mode

    theta = _initial_theta(scenario, opts)
    reflection = build_reflection_matrices(theta, plan, params, mode)
    receivers = _matched_filters(effective_channels(channels, reflection))
    dual = None

    traces = {"outer": ConvergenceTrace("outer"),
              "alg1": ConvergenceTrace("alg1"),
              "alg2": ConvergenceTrace("alg2"),
              "alg2_merit_pre": ConvergenceTrace("alg2_merit_pre"),
              "alg2_merit_post": ConvergenceTrace("alg2_merit_post"),
              "alg3": ConvergenceTrace("alg3")}

    best = None
    best_value = math.inf
    accepted = []
    iterations = 0
    for iteration in range(1, opts.l3_max + 1):
        iterations = iteration
        rates = all_rates(channels, reflection, receivers, plan)
        alloc_result = allocate_computing(rates, profile, eps1=opts.eps1,
                                          l1_max=opts.l1_max)
        alloc = alloc_result.allocation
        if iteration == 1:
            traces["alg1"].values = list(alloc_result.objective_trace)

        candidate = (alloc.offload_bits.copy(), alloc.edge_cpu.copy(),
                     receivers, theta)
        value = weighted_latency(profile, alloc.offload_bits, alloc.edge_cpu,
                                 rates)
        if value < best_value:
            best, best_value = candidate, value

        if np.any(alloc.offload_bits > 0):
            outer_res = newton_like_outer(
                channels, plan, params, alloc.offload_bits, profile.weights,
                receivers, theta, opts.inner(), opts.outer(), dual=dual)
            receivers, theta, dual = (outer_res.receivers, outer_res.theta,
                                      outer_res.dual)
            reflection = build_reflection_matrices(theta, plan, params, mode)
            if iteration == 1:
                traces["alg2"].values = list(outer_res.objective_trace)
                traces["alg2_merit_pre"].values = list(outer_res.merit_pre)
                traces["alg2_merit_post"].values = list(outer_res.merit_post)
                traces["alg3"].values = list(outer_res.first_inner_trace)
            rates = all_rates(channels, reflection, receivers, plan)
            value = weighted_latency(profile, alloc.offload_bits,
                                     alloc.edge_cpu, rates)
            if value < best_value:
                best = (alloc.offload_bits.copy(), alloc.edge_cpu.copy(),
                        receivers, theta)
                best_value = value

        accepted.append(best_value)
        traces["outer"].values.append(best_value)
        if iteration >= 2:
            prev, cur = accepted[-2], accepted[-1]
            if abs(cur - prev) <= opts.eps * max(abs(cur), 1e-300):
                break

    offload, edge_cpu, receivers, theta = best
    bps = BpsVector(theta=theta, bits=opts.resolution_bits)
    solution = evaluate(scenario, offload, edge_cpu, receivers, bps, mode)
    return SolveResult(solution=solution, traces=traces,
                       outer_iterations=iterations)


def run_scheme(scenario: Scenario, scheme: str,
               opts: SolverOptions = SolverOptions()) -> SolveResult:
    """One of the four benchmark pipelines.

    ProposedPractical: the full solve against the fitted reflection response.
    IdealDesign: design under the idealised response, then re-evaluate the
        designed receivers/phases under the fitted response with the
        computing variables re-fitted to the realised rates.
    NoIrs: the full solve with the reflected path removed.
    RandomPhase: seeded random phases held fixed; receivers and computing
        variables still optimised.
    """
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if scheme == "ProposedPractical":
        return solve(scenario, replace(opts,
                                       reflection_mode=ReflectionMode.PRACTICAL))
    if scheme == "NoIrs":
        return solve(scenario.without_irs(),
                     replace(opts, reflection_mode=ReflectionMode.PRACTICAL))
    if scheme == "RandomPhase":
        return solve(scenario, replace(opts,
                                       reflection_mode=ReflectionMode.PRACTICAL,
                                       freeze_bps=True))
    # IdealDesign
    designed = solve(scenario, replace(opts,
                                       reflection_mode=ReflectionMode.IDEAL))
    sol = designed.solution
    reflection = build_reflection_matrices(sol.theta, scenario.plan,
                                           scenario.reflect_params,
                                           ReflectionMode.PRACTICAL)
    rates = all_rates(scenario.channels, reflection, sol.receivers,
                      scenario.plan)
    alloc = allocate_computing(rates, scenario.profile, eps1=opts.eps1,
                               l1_max=opts.l1_max).allocation
    solution = evaluate(scenario, alloc.offload_bits, alloc.edge_cpu,
                        sol.receivers, sol.theta, ReflectionMode.PRACTICAL)
    return SolveResult(solution=solution, traces=designed.traces,
                       outer_iterations=designed.outer_iterations)
