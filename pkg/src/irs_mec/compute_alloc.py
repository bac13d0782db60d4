"""Computing-side design: latency model, offload split, edge CPU allocation.

Per device, latency is the larger of the local branch (remaining bits on the
device CPU) and the edge branch (upload time plus edge processing time).  For
fixed rates the relaxed problem in the edge CPU shares is convex; the
allocation comes from inverting the stationarity condition at a water-level
multiplier found by bisection on the budget, after which the offload volumes
are rounded to the better of the two neighbouring integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError

EDGE_BUDGET_SLACK = 1e-6


@dataclass(eq=False)
class ComputeProfile:
    """Per-device task sizes, complexities, CPUs, and priority weights."""

    data_bits: np.ndarray        # D_k, bit
    cycles_per_bit: np.ndarray   # c_k, cycle/bit
    local_cpu: np.ndarray        # F^l_k, cycle/s
    edge_cpu_total: float        # cycle/s shared at the edge
    weights: np.ndarray          # sums to one

    def __post_init__(self):
        for name in ("data_bits", "cycles_per_bit", "local_cpu", "weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.ndim != 1 or arr.size != self.data_bits.size:
                raise ConfigError(f"{name} must be 1-D with one entry per device")
            if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} entries must be positive and finite")
        if self.edge_cpu_total <= 0:
            raise ConfigError("edge CPU budget must be positive")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ConfigError("weights must sum to 1")

    @property
    def num_devices(self) -> int:
        return self.data_bits.size


@dataclass(eq=False)
class ComputeAllocation:
    """Integer offload volumes, edge CPU shares and the budget multiplier."""

    offload_bits: np.ndarray
    edge_cpu: np.ndarray
    eta: float

    def __post_init__(self):
        d = np.asarray(self.offload_bits, dtype=float)
        if np.any(d != np.round(d)):
            raise ConfigError("offload volumes must be integral")
        object.__setattr__(self, "offload_bits", np.round(d))
        object.__setattr__(self, "edge_cpu", np.asarray(self.edge_cpu, dtype=float))
        if np.any(self.edge_cpu < 0):
            raise ConfigError("edge CPU shares must be non-negative")


def latency(profile: ComputeProfile, k: int, offload_bits: float,
            edge_cpu: float, rate: float) -> float:
    """Overall latency of device k: max of local and edge branches.

    A positive offload with zero rate or zero edge CPU yields ``math.inf``
    rather than an exception; zero offload makes the edge branch zero.
    """
    d = float(offload_bits)
    local = (profile.data_bits[k] - d) * profile.cycles_per_bit[k] / profile.local_cpu[k]
    if d == 0.0:
        return local
    if rate <= 0.0 or edge_cpu <= 0.0:
        return math.inf
    edge = d / rate + d * profile.cycles_per_bit[k] / edge_cpu
    return max(local, edge)


def all_latencies(profile: ComputeProfile, offload_bits: np.ndarray,
                  edge_cpu: np.ndarray, rates: np.ndarray) -> np.ndarray:
    return np.array([latency(profile, k, offload_bits[k], edge_cpu[k], rates[k])
                     for k in range(profile.num_devices)])


def weighted_latency(profile: ComputeProfile, offload_bits: np.ndarray,
                     edge_cpu: np.ndarray, rates: np.ndarray) -> float:
    return float(np.dot(profile.weights,
                        all_latencies(profile, offload_bits, edge_cpu, rates)))


def relaxed_split(profile: ComputeProfile, k: int, rate: float,
                  edge_cpu: float) -> float:
    """Continuous offload volume that equalises the two latency branches."""
    if rate <= 0.0 or edge_cpu <= 0.0:
        return 0.0
    d_tot, c, f_l = profile.data_bits[k], profile.cycles_per_bit[k], profile.local_cpu[k]
    return (d_tot * c * rate * edge_cpu
            / (edge_cpu * f_l + c * rate * (edge_cpu + f_l)))


def optimal_split(profile: ComputeProfile, k: int, rate: float,
                  edge_cpu: float) -> int:
    """Best integer offload volume; ties resolve to the smaller volume."""
    d_hat = relaxed_split(profile, k, rate, edge_cpu)
    lo = int(max(0, min(profile.data_bits[k], math.floor(d_hat))))
    hi = int(max(0, min(profile.data_bits[k], math.ceil(d_hat))))
    if lo == hi:
        return lo
    t_lo = latency(profile, k, lo, edge_cpu, rate)
    t_hi = latency(profile, k, hi, edge_cpu, rate)
    return lo if t_lo <= t_hi else hi


def relaxed_objective(profile: ComputeProfile, edge_cpu: np.ndarray,
                      rates: np.ndarray) -> float:
    """Weighted latency at the branch-equalising (continuous) split.

    Devices with zero rate or zero edge share contribute their all-local
    latency.
    """
    total = 0.0
    for k in range(profile.num_devices):
        d_tot, c, f_l = (profile.data_bits[k], profile.cycles_per_bit[k],
                         profile.local_cpu[k])
        r, f_e = rates[k], edge_cpu[k]
        if r <= 0.0 or f_e <= 0.0:
            total += profile.weights[k] * d_tot * c / f_l
            continue
        total += profile.weights[k] * (d_tot * c * c * r + d_tot * c * f_e) / (
            f_e * f_l + c * r * (f_e + f_l))
    return total


def _edge_cpu_given_eta(eta: float, rates: np.ndarray,
                        profile: ComputeProfile) -> np.ndarray:
    """Stationarity-inverting share per device, clamped at zero."""
    c, f_l = profile.cycles_per_bit, profile.local_cpu
    amount = np.sqrt(profile.weights * profile.data_bits * c ** 3
                     * rates ** 2 / eta)
    return np.maximum(0.0, (amount - c * rates * f_l) / (f_l + c * rates))


def stationarity_residuals(profile: ComputeProfile, edge_cpu: np.ndarray,
                           rates: np.ndarray, eta: float) -> np.ndarray:
    """Gradient residual of the relaxed objective at unclamped coordinates.

    Zero-rate devices have a constant objective in their share, so their
    residual is just ``eta``.
    """
    c, f_l = profile.cycles_per_bit, profile.local_cpu
    denom = (c * rates * f_l + (f_l + c * rates) * edge_cpu) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = -profile.weights * profile.data_bits * c ** 3 * rates ** 2 / denom
    return np.where(denom > 0, grad, 0.0) + eta


@dataclass
class EdgeAllocationResult:
    allocation: ComputeAllocation
    objective_trace: list = field(default_factory=list)
    bisection_iterations: int = 0


def allocate_edge(rates: np.ndarray, profile: ComputeProfile,
                  eps1: float = 1e-9, l1_max: int = 20) -> EdgeAllocationResult:
    """Alternate budget bisection and integer splits until the relaxed
    objective stalls.

    Requires every rate positive; use :func:`allocate_computing` when some
    devices may be cut off.
    """
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0.0):
        raise ConfigError("allocate_edge requires strictly positive rates")
    budget = profile.edge_cpu_total
    eta_upper = float(np.min(profile.weights * profile.data_bits
                             * profile.cycles_per_bit / profile.local_cpu ** 2))

    # The share formula diverges at eta -> 0, so the bracket is open below.
    # If even the largest admissible eta cannot fit the budget the bracket is
    # widened (shares are clamped at zero beyond their own cap).
    eta_hi = eta_upper
    guard = 0
    while np.sum(_edge_cpu_given_eta(eta_hi, rates, profile)) > budget:
        eta_hi *= 2.0
        guard += 1
        if guard > 200:
            raise NumericalError("could not bracket the budget multiplier")
    eta_lo = 1e-18 * eta_hi

    edge_cpu = None
    eta = eta_hi
    iterations = 0
    for iterations in range(1, 201):
        eta = 0.5 * (eta_lo + eta_hi)
        edge_cpu = _edge_cpu_given_eta(eta, rates, profile)
        gap = float(np.sum(edge_cpu)) - budget
        if abs(gap) <= eps1 * budget:
            break
        if gap > 0:
            eta_lo = eta
        else:
            eta_hi = eta
    else:
        raise NumericalError(
            f"budget bisection stalled: eta in [{eta_lo:.3e}, {eta_hi:.3e}], "
            f"residual {float(np.sum(edge_cpu)) - budget:.3e}")

    trace = []
    offload = np.zeros(profile.num_devices, dtype=float)
    prev_obj = None
    for _ in range(max(1, l1_max)):
        # The share update does not depend on the split, so it is stable after
        # the first pass; the loop mainly re-rounds the splits and detects
        # the fixed point.
        offload = np.array([optimal_split(profile, k, rates[k], edge_cpu[k])
                            for k in range(profile.num_devices)], dtype=float)
        obj = relaxed_objective(profile, edge_cpu, rates)
        trace.append(obj)
        if prev_obj is not None and abs(obj - prev_obj) <= eps1 * max(obj, 1e-300):
            break
        prev_obj = obj

    allocation = ComputeAllocation(offload_bits=offload, edge_cpu=edge_cpu,
                                   eta=eta)
    return EdgeAllocationResult(allocation=allocation, objective_trace=trace,
                                bisection_iterations=iterations)


def allocate_computing(rates: np.ndarray, profile: ComputeProfile,
                       eps1: float = 1e-9, l1_max: int = 20) -> EdgeAllocationResult:
    """Edge allocation with cut-off devices forced fully local.

    Devices with zero rate receive no edge CPU and offload nothing; the
    remaining devices share the full budget.
    """
    rates = np.asarray(rates, dtype=float)
    active = rates > 0.0
    if np.all(active):
        return allocate_edge(rates, profile, eps1=eps1, l1_max=l1_max)
    k_all = profile.num_devices
    offload = np.zeros(k_all)
    edge_cpu = np.zeros(k_all)
    if not np.any(active):
        allocation = ComputeAllocation(offload_bits=offload, edge_cpu=edge_cpu,
                                       eta=0.0)
        trace = [relaxed_objective(profile, edge_cpu, rates)]
        return EdgeAllocationResult(allocation=allocation, objective_trace=trace)
    idx = np.flatnonzero(active)
    weight_scale = float(np.sum(profile.weights[idx]))
    sub = ComputeProfile(data_bits=profile.data_bits[idx],
                         cycles_per_bit=profile.cycles_per_bit[idx],
                         local_cpu=profile.local_cpu[idx],
                         edge_cpu_total=profile.edge_cpu_total,
                         weights=profile.weights[idx] / weight_scale)
    result = allocate_edge(rates[idx], sub, eps1=eps1, l1_max=l1_max)
    offload[idx] = result.allocation.offload_bits
    edge_cpu[idx] = result.allocation.edge_cpu
    # Rescaling the weights rescales the multiplier but not the shares; map
    # eta back to the original weighting so stationarity checks line up.
    allocation = ComputeAllocation(offload_bits=offload, edge_cpu=edge_cpu,
                                   eta=result.allocation.eta * weight_scale)
    local_const = float(np.sum(
        profile.weights[~active] * profile.data_bits[~active]
        * profile.cycles_per_bit[~active] / profile.local_cpu[~active]))
    trace = [weight_scale * v + local_const for v in result.objective_trace]
    return EdgeAllocationResult(allocation=allocation, objective_trace=trace,
                                bisection_iterations=result.bisection_iterations)
