import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irs_mec.compute_alloc import (ComputeProfile, allocate_computing,
                                   allocate_edge, latency, optimal_split,
                                   relaxed_objective, relaxed_split,
                                   stationarity_residuals, weighted_latency)
from irs_mec.errors import ConfigError


def make_profile(data, cycles, local, total, weights=None):
    data = np.asarray(data, dtype=float)
    if weights is None:
        weights = np.full(data.size, 1.0 / data.size)
    return ComputeProfile(data_bits=data, cycles_per_bit=np.asarray(cycles, float),
                          local_cpu=np.asarray(local, float),
                          edge_cpu_total=total, weights=np.asarray(weights, float))


def brute_force_latency(d_tot, c, f_l, rate, f_e, d):
    """Independent re-statement of the two-branch latency."""
    local = (d_tot - d) * c / f_l
    if d == 0:
        return local
    if rate <= 0 or f_e <= 0:
        return math.inf
    return max(local, d / rate + d * c / f_e)


TABLE_PROFILE = make_profile([300e3, 320e3], [750.0, 710.0], [5e8, 4.5e8], 50e11)


class TestLatency:
    def test_all_local(self):
        t = latency(TABLE_PROFILE, 0, 0, 1e11, 1e8)
        assert t == pytest.approx(300e3 * 750 / 5e8)

    def test_all_offload(self):
        t = latency(TABLE_PROFILE, 0, 300e3, 1e11, 1e8)
        assert t == pytest.approx(300e3 / 1e8 + 300e3 * 750 / 1e11)

    def test_zero_rate_with_offload_is_infinite(self):
        assert latency(TABLE_PROFILE, 0, 10, 1e11, 0.0) == math.inf
        assert latency(TABLE_PROFILE, 0, 10, 0.0, 1e8) == math.inf

    def test_zero_offload_ignores_rate_and_edge(self):
        assert latency(TABLE_PROFILE, 0, 0, 0.0, 0.0) == pytest.approx(
            300e3 * 750 / 5e8)

    def test_branches_balanced_at_relaxed_split(self):
        profile = make_profile([300e3], [750.0], [5e8], 1e11)
        rate, f_e = 1e8, 1e11
        d_hat = relaxed_split(profile, 0, rate, f_e)
        local = (300e3 - d_hat) * 750 / 5e8
        edge = d_hat / rate + d_hat * 750 / f_e
        slope = 1 / rate + 750 / f_e
        assert abs(local - edge) <= slope * 1.0  # within one bit of slack


class TestOptimalSplit:
    def test_zero_rate_gives_zero(self):
        assert optimal_split(TABLE_PROFILE, 0, 0.0, 1e11) == 0

    def test_fast_everything_offloads_all(self):
        # In the high rate / high edge-CPU limit everything offloads.  The
        # edge CPU must dominate c*R for the split to reach D exactly.
        assert optimal_split(TABLE_PROFILE, 0, 1e12, 1e18) == 300e3
        # At merely large values the split sits within a couple of bits of D.
        assert optimal_split(TABLE_PROFILE, 0, 1e12, 1e14) >= 300e3 - 2

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_matches_exhaustive_search(self, seed):
        rng = np.random.default_rng(seed)
        d_tot = float(rng.integers(1, 1001))
        c = float(rng.uniform(1, 50))
        f_l = float(rng.uniform(10, 1e4))
        rate = float(rng.uniform(0.1, 1e4))
        f_e = float(rng.uniform(1, 1e5))
        profile = make_profile([d_tot], [c], [f_l], 1e6)
        got = optimal_split(profile, 0, rate, f_e)
        candidates = np.arange(0, int(d_tot) + 1)
        vals = [brute_force_latency(d_tot, c, f_l, rate, f_e, d)
                for d in candidates]
        best = int(candidates[int(np.argmin(vals))])
        assert got == best


def golden_section_oracle(objective, lo, hi, points=100_001):
    """Dense scan plus golden-section polish, independent of the solver."""
    grid = np.linspace(lo, hi, points)
    vals = objective(grid)
    i = int(np.argmin(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, points - 1)]
    invphi = (math.sqrt(5) - 1) / 2
    c = b - (b - a) * invphi
    d = a + (b - a) * invphi
    while b - a > 1e-12 * max(abs(a), abs(b), 1.0):
        if objective(np.array([c]))[0] < objective(np.array([d]))[0]:
            b, d = d, c
            c = b - (b - a) * invphi
        else:
            a, c = c, d
            d = a + (b - a) * invphi
    mid = 0.5 * (a + b)
    return float(objective(np.array([mid]))[0])


def reduced_objective(profile, rates):
    """Relaxed weighted latency on the F_e2 = total - F_e1 line (restated)."""
    d, c, f_l, w = (profile.data_bits, profile.cycles_per_bit,
                    profile.local_cpu, profile.weights)
    total = profile.edge_cpu_total

    def objective(f1):
        f1 = np.asarray(f1, dtype=float)
        out = np.zeros_like(f1)
        for k, f_e in enumerate((f1, total - f1)):
            num = w[k] * (d[k] * c[k] ** 2 * rates[k] + d[k] * c[k] * f_e)
            den = f_e * f_l[k] + c[k] * rates[k] * (f_e + f_l[k])
            out = out + num / den
        return out

    return objective


class TestAllocateEdge:
    def test_symmetric_devices_split_in_half(self):
        profile = make_profile([300e3, 300e3], [750, 750], [5e8, 5e8], 50e11)
        result = allocate_edge(np.array([1e8, 1e8]), profile)
        f_e = result.allocation.edge_cpu
        assert f_e[0] == pytest.approx(f_e[1], rel=1e-12)
        assert float(np.sum(f_e)) == pytest.approx(50e11, rel=1e-8)

    def test_single_device_takes_whole_budget(self):
        profile = make_profile([300e3], [750], [5e8], 1e12)
        result = allocate_edge(np.array([1e8]), profile)
        assert result.allocation.edge_cpu[0] == pytest.approx(1e12, rel=1e-8)

    def test_kkt_conditions_hold(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            profile = make_profile(rng.uniform(250e3, 350e3, 2),
                                   rng.uniform(700, 800, 2),
                                   rng.uniform(4e8, 6e8, 2),
                                   float(rng.uniform(1e11, 1e13)))
            rates = rng.uniform(1e7, 5e8, 2)
            result = allocate_edge(rates, profile)
            alloc = result.allocation
            assert alloc.eta > 0
            # complementary slackness
            assert abs(float(np.sum(alloc.edge_cpu)) - profile.edge_cpu_total) \
                <= 1e-6 * profile.edge_cpu_total
            # stationarity at unclamped coordinates
            res = stationarity_residuals(profile, alloc.edge_cpu, rates,
                                         alloc.eta)
            for k in range(2):
                if alloc.edge_cpu[k] > 0:
                    assert abs(res[k]) <= 1e-6 * alloc.eta

    def test_objective_matches_golden_section_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            profile = make_profile(rng.uniform(250e3, 350e3, 2),
                                   rng.uniform(700, 800, 2),
                                   rng.uniform(4e8, 6e8, 2),
                                   float(rng.uniform(5e11, 5e12)))
            rates = rng.uniform(1e7, 5e8, 2)
            result = allocate_edge(rates, profile)
            got = relaxed_objective(profile, result.allocation.edge_cpu, rates)
            oracle = golden_section_oracle(
                reduced_objective(profile, rates), 0.0, profile.edge_cpu_total)
            assert got == pytest.approx(oracle, rel=1e-6)

    def test_trace_non_increasing(self):
        profile = make_profile([260e3, 340e3], [790, 705], [4.1e8, 5.9e8], 3e12)
        result = allocate_edge(np.array([3e7, 2e8]), profile)
        values = result.objective_trace
        for a, b in zip(values, values[1:]):
            assert b <= a + 1e-9 * abs(a)

    def test_rejects_zero_rate(self):
        with pytest.raises(ConfigError):
            allocate_edge(np.array([0.0, 1e8]), TABLE_PROFILE)


class TestAllocateComputing:
    def test_zero_rate_devices_forced_local(self):
        profile = make_profile([300e3, 320e3, 280e3], [750, 720, 760],
                               [5e8, 4e8, 6e8], 50e11,
                               weights=[0.2, 0.5, 0.3])
        rates = np.array([0.0, 2e8, 1e8])
        result = allocate_computing(rates, profile)
        alloc = result.allocation
        assert alloc.offload_bits[0] == 0
        assert alloc.edge_cpu[0] == 0
        assert float(np.sum(alloc.edge_cpu)) == pytest.approx(50e11, rel=1e-8)
        # stationarity with the original weights after eta rescaling
        res = stationarity_residuals(profile, alloc.edge_cpu, rates, alloc.eta)
        for k in (1, 2):
            assert abs(res[k]) <= 1e-6 * alloc.eta

    def test_all_blocked_is_all_local(self):
        result = allocate_computing(np.zeros(2), TABLE_PROFILE)
        assert np.all(result.allocation.offload_bits == 0)
        assert np.all(result.allocation.edge_cpu == 0)
        expected = weighted_latency(TABLE_PROFILE, np.zeros(2), np.zeros(2),
                                    np.zeros(2))
        assert result.objective_trace[0] == pytest.approx(expected)
