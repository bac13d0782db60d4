import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import build_scenario
from irs_mec.bcd import SolverOptions, evaluate, run_scheme, solve
from irs_mec.comm_opt import all_rates
from irs_mec.compute_alloc import weighted_latency
from irs_mec.errors import ConfigError, ValidationError
from irs_mec.reflection import (BpsVector, ReflectionMode,
                                build_reflection_matrices, discrete_phase_set)

FAST = SolverOptions()                  # shipped defaults: practical, b=3


@pytest.fixture(scope="module")
def default_solves():
    return {seed: solve(build_scenario(seed), FAST) for seed in range(1, 6)}


class TestSolve:
    def test_outer_trace_non_increasing(self, default_solves):
        for res in default_solves.values():
            values = res.traces["outer"].values
            for a, b in zip(values, values[1:]):
                assert b <= a + 1e-9 * abs(a)

    def test_alg1_trace_non_increasing(self, default_solves):
        for res in default_solves.values():
            values = res.traces["alg1"].values
            for a, b in zip(values, values[1:]):
                assert b <= a + 1e-9 * abs(a)

    def test_alg3_trace_non_decreasing(self, default_solves):
        for res in default_solves.values():
            values = res.traces["alg3"].values
            for a, b in zip(values, values[1:]):
                assert b >= a - 1e-8 * abs(a)

    def test_merit_decreases_at_accepted_steps(self, default_solves):
        for res in default_solves.values():
            pre = res.traces["alg2_merit_pre"].values
            post = res.traces["alg2_merit_post"].values
            assert len(pre) == len(post)
            for a, b in zip(pre, post):
                assert b < a

    def test_feasibility_of_solution(self, default_solves):
        for seed, res in default_solves.items():
            scenario = build_scenario(seed)
            sol = res.solution
            profile = scenario.profile
            assert np.all(sol.offload_bits == np.round(sol.offload_bits))
            assert np.all(sol.offload_bits >= 0)
            assert np.all(sol.offload_bits <= profile.data_bits)
            assert float(np.sum(sol.edge_cpu)) <= profile.edge_cpu_total * (1 + 1e-6)
            assert np.all(np.sum(np.abs(sol.receivers) ** 2, axis=2) <= 1 + 1e-9)
            members = discrete_phase_set(3)
            for value in sol.theta.theta:
                assert np.min(np.abs(members - value)) < 1e-12

    def test_self_consistent_weighted_latency(self, default_solves):
        for seed, res in default_solves.items():
            scenario = build_scenario(seed)
            sol = res.solution
            again = evaluate(scenario, sol.offload_bits, sol.edge_cpu,
                             sol.receivers, sol.theta, ReflectionMode.PRACTICAL)
            assert again.weighted_latency == sol.weighted_latency
            assert sol.weighted_latency == pytest.approx(
                float(np.dot(scenario.profile.weights, sol.latencies)),
                rel=1e-12)

    def test_deterministic_given_seed(self):
        scenario = build_scenario(33)
        a = solve(scenario, FAST)
        b = solve(build_scenario(33), FAST)
        assert a.solution.weighted_latency == b.solution.weighted_latency
        assert np.array_equal(a.solution.theta.theta, b.solution.theta.theta)

    def test_reported_solution_is_best_iterate(self, default_solves):
        for res in default_solves.values():
            assert res.solution.weighted_latency == res.traces["outer"].values[-1]


class TestEvaluate:
    def test_rejects_infeasible_points(self):
        scenario = build_scenario(2)
        k, p, m = 2, 8, 4
        receivers = np.zeros((k, p, m), dtype=complex)
        theta = BpsVector(theta=np.zeros(scenario.channels.num_elements))
        ok_d = np.zeros(k)
        ok_f = np.zeros(k)
        with pytest.raises(ValidationError, match="integral"):
            evaluate(scenario, np.array([0.5, 0.0]), ok_f, receivers, theta,
                     ReflectionMode.PRACTICAL)
        with pytest.raises(ValidationError, match="budget"):
            evaluate(scenario, ok_d, np.full(k, 1e13), receivers, theta,
                     ReflectionMode.PRACTICAL)
        bad_rx = receivers.copy()
        bad_rx[0, 0, 0] = 1.5
        with pytest.raises(ValidationError, match="norm"):
            evaluate(scenario, ok_d, ok_f, bad_rx, theta,
                     ReflectionMode.PRACTICAL)

    def test_random_point_is_valid_baseline(self):
        scenario = build_scenario(3)
        rng = np.random.default_rng(0)
        n = scenario.channels.num_elements
        theta = BpsVector(theta=rng.uniform(-math.pi, math.pi, n))
        refl = build_reflection_matrices(theta, scenario.plan,
                                         scenario.reflect_params)
        from irs_mec.scenario import effective_channels
        heff = effective_channels(scenario.channels, refl)
        receivers = heff / np.linalg.norm(heff, axis=2, keepdims=True)
        rates = all_rates(scenario.channels, refl, receivers, scenario.plan)
        from irs_mec.compute_alloc import allocate_computing
        alloc = allocate_computing(rates, scenario.profile).allocation
        sol = evaluate(scenario, alloc.offload_bits, alloc.edge_cpu, receivers,
                       theta, ReflectionMode.PRACTICAL)
        assert math.isfinite(sol.weighted_latency) and sol.weighted_latency > 0


class TestSchemes:
    def test_unknown_scheme_rejected(self):
        with pytest.raises(ConfigError):
            run_scheme(build_scenario(1), "Bogus", FAST)

    def test_no_irs_equals_zeroed_bridge(self):
        scenario = build_scenario(4)
        a = run_scheme(scenario, "NoIrs", FAST)
        b = solve(scenario.without_irs(), FAST)
        assert a.solution.weighted_latency == b.solution.weighted_latency

    def test_no_irs_invariant_to_element_count(self):
        a = run_scheme(build_scenario(5, n=10), "NoIrs", FAST)
        b = run_scheme(build_scenario(5, n=40), "NoIrs", FAST)
        assert a.solution.weighted_latency == b.solution.weighted_latency

    def test_random_phase_keeps_initial_theta(self):
        scenario = build_scenario(6)
        res = run_scheme(scenario, "RandomPhase", FAST)
        from irs_mec.reflection import quantize_bps
        from irs_mec.scenario import STREAM_THETA_INIT, rng_for
        rng = rng_for(scenario.seed, STREAM_THETA_INIT)
        expected = quantize_bps(
            rng.uniform(-math.pi, math.pi, scenario.channels.num_elements), 3)
        np.testing.assert_array_equal(res.solution.theta.theta, expected)

    def test_proposed_beats_random_phase(self):
        wins = 0
        for seed in range(1, 6):
            scenario = build_scenario(seed)
            prop = run_scheme(scenario, "ProposedPractical", FAST)
            rand = run_scheme(scenario, "RandomPhase", FAST)
            wins += prop.solution.weighted_latency <= rand.solution.weighted_latency
        assert wins >= 4

    def test_ideal_design_is_practically_evaluated(self):
        scenario = build_scenario(7)
        res = run_scheme(scenario, "IdealDesign", FAST)
        sol = res.solution
        refl = build_reflection_matrices(sol.theta, scenario.plan,
                                         scenario.reflect_params,
                                         ReflectionMode.PRACTICAL)
        rates = all_rates(scenario.channels, refl, sol.receivers, scenario.plan)
        np.testing.assert_allclose(rates, sol.rates, rtol=1e-12)
        direct = weighted_latency(scenario.profile, sol.offload_bits,
                                  sol.edge_cpu, rates)
        assert sol.weighted_latency == pytest.approx(direct, rel=1e-12)
