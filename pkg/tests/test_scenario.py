import math

import numpy as np
import pytest

from irs_mec.errors import ConfigError
from irs_mec.reflection import (BpsVector, CarrierPlan, ReflectionMode,
                                build_reflection_matrices)
from irs_mec.scenario import (ChannelSet, ComputingRanges, FadingModel,
                              Geometry, PathLossModel, effective_channel,
                              effective_channels, synth_compute_profile,
                              synth_scenario)

PLAN = CarrierPlan()
GEOM = Geometry()
PL = PathLossModel()


def small_scenario(seed, fading=FadingModel(), geometry=GEOM, m=4, n=6,
                   plan=PLAN, path_loss=PL):
    return synth_scenario(geometry, path_loss, fading, plan, m, n, seed)


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        a = small_scenario(7)
        b = small_scenario(7)
        assert np.array_equal(a.direct, b.direct)
        assert np.array_equal(a.bs_irs, b.bs_irs)
        assert np.array_equal(a.irs_wd, b.irs_wd)

    def test_different_seeds_differ(self):
        a = small_scenario(7)
        b = small_scenario(8)
        assert not np.allclose(a.direct, b.direct)

    def test_direct_channels_invariant_to_element_count(self):
        a = small_scenario(3, n=4)
        b = small_scenario(3, n=32)
        assert np.array_equal(a.direct, b.direct)


class TestStatistics:
    def test_rayleigh_direct_power_matches_path_loss(self):
        # Pure Rayleigh fading: mean power of the direct vector is L(d) * M.
        m = 4
        trials = 10_000
        geometry = Geometry(wd_radius=0.0, num_devices=1)
        total = 0.0
        for seed in range(trials):
            cs = small_scenario(seed, geometry=geometry, m=m, n=1)
            total += float(np.sum(np.abs(cs.direct[0, 0]) ** 2))
        d = geometry.wd_center_distance
        expected = PL.gain(d, PL.exponent_bs_wd) * m
        assert total / trials == pytest.approx(expected, rel=0.05)

    def test_distance_scaling_follows_exponent(self):
        # Scaling every distance by t multiplies link power by t**-kappa.
        t = 2.0
        trials = 10_000
        g1 = Geometry(wd_radius=0.0, num_devices=1)
        g2 = Geometry(irs_position=(600.0, 0.0, 20.0),
                      wd_center_distance=g1.wd_center_distance * t,
                      wd_radius=0.0, num_devices=1)
        p1 = p2 = 0.0
        for seed in range(trials):
            p1 += float(np.sum(np.abs(
                small_scenario(seed, geometry=g1, m=2, n=1).direct) ** 2))
            p2 += float(np.sum(np.abs(
                small_scenario(seed, geometry=g2, m=2, n=1).direct) ** 2))
        assert p2 / p1 == pytest.approx(t ** (-PL.exponent_bs_wd), rel=0.05)

    def test_pure_los_bridge_is_rank_one_unit_modulus(self):
        cs = small_scenario(11, m=4, n=6)
        d_bi = float(np.linalg.norm(np.asarray(GEOM.irs_position)
                                    - np.asarray(GEOM.bs_position)))
        scale = math.sqrt(PL.gain(d_bi, PL.exponent_bs_irs))
        np.testing.assert_allclose(np.abs(cs.bs_irs), scale, rtol=1e-12)
        s = np.linalg.svd(cs.bs_irs[0], compute_uv=False)
        assert s[1] / s[0] < 1e-12

    def test_flat_fading_identical_across_subcarriers(self):
        cs = small_scenario(5)
        for p in range(1, cs.num_subcarriers):
            np.testing.assert_array_equal(cs.direct[:, 0], cs.direct[:, p])

    def test_independent_subcarrier_fading_flag(self):
        fading = FadingModel(independent_subcarrier_fading=True)
        cs = small_scenario(5, fading=fading)
        assert not np.allclose(cs.direct[:, 0], cs.direct[:, 1])


class TestEffectiveChannel:
    def test_zero_reflection_reduces_to_direct(self):
        cs = small_scenario(2)
        refl = np.zeros((cs.num_subcarriers, cs.num_elements), dtype=complex)
        heff = effective_channels(cs, refl)
        np.testing.assert_array_equal(heff, cs.direct)

    def test_identity_reflection_is_plain_sum(self):
        cs = small_scenario(2)
        refl = build_reflection_matrices(
            BpsVector(theta=np.zeros(cs.num_elements)), PLAN,
            mode=ReflectionMode.IDEAL)
        got = effective_channel(cs, refl, 1, 3)
        expected = cs.direct[1, 3] + cs.bs_irs[3] @ cs.irs_wd[1, 3]
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_matches_dense_triple_product(self):
        cs = small_scenario(9, m=2, n=3)
        rng = np.random.default_rng(1)
        refl = (rng.standard_normal((cs.num_subcarriers, 3))
                + 1j * rng.standard_normal((cs.num_subcarriers, 3)))
        for k in range(cs.num_devices):
            for p in range(cs.num_subcarriers):
                expected = cs.direct[k, p] + cs.bs_irs[p] @ np.diag(refl[p]) \
                    @ cs.irs_wd[k, p]
                np.testing.assert_allclose(
                    effective_channel(cs, refl, k, p), expected, rtol=1e-12)

    def test_linear_in_reflection(self):
        cs = small_scenario(4, m=3, n=4)
        rng = np.random.default_rng(2)
        shape = (cs.num_subcarriers, cs.num_elements)
        r1 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        r2 = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        zero = np.zeros(shape, dtype=complex)
        combo = (effective_channels(cs, r1 + r2) - effective_channels(cs, r1)
                 - effective_channels(cs, r2) + effective_channels(cs, zero))
        np.testing.assert_allclose(combo, 0.0, atol=1e-18)

    def test_index_out_of_range(self):
        cs = small_scenario(2)
        refl = np.zeros((cs.num_subcarriers, cs.num_elements), dtype=complex)
        with pytest.raises(ConfigError):
            effective_channel(cs, refl, cs.num_devices, 0)


class TestGeometryGuards:
    def test_zero_distance_rejected(self):
        geometry = Geometry(bs_position=(290.0, 0.0, 0.0), wd_radius=0.0)
        with pytest.raises(ConfigError):
            small_scenario(0, geometry=geometry)

    def test_invalid_counts_rejected(self):
        with pytest.raises(ConfigError):
            Geometry(num_devices=0)
        with pytest.raises(ConfigError):
            Geometry(wd_center_distance=-1.0)


class TestComputeProfileDraw:
    def test_ranges_and_weights(self):
        profile = synth_compute_profile(ComputingRanges(), 4, seed=0)
        assert profile.num_devices == 4
        assert np.all(profile.data_bits >= 250e3)
        assert np.all(profile.data_bits <= 350e3)
        assert np.all(profile.data_bits == np.round(profile.data_bits))
        assert np.all(profile.cycles_per_bit >= 700)
        assert np.all(profile.cycles_per_bit <= 800)
        assert np.all(profile.local_cpu >= 4e8)
        assert np.all(profile.local_cpu <= 6e8)
        assert float(np.sum(profile.weights)) == pytest.approx(1.0, abs=1e-15)

    def test_deterministic(self):
        a = synth_compute_profile(ComputingRanges(), 3, seed=5)
        b = synth_compute_profile(ComputingRanges(), 3, seed=5)
        assert np.array_equal(a.data_bits, b.data_bits)
