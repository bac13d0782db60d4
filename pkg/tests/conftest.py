import numpy as np
import pytest

from irs_mec.reflection import CarrierPlan, ReflectionParams
from irs_mec.scenario import (ChannelSet, ComputingRanges, FadingModel,
                              Geometry, PathLossModel, Scenario,
                              synth_compute_profile, synth_scenario)


def unit_channels(seed, k=2, p=2, m=3, n=4, sigma2=0.1, p_tx=1.0):
    """Synthetic unit-scale channels for numeric unit tests."""
    rng = np.random.default_rng(seed)

    def crandn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
            / np.sqrt(2.0)

    return ChannelSet(direct=crandn(k, p, m), bs_irs=crandn(p, m, n),
                      irs_wd=crandn(k, p, n), noise_power_w=sigma2,
                      transmit_power_w=p_tx)


def build_scenario(seed, *, k=2, m=4, n=20, p=8, length=290.0,
                   edge_cpu_total=50e11, plan=None, params=None):
    """Realistic scenario with the shipped defaults, overridable per test."""
    plan = plan or CarrierPlan(num_subcarriers=p)
    params = params or ReflectionParams()
    geometry = Geometry(num_devices=k, wd_center_distance=length)
    channels = synth_scenario(geometry, PathLossModel(), FadingModel(), plan,
                              m, n, seed)
    ranges = ComputingRanges(edge_cpu_total=edge_cpu_total)
    profile = synth_compute_profile(ranges, k, seed)
    return Scenario(channels=channels, profile=profile, plan=plan,
                    reflect_params=params, seed=seed)


@pytest.fixture(scope="session")
def solve_cache():
    """Session-wide memo of expensive solves, shared across test modules."""
    return {}
