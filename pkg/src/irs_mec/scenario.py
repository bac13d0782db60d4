"""Scenario synthesis: geometry, path loss, Rician fading and channels.

All randomness flows through counter-based Philox generators keyed by
``(seed, stream)`` so that runs are reproducible across platforms.  Stream 0
draws the channels (device positions, then direct fades, then reflected
fades), stream 1 the computing profile, stream 2 the solver's phase-shift
initialisation.  Keeping the draw order fixed makes e.g. the direct channels
identical across sweeps of the element count.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .compute_alloc import ComputeProfile
from .errors import ConfigError
from .reflection import CarrierPlan, ReflectionParams

STREAM_CHANNELS = 0
STREAM_PROFILE = 1
STREAM_THETA_INIT = 2


def rng_for(seed: int, stream: int) -> np.random.Generator:
    """Philox generator for one (seed, stream) pair."""
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF,
                                                     stream]))


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


@dataclass(frozen=True)
class Geometry:
    bs_position: tuple = (0.0, 0.0, 0.0)
    irs_position: tuple = (300.0, 0.0, 10.0)
    wd_center_distance: float = 290.0
    wd_radius: float = 5.0
    num_devices: int = 2

    def __post_init__(self):
        if self.wd_center_distance <= 0:
            raise ConfigError("device centre distance must be positive")
        if self.wd_radius < 0:
            raise ConfigError("device radius must be non-negative")
        if self.num_devices < 1:
            raise ConfigError("need at least one device")
        object.__setattr__(self, "bs_position", tuple(float(v) for v in self.bs_position))
        object.__setattr__(self, "irs_position", tuple(float(v) for v in self.irs_position))


@dataclass(frozen=True)
class PathLossModel:
    reference_loss_db: float = -30.0   # at d0 = 1 m
    exponent_bs_wd: float = 3.5
    exponent_bs_irs: float = 2.2
    exponent_irs_wd: float = 2.2
    reference_distance_m: float = 1.0

    def __post_init__(self):
        for name in ("exponent_bs_wd", "exponent_bs_irs", "exponent_irs_wd"):
            if getattr(self, name) < 2.0:
                warnings.warn(f"path-loss exponent {name}={getattr(self, name)} "
                              "below free space", stacklevel=2)

    def gain(self, distance_m: float, exponent: float) -> float:
        """Linear power gain at the given distance."""
        if distance_m <= 0:
            raise ConfigError("zero or negative link distance")
        return db_to_linear(self.reference_loss_db) * (
            distance_m / self.reference_distance_m) ** (-exponent)


@dataclass(frozen=True)
class FadingModel:
    """Rician K-factors per link; ``math.inf`` selects a pure LoS link."""

    rice_bs_wd: float = 0.0
    rice_bs_irs: float = math.inf
    rice_irs_wd: float = 0.0
    independent_subcarrier_fading: bool = False

    def __post_init__(self):
        for name in ("rice_bs_wd", "rice_bs_irs", "rice_irs_wd"):
            value = getattr(self, name)
            if not (value >= 0):
                raise ConfigError(f"Rician factor {name} must be >= 0 or inf")


@dataclass(eq=False)
class ChannelSet:
    """Per-subcarrier uplink channels for K devices, M antennas, N elements.

    direct:    (K, P, M)  device -> BS
    bs_irs:    (P, M, N)  IRS -> BS
    irs_wd:    (K, P, N)  device -> IRS
    """

    direct: np.ndarray
    bs_irs: np.ndarray
    irs_wd: np.ndarray
    noise_power_w: float
    transmit_power_w: float

    def __post_init__(self):
        k, p, m = self.direct.shape
        if self.bs_irs.shape[0] != p or self.bs_irs.shape[1] != m:
            raise ConfigError("bs_irs shape inconsistent with direct channels")
        if self.irs_wd.shape[:2] != (k, p) or self.irs_wd.shape[2] != self.bs_irs.shape[2]:
            raise ConfigError("irs_wd shape inconsistent")
        for name in ("direct", "bs_irs", "irs_wd"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ConfigError(f"{name} contains non-finite entries")
        if self.noise_power_w <= 0 or self.transmit_power_w <= 0:
            raise ConfigError("powers must be positive")

    @property
    def num_devices(self) -> int:
        return self.direct.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.direct.shape[1]

    @property
    def num_antennas(self) -> int:
        return self.direct.shape[2]

    @property
    def num_elements(self) -> int:
        return self.bs_irs.shape[2]

    def without_irs(self) -> "ChannelSet":
        return ChannelSet(direct=self.direct.copy(),
                          bs_irs=np.zeros_like(self.bs_irs),
                          irs_wd=self.irs_wd.copy(),
                          noise_power_w=self.noise_power_w,
                          transmit_power_w=self.transmit_power_w)


def _steering(count: int, cos_angle: float) -> np.ndarray:
    """Half-wavelength ULA steering vector along the array axis."""
    return np.exp(1j * math.pi * np.arange(count) * cos_angle)


def _axis_cosine(source, target, axis=np.array([0.0, 1.0, 0.0])):
    d = np.asarray(target, dtype=float) - np.asarray(source, dtype=float)
    dist = float(np.linalg.norm(d))
    if dist <= 0:
        raise ConfigError("coincident node positions give a zero-length link")
    return dist, float(np.dot(d / dist, axis))


def _rician_mix(los: np.ndarray, nlos: np.ndarray, factor: float) -> np.ndarray:
    if math.isinf(factor):
        return np.broadcast_to(los, nlos.shape).copy()
    return (math.sqrt(factor / (1.0 + factor)) * los
            + math.sqrt(1.0 / (1.0 + factor)) * nlos)


def synth_scenario(geometry: Geometry, path_loss: PathLossModel,
                   fading: FadingModel, plan: CarrierPlan,
                   num_antennas: int, num_elements: int, seed: int,
                   noise_power_w: float = 3.98e-15,
                   transmit_power_w: float = 1e-3) -> ChannelSet:
    """Draw one channel realisation.  Deterministic given the seed."""
    rng = rng_for(seed, STREAM_CHANNELS)
    k_dev = geometry.num_devices
    num_p = plan.num_subcarriers

    # Device positions: uniform in the disc of radius r about the centre.
    radii = geometry.wd_radius * np.sqrt(rng.uniform(size=k_dev))
    angles = rng.uniform(0.0, 2.0 * math.pi, size=k_dev)
    centre = np.array([geometry.wd_center_distance, 0.0, 0.0])
    positions = centre[None, :] + np.stack(
        [radii * np.cos(angles), radii * np.sin(angles), np.zeros(k_dev)], axis=1)

    bs = np.asarray(geometry.bs_position)
    irs = np.asarray(geometry.irs_position)

    def crandn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
            / math.sqrt(2.0)

    draws_p = num_p if fading.independent_subcarrier_fading else 1

    # Direct device -> BS links.
    direct = np.empty((k_dev, num_p, num_antennas), dtype=complex)
    for k in range(k_dev):
        dist, cosa = _axis_cosine(bs, positions[k])
        gain = path_loss.gain(dist, path_loss.exponent_bs_wd)
        los = _steering(num_antennas, cosa)
        fades = _rician_mix(los[None, :], crandn(draws_p, num_antennas),
                            fading.rice_bs_wd)
        direct[k] = math.sqrt(gain) * np.broadcast_to(fades, (num_p, num_antennas)) \
            if draws_p == 1 else math.sqrt(gain) * fades

    # IRS -> BS link (shared by all devices).
    dist_bi, cos_bs = _axis_cosine(bs, irs)
    _, cos_irs = _axis_cosine(irs, bs)
    gain_bi = path_loss.gain(dist_bi, path_loss.exponent_bs_irs)
    los_bi = np.outer(_steering(num_antennas, cos_bs),
                      _steering(num_elements, cos_irs).conj())
    fades_bi = _rician_mix(los_bi[None, :, :],
                           crandn(draws_p, num_antennas, num_elements),
                           fading.rice_bs_irs)
    bs_irs = math.sqrt(gain_bi) * (
        np.broadcast_to(fades_bi, (num_p, num_antennas, num_elements))
        if draws_p == 1 else fades_bi)

    # Device -> IRS links.
    irs_wd = np.empty((k_dev, num_p, num_elements), dtype=complex)
    for k in range(k_dev):
        dist, cosa = _axis_cosine(irs, positions[k])
        gain = path_loss.gain(dist, path_loss.exponent_irs_wd)
        los = _steering(num_elements, cosa)
        fades = _rician_mix(los[None, :], crandn(draws_p, num_elements),
                            fading.rice_irs_wd)
        irs_wd[k] = math.sqrt(gain) * np.broadcast_to(fades, (num_p, num_elements)) \
            if draws_p == 1 else math.sqrt(gain) * fades

    return ChannelSet(direct=np.ascontiguousarray(direct),
                      bs_irs=np.ascontiguousarray(bs_irs),
                      irs_wd=np.ascontiguousarray(irs_wd),
                      noise_power_w=noise_power_w,
                      transmit_power_w=transmit_power_w)


def effective_channels(channels: ChannelSet, reflection: np.ndarray) -> np.ndarray:
    """All combined device -> BS channels, shape (K, P, M).

    ``reflection`` is the (P, N) coefficient array; the combined channel is
    direct + bs_irs @ diag(reflection) @ irs_wd per device and subcarrier.
    """
    if reflection.shape != (channels.num_subcarriers, channels.num_elements):
        raise ConfigError(
            f"reflection shape {reflection.shape} does not match "
            f"({channels.num_subcarriers}, {channels.num_elements})")
    scaled = reflection[None, :, :] * channels.irs_wd        # (K, P, N)
    reflected = np.einsum("pmn,kpn->kpm", channels.bs_irs, scaled)
    return channels.direct + reflected


def effective_channel(channels: ChannelSet, reflection: np.ndarray,
                      k: int, p: int) -> np.ndarray:
    """Combined channel of device k on subcarrier p."""
    if not (0 <= k < channels.num_devices and 0 <= p < channels.num_subcarriers):
        raise ConfigError("device or subcarrier index out of range")
    return channels.direct[k, p] + channels.bs_irs[p] @ (
        reflection[p] * channels.irs_wd[k, p])


@dataclass(frozen=True)
class ComputingRanges:
    """Uniform sampling ranges for the per-device computing profile."""

    data_bits: tuple = (250e3, 350e3)
    cycles_per_bit: tuple = (700.0, 800.0)
    local_cpu: tuple = (4e8, 6e8)
    edge_cpu_total: float = 50e11


def synth_compute_profile(ranges: ComputingRanges, num_devices: int,
                          seed: int) -> ComputeProfile:
    """Draw a computing profile with equal weights.  Deterministic given seed."""
    rng = rng_for(seed, STREAM_PROFILE)
    data = np.round(rng.uniform(*ranges.data_bits, size=num_devices))
    cycles = rng.uniform(*ranges.cycles_per_bit, size=num_devices)
    local = rng.uniform(*ranges.local_cpu, size=num_devices)
    weights = np.full(num_devices, 1.0 / num_devices)
    return ComputeProfile(data_bits=data, cycles_per_bit=cycles,
                          local_cpu=local, edge_cpu_total=ranges.edge_cpu_total,
                          weights=weights)


@dataclass(eq=False)
class Scenario:
    """Everything one solve needs: channels, computing profile, carrier plan."""

    channels: ChannelSet
    profile: ComputeProfile
    plan: CarrierPlan
    reflect_params: ReflectionParams
    seed: int

    def without_irs(self) -> "Scenario":
        return replace(self, channels=self.channels.without_irs())


def synth_default_scenario(seed: int, *, geometry: Geometry = Geometry(),
                           path_loss: PathLossModel = PathLossModel(),
                           fading: FadingModel = FadingModel(),
                           plan: CarrierPlan = CarrierPlan(),
                           ranges: ComputingRanges = ComputingRanges(),
                           num_antennas: int = 4, num_elements: int = 20,
                           noise_power_w: float = 3.98e-15,
                           transmit_power_w: float = 1e-3,
                           params: ReflectionParams = ReflectionParams(),
                           ) -> Scenario:
    channels = synth_scenario(geometry, path_loss, fading, plan,
                              num_antennas, num_elements, seed,
                              noise_power_w=noise_power_w,
                              transmit_power_w=transmit_power_w)
    profile = synth_compute_profile(ranges, geometry.num_devices, seed)
    return Scenario(channels=channels, profile=profile, plan=plan,
                    reflect_params=params, seed=seed)
