"""Frequency-dependent reflection response of IRS elements.

Each element is configured by a basic phase shift (BPS) theta, defined as the
phase realised at the carrier frequency.  Over a wideband signal the realised
phase follows a straight line in frequency whose slope and intercept are
sinusoidal functions of theta, and the realised amplitude is a quadratic in
the realised phase:

    amplitude(theta, f) = a1 * phase^2 + b1 * phase + c1
    phase(theta, f)     = F1(theta) * f_GHz + F2(theta)
    F1(theta) = a2 sin(b2 theta + c2) + a3 sin(b3 theta + c3)
    F2(theta) = a4 sin(b4 theta + c4) + a5 sin(b5 theta + c5)

The coefficient fit expects the frequency in GHz; all public entry points take
Hz and convert internally.  The idealised model (unit amplitude, phase equal
to theta at every frequency) is available for comparison.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ModelEvaluationError, PassivityViolation

GHZ = 1e9

# Coefficients fitted for a 2.4 GHz / 100 MHz varactor design.
DEFAULT_ALPHA = (0.06, 11.27, 10.88, 89.64, 26.11)
DEFAULT_BETA = (0.02, 0.008996, 0.9799, 0.01268, 0.9798)
DEFAULT_CTILDE = (0.5736, -1.897, -1.471, 0.2899, 1.673)

# A passive reflector cannot amplify, so the strict bound is 1 (plus float
# slack).  The default quadratic fit overshoots this near |theta| ~ pi (its
# maximum over the 2.4 GHz band is about 1.243), which is an artifact of
# fitting a saturating curve with a parabola.  FITTED_AMPLITUDE_CEILING is the
# documented ceiling of that stock fit; amplitudes above it indicate a
# corrupted or mis-scaled coefficient file rather than fit overshoot.
STRICT_AMPLITUDE_BOUND = 1.0 + 1e-6
FITTED_AMPLITUDE_CEILING = 1.25

TWO_PI = 2.0 * math.pi


class ReflectionMode(enum.Enum):
    PRACTICAL = "practical"
    IDEAL = "ideal"


class BandwidthMode(enum.Enum):
    """How much bandwidth each subcarrier rate term is credited with."""

    PHYSICAL_SPLIT = "physical_split"  # B / P per subcarrier
    FULL_BAND = "full_band"            # B per subcarrier


@dataclass(frozen=True)
class ReflectionParams:
    """Coefficient triple {alpha_i, beta_i, ctilde_i}, i = 1..5."""

    alpha: tuple = DEFAULT_ALPHA
    beta: tuple = DEFAULT_BETA
    ctilde: tuple = DEFAULT_CTILDE

    def __post_init__(self):
        for name, coeffs in (("alpha", self.alpha), ("beta", self.beta),
                             ("ctilde", self.ctilde)):
            if len(coeffs) != 5:
                raise ConfigError(f"{name} must have 5 entries, got {len(coeffs)}")
            if not all(math.isfinite(c) for c in coeffs):
                raise ConfigError(f"{name} contains non-finite coefficients")
            object.__setattr__(self, name, tuple(float(c) for c in coeffs))

    @classmethod
    def from_json(cls, path) -> "ReflectionParams":
        """Load a coefficient override file ({"alpha": [...], ...})."""
        with open(path) as fh:
            raw = json.load(fh)
        unknown = set(raw) - {"alpha", "beta", "ctilde"}
        if unknown:
            raise ConfigError(f"unknown coefficient keys: {sorted(unknown)}")
        return cls(
            alpha=tuple(raw.get("alpha", DEFAULT_ALPHA)),
            beta=tuple(raw.get("beta", DEFAULT_BETA)),
            ctilde=tuple(raw.get("ctilde", DEFAULT_CTILDE)),
        )


@dataclass(frozen=True)
class CarrierPlan:
    """Carrier frequency, total bandwidth and subcarrier layout."""

    carrier_frequency_hz: float = 2.4e9
    bandwidth_hz: float = 100e6
    num_subcarriers: int = 8
    bandwidth_mode: BandwidthMode = BandwidthMode.PHYSICAL_SPLIT

    def __post_init__(self):
        if self.carrier_frequency_hz <= 0 or self.bandwidth_hz <= 0:
            raise ConfigError("carrier frequency and bandwidth must be positive")
        if self.num_subcarriers < 1:
            raise ConfigError("need at least one subcarrier")
        ratio = self.bandwidth_hz / self.carrier_frequency_hz
        if ratio >= 0.05:
            raise ConfigError(
                f"relative bandwidth B/fc = {ratio:.4f} outside the model's "
                "validity region (< 0.05)")
        p = np.arange(1, self.num_subcarriers + 1, dtype=float)
        offset = p - (self.num_subcarriers + 1) / 2.0
        freqs = self.carrier_frequency_hz + offset * (
            self.bandwidth_hz / self.num_subcarriers)
        freqs.setflags(write=False)
        object.__setattr__(self, "_frequencies", freqs)

    @property
    def subcarrier_frequencies_hz(self) -> np.ndarray:
        """Centre frequency of each subcarrier, symmetric about the carrier."""
        return self._frequencies

    @property
    def subcarrier_bandwidth_hz(self) -> float:
        if self.bandwidth_mode is BandwidthMode.PHYSICAL_SPLIT:
            return self.bandwidth_hz / self.num_subcarriers
        return self.bandwidth_hz


def wrap_angle(theta):
    """Map angles onto [-pi, pi) (pi wraps to -pi)."""
    return (np.asarray(theta) + math.pi) % TWO_PI - math.pi


def discrete_phase_set(bits: int) -> np.ndarray:
    """The 2**bits admissible BPS values {2*pi*i/2**bits - pi}."""
    if bits < 1:
        raise ConfigError("phase resolution needs at least one bit")
    count = 1 << bits
    return TWO_PI * np.arange(count) / count - math.pi


def quantize_bps(theta, bits: int):
    """Nearest member of the discrete phase set, by wrapped angular distance.

    Exact midpoints resolve toward the smaller set index.
    """
    members = discrete_phase_set(bits)
    step = TWO_PI / len(members)
    x = (wrap_angle(theta) + math.pi) / step
    lower = np.floor(x)
    frac = x - lower
    idx = np.where(frac > 0.5, lower + 1, lower).astype(int) % len(members)
    result = members[idx]
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return float(result)
    return result


@dataclass(frozen=True)
class BpsVector:
    """Per-element basic phase shifts plus their resolution.

    ``bits is None`` means continuous control; otherwise every entry must be
    a member of the discrete phase set.
    """

    theta: np.ndarray
    bits: int | None = None

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "theta", theta)
        if theta.size and (np.max(theta) > math.pi + 1e-12
                           or np.min(theta) < -math.pi - 1e-12):
            raise ConfigError("BPS entries must lie in [-pi, pi]")
        if self.bits is not None:
            if self.bits < 1:
                raise ConfigError("resolution bits must be >= 1")
            snapped = quantize_bps(theta, self.bits)
            if theta.size and np.max(np.abs(wrap_angle(theta - snapped))) > 1e-9:
                raise ConfigError("discrete BPS entries must belong to the "
                                  "admissible phase set")

    @property
    def size(self) -> int:
        return self.theta.size


def _phase_line(theta, params: ReflectionParams):
    """Slope (rad/GHz) and intercept (rad) of the phase-frequency line."""
    a, b, c = params.alpha, params.beta, params.ctilde
    theta = np.asarray(theta, dtype=float)
    slope = a[1] * np.sin(b[1] * theta + c[1]) + a[2] * np.sin(b[2] * theta + c[2])
    intercept = a[3] * np.sin(b[3] * theta + c[3]) + a[4] * np.sin(b[4] * theta + c[4])
    return slope, intercept


def eval_response(theta, frequency_hz, params: ReflectionParams = ReflectionParams()):
    """Amplitude and (unwrapped) phase of one element at one frequency.

    Broadcasts over ``theta`` and ``frequency_hz``.  The phase is returned as
    computed from the fitted line; no modular reduction is applied.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.size and (np.max(theta) > math.pi + 1e-9
                       or np.min(theta) < -math.pi - 1e-9):
        raise ModelEvaluationError("BPS outside [-pi, pi]")
    slope, intercept = _phase_line(theta, params)
    f_ghz = np.asarray(frequency_hz, dtype=float) / GHZ
    phase = slope * f_ghz + intercept
    a1, b1, c1 = params.alpha[0], params.beta[0], params.ctilde[0]
    amplitude = a1 * phase * phase + b1 * phase + c1
    if not (np.all(np.isfinite(amplitude)) and np.all(np.isfinite(phase))):
        raise ModelEvaluationError(
            f"non-finite reflection response at theta={theta}, f={frequency_hz}")
    return amplitude, phase


def build_reflection_matrices(theta: BpsVector, plan: CarrierPlan,
                              params: ReflectionParams = ReflectionParams(),
                              mode: ReflectionMode = ReflectionMode.PRACTICAL,
                              ) -> np.ndarray:
    """Per-subcarrier reflection coefficients, shape (P, N).

    Practical mode realises the fitted amplitude/phase response at each
    subcarrier frequency; ideal mode returns exp(j*theta) on every subcarrier.
    """
    angles = theta.theta if isinstance(theta, BpsVector) else np.atleast_1d(theta)
    num_sub = plan.num_subcarriers
    if mode is ReflectionMode.IDEAL:
        row = np.exp(1j * angles)
        return np.tile(row, (num_sub, 1))
    freqs = plan.subcarrier_frequencies_hz
    amp, phase = eval_response(angles[None, :], freqs[:, None], params)
    return amp * np.exp(1j * phase)


@dataclass(frozen=True)
class ModelReport:
    min_amplitude: float
    max_amplitude: float
    min_phase_slope: float
    max_phase_slope: float
    grid_size: int
    amplitude_bound: float = field(default=STRICT_AMPLITUDE_BOUND)


def validate_model(params: ReflectionParams, plan: CarrierPlan,
                   grid_size: int = 1024,
                   amplitude_bound: float = STRICT_AMPLITUDE_BOUND,
                   ) -> ModelReport:
    """Scan amplitude over a theta x subcarrier grid and enforce passivity.

    Raises :class:`PassivityViolation` when the amplitude exceeds
    ``amplitude_bound`` or drops to zero or below anywhere on the grid.  Note
    the stock coefficients overshoot 1 near |theta| ~ pi, so scanning them
    with the strict default bound fails by design; pass
    ``FITTED_AMPLITUDE_CEILING`` to distinguish fit overshoot from corrupted
    coefficient files.
    """
    if grid_size < 2:
        raise ConfigError("grid_size must be >= 2")
    thetas = np.linspace(-math.pi, math.pi, grid_size)
    freqs = plan.subcarrier_frequencies_hz
    amp, _ = eval_response(thetas[None, :], freqs[:, None], params)
    slope, _ = _phase_line(thetas, params)
    i_max = np.unravel_index(np.argmax(amp), amp.shape)
    i_min = np.unravel_index(np.argmin(amp), amp.shape)
    max_amp = float(amp[i_max])
    min_amp = float(amp[i_min])
    if max_amp > amplitude_bound:
        raise PassivityViolation(
            f"amplitude {max_amp:.6f} exceeds bound {amplitude_bound:.6f} at "
            f"theta={thetas[i_max[1]]:.6f}, f={freqs[i_max[0]]:.4e} Hz",
            theta=float(thetas[i_max[1]]), frequency_hz=float(freqs[i_max[0]]))
    if min_amp <= 0.0:
        raise PassivityViolation(
            f"amplitude {min_amp:.6f} is not positive at "
            f"theta={thetas[i_min[1]]:.6f}, f={freqs[i_min[0]]:.4e} Hz",
            theta=float(thetas[i_min[1]]), frequency_hz=float(freqs[i_min[0]]))
    return ModelReport(
        min_amplitude=min_amp,
        max_amplitude=max_amp,
        min_phase_slope=float(np.min(slope)),
        max_phase_slope=float(np.max(slope)),
        grid_size=grid_size,
        amplitude_bound=amplitude_bound,
    )
