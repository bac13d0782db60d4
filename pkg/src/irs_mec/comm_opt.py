"""Communication-side design: receivers, phase shifts, and dual updates.

The weighted latency of the offloaded bits is a sum of ratios in the rates.
It is handled in three nested layers:

* an outer damped fixed-point iteration on the per-device dual pair
  (chi, xi), accepting only steps that contract the squared residuals;
* a weighted-MSE alternating loop over the receive vectors and the phase
  shifts, with closed-form auxiliary weight/scalar updates, whose surrogate
  objective is non-decreasing at every block update by construction;
* exact per-block solvers: a norm-ball-constrained quadratic program per
  receive vector, and a one-dimensional search per IRS element (bracketing
  plus interval shrinking for continuous control, enumeration for discrete).

The surrogate maximised by the middle loop uses the natural logarithm so
that the weight update ``rho = 1 + sinr`` is its exact stationary point.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, InternalConsistencyError, NumericalError,
                     StalledLineSearchError)
from .reflection import (BandwidthMode, CarrierPlan, ReflectionMode,
                         ReflectionParams, build_reflection_matrices,
                         discrete_phase_set, eval_response)
from .scenario import ChannelSet, effective_channels


@dataclass(eq=False)
class DualState:
    """Sum-of-ratios multipliers and weighted-MSE auxiliaries."""

    chi: np.ndarray                  # (K,)
    xi: np.ndarray                   # (K,)
    rho: np.ndarray                  # (K, P), > 0
    upsilon: np.ndarray              # (K, P), complex
    step_exponent: int = 0

    def __post_init__(self):
        for name in ("chi", "xi", "rho"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} must be finite and non-negative")
        object.__setattr__(self, "upsilon",
                           np.asarray(self.upsilon, dtype=complex))

    @classmethod
    def fresh(cls, num_devices: int, num_subcarriers: int) -> "DualState":
        return cls(chi=np.zeros(num_devices), xi=np.zeros(num_devices),
                   rho=np.ones((num_devices, num_subcarriers)),
                   upsilon=np.zeros((num_devices, num_subcarriers), dtype=complex))


# ---------------------------------------------------------------------------
# Rates


def cross_gains(receivers: np.ndarray, heff: np.ndarray) -> np.ndarray:
    """Inner products u_{k,p}^H h_{j,p}, shape (P, K, K)."""
    return np.einsum("kpm,jpm->pkj", receivers.conj(), heff)


def _sinr_from_gains(gains: np.ndarray, p_tx: float, sigma2: float) -> np.ndarray:
    """SINR per device and subcarrier, shape (K, P)."""
    power = np.abs(gains) ** 2
    signal = np.einsum("pkk->pk", power)
    interference = power.sum(axis=2) - signal
    return (p_tx * signal / (p_tx * interference + sigma2)).T


def all_sinr(channels: ChannelSet, reflection: np.ndarray,
             receivers: np.ndarray) -> np.ndarray:
    heff = effective_channels(channels, reflection)
    return _sinr_from_gains(cross_gains(receivers, heff),
                            channels.transmit_power_w, channels.noise_power_w)


def sinr(channels: ChannelSet, reflection: np.ndarray, receivers: np.ndarray,
         k: int, p: int) -> float:
    return float(all_sinr(channels, reflection, receivers)[k, p])


def all_rates(channels: ChannelSet, reflection: np.ndarray,
              receivers: np.ndarray, plan: CarrierPlan) -> np.ndarray:
    """Total rate per device in bit/s, shape (K,)."""
    gamma = all_sinr(channels, reflection, receivers)
    return plan.subcarrier_bandwidth_hz * np.log2(1.0 + gamma).sum(axis=1)


def rate(channels: ChannelSet, reflection: np.ndarray, receivers: np.ndarray,
         plan: CarrierPlan, k: int) -> float:
    return float(all_rates(channels, reflection, receivers, plan)[k])


# ---------------------------------------------------------------------------
# Auxiliary-variable updates


def update_rho(gamma):
    """Optimal MSE weight, the inverse of the minimal MSE."""
    return 1.0 + gamma


def _all_upsilon(gains: np.ndarray, p_tx: float, sigma2: float) -> np.ndarray:
    """Minimum-MSE receive scalars, shape (K, P)."""
    total = p_tx * np.sum(np.abs(gains) ** 2, axis=2) + sigma2   # (P, K)
    signal = np.einsum("pkk->pk", gains)
    return (math.sqrt(p_tx) * signal / total).T


def update_upsilon(channels: ChannelSet, reflection: np.ndarray,
                   receivers: np.ndarray, k: int, p: int) -> complex:
    heff = effective_channels(channels, reflection)
    gains = cross_gains(receivers, heff)
    return complex(_all_upsilon(gains, channels.transmit_power_w,
                                channels.noise_power_w)[k, p])


def _mse_matrix(gains: np.ndarray, upsilon: np.ndarray, p_tx: float,
                sigma2: float) -> np.ndarray:
    """Modified MSE per device and subcarrier, shape (K, P)."""
    total = p_tx * np.sum(np.abs(gains) ** 2, axis=2).T + sigma2  # (K, P)
    signal = np.einsum("pkk->pk", gains).T
    return (np.abs(upsilon) ** 2 * total
            - 2.0 * math.sqrt(p_tx) * np.real(np.conj(upsilon) * signal) + 1.0)


def wmmse_surrogate(gains: np.ndarray, dual: DualState, p_tx: float,
                    sigma2: float) -> float:
    """Natural-log weighted-MSE surrogate; every block update increases it."""
    mse = _mse_matrix(gains, dual.upsilon, p_tx, sigma2)
    weights = (dual.chi * dual.xi)[:, None]
    return float(np.sum(weights * (np.log(dual.rho) - dual.rho * mse + 1.0)))


# ---------------------------------------------------------------------------
# Receive-vector subproblem: min u^H a u - 2 Re(u^H v), ||u|| <= 1


def solve_unit_ball_qp(a: np.ndarray, v: np.ndarray,
                       incumbent: np.ndarray | None = None,
                       norm_tol: float = 1e-10) -> np.ndarray:
    """Exact minimiser of a PSD quadratic over the unit ball.

    Interior stationary points are taken when they exist inside the ball;
    otherwise the boundary multiplier is bisected (the solution norm is
    strictly decreasing in it).  A fully degenerate block (a = 0, v = 0)
    keeps the incumbent since the objective is indifferent.
    """
    u, = _solve_unit_ball_batch(a[None], v[None],
                                None if incumbent is None else incumbent[None],
                                norm_tol)
    return u


def _solve_unit_ball_batch(a: np.ndarray, v: np.ndarray,
                           incumbent: np.ndarray | None,
                           norm_tol: float = 1e-10) -> np.ndarray:
    nblk, m = v.shape
    a = 0.5 * (a + np.conj(np.swapaxes(a, 1, 2)))
    out = np.zeros((nblk, m), dtype=complex)
    vnorm = np.linalg.norm(v, axis=1)
    azero = np.max(np.abs(a).reshape(nblk, -1), axis=1) == 0.0
    degenerate = (vnorm == 0.0) & azero
    if incumbent is not None and np.any(degenerate):
        keep = incumbent[degenerate]
        scale = np.maximum(1.0, np.linalg.norm(keep, axis=1))[:, None]
        out[degenerate] = keep / scale

    todo = ~degenerate
    if not np.any(todo):
        return out

    pinv = np.linalg.pinv(a[todo], hermitian=True)
    u0 = np.einsum("bij,bj->bi", pinv, v[todo])
    residual = np.linalg.norm(np.einsum("bij,bj->bi", a[todo], u0) - v[todo],
                              axis=1)
    stationary = residual <= 1e-9 * np.maximum(vnorm[todo], 1e-300)
    inside = np.linalg.norm(u0, axis=1) <= 1.0
    interior = stationary & inside
    idx_todo = np.flatnonzero(todo)
    out[idx_todo[interior]] = u0[interior]

    boundary = idx_todo[~interior]
    if boundary.size:
        out[boundary] = _boundary_solution(a[boundary], v[boundary], norm_tol)
    return out


def _boundary_solution(a: np.ndarray, v: np.ndarray, norm_tol: float) -> np.ndarray:
    nblk, m = v.shape
    eye = np.eye(m)

    def norms(lam):
        shifted = a + lam[:, None, None] * eye
        sol = np.linalg.solve(shifted, v[..., None])[..., 0]
        return sol, np.linalg.norm(sol, axis=1)

    lam_hi = np.where(np.linalg.norm(v, axis=1) > 0,
                      np.linalg.norm(v, axis=1), 1.0)
    for _ in range(200):
        _, n_hi = norms(lam_hi)
        grow = n_hi >= 1.0
        if not np.any(grow):
            break
        lam_hi = np.where(grow, lam_hi * 2.0, lam_hi)
    else:
        raise NumericalError("unit-ball QP: no upper multiplier bracket found")

    lam_lo = np.zeros(nblk)
    sol = None
    for _ in range(300):
        lam = 0.5 * (lam_lo + lam_hi)
        sol, n = norms(lam)
        if np.max(np.abs(n - 1.0)) <= norm_tol:
            break
        bigger = n > 1.0
        lam_lo = np.where(bigger, lam, lam_lo)
        lam_hi = np.where(bigger, lam_hi, lam)
    else:
        raise NumericalError(
            "unit-ball QP: boundary bisection failed to reach norm tolerance "
            f"(worst residual {np.max(np.abs(np.linalg.norm(sol, axis=1) - 1.0)):.3e})")
    scale = np.maximum(1.0, np.linalg.norm(sol, axis=1))[:, None]
    return sol / scale


def solve_receivers(channels: ChannelSet, reflection: np.ndarray,
                    dual: DualState,
                    incumbent: np.ndarray | None = None) -> np.ndarray:
    """Per-(device, subcarrier) optimal receive vectors, shape (K, P, M)."""
    heff = effective_channels(channels, reflection)
    return _solve_receivers_from_heff(channels, heff, dual, incumbent)


def _solve_receivers_from_heff(channels: ChannelSet, heff: np.ndarray,
                               dual: DualState,
                               incumbent: np.ndarray | None) -> np.ndarray:
    k_dev, num_p, m = heff.shape
    p_tx = channels.transmit_power_w
    gram = np.einsum("jpm,jpn->pmn", heff, heff.conj())     # sum_j h h^H
    coeff = (dual.chi * dual.xi)[:, None] * dual.rho         # (K, P)
    a_scale = coeff * p_tx * np.abs(dual.upsilon) ** 2
    a = a_scale[:, :, None, None] * gram[None, :, :, :]
    v = (coeff * math.sqrt(p_tx) * np.conj(dual.upsilon))[:, :, None] * heff
    flat_inc = None if incumbent is None else incumbent.reshape(-1, m)
    flat = _solve_unit_ball_batch(a.reshape(-1, m, m), v.reshape(-1, m), flat_inc)
    return flat.reshape(k_dev, num_p, m)


# ---------------------------------------------------------------------------
# Per-element phase-shift subproblem


@dataclass(eq=False)
class BpsSubproblemData:
    """Quadratic form of the phase-shift subproblem per subcarrier."""

    lam: np.ndarray    # (P, N, N), Hermitian PSD
    nu: np.ndarray     # (P, N)
    zeta: np.ndarray   # (P,)

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=complex)
        herm_gap = np.max(np.abs(lam - np.conj(np.swapaxes(lam, 1, 2)))) \
            if lam.size else 0.0
        scale = np.max(np.abs(lam)) if lam.size else 0.0
        if scale > 0 and herm_gap > 1e-10 * scale:
            raise ConfigError("phase-shift quadratic is not Hermitian")
        object.__setattr__(self, "lam",
                           0.5 * (lam + np.conj(np.swapaxes(lam, 1, 2))))

    def check_psd(self, rel_tol: float = 1e-8) -> None:
        for p in range(self.lam.shape[0]):
            trace = float(np.real(np.trace(self.lam[p])))
            if self.lam.shape[1] and np.min(
                    np.linalg.eigvalsh(self.lam[p])) < -rel_tol * max(trace, 1e-300):
                raise ConfigError(f"quadratic block {p} is not PSD")


def assemble_bps_data(channels: ChannelSet, receivers: np.ndarray,
                      dual: DualState, plan: CarrierPlan,
                      params: ReflectionParams) -> BpsSubproblemData:
    """Build the per-subcarrier quadratic form in the reflection coefficients."""
    del plan, params  # the quadratic depends on channels and duals only
    p_tx = channels.transmit_power_w
    coeff = (dual.chi * dual.xi)[:, None] * dual.rho               # (K, P)
    w_quad = coeff * p_tx * np.abs(dual.upsilon) ** 2              # (K, P)

    # Row vectors t_{k,p} = u^H G and the summed fade correlation per p.
    t = np.einsum("kpm,pmn->pkn", receivers.conj(), channels.bs_irs)  # (P,K,N)
    corr = np.einsum("jpn,jpm->pnm", channels.irs_wd.conj(), channels.irs_wd)
    lam = np.einsum("kp,pkn,pkm->pnm", w_quad, t.conj(), t) * corr

    hbar = np.einsum("kpm,jpm->pkj", receivers.conj(), channels.direct)  # (P,K,K)
    # sum_j conj(fade_j) * hbar_{k,j} per element
    mix = np.einsum("jpn,pkj->pkn", channels.irs_wd.conj(), hbar)
    nu = np.einsum("kp,pkn,kp->pn", coeff,
                   t.conj() * (channels.irs_wd.conj().transpose(1, 0, 2)),
                   math.sqrt(p_tx) * dual.upsilon) \
        - np.einsum("kp,pkn->pn", w_quad, t.conj() * mix)

    hbar_kk = np.einsum("pkk->pk", hbar)
    zeta = np.einsum("kp,pk->p", w_quad, np.sum(np.abs(hbar) ** 2, axis=2)) \
        - 2.0 * np.einsum("kp,pk->p", coeff * math.sqrt(p_tx),
                          np.real(np.conj(dual.upsilon).T * hbar_kk))
    return BpsSubproblemData(lam=lam, nu=nu, zeta=np.real(zeta))


def omega_for_element(data: BpsSubproblemData, phi: np.ndarray,
                      n: int) -> np.ndarray:
    """Linear coefficient seen by element n given the other elements, (P,)."""
    row = np.einsum("pn,pn->p", data.lam[:, n, :], phi)
    return row - data.lam[:, n, n] * phi[:, n] - data.nu[:, n]


def quad_objective(data: BpsSubproblemData, phi: np.ndarray) -> float:
    """Full quadratic objective sum_p (phi^H L phi - 2 Re(phi^H nu) + zeta)."""
    quad = np.einsum("pn,pnm,pm->p", phi.conj(), data.lam, phi).real
    lin = 2.0 * np.real(np.einsum("pn,pn->p", phi.conj(), data.nu))
    return float(np.sum(quad - lin + data.zeta))


def _response_at(theta, plan: CarrierPlan, params: ReflectionParams,
                 mode: ReflectionMode):
    """Amplitude and phase at every subcarrier for candidate angles.

    ``theta`` has shape (C,); returns (C, P) arrays.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    freqs = plan.subcarrier_frequencies_hz
    if mode is ReflectionMode.IDEAL:
        amp = np.ones((theta.size, freqs.size))
        phase = np.broadcast_to(theta[:, None], (theta.size, freqs.size))
        return amp, phase
    return eval_response(theta[:, None], freqs[None, :], params)


@functools.lru_cache(maxsize=64)
def _discrete_response_table(params: ReflectionParams, plan: CarrierPlan,
                             bits: int, mode: ReflectionMode):
    members = discrete_phase_set(bits)
    amp, phase = _response_at(members, plan, params, mode)
    return members, amp, phase


def _element_evaluator(omega: np.ndarray, lam_diag: np.ndarray,
                       plan: CarrierPlan, params: ReflectionParams,
                       mode: ReflectionMode):
    """Fast closure for the per-element objective on candidate-angle arrays.

    Used in the sweep hot loop; skips domain validation, so callers must
    construct candidates inside [-pi, pi].
    """
    mag2 = 2.0 * np.abs(omega)
    ang = np.angle(omega)
    lam = np.asarray(lam_diag, dtype=float)
    if mode is ReflectionMode.IDEAL:
        lam_sum = float(np.sum(lam))

        def evaluate(theta):
            theta = np.asarray(theta, dtype=float)
            return (mag2[None, :]
                    * np.cos(ang[None, :] - theta[:, None])).sum(axis=1) + lam_sum

        return evaluate

    a, b, c = params.alpha, params.beta, params.ctilde
    f_ghz = plan.subcarrier_frequencies_hz / 1e9

    def evaluate(theta):
        theta = np.asarray(theta, dtype=float)
        slope = a[1] * np.sin(b[1] * theta + c[1]) \
            + a[2] * np.sin(b[2] * theta + c[2])
        intercept = a[3] * np.sin(b[3] * theta + c[3]) \
            + a[4] * np.sin(b[4] * theta + c[4])
        phase = slope[:, None] * f_ghz[None, :] + intercept[:, None]
        amp = a[0] * phase * phase + b[0] * phase + c[0]
        return (mag2[None, :] * amp * np.cos(ang[None, :] - phase)
                + lam[None, :] * amp * amp).sum(axis=1)

    return evaluate


def g3_curve(theta, omega: np.ndarray, lam_diag: np.ndarray,
             plan: CarrierPlan, params: ReflectionParams,
             mode: ReflectionMode = ReflectionMode.PRACTICAL) -> np.ndarray:
    """Per-element objective at each candidate angle.

    ``omega``/``lam_diag`` have shape (P,); result matches ``theta``'s shape.
    """
    amp, phase = _response_at(theta, plan, params, mode)
    mag = np.abs(omega)
    ang = np.angle(omega)
    vals = (2.0 * mag[None, :] * amp * np.cos(ang[None, :] - phase)
            + lam_diag[None, :] * amp * amp).sum(axis=1)
    return vals if np.ndim(theta) else float(vals[0])


def g3(theta_n: float, n: int, data: BpsSubproblemData, phi: np.ndarray,
       plan: CarrierPlan, params: ReflectionParams,
       mode: ReflectionMode = ReflectionMode.PRACTICAL) -> float:
    omega = omega_for_element(data, phi, n)
    lam_diag = np.real(data.lam[:, n, n])
    return float(g3_curve(theta_n, omega, lam_diag, plan, params, mode))


@dataclass(frozen=True)
class LineSearchOptions:
    """Knobs of the continuous per-element search."""

    step0: float = math.pi / 16.0
    shrink: float = 0.5
    tol: float = 1e-4
    coarse_points: int = 33


def _march_ladder(f, start: float, f_start: float, step: float, limit: float):
    """Fixed-step march from ``start`` toward ``limit`` until the value rises.

    Returns (last descending point, its value, bracketing outer point) or
    None when the very first step already rises.  The whole ladder is
    evaluated in one call; only the prefix up to the first rise is used.
    """
    span = abs(limit - start)
    count = int(math.ceil(span / step - 1e-12))
    if count == 0:
        return None
    direction = math.copysign(1.0, limit - start)
    pts = start + direction * step * np.arange(1, count + 1)
    pts[-1] = limit
    vals = f(pts)
    seq = np.concatenate([[f_start], vals])
    rises = np.flatnonzero(np.diff(seq) >= 0.0)
    if rises.size == 0:
        # descended all the way to the domain edge
        best = count - 1
        outer = pts[best]
        return float(pts[best]), float(vals[best]), float(outer)
    first = int(rises[0])
    if first == 0:
        return None
    return (float(pts[first - 1]), float(vals[first - 1]), float(pts[first]))


def optimize_bps_element_continuous(
        incumbent: float, omega: np.ndarray, lam_diag: np.ndarray,
        plan: CarrierPlan, params: ReflectionParams,
        mode: ReflectionMode = ReflectionMode.PRACTICAL,
        options: LineSearchOptions = LineSearchOptions()) -> float:
    """Bracket, shrink, then compare endpoints and the incumbent.

    The returned angle never evaluates worse than the incumbent, making the
    sweep provably non-increasing.
    """
    f = _element_evaluator(omega, lam_diag, plan, params, mode)
    lo_dom, hi_dom = -math.pi, math.pi

    # Seed the march from the better of the incumbent and a coarse scan so a
    # multi-basin objective cannot trap the bracket in a bad valley.
    grid = np.linspace(lo_dom, hi_dom, options.coarse_points)
    grid_vals = f(grid)
    best_grid = int(np.argmin(grid_vals))
    f_incumbent = float(f(np.array([incumbent]))[0])
    if f_incumbent <= grid_vals[best_grid]:
        start, f_start = incumbent, f_incumbent
    else:
        start, f_start = float(grid[best_grid]), float(grid_vals[best_grid])

    step = options.step0
    fwd = _march_ladder(f, start, f_start, step, hi_dom)
    if fwd is not None:
        mid, f_mid, outer = fwd
        lo, hi = min(start, outer), max(start, outer)
    else:
        bwd = _march_ladder(f, start, f_start, step, lo_dom)
        if bwd is not None:
            mid, f_mid, outer = bwd
            lo, hi = min(start, outer), max(start, outer)
        else:
            # Local minimum (or plateau) at the start point itself.
            mid, f_mid = start, f_start
            lo = max(start - step, lo_dom)
            hi = min(start + step, hi_dom)

    while hi - lo > options.tol:
        q1 = mid - options.shrink * (mid - lo)
        q2 = mid + options.shrink * (hi - mid)
        f_q = f(np.array([q1, q2]))
        if f_q[0] <= f_mid and f_q[0] <= f_q[1]:
            hi, mid, f_mid = mid, q1, float(f_q[0])
        elif f_q[1] <= f_mid:
            lo, mid, f_mid = mid, q2, float(f_q[1])
        else:
            lo, hi = q1, q2

    candidates = np.array([incumbent, mid, lo_dom, hi_dom])
    vals = f(candidates)
    return float(candidates[int(np.argmin(vals))])


def optimize_bps_element_discrete(
        incumbent: float, omega: np.ndarray, lam_diag: np.ndarray,
        plan: CarrierPlan, params: ReflectionParams, bits: int,
        mode: ReflectionMode = ReflectionMode.PRACTICAL) -> float:
    """Enumerate the discrete phase set; ties go to the smaller angle."""
    del incumbent  # the set contains it; first-minimum picks smaller angles
    members, amp, phase = _discrete_response_table(params, plan, bits, mode)
    mag = np.abs(omega)
    ang = np.angle(omega)
    vals = (2.0 * mag[None, :] * amp * np.cos(ang[None, :] - phase)
            + lam_diag[None, :] * amp * amp).sum(axis=1)
    return float(members[int(np.argmin(vals))])


def _phi_column(theta_n: float, plan: CarrierPlan, params: ReflectionParams,
                mode: ReflectionMode) -> np.ndarray:
    amp, phase = _response_at(np.array([theta_n]), plan, params, mode)
    return (amp * np.exp(1j * phase))[0]


def sweep_bps(theta: np.ndarray, phi: np.ndarray, data: BpsSubproblemData,
              plan: CarrierPlan, params: ReflectionParams,
              mode: ReflectionMode, bits: int | None,
              options: LineSearchOptions = LineSearchOptions(),
              max_sweeps: int = 8, theta_tol: float = 1e-4):
    """Cyclic element updates until the phase vector stops moving.

    Mutates and returns copies of ``theta`` and ``phi``.  The quadratic
    objective is asserted non-increasing across the whole sweep phase.
    """
    theta = theta.copy()
    phi = phi.copy()
    n_elem = theta.size
    if n_elem == 0:
        return theta, phi, 0
    obj_before = quad_objective(data, phi)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_move = 0.0
        for n in range(n_elem):
            omega = omega_for_element(data, phi, n)
            lam_diag = np.real(data.lam[:, n, n])
            if bits is None:
                new = optimize_bps_element_continuous(
                    float(theta[n]), omega, lam_diag, plan, params, mode,
                    options)
            else:
                new = optimize_bps_element_discrete(
                    float(theta[n]), omega, lam_diag, plan, params, bits, mode)
            move = abs(new - theta[n])
            if move > 0.0:
                theta[n] = new
                phi[:, n] = _phi_column(new, plan, params, mode)
            max_move = max(max_move, move)
        if max_move <= (0.0 if bits is not None else theta_tol):
            break
    obj_after = quad_objective(data, phi)
    slack = 1e-9 * max(abs(obj_before), 1.0)
    if obj_after > obj_before + slack:
        raise InternalConsistencyError(
            f"element sweep increased the quadratic objective: "
            f"{obj_before:.6e} -> {obj_after:.6e}")
    return theta, phi, sweeps


# ---------------------------------------------------------------------------
# Alternating receive-vector / phase-shift loop


@dataclass
class InnerLoopOptions:
    reflection_mode: ReflectionMode = ReflectionMode.PRACTICAL
    resolution_bits: int | None = None
    tol: float = 1e-4
    max_iterations: int = 40
    max_sweeps: int = 8
    theta_tol: float = 1e-4
    line_search: LineSearchOptions = field(default_factory=LineSearchOptions)
    freeze_bps: bool = False
    monotonic_slack: float = 1e-8


def wmmse_inner(channels: ChannelSet, plan: CarrierPlan,
                params: ReflectionParams, dual: DualState,
                receivers: np.ndarray, theta: np.ndarray,
                options: InnerLoopOptions):
    """Alternate auxiliary scalars, weights, receivers and phases.

    Returns updated (receivers, theta, trace) where ``trace`` holds the
    surrogate value after each full round.  The surrogate must not decrease
    at any block update; violations raise.
    """
    mode, bits = options.reflection_mode, options.resolution_bits
    p_tx, sigma2 = channels.transmit_power_w, channels.noise_power_w
    phi = build_reflection_matrices(theta, plan, params, mode)
    heff = effective_channels(channels, phi)
    gains = cross_gains(receivers, heff)

    def surrogate():
        return wmmse_surrogate(gains, dual, p_tx, sigma2)

    def guard(tag, before, after):
        if after < before - options.monotonic_slack * max(abs(before), 1e-12):
            raise InternalConsistencyError(
                f"surrogate decreased during {tag}: {before:.9e} -> {after:.9e}")

    trace = []
    value = None
    for _ in range(options.max_iterations):
        # Receive scalars (exact MMSE), then weights (exact inverse MSE).
        last = surrogate() if value is None else value
        dual.upsilon = _all_upsilon(gains, p_tx, sigma2)
        after = surrogate()
        guard("receive-scalar update", last, after)
        last = after

        gamma = _sinr_from_gains(gains, p_tx, sigma2)
        dual.rho = update_rho(gamma)
        after = surrogate()
        guard("weight update", last, after)
        last = after

        receivers = _solve_receivers_from_heff(channels, heff, dual, receivers)
        gains = cross_gains(receivers, heff)
        after = surrogate()
        guard("receiver update", last, after)
        last = after

        if not options.freeze_bps and theta.size:
            data = assemble_bps_data(channels, receivers, dual, plan, params)
            theta, phi, _ = sweep_bps(
                theta, phi, data, plan, params, mode, bits,
                options=options.line_search, max_sweeps=options.max_sweeps,
                theta_tol=options.theta_tol)
            heff = effective_channels(channels, phi)
            gains = cross_gains(receivers, heff)
            after = surrogate()
            guard("phase sweep", last, after)
            last = after

        trace.append(last)
        if value is not None and abs(last - value) <= options.tol * max(abs(last), 1e-300):
            value = last
            break
        value = last
    return receivers, theta, trace


# ---------------------------------------------------------------------------
# Outer dual updates


@dataclass
class OuterLoopOptions:
    gamma: float = 0.5          # damping base
    tau: float = 0.1            # contraction margin
    eps2: float = 1e-3          # residual tolerance
    l2_max: int = 30
    line_search_max: int = 64


@dataclass
class OuterResult:
    receivers: np.ndarray
    theta: np.ndarray
    dual: DualState
    objective_trace: list          # sum_k w_k d_k / R_k per iteration
    merit_pre: list
    merit_post: list
    first_inner_trace: list
    iterations: int = 0


def newton_like_outer(channels: ChannelSet, plan: CarrierPlan,
                      params: ReflectionParams, offload_bits: np.ndarray,
                      weights: np.ndarray, receivers: np.ndarray,
                      theta: np.ndarray, inner: InnerLoopOptions,
                      outer: OuterLoopOptions,
                      dual: DualState | None = None) -> OuterResult:
    """Damped fixed-point iteration on (chi, xi) around the inner loop.

    The duals start at their exact fixed-point values for the warm-start
    rates, so the loop terminates as soon as the inner loop stops moving the
    rates.  Devices with zero rate are held fully local and excluded.
    """
    offload_bits = np.asarray(offload_bits, dtype=float)
    weights = np.asarray(weights, dtype=float)
    mode = inner.reflection_mode
    phi = build_reflection_matrices(theta, plan, params, mode)
    rates = all_rates(channels, phi, receivers, plan)
    active = rates > 0.0

    k_dev, num_p = channels.num_devices, channels.num_subcarriers
    if dual is None:
        dual = DualState.fresh(k_dev, num_p)
    chi = np.where(active, 1.0 / np.maximum(rates, 1e-300), 0.0)
    xi = np.where(active, weights * offload_bits / np.maximum(rates, 1e-300), 0.0)
    dual.chi, dual.xi = chi, xi

    result = OuterResult(receivers=receivers, theta=theta, dual=dual,
                         objective_trace=[], merit_pre=[], merit_post=[],
                         first_inner_trace=[])

    target = weights * offload_bits
    for iteration in range(1, outer.l2_max + 1):
        receivers, theta, inner_trace = wmmse_inner(
            channels, plan, params, dual, receivers, theta, inner)
        if iteration == 1:
            result.first_inner_trace = inner_trace
        phi = build_reflection_matrices(theta, plan, params, mode)
        rates = all_rates(channels, phi, receivers, plan)
        result.objective_trace.append(float(np.sum(
            np.where(rates > 0, target / np.maximum(rates, 1e-300),
                     np.where(target > 0, np.inf, 0.0)))))
        result.iterations = iteration

        omega_res = np.where(active, dual.chi * rates - 1.0, 0.0)
        psi_res = np.where(active, dual.xi * rates - target, 0.0)
        merit = float(np.sum(omega_res ** 2 + psi_res ** 2))
        if (np.max(np.abs(omega_res), initial=0.0) <= outer.eps2
                and np.max(np.abs(psi_res), initial=0.0) <= outer.eps2):
            break

        accepted = None
        for i in range(1, outer.line_search_max + 1):
            damp = outer.gamma ** i
            chi_try = dual.chi - damp * omega_res / np.maximum(rates, 1e-300)
            xi_try = dual.xi - damp * psi_res / np.maximum(rates, 1e-300)
            omega_try = np.where(active, chi_try * rates - 1.0, 0.0)
            psi_try = np.where(active, xi_try * rates - target, 0.0)
            merit_try = float(np.sum(omega_try ** 2 + psi_try ** 2))
            if merit_try <= (1.0 - outer.tau * damp) ** 2 * merit:
                accepted = (i, chi_try, xi_try, merit_try)
                break
        if accepted is None:
            raise StalledLineSearchError(
                f"no damping exponent up to {outer.line_search_max} contracted "
                f"the residuals (merit {merit:.3e})")
        i, chi_new, xi_new, merit_new = accepted
        dual.chi = np.maximum(chi_new, 0.0)
        dual.xi = np.maximum(xi_new, 0.0)
        dual.step_exponent = i
        result.merit_pre.append(merit)
        result.merit_post.append(merit_new)

    result.receivers, result.theta, result.dual = receivers, theta, dual
    return result
