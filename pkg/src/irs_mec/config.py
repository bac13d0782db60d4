"""Experiment configuration: JSON schema, defaults, and sweep expansion.

Every block mirrors the shipped system defaults, so an empty config runs the
stock scenario.  Unknown keys anywhere are rejected with their path to catch
typos before hours of compute.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .bcd import SCHEMES, SolverOptions
from .errors import ConfigError
from .reflection import BandwidthMode, CarrierPlan, ReflectionParams
from .scenario import (ComputingRanges, FadingModel, Geometry, PathLossModel,
                       Scenario, synth_compute_profile, synth_scenario)

SWEEP_PARAMETERS = ("M", "N", "b", "F_total", "L", "K")

_BANDWIDTH_MODES = {
    "physical_split": BandwidthMode.PHYSICAL_SPLIT,
    "full_band": BandwidthMode.FULL_BAND,
}


def _check_keys(block: dict, allowed, path: str):
    unknown = set(block) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {path}")


def _rice(value):
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity", "los"):
            return math.inf
        raise ConfigError(f"bad Rician factor {value!r}")
    return float(value)


@dataclass
class ScenarioConfig:
    geometry: Geometry = field(default_factory=Geometry)
    path_loss: PathLossModel = field(default_factory=PathLossModel)
    fading: FadingModel = field(default_factory=FadingModel)
    plan: CarrierPlan = field(default_factory=CarrierPlan)
    computing: ComputingRanges = field(default_factory=ComputingRanges)
    num_antennas: int = 4
    num_elements: int = 20
    transmit_power_w: float = 1e-3
    noise_power_w: float = 3.98e-15

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        _check_keys(raw, ("geometry", "path_loss", "fading", "carrier",
                          "power", "computing", "antennas", "irs_elements"),
                    "scenario")
        geo = dict(raw.get("geometry", {}))
        _check_keys(geo, ("bs_position", "irs_position", "wd_center_distance",
                          "wd_radius", "num_devices"), "scenario.geometry")
        pl = dict(raw.get("path_loss", {}))
        _check_keys(pl, ("reference_loss_db", "exponent_bs_wd",
                         "exponent_bs_irs", "exponent_irs_wd"),
                    "scenario.path_loss")
        fad = dict(raw.get("fading", {}))
        _check_keys(fad, ("rice_bs_wd", "rice_bs_irs", "rice_irs_wd",
                          "independent_subcarrier_fading"), "scenario.fading")
        car = dict(raw.get("carrier", {}))
        _check_keys(car, ("carrier_frequency_hz", "bandwidth_hz",
                          "num_subcarriers", "per_subcarrier_bandwidth_mode"),
                    "scenario.carrier")
        power = dict(raw.get("power", {}))
        _check_keys(power, ("transmit_power_w", "noise_power_w"),
                    "scenario.power")
        comp = dict(raw.get("computing", {}))
        _check_keys(comp, ("data_bits_range", "cycles_per_bit_range",
                           "local_cpu_range", "edge_cpu_total"),
                    "scenario.computing")

        for key in ("rice_bs_wd", "rice_bs_irs", "rice_irs_wd"):
            if key in fad:
                fad[key] = _rice(fad[key])
        if "per_subcarrier_bandwidth_mode" in car:
            mode = car.pop("per_subcarrier_bandwidth_mode")
            if mode not in _BANDWIDTH_MODES:
                raise ConfigError(
                    f"bad bandwidth mode {mode!r}; expected one of "
                    f"{sorted(_BANDWIDTH_MODES)}")
            car["bandwidth_mode"] = _BANDWIDTH_MODES[mode]
        for key in ("bs_position", "irs_position"):
            if key in geo:
                geo[key] = tuple(geo[key])
        for key in ("data_bits_range", "cycles_per_bit_range",
                    "local_cpu_range"):
            if key in comp:
                comp[key] = tuple(comp[key])
        comp_kwargs = {"data_bits": comp.get("data_bits_range"),
                       "cycles_per_bit": comp.get("cycles_per_bit_range"),
                       "local_cpu": comp.get("local_cpu_range"),
                       "edge_cpu_total": comp.get("edge_cpu_total")}
        comp_kwargs = {k: v for k, v in comp_kwargs.items() if v is not None}
        return cls(geometry=Geometry(**geo), path_loss=PathLossModel(**pl),
                   fading=FadingModel(**fad), plan=CarrierPlan(**car),
                   computing=ComputingRanges(**comp_kwargs),
                   num_antennas=int(raw.get("antennas", 4)),
                   num_elements=int(raw.get("irs_elements", 20)),
                   transmit_power_w=float(power.get("transmit_power_w", 1e-3)),
                   noise_power_w=float(power.get("noise_power_w", 3.98e-15)))

    def apply_sweep(self, parameter: str, value) -> "ScenarioConfig":
        if parameter == "M":
            return replace(self, num_antennas=int(value))
        if parameter == "N":
            return replace(self, num_elements=int(value))
        if parameter == "F_total":
            return replace(self, computing=replace(self.computing,
                                                   edge_cpu_total=float(value)))
        if parameter == "L":
            return replace(self, geometry=replace(self.geometry,
                                                  wd_center_distance=float(value)))
        if parameter == "K":
            return replace(self, geometry=replace(self.geometry,
                                                  num_devices=int(value)))
        if parameter == "b":
            return self                      # handled by solver options
        raise ConfigError(f"unknown sweep parameter {parameter!r}")

    def synth(self, seed: int, params: ReflectionParams) -> Scenario:
        channels = synth_scenario(self.geometry, self.path_loss, self.fading,
                                  self.plan, self.num_antennas,
                                  self.num_elements, seed,
                                  noise_power_w=self.noise_power_w,
                                  transmit_power_w=self.transmit_power_w)
        profile = synth_compute_profile(self.computing,
                                        self.geometry.num_devices, seed)
        return Scenario(channels=channels, profile=profile, plan=self.plan,
                        reflect_params=params, seed=seed)


def _solver_options(raw: dict) -> SolverOptions:
    _check_keys(raw, ("resolution", "resolution_bits", "eps", "l3_max",
                      "eps1", "l1_max", "eps2", "l2_max", "gamma", "tau",
                      "alg3_tol", "alg3_max", "max_sweeps", "theta_tol"),
                "solver")
    opts = SolverOptions()
    resolution = raw.get("resolution", "discrete")
    if resolution not in ("discrete", "continuous"):
        raise ConfigError("solver.resolution must be 'discrete' or 'continuous'")
    if resolution == "continuous":
        opts = replace(opts, resolution_bits=None)
    elif "resolution_bits" in raw:
        opts = replace(opts, resolution_bits=int(raw["resolution_bits"]))
    numeric = {k: type(getattr(opts, k))(raw[k]) for k in
               ("eps", "l3_max", "eps1", "l1_max", "eps2", "l2_max", "gamma",
                "tau", "alg3_tol", "alg3_max", "max_sweeps", "theta_tol")
               if k in raw}
    return replace(opts, **numeric)


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig
    solver: SolverOptions
    sweep_parameter: str
    sweep_values: list
    seeds: list
    schemes: list
    output_dir: str | None = None
    reflect_params: ReflectionParams = field(default_factory=ReflectionParams)
    measure_wall_time: bool = False

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        _check_keys(raw, ("scenario", "solver", "sweep", "seeds", "schemes",
                          "output_dir", "reflection_params",
                          "measure_wall_time"), "config root")
        sweep = raw.get("sweep")
        if not isinstance(sweep, dict):
            raise ConfigError("config requires a 'sweep' block")
        _check_keys(sweep, ("parameter", "values"), "sweep")
        parameter = sweep.get("parameter")
        if parameter not in SWEEP_PARAMETERS:
            raise ConfigError(f"sweep.parameter must be one of "
                              f"{SWEEP_PARAMETERS}, got {parameter!r}")
        values = list(sweep.get("values", []))
        if not values:
            raise ConfigError("sweep.values must be non-empty")
        if any((not isinstance(v, (int, float))) or v <= 0 for v in values):
            raise ConfigError("sweep.values must be positive numbers")
        seeds = list(raw.get("seeds", []))
        if not seeds or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("config requires at least one integer seed")
        schemes = list(raw.get("schemes", list(SCHEMES)))
        bad = [s for s in schemes if s not in SCHEMES]
        if bad or not schemes:
            raise ConfigError(f"schemes must be a non-empty subset of "
                              f"{SCHEMES}; got {schemes}")
        params = ReflectionParams()
        if "reflection_params" in raw:
            block = dict(raw["reflection_params"])
            _check_keys(block, ("alpha", "beta", "ctilde"), "reflection_params")
            params = ReflectionParams(
                alpha=tuple(block.get("alpha", params.alpha)),
                beta=tuple(block.get("beta", params.beta)),
                ctilde=tuple(block.get("ctilde", params.ctilde)))
        return cls(scenario=ScenarioConfig.from_dict(dict(raw.get("scenario", {}))),
                   solver=_solver_options(dict(raw.get("solver", {}))),
                   sweep_parameter=parameter, sweep_values=values,
                   seeds=seeds, schemes=schemes,
                   output_dir=raw.get("output_dir"),
                   reflect_params=params,
                   measure_wall_time=bool(raw.get("measure_wall_time", False)))

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config parse error in {path}: line "
                              f"{exc.lineno}, column {exc.colno}: {exc.msg}")
        if not isinstance(raw, dict):
            raise ConfigError(f"config root in {path} must be an object")
        return cls.from_dict(raw)

    def solver_for(self, sweep_value) -> SolverOptions:
        if self.sweep_parameter == "b":
            return replace(self.solver, resolution_bits=int(sweep_value))
        return self.solver

    def cells(self):
        """Every (scheme, sweep value, seed) cell in deterministic order."""
        for scheme in self.schemes:
            for value in self.sweep_values:
                for seed in self.seeds:
                    yield scheme, value, seed
