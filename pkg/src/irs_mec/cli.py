"""Command-line experiment harness.

Subcommands:

  irs-mec run <config.json> [--jobs N] [--out DIR]
      Execute every (scheme x sweep value x seed) cell, writing results.csv
      plus one trace_<cell>.csv per cell.  Output is byte-deterministic for a
      given config (wall time is logged to stderr; the CSV column carries it
      only when the config opts in, which breaks determinism).

  irs-mec validate-model [params.json]
      Scan the reflection amplitude over a 1024-point phase grid across the
      band and report extremes; exits 3 on a passivity violation.  The bound
      is the documented ceiling of the stock fit, so the shipped
      coefficients pass while corrupted files fail.

  irs-mec convergence <config.json> [--out DIR]
      One solve of the first seed, dumping every loop level's trace.

The environment variable IRS_MEC_SEED_OFFSET (integer) offsets every seed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .bcd import run_scheme
from .config import ExperimentConfig
from .errors import ConfigError, PassivityViolation
from .reflection import (FITTED_AMPLITUDE_CEILING, CarrierPlan,
                         ReflectionParams, validate_model)

RESULT_HEADER = ("scheme,sweep_param,sweep_value,seed,weighted_latency_s,"
                 "outer_iterations,wall_time_s,per_device_latency_s")


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _seed_offset() -> int:
    raw = os.environ.get("IRS_MEC_SEED_OFFSET", "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"IRS_MEC_SEED_OFFSET must be an integer, got {raw!r}")


def _cell_id(scheme: str, param: str, value, seed: int) -> str:
    return f"{scheme}_{param}={_fmt(value)}_seed{seed}"


def _run_cell(config: ExperimentConfig, scheme: str, value, seed: int):
    scenario_cfg = config.scenario.apply_sweep(config.sweep_parameter, value)
    scenario = scenario_cfg.synth(seed, config.reflect_params)
    opts = config.solver_for(value)
    start = time.perf_counter()
    result = run_scheme(scenario, scheme, opts)
    wall = time.perf_counter() - start
    sol = result.solution
    traces = {name: list(trace.values)
              for name, trace in result.traces.items()}
    return {"scheme": scheme, "value": value, "seed": seed,
            "weighted_latency_s": sol.weighted_latency,
            "per_device": list(sol.latencies),
            "outer_iterations": result.outer_iterations,
            "wall_time_s": wall, "traces": traces, "error": None}


def _run_cell_guarded(args):
    config, scheme, value, seed = args
    try:
        return _run_cell(config, scheme, value, seed)
    except Exception as exc:  # noqa: BLE001 - failed cells become rows
        return {"scheme": scheme, "value": value, "seed": seed,
                "error": f"{type(exc).__name__}: {exc}"}


def _write_results(config: ExperimentConfig, rows, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    with open(out_dir / "results.csv", "w", newline="") as fh:
        fh.write(RESULT_HEADER + "\n")
        for row in rows:
            if row["error"] is not None:
                failures += 1
                fields = [row["scheme"], config.sweep_parameter,
                          _fmt(row["value"]), str(row["seed"]), "infeasible",
                          "0", "0", "infeasible"]
            else:
                wall = row["wall_time_s"] if config.measure_wall_time else 0.0
                fields = [row["scheme"], config.sweep_parameter,
                          _fmt(row["value"]), str(row["seed"]),
                          _fmt(row["weighted_latency_s"]),
                          str(row["outer_iterations"]), _fmt(wall),
                          ";".join(_fmt(v) for v in row["per_device"])]
            fh.write(",".join(fields) + "\n")
    for row in rows:
        if row["error"] is not None:
            continue
        cell = _cell_id(row["scheme"], config.sweep_parameter, row["value"],
                        row["seed"])
        _write_traces(row["traces"], out_dir / f"trace_{cell}.csv")
    return failures


def _write_traces(traces: dict, path: Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["level", "iteration", "value"])
        for level in sorted(traces):
            for i, value in enumerate(traces[level], start=1):
                writer.writerow([level, i, repr(float(value))])


def read_traces(path) -> dict:
    """Inverse of the trace writer; values round-trip exactly."""
    traces: dict = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            traces.setdefault(row["level"], []).append(float(row["value"]))
    return traces


def cmd_run(args) -> int:
    try:
        config = ExperimentConfig.from_json(args.config)
        offset = _seed_offset()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if offset:
        config.seeds = [s + offset for s in config.seeds]
    out_dir = Path(args.out or config.output_dir or "out")
    cells = [(config, scheme, value, seed) for scheme, value, seed
             in config.cells()]
    t0 = time.perf_counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_run_cell_guarded, cells))
    else:
        rows = [_run_cell_guarded(cell) for cell in cells]
    failures = _write_results(config, rows, out_dir)
    for row in rows:
        if row["error"] is not None:
            print(f"cell {row['scheme']}/{row['value']}/seed{row['seed']} "
                  f"failed: {row['error']}", file=sys.stderr)
        else:
            print(f"cell {row['scheme']}/{row['value']}/seed{row['seed']}: "
                  f"{row['weighted_latency_s'] * 1e3:.4f} ms in "
                  f"{row['wall_time_s']:.2f} s", file=sys.stderr)
    print(f"wrote {len(rows)} rows to {out_dir / 'results.csv'} in "
          f"{time.perf_counter() - t0:.1f} s", file=sys.stderr)
    return 1 if failures else 0


def cmd_validate_model(args) -> int:
    try:
        params = (ReflectionParams.from_json(args.params) if args.params
                  else ReflectionParams())
    except (ConfigError, OSError, ValueError) as exc:
        print(f"coefficient file error: {exc}", file=sys.stderr)
        return 2
    plan = CarrierPlan()
    try:
        report = validate_model(params, plan, grid_size=1024,
                                amplitude_bound=FITTED_AMPLITUDE_CEILING)
    except PassivityViolation as exc:
        print(f"passivity violation: {exc}", file=sys.stderr)
        return 3
    print(f"amplitude range    [{report.min_amplitude:.6f}, "
          f"{report.max_amplitude:.6f}] (bound {report.amplitude_bound})")
    print(f"phase slope range  [{report.min_phase_slope:.4f}, "
          f"{report.max_phase_slope:.4f}] rad/GHz")
    if report.max_amplitude > 1.0:
        print("note: the fitted quadratic exceeds unit amplitude near "
              "|theta| ~ pi; this is a known artifact of the stock fit")
    return 0


def cmd_convergence(args) -> int:
    try:
        config = ExperimentConfig.from_json(args.config)
        offset = _seed_offset()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    seed = config.seeds[0] + offset
    value = config.sweep_values[0]
    scenario_cfg = config.scenario.apply_sweep(config.sweep_parameter, value)
    scenario = scenario_cfg.synth(seed, config.reflect_params)
    result = run_scheme(scenario, "ProposedPractical",
                        config.solver_for(value))
    out_dir = Path(args.out or config.output_dir or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "trace_convergence.csv"
    _write_traces({name: list(trace.values)
                   for name, trace in result.traces.items()}, path)
    outer = result.traces["outer"].values
    print(f"outer iterations: {len(outer)}; final weighted latency "
          f"{outer[-1] * 1e3:.4f} ms; traces in {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="irs-mec",
        description="IRS-assisted wideband MEC latency experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out", default=None)
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate-model",
                           help="scan reflection amplitudes for passivity")
    p_val.add_argument("params", nargs="?", default=None)
    p_val.set_defaults(func=cmd_validate_model)

    p_conv = sub.add_parser("convergence",
                            help="dump per-level convergence traces")
    p_conv.add_argument("config")
    p_conv.add_argument("--out", default=None)
    p_conv.set_defaults(func=cmd_convergence)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
