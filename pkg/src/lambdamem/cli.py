"""Command-line front end.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error,
3 data-quality rejection, 4 sweep finished with some failed points.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .characterization import (DecayScan, PhysicalConstantsConfig, collision_kinetics, doppler_lifetime,
                               figures_of_merit, fit_frequency_response, fit_lifetime,
                               fit_lifetime_vs_pressure, fit_linewidth_vs_pressure, fit_snr_linear,
                               snr_to_fidelity)
from .config import ConfigError, RunConfig, RunManifest, atomic_write_text, file_digest
from .core import (ControlPulse, EmptySpectrumError, GridError, MemoryParams, SpectralField, TimeGrid,
                   WindowingError, gaussian_signal, read_csv_table)
from .fitting import FitError, RankDeficiencyError
from .interferometry import (InsufficientSupportError, UnresolvableFringesError, fit_visibility,
                             read_interferogram_csv, reconstruct_phase, reconstruct_time_domain,
                             write_reconstruction_csv)
from .norm import (PRESET_NAMES, UndefinedAdiabaticityError, default_detunings, norm_predicate,
                   optimal_detuning, protocol_matrix, sweep_detuning)
from .protocols import preset, sweep_pulse_area
from .solver import (GridConfig, GridMarginError, IntegrationError, default_grid,
                     default_retrieval_delay, solve, write_field_dump)

log = logging.getLogger("lambdamem")

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_PARTIAL = 4

MANIFEST_NAME = "manifest.json"


class DataQualityError(ValueError):
    """Input data rejected on quality grounds."""


class _Run:
    """Collects outputs and inputs for the manifest of one command."""

    def __init__(self, out_dir: Path, config: RunConfig | None):
        self.out_dir = out_dir
        self.config = config
        self.inputs = {}
        self.outputs = []

    def add_input(self, path) -> Path:
        path = Path(path).resolve()
        if not path.exists():
            raise ConfigError(str(path), "input file does not exist")
        self.inputs[str(path)] = file_digest(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        atomic_write_text(path, text)
        if name not in self.outputs:
            self.outputs.append(name)
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header, rows) -> Path:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        return self.write_text(name, buf.getvalue())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# -- config helpers ---------------------------------------------------------

def _input_path(cfg: RunConfig, section: str, key: str) -> Path:
    raw = Path(cfg.get_str(section, key))
    if not raw.is_absolute() and cfg.source:
        raw = Path(cfg.source).resolve().parent / raw
    return raw


def _num(cfg: RunConfig, section: str, key: str, fallback=None) -> float:
    """Float entry; required when ``fallback`` is None."""
    if fallback is None:
        return cfg.get_float(section, key)
    return cfg.get_float(section, key, fallback)


def _named_preset(cfg: RunConfig, section: str):
    name = cfg.get_str(section, "preset", None)
    if name is None:
        return None
    try:
        return preset(name)
    except KeyError as exc:
        raise ConfigError(f"{section}.preset", str(exc)) from None


def memory_from(cfg: RunConfig) -> MemoryParams:
    base = _named_preset(cfg, "memory")
    d = _num(cfg, "memory", "d", base.memory.d if base else None)
    tau = _num(cfg, "memory", "tau_gamma", base.memory.tau_gamma if base else None)
    try:
        return MemoryParams(d, tau, _num(cfg, "memory", "detuning", 0.0), _num(cfg, "memory", "gamma_b", 0.0))
    except ValueError as exc:
        raise ConfigError("memory", str(exc)) from None


def control_from(cfg: RunConfig, section: str = "control") -> ControlPulse:
    base = _named_preset(cfg, section)
    base = base.control if base else None
    area = _num(cfg, section, "area", base.area if base else None)
    delay = _num(cfg, section, "delay", base.delay if base else 0.0)
    duration = _num(cfg, section, "duration", base.duration if base else 1.0)
    try:
        return ControlPulse(area, delay, duration)
    except ValueError as exc:
        raise ConfigError(section, str(exc)) from None


def retrieval_delay_from(cfg: RunConfig, memory, control) -> float:
    if not cfg.get_bool("retrieval", "enabled", True):
        return 0.0
    raw = cfg.get_str("retrieval", "delay", "auto")
    if raw == "auto":
        return default_retrieval_delay(memory, control)
    delay = cfg.get_float("retrieval", "delay")
    if delay < 0:
        raise ConfigError("retrieval.delay", "must be >= 0")
    return delay


def grid_from(cfg: RunConfig, memory, control, retrieval_delay, max_detuning=None) -> GridConfig:
    n_z = cfg.get_int("grid", "n_z", 201)
    try:
        base = default_grid(memory, control, retrieval_delay, n_z=n_z, max_detuning=max_detuning)
        span = base.t_span
        t_start = cfg.get_float("grid", "t_start", span.t_start)
        t_end = cfg.get_float("grid", "t_end", span.t_end)
        n_t = cfg.get_int("grid", "n_t", span.n_samples)
        return GridConfig(n_z, TimeGrid(t_start, t_end, n_t), cfg.get_int("grid", "z_order", 4))
    except (GridError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("grid", str(exc)) from None


def _sweep_values(cfg: RunConfig, default):
    if not cfg.has("sweep", "num"):
        return default
    num = cfg.get_int("sweep", "num")
    if num < 1:
        raise ConfigError("sweep.num", "sweep range is empty")
    start = cfg.get_float("sweep", "start")
    stop = cfg.get_float("sweep", "stop")
    return np.linspace(start, stop, num)


# -- commands -----------------------------------------------------------------

def cmd_simulate(args, cfg: RunConfig, run: _Run) -> int:
    memory = memory_from(cfg)
    control = control_from(cfg)
    if args.control_area is not None:
        control = control.with_area(args.control_area)
    delay = retrieval_delay_from(cfg, memory, control)
    grid = grid_from(cfg, memory, control, delay)
    stride = 0
    if args.dump_fields:
        stride = cfg.get_int("output", "dump_stride", max(1, grid.n_t // 256))
    signal = gaussian_signal(memory.tau_gamma, grid.t_span, center=0.0)
    result = solve(memory, signal, control, retrieval_delay=delay, grid=grid, signal_center=0.0,
                   dump_stride=stride)
    run.write_json("efficiencies.json", result.to_dict())
    if args.dump_fields:
        path = run.out_dir / "fields.csv"
        write_field_dump(result, path)
        run.outputs.append("fields.csv")
    print(json.dumps(_clean(result.to_dict()), sort_keys=True))
    return EXIT_OK


def _sweep_exit(n_failed, n_total) -> int:
    if n_failed == 0:
        return EXIT_OK
    if n_failed == n_total:
        return EXIT_NUMERICAL
    return EXIT_PARTIAL


def cmd_sweep(args, cfg: RunConfig | None, run: _Run) -> int:
    if args.kind == "fig6-matrix":
        detunings = None
        if cfg is not None and cfg.has("sweep", "num"):
            values = _sweep_values(cfg, None)
            detunings = {name: values for name in PRESET_NAMES}
        matrix = protocol_matrix(jobs=args.jobs, detunings=detunings)
        total = failed = 0
        for (regime, protocol), entry in matrix.entries.items():
            run.write_csv(f"sweep_{regime}_regime_{protocol}_protocol.csv",
                          ["delta_over_gamma", "eta_store", "eta_tot"], entry.sweep.rows())
            total += entry.sweep.detunings.size
            failed += len(entry.sweep.failures)
        summary = {
            "truth_table": matrix.truth_table(),
            "norm_matches_adiabaticity": matrix.consistent,
            "best_regime": {p: matrix.best_regime(p) for p in PRESET_NAMES},
        }
        run.write_json("summary.json", summary)
        print(json.dumps(_clean({"norm_matches_adiabaticity": matrix.consistent}), sort_keys=True))
        return _sweep_exit(failed, total)

    if cfg is None:
        raise ConfigError("--config", f"sweep {args.kind} needs a config file")
    memory = memory_from(cfg)
    control = control_from(cfg)
    if args.kind == "area":
        areas = _sweep_values(cfg, np.linspace(0.0, 3.0, 31))
        grid = None
        if cfg.has("grid"):
            grid = grid_from(cfg, memory, control.with_area(float(np.max(areas))), 0.0)
        scan = sweep_pulse_area(memory, control, areas, grid=grid, jobs=args.jobs)
        run.write_csv("area_sweep.csv", ["theta_over_pi", "eta_store"], zip(scan.areas, scan.eta_store))
        summary = scan.to_dict()
        minimum = scan.subsequent_minimum()
        summary["subsequent_min"] = None if minimum is None else {"theta_over_pi": minimum[0],
                                                                   "eta_store": minimum[1]}
        run.write_json("summary.json", summary)
        print(json.dumps(_clean(summary), sort_keys=True))
        return _sweep_exit(len(scan.failures), scan.areas.size)

    detunings = _sweep_values(cfg, default_detunings(memory))
    delay = retrieval_delay_from(cfg, memory, control)
    if delay <= 0:
        raise ConfigError("retrieval.enabled", "detuning sweeps need retrieval")
    grid = grid_from(cfg, memory, control, delay, max_detuning=float(np.max(np.abs(detunings))))
    sweep = sweep_detuning(memory, control, detunings, grid=grid, retrieval_delay=delay, jobs=args.jobs)
    run.write_csv("detuning_sweep.csv", ["delta_over_gamma", "eta_store", "eta_tot"], sweep.rows())
    summary = {}
    try:
        opt = optimal_detuning(sweep)
        summary.update(delta_opt=opt.delta_opt, eta_max=opt.eta_max, degenerate=opt.degenerate,
                       flat_interval=list(opt.interval))
    except ValueError as exc:
        summary["optimum_error"] = str(exc)
    try:
        summary["norm_predicate"] = norm_predicate(memory, control)
    except UndefinedAdiabaticityError:
        summary["norm_predicate"] = None
    summary["failures"] = {repr(k): v for k, v in sweep.failures.items()}
    run.write_json("summary.json", summary)
    print(json.dumps(_clean(summary), sort_keys=True))
    return _sweep_exit(len(sweep.failures), sweep.detunings.size)


FIT_SCHEMAS = {
    "lifetime": ("storage_time_ns", "efficiency_pct"),
    "lifetime-vs-pressure": ("pressure_mbar", "lifetime_ns"),
    "linewidth": ("pressure_mbar", "linewidth_GHz"),
    "snr": ("mean_photon_number", "snr"),
    "visibility": ("integration_time_s", "visibility"),
    "frequency-response": ("detuning_over_gamma", "efficiency"),
}


def _read_schema_csv(path, columns):
    try:
        rows, header = read_csv_table(path)
    except ValueError as exc:
        raise ConfigError(str(path), f"{exc}; expected columns ({', '.join(columns)})") from None
    if len(header) != len(columns):
        raise ConfigError(str(path), f"got {len(header)} columns {header}; expected columns "
                                     f"({', '.join(columns)})")
    if not rows:
        raise DataQualityError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    return data[:, 0], data[:, 1]


def _predict(model: str, result, x):
    p = result.params
    if model == "lifetime":
        if math.isinf(p["T"]):
            return np.full_like(x, p["eta0"])
        power = 2 if result.model.endswith("gaussian") else 1
        return p["eta0"] * np.exp(-((x / p["T"]) ** power))
    if model == "lifetime-vs-pressure":
        return p["a"] / (x + p.get("b", 0.0))
    if model == "linewidth":
        return p["gamma0"] + p["slope"] * x
    if model == "snr":
        return p["intercept"] + p["slope"] * x
    if model == "visibility":
        return np.exp(-2.0 * (p["f1"] * x ** p["f2"]) ** 2) if p["f1"] else np.ones_like(x)
    if p["amplitude"] == 0:
        return np.zeros_like(x)
    return p["amplitude"] * np.exp(-4.0 * math.log(2.0) * (x - p["center"]) ** 2 / p["fwhm"] ** 2)


def cmd_fit(args, cfg: RunConfig, run: _Run) -> int:
    model = args.model or cfg.get_str("fit", "model")
    if model not in FIT_SCHEMAS:
        raise ConfigError("fit.model", f"unknown model {model!r}; expected one of {sorted(FIT_SCHEMAS)}")
    path = run.add_input(args.input if args.input else _input_path(cfg, "fit", "input"))
    x, y = _read_schema_csv(path, FIT_SCHEMAS[model])
    if model == "lifetime":
        scan = DecayScan(x, y, cfg.get_float("fit", "pressure_mbar"),
                         cfg.get_float("fit", "temperature_c", math.nan))
        result = fit_lifetime(scan, cfg.get_str("fit", "lifetime_model", "auto"))
    elif model == "lifetime-vs-pressure":
        result = fit_lifetime_vs_pressure(x, y, offset=cfg.get_bool("fit", "offset", False))
    elif model == "linewidth":
        result = fit_linewidth_vs_pressure(x, y)
    elif model == "snr":
        result = fit_snr_linear(x, y)
    elif model == "visibility":
        result = fit_visibility(x, y)
    else:
        result = fit_frequency_response(x, y)
    run.write_json("fit.json", result.to_dict())
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    fitted = _predict(model, result, xs)
    run.write_csv("residuals.csv", ["x", "y", "fit", "residual"], zip(xs, ys, fitted, ys - fitted))
    print(json.dumps(_clean(result.to_dict()), sort_keys=True))
    return EXIT_OK


def _arm_on_grid(path, omega):
    rows, header = read_csv_table(path)
    if len(header) not in (2, 3) or not rows:
        raise ConfigError(str(path), "arm spectrum needs columns (omega, amplitude[, phase])")
    data = np.asarray(rows, dtype=float)
    data = data[np.argsort(data[:, 0])]
    mag = np.interp(omega, data[:, 0], np.abs(data[:, 1]), left=0.0, right=0.0)
    phase = np.interp(omega, data[:, 0], np.unwrap(data[:, 2])) if data.shape[1] == 3 else np.zeros_like(omega)
    return mag, phase


def _time_grid_for(omega) -> TimeGrid:
    step = float(np.median(np.diff(omega)))
    wmax = float(np.max(np.abs(omega)))
    dt = math.pi / (2.0 * wmax)
    n = int(2 ** math.ceil(math.log2(max(512, 2.0 * math.pi / (step * dt)))))
    half = 0.5 * (n - 1) * dt
    return TimeGrid(-half, half, n)


def cmd_reconstruct(args, cfg: RunConfig, run: _Run) -> int:
    ig_path = run.add_input(_input_path(cfg, "reconstruct", "interferogram"))
    ref_path = run.add_input(_input_path(cfg, "reconstruct", "reference"))
    sig_path = run.add_input(_input_path(cfg, "reconstruct", "signal"))
    delta_tau = cfg.get_float("reconstruct", "delta_tau")
    scale = cfg.get_float("reconstruct", "omega_scale", 1.0)
    ig = read_interferogram_csv(ig_path, delta_tau, scale)
    m1, phi1 = _arm_on_grid(ref_path, ig.omega)
    m2, _ = _arm_on_grid(sig_path, ig.omega)
    rec = reconstruct_phase(ig, m1, m2, phi1, visibility=cfg.get_float("reconstruct", "visibility", 1.0))
    n_rows = write_reconstruction_csv(run.out_dir / "reconstruction.csv", rec)
    run.outputs.append("reconstruction.csv")
    spec = rec.spectral_field()
    td = reconstruct_time_domain(SpectralField(spec.omega, spec.amplitude, spec.phase), _time_grid_for(ig.omega))
    report = {
        "c1": td.c1,
        "c2": td.c2,
        "t_ref": td.t_ref,
        "support_size": n_rows,
        "clamp_fraction": rec.clamp_fraction,
        "low_confidence": rec.low_confidence,
        "max_excess": float(np.max(rec.excess)),
    }
    if cfg.has("reconstruct", "truth"):
        truth_path = run.add_input(_input_path(cfg, "reconstruct", "truth"))
        rows, header = read_csv_table(truth_path)
        if len(header) != 2:
            raise ConfigError(str(truth_path), "truth needs columns (omega, phi_dif)")
        data = np.asarray(rows, dtype=float)
        data = data[np.argsort(data[:, 0])]
        ref = np.interp(rec.omega[rec.support], data[:, 0], data[:, 1])
        err = rec.phi_dif[rec.support] - ref
        err -= 2 * math.pi * round(float(np.mean(err)) / (2 * math.pi))
        report["phi_rms_error"] = float(np.sqrt(np.mean(err**2)))
    run.write_json("phase_report.json", report)
    print(json.dumps(_clean(report), sort_keys=True))
    return EXIT_OK


def cmd_metrics(args, cfg: RunConfig, run: _Run) -> int:
    out = {}
    if cfg.has("metrics"):
        fom = figures_of_merit(
            cfg.get_float("metrics", "lifetime_s"), cfg.get_float("metrics", "bandwidth_hz"),
            cfg.get_float("metrics", "clock_rate_hz"), cfg.get_float("metrics", "d"),
            cfg.get_float("metrics", "linewidth_hz"), cfg.get_float("metrics", "linewidth_nat_hz"))
        out.update(tbp=fom.tbp, trp=fom.trp, cold_od=fom.cold_od)
        if cfg.has("metrics", "snr"):
            out["fidelity"] = snr_to_fidelity(cfg.get_float("metrics", "snr"))
    consts = PhysicalConstantsConfig()
    if cfg.has("doppler"):
        out["doppler_lifetime_s"] = doppler_lifetime(
            cfg.get_float("doppler", "temperature_k"),
            cfg.get_float("doppler", "mass_kg", consts.mass_atom),
            cfg.get_float("doppler", "lambda_s_m", consts.lambda_signal),
            cfg.get_float("doppler", "lambda_c_m", consts.lambda_control))
        out["doppler_velocity_convention"] = "1-D rms sqrt(kT/m)"
    if cfg.has("kinetics"):
        kin = collision_kinetics(
            cfg.get_float("kinetics", "pressure_pa"), cfg.get_float("kinetics", "temperature_k"),
            (consts.radius_atom, consts.radius_buffer), (consts.mass_atom, consts.mass_buffer))
        out.update(mean_free_path_m=kin.mean_free_path, collision_time_s=kin.collision_time,
                   diffusion_m2_s=kin.diffusion_coefficient)
    if not out:
        raise ConfigError("metrics", "config has none of the [metrics], [doppler] or [kinetics] sections")
    run.write_json("metrics.json", out)
    print(json.dumps(_clean(out), sort_keys=True))
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration file")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")
    common.add_argument("--dump-fields", action="store_true", help="write the (z, tau) field dump CSV")
    common.add_argument("--verify", action="store_true",
                        help="check the manifest in --out against current inputs instead of running")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lambdamem", description="Lambda-memory simulation and analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="one storage/retrieval solve")
    p.add_argument("--control-area", type=float, help="override the control pulse area (units of pi)")
    p = sub.add_parser("sweep", parents=[common], help="detuning, pulse-area or protocol-matrix sweep")
    p.add_argument("kind", choices=("detuning", "area", "fig6-matrix"))
    p = sub.add_parser("fit", parents=[common], help="fit characterisation data")
    p.add_argument("model", nargs="?", choices=sorted(FIT_SCHEMAS))
    p.add_argument("--input", type=Path, help="input CSV (overrides fit.input)")
    sub.add_parser("reconstruct", parents=[common], help="spectral-interferometric phase reconstruction")
    sub.add_parser("metrics", parents=[common], help="figures of merit and physical estimates")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "reconstruct": cmd_reconstruct,
    "metrics": cmd_metrics,
}


def _verify(args, cfg) -> int:
    path = args.out / MANIFEST_NAME
    if not path.exists():
        print(f"error: no manifest at {path}", file=sys.stderr)
        return EXIT_USAGE
    problems = RunManifest.read(path).verify(cfg, args.out)
    if problems:
        for msg in problems:
            print(f"verify: {msg}", file=sys.stderr)
        return EXIT_DATA
    print("verify: ok")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    start = time.perf_counter()
    try:
        cfg = RunConfig.load(args.config) if args.config else None
        if args.verify:
            return _verify(args, cfg)
        needs_config = not (args.command == "sweep" and args.kind == "fig6-matrix")
        if cfg is None and needs_config:
            raise ConfigError("--config", "a config file is required for this command")
        args.out.mkdir(parents=True, exist_ok=True)
        run = _Run(args.out, cfg)
        if args.config:
            run.add_input(args.config)
        code = _COMMANDS[args.command](args, cfg, run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GridMarginError, WindowingError) as exc:
        print(f"error: configuration does not fit the time window: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, FitError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except UnresolvableFringesError as exc:
        print(f"error: unresolvable fringes ({exc.samples_per_fringe:.3g} samples per fringe): {exc}",
              file=sys.stderr)
        return EXIT_DATA
    except (InsufficientSupportError, EmptySpectrumError, RankDeficiencyError, DataQualityError,
            ValueError) as exc:
        print(f"error: data rejected: {exc}", file=sys.stderr)
        return EXIT_DATA

    outputs = {name: file_digest(args.out / name) for name in run.outputs}
    manifest = RunManifest(
        tool_version=__version__,
        command=" ".join([args.command] + ([args.kind] if args.command == "sweep" else [])),
        config_hash=cfg.digest() if cfg else "",
        inputs=run.inputs,
        outputs=outputs,
        duration_s=round(time.perf_counter() - start, 3),
    )
    manifest.write(args.out / MANIFEST_NAME)
    return code


if __name__ == "__main__":
    sys.exit(main())
