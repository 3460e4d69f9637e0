"""Command-line workflows: simulate, calibrate, eval, extract, fit.

Exit codes: 0 success (possibly with warnings), 1 evaluation bound exceeded,
2 usage, 3 invalid input data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import datasets as ds
from . import kernels
from .config import ScenarioFile, load_scenario
from .errors import (AmbiguousRp, DegenerateEllipse, DegenerateRp, DelayOutOfWindow, DomainError,
                     EllipseCalibError, EllipseCalibWarning, EmptyIdleSet, FitDiverged,
                     InsufficientData, LowInformationWarning, NoRpFound, NumericalUnderflow,
                     SchemaError)
from .fading import (FresnelConfig, NoiseKind, NoiseModel, UserType, fit_fading_params,
                     fit_noise_sigmas, fresnel_threshold, residuals)
from .geometry import DelayEllipse, arc_to_point, distance_to_ellipse
from .inference import (_mmse_arc, default_gate_distance, elliptic_error, is_multimodal, pmf_init,
                        run_calibration)
from .presets import eta_preset, tables, wavelength_preset
from .scenario import GroundTruth, derive_ground_truth, measurement_times, synthesize_measurements
from .signal_extract import extract_power_changes

log = logging.getLogger("ellipse_calib")

EXIT_OK, EXIT_BOUND, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4
REPORT_FILE = "report.json"
ON_ELLIPSE_TOL = 1e-6  # m

_DATA_ERRORS = (SchemaError, DomainError, AmbiguousRp, NoRpFound, EmptyIdleSet, DelayOutOfWindow)
_NUMERIC_ERRORS = (NumericalUnderflow, FitDiverged, InsufficientData, DegenerateEllipse, DegenerateRp)


class BoundExceeded(EllipseCalibError):
    pass


# --------------------------------------------------------------------------
# Argument helpers


def _eta_arg(text: str) -> str | float:
    try:
        v = float(text)
    except ValueError:
        if text not in tables()["eta_variance_m2"]:
            known = ", ".join(sorted(tables()["eta_variance_m2"]))
            raise argparse.ArgumentTypeError(f"not a number or preset ({known}): {text!r}")
        return text
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("eta must be a non-negative number")
    return v


def _gate_arg(text: str) -> str | float:
    if text == "auto":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gate must be 'auto' or metres, got {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("gate must be non-negative")
    return v


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit non-negative integer")
    return v


def _index_list(text: str) -> list[int]:
    """``"0,1,5:8"`` -> ``[0, 1, 5, 6, 7]``."""
    out = []
    try:
        for part in filter(None, (p.strip() for p in text.split(","))):
            if ":" in part:
                a, b = part.split(":")
                out.extend(range(int(a), int(b)))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad index list {text!r}") from None
    return out


def _float_list(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _noise_kind(choice: str | None) -> NoiseKind | None:
    return None if choice is None else {"uniform": NoiseKind.UNIFORM,
                                        "split": NoiseKind.LOCATION_DEPENDENT}[choice]


# --------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    sf = load_scenario(args.scenario)
    sc = sf.scenario
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if args.noise is not None:
        sc = replace(sc, noise=sf.noise.model(_noise_kind(args.noise)))
    gt = derive_ground_truth(sc)
    data = synthesize_measurements(sc, gt)
    times = measurement_times(sc)
    out = Path(args.out)
    for (i, n), ms in data.items():
        ds.atomic_write_text(out / ds.measurement_filename(i, n), ds.measurements_text(ms, times))
    ds.atomic_write_text(out / ds.GROUND_TRUTH_FILE, ds.ground_truth_text(gt))
    log.info("simulate: %d MPCs x %d samples -> %s", len(data), len(times), out)
    return EXIT_OK


# --------------------------------------------------------------------------
# calibrate


def _collect_measurements(sf: ScenarioFile, data_dir: Path):
    keys = sf.scenario.mpc_keys()
    if not data_dir.is_dir():
        raise SchemaError("measurement directory not found", str(data_dir), None)
    found = {}
    for p in sorted(data_dir.iterdir()):
        key = ds.parse_measurement_filename(p.name)
        if key is not None:
            found[key] = p
    extra = sorted(set(found) - set(keys))
    missing = sorted(set(keys) - set(found))
    if extra or missing:
        parts = []
        if missing:
            parts.append("missing " + ", ".join(ds.measurement_filename(*k) for k in missing))
        if extra:
            parts.append("no scenario MPC for " + ", ".join(ds.measurement_filename(*k) for k in extra))
        raise SchemaError("measurements do not match the scenario's links: " + "; ".join(parts),
                          str(data_dir), None)
    return {k: found[k] for k in keys}


def _check_ground_truth(sf: ScenarioFile, gt: GroundTruth, path: Path):
    keys = set(sf.scenario.mpc_keys())
    if set(gt.entries) != keys:
        raise SchemaError("ground truth MPCs do not match the scenario", str(path), None)
    for (i, n), t in gt.entries.items():
        e = sf.scenario.ellipse(i, n)
        if distance_to_ellipse(e, t.point) > ON_ELLIPSE_TOL * max(1.0, e.a):
            raise SchemaError(f"link {i} mpc {n}: ground-truth RP is not on the scenario's "
                              "delay ellipse (link geometry mismatch)", str(path), None)
        if not 0 <= t.arc < e.circumference:
            raise SchemaError(f"link {i} mpc {n}: rp_arc_m outside [0, L)", str(path), None)


def _resolve_eta(eta, e: DelayEllipse) -> float:
    return eta_preset(eta, e.circumference) if isinstance(eta, str) else float(eta)


def _resolve_gate(gate, e: DelayEllipse, wavelength: float) -> float:
    return default_gate_distance(e, wavelength) if gate == "auto" else float(gate)


def _calibrate_one(sf: ScenarioFile, key, path: Path, noise: NoiseModel, dx: float, eta, gate,
                   truth, keep_history: bool):
    i, n = key
    e = sf.scenario.ellipse(i, n)
    ms, _ = ds.read_measurements(path)
    eta_v = _resolve_eta(eta, e)
    gate_v = _resolve_gate(gate, e, sf.scenario.wavelength)
    truth_arc = truth.arc if truth is not None else None
    if not ms:
        warnings.warn(f"link {i} mpc {n}: no measurements", LowInformationWarning, stacklevel=1)
        state = pmf_init(e, dx)
        est = np.empty(0)
        arc = _mmse_arc(state)
        entry = dict(steps=0, accepted_steps=0, multimodal=bool(is_multimodal(state)),
                     low_information=True)
        errors = np.empty(0) if truth_arc is not None else None
        history = None
        final_err = elliptic_error(e.circumference, arc, truth_arc) if truth_arc is not None else None
    else:
        res = run_calibration(e, ms, sf.scenario.fading, noise, dx, eta_v, gate_distance=gate_v,
                              truth_arc=truth_arc, keep_history=keep_history,
                              wavelength=sf.scenario.wavelength)
        state, est, arc = res.final_state, res.estimates, res.final_estimate
        entry = dict(steps=len(ms), accepted_steps=int(res.accepted.sum()),
                     multimodal=bool(res.multimodal), low_information=bool(res.low_information))
        errors, history, final_err = res.errors, res.history, res.final_error
    pt = arc_to_point(e, arc)
    report = dict(link=i, mpc=n, path_length_m=e.path_length, circumference_m=e.circumference,
                  grid_points=state.grid.n, eta=eta_v, gate_m=gate_v, **entry,
                  estimate_arc_m=float(arc), estimate_x_m=float(pt[0]), estimate_y_m=float(pt[1]),
                  final_error_m=final_err,
                  estimate_trace_m=[float(v) for v in est],
                  error_trace_m=None if errors is None else [float(v) for v in errors])
    ks = [m.k for m in ms]
    return report, history, ks


def cmd_calibrate(args) -> int:
    t0 = time.perf_counter()
    sf = load_scenario(args.scenario)
    data_dir = Path(args.measurements)
    files = _collect_measurements(sf, data_dir)
    gt = None
    gt_path = Path(args.ground_truth) if args.ground_truth else data_dir / ds.GROUND_TRUTH_FILE
    if gt_path.exists():
        gt = ds.read_ground_truth(gt_path)
        _check_ground_truth(sf, gt, gt_path)
    elif args.ground_truth:
        raise SchemaError("ground-truth file not found", str(gt_path), None)

    noise = sf.noise.model(_noise_kind(args.noise) or NoiseKind.LOCATION_DEPENDENT)
    dx = args.dx if args.dx is not None else sf.filter.dx
    eta = args.eta if args.eta is not None else sf.filter.eta
    gate = args.gate if args.gate is not None else sf.filter.gate
    keep = args.weights

    def job(key):
        truth = gt[key] if gt is not None else None
        return _calibrate_one(sf, key, files[key], noise, dx, eta, gate, truth, keep)

    keys = list(files)
    if args.jobs > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(job, keys))
    else:
        results = [job(k) for k in keys]

    out = Path(args.out)
    entries = []
    for key, (entry, history, ks) in zip(keys, results):
        entries.append(entry)
        if history is not None:
            stride = args.weights_stride
            rows = ([k] + list(w) for k, w in list(zip(ks, history))[stride - 1::stride])
            header = ["k"] + [f"w{j}" for j in range(entry["grid_points"])]
            ds.atomic_write_text(out / f"weights_link{key[0]}_mpc{key[1]}.csv",
                                 ds.csv_text(header, rows))
    errs = [e["final_error_m"] for e in entries if e["final_error_m"] is not None]
    report = dict(
        dx_m=dx, noise=noise.kind.value, filter_noise=_noise_params(noise),
        fading=dict(phi_db=sf.scenario.fading.phi, kappa_m=sf.scenario.fading.kappa),
        mpcs=entries,
        mean_error_m=float(np.mean(errs)) if errs else None,
        max_error_m=float(np.max(errs)) if errs else None)
    if args.timing:
        report["backend"] = kernels.BACKEND
        report["wall_clock_s"] = time.perf_counter() - t0
    ds.atomic_write_text(out / REPORT_FILE, ds.json_text(report))
    for e in entries:
        msg = f"link {e['link']} mpc {e['mpc']}: s = {e['estimate_arc_m']:.4f} m"
        if e["final_error_m"] is not None:
            msg += f", error {e['final_error_m']:.4f} m"
        print(msg)
    return EXIT_OK


def _noise_params(m: NoiseModel) -> dict:
    if m.kind is NoiseKind.UNIFORM:
        return dict(sigma_bar_db=m.sigma_bar)
    return dict(sigma1_db=m.sigma1, sigma2_db=m.sigma2, xi_th_m=m.xi_th)


# --------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    path = Path(args.report)
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
        entries = report["mpcs"]
        est = {(int(e["link"]), int(e["mpc"])): (float(e["estimate_arc_m"]), float(e["circumference_m"]))
               for e in entries}
    except OSError as exc:
        raise SchemaError(f"cannot read report: {exc.strerror}", str(path), None) from None
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError(f"malformed report: {exc}", str(path), None) from None
    gt_path = Path(args.ground_truth)
    gt = ds.read_ground_truth(gt_path)
    if set(gt.entries) != set(est):
        only_r = sorted(set(est) - set(gt.entries))
        only_g = sorted(set(gt.entries) - set(est))
        raise SchemaError(f"MPC identifiers differ (report only: {only_r}, ground truth only: {only_g})",
                          str(gt_path), None)
    rows = []
    for key in sorted(est):
        arc, L = est[key]
        rows.append((key[0], key[1], elliptic_error(L, arc, gt[key].arc)))
    errs = np.array([r[2] for r in rows])
    print(f"{'link':>4} {'mpc':>4} {'error_m':>12}")
    for i, n, err in rows:
        print(f"{i:>4} {n:>4} {err:>12.6f}")
    print(f"mean {errs.mean():.6f} m, max {errs.max():.6f} m over {len(errs)} MPCs")
    if args.out:
        text = ds.csv_text(("link", "mpc", "error_m"), rows)
        ds.atomic_write_text(args.out, text)
    if args.bound is not None and errs.max() > args.bound:
        raise BoundExceeded(f"max error {errs.max():.6f} m exceeds bound {args.bound} m")
    return EXIT_OK


# --------------------------------------------------------------------------
# extract


def cmd_extract(args) -> int:
    pulse = ds.read_cir(args.pulse)
    snaps = [ds.read_cir(p) for p in args.cir]
    if not args.idle:
        raise EmptyIdleSet("no idle snapshots given (--idle)")
    delays = [t * 1e-9 for t in args.delays_ns]
    z = extract_power_changes(snaps, pulse, delays, args.idle)
    rows = ((s, n, z[s, n]) for s in range(z.shape[0]) for n in range(z.shape[1]))
    ds.atomic_write_text(args.out, ds.csv_text(("snapshot", "mpc", "z_db"), rows))
    return EXIT_OK


# --------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    samples = ds.read_fit_samples(args.data)
    fading = fit_fading_params(samples, args.user_type)
    xi_min, r = residuals(fading, samples)
    wl = args.wavelength
    wavelength = wavelength_preset(wl) if isinstance(wl, str) else wl
    xi_th = fresnel_threshold(FresnelConfig(wavelength, args.zone))
    sigma1, sigma2 = fit_noise_sigmas(np.column_stack([xi_min, r]), xi_th)
    if not sigma1 < sigma2:
        raise FitDiverged(f"far-path sigma {sigma1:.4g} dB is not below near-path sigma {sigma2:.4g} dB")
    out = dict(fading=dict(phi_db=fading.phi, kappa_m=fading.kappa, user_type=fading.user_type.value),
               noise=dict(sigma_bar_db=float(np.std(r, ddof=1)), sigma1_db=sigma1,
                          sigma2_db=sigma2, xi_th_m=xi_th),
               samples=int(len(samples)))
    text = ds.json_text(out)
    if args.out:
        ds.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _wavelength_arg(text: str):
    try:
        return _positive(text)
    except argparse.ArgumentTypeError:
        if text in tables()["wavelength_m"]:
            return text
        raise argparse.ArgumentTypeError(f"not a wavelength or preset: {text!r}") from None


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ellipse-calib",
                                description="Reflection-point estimation on MPC delay ellipses.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize measurements and ground truth from a scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=_seed, help="override the scenario seed")
    s.add_argument("--noise", choices=("uniform", "split"), help="generator noise model")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="run the point-mass filter on measurement files")
    c.add_argument("--scenario", required=True)
    c.add_argument("--measurements", required=True, help="directory of link<i>_mpc<n>.csv files")
    c.add_argument("--ground-truth", help="default: ground_truth.csv in the measurement directory")
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--dx", type=_positive, help="grid spacing [m] (default 0.05)")
    c.add_argument("--eta", type=_eta_arg, help="concentration: number or preset (default setupII)")
    c.add_argument("--gate", type=_gate_arg, help="gate distance [m] or 'auto'")
    c.add_argument("--noise", choices=("uniform", "split"), default="split",
                   help="filter noise model (default split)")
    c.add_argument("--seed", type=_seed, help="accepted for symmetry; calibration is deterministic")
    c.add_argument("--jobs", type=_positive_int, default=1, help="concurrent MPC jobs")
    c.add_argument("--weights", action="store_true", help="write per-step weight CSVs")
    c.add_argument("--weights-stride", type=_positive_int, default=1,
                   help="keep every n-th step in weight CSVs")
    c.add_argument("--timing", action="store_true",
                   help="add wall-clock time and backend to the report (breaks byte identity)")
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("eval", help="compare a report with ground truth")
    e.add_argument("--report", required=True)
    e.add_argument("--ground-truth", required=True)
    e.add_argument("--bound", type=_positive, help="exit 1 if any error exceeds this [m]")
    e.add_argument("--out", help="optional summary CSV")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("extract", help="power changes from CIR snapshots")
    x.add_argument("--cir", nargs="+", required=True, help="snapshot files, in time order")
    x.add_argument("--pulse", required=True, help="transmit pulse file (same format)")
    x.add_argument("--delays-ns", type=_float_list, required=True, help="ascending, comma separated")
    x.add_argument("--idle", type=_index_list, default=[], help="idle snapshot indices, e.g. 0:20")
    x.add_argument("--out", required=True, help="output CSV")
    x.set_defaults(func=cmd_extract)

    f = sub.add_parser("fit", help="fit fading and noise parameters")
    f.add_argument("--data", required=True, help="CSV with xi_tx_m,xi_rx_m,z_db")
    f.add_argument("--out", help="output JSON (default stdout)")
    f.add_argument("--wavelength", type=_wavelength_arg, default=0.0577,
                   help="metres or preset name (default 0.0577)")
    f.add_argument("--zone", type=_positive_int, default=3, help="Fresnel zone number")
    f.add_argument("--user-type", choices=[u.value for u in UserType], default="custom")
    f.set_defaults(func=cmd_fit)
    return p


def _setup_logging():
    level = os.environ.get("ELLIPSE_CALIB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    warnings.simplefilter("always", EllipseCalibWarning)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except BoundExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except _DATA_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _NUMERIC_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
