"""Compare the numba kernels with their numpy counterparts.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--no-end-to-end]

Kernel timings use both implementations side by side in one process.  The
end-to-end timing runs a full calibration of the shipped scenario in a
subprocess per backend, switching with ELLIPSE_CALIB_DISABLE_JIT.
"""

import argparse
import os
import subprocess
import sys
import timeit
from pathlib import Path

import numpy as np

from ellipse_calib import kernels
from ellipse_calib._accel import HAVE_NUMBA
from ellipse_calib.geometry import Mpc, NetworkLink, arc_to_point, make_delay_ellipse, virtual_nodes
from ellipse_calib.inference import transition_kernel
from ellipse_calib.presets import eta_preset

ROOT = Path(__file__).resolve().parent.parent

END_TO_END = """
import time
from ellipse_calib import kernels
from ellipse_calib.config import load_scenario
from ellipse_calib.inference import run_calibration
from ellipse_calib.presets import eta_preset
from ellipse_calib.scenario import derive_ground_truth, synthesize_measurements
kernels.warmup()
sf = load_scenario({path!r})
e = sf.scenario.ellipse(0, 0)
ms = synthesize_measurements(sf.scenario, derive_ground_truth(sf.scenario))[(0, 0)]
eta = eta_preset("setupII", e.circumference)
t0 = time.perf_counter()
run_calibration(e, ms, sf.scenario.fading, sf.scenario.noise, 0.05, eta)
print(kernels.BACKEND, len(ms), time.perf_counter() - t0)
"""


def kernel_cases():
    e = make_delay_ellipse(NetworkLink((0.0, 0.0), (31.37, 0.0)), Mpc(38.673))
    n = int(round(e.circumference / 0.05))
    s = np.arange(n) * e.circumference / n
    vt, vr = (np.ascontiguousarray(v) for v in virtual_nodes(e, arc_to_point(e, s)))
    rng = np.random.default_rng(0)
    w = rng.random(n); w /= w.sum()
    k = transition_kernel(n, eta_preset("setupII", e.circumference))
    ll_args = (-1.0, 10.0, 7.2, np.asarray(e.link.tx), np.asarray(e.link.rx), vt, vr, e.d,
               -2.5, 0.015, 1.13, 0.28, 0.0865)
    ll = kernels.loglik_grid_np(*ll_args)
    return n, {
        "loglik_grid": ll_args,
        "bayes_update": (w, ll),
        "circular_convolve": (w, k),
        "wrapped_cost": (w, 0.05),
        "mmse_arc": (w, 0.05),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--no-end-to-end", action="store_true")
    args = ap.parse_args()
    if not HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    kernels.warmup()
    n, cases = kernel_cases()
    print(f"kernel timings at N_s={n} (best of 5, {args.repeat} calls each)")
    print(f"{'kernel':<18} {'numpy [us]':>11} {'numba [us]':>11} {'speedup':>8}")
    for name, call_args in cases.items():
        f_np = getattr(kernels, name + "_np")
        f_nb = getattr(kernels, name + "_nb")
        f_nb(*call_args)
        t_np = min(timeit.repeat(lambda: f_np(*call_args), number=args.repeat, repeat=5))
        t_nb = min(timeit.repeat(lambda: f_nb(*call_args), number=args.repeat, repeat=5))
        us_np, us_nb = 1e6 * t_np / args.repeat, 1e6 * t_nb / args.repeat
        print(f"{name:<18} {us_np:>11.1f} {us_nb:>11.1f} {us_np / us_nb:>7.1f}x")
    if args.no_end_to_end:
        return
    print("\nend-to-end calibration of scenarios/setup2_like.yaml")
    code = END_TO_END.format(path=str(ROOT / "scenarios" / "setup2_like.yaml"))
    for flag in ("0", "1"):
        env = dict(os.environ, ELLIPSE_CALIB_DISABLE_JIT=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, check=True,
                             capture_output=True, text=True).stdout.split()
        print(f"  backend={out[0]:<6} steps={out[1]}  {float(out[2]):.3f} s")


if __name__ == "__main__":
    main()
