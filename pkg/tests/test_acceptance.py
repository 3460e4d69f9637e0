"""Acceptance criteria, one test per criterion.

Each test prints a single ``[criterion N] PASS|FAIL ...`` line with the
measured quantities, then asserts.  Criteria whose published reference
values cannot be met are left failing; see the decisions ledger.
"""

import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ellipe

from ellipse_calib import kernels
from ellipse_calib.cli import main
from ellipse_calib.config import load_scenario
from ellipse_calib.fading import (FadingParams, FresnelConfig, NoiseModel, fit_fading_params,
                                  fresnel_threshold, predicted_change)
from ellipse_calib.geometry import (Mpc, NetworkLink, Vec2, arc_length, arc_to_point,
                                    excess_paths, make_delay_ellipse, point_to_arc)
from ellipse_calib.inference import (EllipticNormal, Measurement, PmfGrid, PmfState,
                                     elliptic_normal_pdf, find_modes, pmf_init, pmf_predict,
                                     pmf_update, run_calibration)
from ellipse_calib.presets import eta_preset
from ellipse_calib.scenario import derive_ground_truth, synthesize_measurements
from ellipse_calib.signal_extract import (SampledSignal, delayed_pulse, extract_sequentially,
                                          normalize_pulse, power_change, reference_power)

from conftest import random_ellipses

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "setup2_like.yaml"


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n:>2}] {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def test_c01_geometry_reproduction(verdict):
    link = NetworkLink((0.0, 0.0), (31.370, 0.0))
    t0 = time.perf_counter()
    e = make_delay_ellipse(link, Mpc(38.673))
    L = e.circumference
    ms = (time.perf_counter() - t0) * 1e3
    ok = (abs(e.a - 19.337) <= 1e-3 and abs(e.b - 11.308) <= 1e-3 and abs(L - 97.633) <= 1e-3
          and ms < 1.0)
    verdict(1, ok, f"a={e.a:.4f} (19.337) b={e.b:.4f} (11.308) L={L:.4f} (97.633) "
                   f"build={ms:.3f} ms")


def test_c02_grid_reproduction(verdict):
    e = make_delay_ellipse(NetworkLink((0.0, 0.0), (31.370, 0.0)), Mpc(38.673))
    n = pmf_init(e, 0.05).grid.n
    verdict(2, n == 1953, f"N_s={n} (1953) from L={e.circumference:.4f}")


def test_c03_fresnel_thresholds(verdict):
    t1 = fresnel_threshold(FresnelConfig(0.0577, 3))
    t2 = fresnel_threshold(FresnelConfig(0.0751, 3))
    # n*lambda/2 is exactly 0.08655 and 0.11265: both tabulated values sit on
    # the rounding tie, so agreement means within half a unit of the 4th decimal
    ok = abs(t1 - 0.0865) <= 0.5e-4 + 1e-12 and abs(t2 - 0.1126) <= 0.5e-4 + 1e-12
    verdict(3, ok, f"xi_th={t1:.5f} (0.0865) and {t2:.5f} (0.1126)")


def test_c04_elliptic_integral_identity(verdict):
    rng = np.random.default_rng(4)
    worst_e = worst_q = 0.0
    for e in random_ellipses(rng, 100):
        full = float(arc_length(e, 2 * math.pi))
        exact = 4 * e.a * ellipe(e.eccentricity ** 2)
        worst_e = max(worst_e, abs(full / exact - 1))
        th = float(rng.uniform(0, 2 * math.pi))
        ref, _ = quad(lambda t: math.hypot(e.a * math.sin(t), e.b * math.cos(t)), 0, th,
                      epsabs=0, epsrel=1e-13, limit=200)
        worst_q = max(worst_q, abs(float(arc_length(e, th)) / ref - 1))
    verdict(4, worst_e <= 1e-9 and worst_q <= 1e-9,
            f"max rel err vs 4aE={worst_e:.2e}, vs quadrature={worst_q:.2e}")


def test_c05_coordinate_round_trip(verdict):
    rng = np.random.default_rng(5)
    worst = 0.0
    for e in random_ellipses(rng, 100):
        s = rng.uniform(0, e.circumference, 100)
        back = point_to_arc(e, arc_to_point(e, s))
        err = np.abs(back - s)
        worst = max(worst, float(np.minimum(err, e.circumference - err).max()))
    verdict(5, worst <= 1e-6, f"max round-trip error {worst:.2e} m over 10^4 arcs")


def test_c06_elliptic_normal_normalization(verdict):
    L = 97.933
    worst = 0.0
    for eta in (0.0, 0.1, 1.0, 4.0, 20.0):
        d = EllipticNormal(L, eta, 30.0)
        total, _ = quad(lambda s: elliptic_normal_pdf(d, s), 0, L, points=[30.0], limit=200)
        worst = max(worst, abs(total - 1))
    flat = elliptic_normal_pdf(EllipticNormal(L, 0.0, 30.0), np.linspace(0, L, 50))
    ok = worst <= 1e-6 and np.allclose(flat, 1 / L, rtol=1e-15)
    verdict(6, ok, f"max |integral-1|={worst:.2e}; eta=0 pointwise 1/L: {np.allclose(flat, 1 / L)}")


def test_c07_pmf_oracle(verdict):
    rng = np.random.default_rng(7)
    e = make_delay_ellipse(NetworkLink((-3.0, 0.0), (3.0, 0.0)), Mpc(10.0))
    fad = FadingParams(-2.5, 0.1)
    noise = NoiseModel.location_dependent(0.3, 0.8, 0.0865)
    wp = wu = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 65))
        w = rng.random(n); w /= w.sum()
        st = PmfState(PmfGrid(e, n), w)
        eta = float(rng.choice([0.0, 0.3, 3.0, 30.0]))
        i = np.arange(n)
        K = np.exp(eta * (np.cos(2 * np.pi * (i[:, None] - i[None, :]) / n) - 1))
        K /= K[0].sum()
        ref = K @ w
        wp = max(wp, float(np.abs(pmf_predict(st, eta).weights - ref / ref.sum()).max()))
        user = Vec2(*map(float, rng.uniform(-6, 6, 2)))
        m = Measurement(1, float(rng.normal(-1, 1)), user)
        post = []
        for p, wi in zip(arc_to_point(e, st.arcs), w):
            xt, xr, xm = excess_paths(e, p, user)
            f = predicted_change(fad, max(xt, 0.0), max(xr, 0.0))
            sig = 0.8 if xm <= 0.0865 else 0.3
            post.append(wi * math.exp(-0.5 * ((m.z - f) / sig) ** 2) / sig)
        post = np.array(post) / sum(post)
        wu = max(wu, float(np.abs(pmf_update(st, m, fad, noise).weights - post).max()))
    verdict(7, wp <= 1e-12 and wu <= 1e-12, f"max-abs predict={wp:.2e} update={wu:.2e}")


def test_c08_posterior_shapes(verdict):
    e = make_delay_ellipse(NetworkLink((-3.0, 0.0), (3.0, 0.0)), Mpc(10.0))
    rp = Vec2(0.0, 4.0)
    fad = FadingParams(-2.5, 0.1)
    noise = NoiseModel.uniform(0.05)
    shapes = {}
    for label, user in {"A": (-1.5, 2.0), "B": (0.0, 3.0), "C": (-1.3, 2.0), "D": (2.5, -3.0)}.items():
        xt, xr, _ = excess_paths(e, rp, user)
        z = predicted_change(fad, max(xt, 0.0), max(xr, 0.0))
        w = pmf_update(pmf_init(e, 0.01), Measurement(1, z, Vec2(*user)), fad, noise).weights
        rel = w / w.max()
        shapes[label] = (len(find_modes(w)), float((rel < 1e-6).mean()), float((rel > 0.5).mean()))
    nA, nB, nC = shapes["A"][0], shapes["B"][0], shapes["C"][0]
    _, excl, plateau = shapes["D"]
    ok = (nA, nB, nC) == (2, 3, 4) and 0.02 < excl < 0.5 and plateau > 0.5
    verdict(8, ok, f"modes A={nA} B={nB} C={nC} (2,3,4); D excluded fraction={excl:.2f}, "
                   f"plateau fraction={plateau:.2f}")


@pytest.fixture(scope="module")
def closed_loop():
    """50 seeded runs per noise model on the shipped Setup-II-like scenario."""
    kernels.warmup()
    sf = load_scenario(SCENARIO)
    e = sf.scenario.ellipse(0, 0)
    eta = eta_preset("setupII", e.circumference)
    gt0 = derive_ground_truth(sf.scenario)
    truth = gt0[(0, 0)]
    users = np.array(sf.scenario.trajectory.waypoints)
    # crossing windows: contiguous stretches with xi_min <= xi_th at the true RP
    first = synthesize_measurements(sf.scenario, gt0)[(0, 0)]
    users = np.array([m.user for m in first])
    _, _, xm = excess_paths(e, truth.point, users)
    inside = (xm <= sf.scenario.noise.xi_th).astype(int)
    ends = list(np.flatnonzero(np.diff(inside) == -1) + 1)
    out = {}
    for kind in ("location_dependent", "uniform"):
        t0 = time.perf_counter()
        final, checkpoints = [], []
        for seed in range(50):
            sc = replace(sf.scenario, seed=seed)
            ms = synthesize_measurements(sc, derive_ground_truth(sc))[(0, 0)]
            r = run_calibration(e, ms, sc.fading, sf.noise.model(kind), 0.05, eta,
                                truth_arc=truth.arc)
            final.append(r.final_error)
            checkpoints.append([r.errors[0], r.errors[ends[0]], r.errors[ends[1]], r.errors[-1]])
        out[kind] = (np.array(final), np.array(checkpoints), time.perf_counter() - t0)
    out["ends"] = ends
    return out


def test_c09_closed_loop_convergence(verdict, closed_loop):
    final, ck, secs = closed_loop["location_dependent"]
    frac = float((final <= 0.1).mean())
    med = np.median(ck, axis=0)
    # the first crossing must reduce the error; later ones may only hold or
    # improve it (the posterior bottoms out at the grid quantization floor)
    monotone = med[0] > med[1] >= med[2] >= med[3]
    ok = frac >= 0.9 and monotone and secs < 60
    verdict(9, ok, f"final<=0.1 m in {frac:.0%} of 50 runs; median checkpoints "
                   f"{np.round(med, 4).tolist()} at steps 0,{closed_loop['ends'][0]},"
                   f"{closed_loop['ends'][1]},end; runtime {secs:.1f} s")


def test_c10_noise_model_comparison(verdict, closed_loop):
    ld = float(np.median(closed_loop["location_dependent"][1][:, 1]))
    uni = float(np.median(closed_loop["uniform"][1][:, 1]))
    verdict(10, ld <= uni, f"median error after first crossing: location-dependent {ld:.4f} m, "
                           f"uniform {uni:.4f} m")


def _fit_samples(rng, n, phi, kappa, sigma):
    xt = rng.exponential(3 * kappa, n)
    xr = rng.exponential(3 * kappa, n) + rng.choice([0.0, 1.0], n)
    z = phi * (np.exp(-xt / kappa) + np.exp(-xr / kappa)) + sigma * rng.standard_normal(n)
    return np.column_stack([xt, xr, z])


def test_c11_fitting_self_consistency(verdict):
    rng = np.random.default_rng(11)
    p = fit_fading_params(_fit_samples(rng, 500, -2.5, 0.015, 0.0))
    exact = max(abs(p.phi / -2.5 - 1), abs(p.kappa / 0.015 - 1))
    hits = 0
    seeds = 40
    for seed in range(seeds):
        r = np.random.default_rng(1100 + seed)
        q = fit_fading_params(_fit_samples(r, 10_000, -2.5, 0.015, 0.1))
        hits += abs(q.phi / -2.5 - 1) <= 0.05 and abs(q.kappa / 0.015 - 1) <= 0.05
    ok = exact <= 1e-6 and hits / seeds >= 0.95
    verdict(11, ok, f"noise-free rel err {exact:.1e}; noisy within 5% in {hits}/{seeds} seeds")


def test_c12_signal_extraction_round_trip(verdict):
    dt = 0.5e-9
    t = np.arange(48) * dt
    pulse = SampledSignal(np.exp(-0.5 * ((t - 12e-9) / 2e-9) ** 2), dt)
    unit = normalize_pulse(pulse)
    delays = [40e-9, 150.3e-9, 290.7e-9]
    amps = np.array([1.0 - 0.5j, 0.3 + 0.2j, -0.1j])
    y = sum(a * delayed_pulse(unit, tau, 1024) for a, tau in zip(amps, delays))
    got = np.array(extract_sequentially(SampledSignal(y, dt), pulse, delays))
    rel = float(np.max(np.abs(got - np.conj(amps)) / np.abs(amps)))
    db = max(abs(power_change(g, reference_power([g])[1])) for g in got)
    verdict(12, rel <= 1e-6 and db <= 1e-9, f"max rel amplitude error {rel:.1e}; "
                                            f"unperturbed power change {db:.1e} dB")


def test_c13_determinism(verdict, tmp_path):
    digests = []
    for run in ("a", "b"):
        m, r = tmp_path / run / "m", tmp_path / run / "r"
        assert main(["simulate", "--scenario", str(SCENARIO), "--out", str(m), "--seed", "3"]) == 0
        assert main(["calibrate", "--scenario", str(SCENARIO), "--measurements", str(m),
                     "--out", str(r)]) == 0
        digests.append({p.relative_to(tmp_path / run): p.read_bytes()
                        for p in sorted((tmp_path / run).rglob("*")) if p.is_file()})
    same = digests[0] == digests[1]
    verdict(13, same, f"{len(digests[0])} files byte-identical across two runs: {same}")


def test_c14_measured_errors_not_reproducible(capsys):
    with capsys.disabled():
        print("\n[criterion 14] N/A  published measured errors need the original measurement "
              "data; criteria 8-10 are the substitutes")
    pytest.skip("declared non-reproducible without the measurement campaigns' data")
