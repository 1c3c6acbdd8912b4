"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are collected in ``RESULTS`` and repeated in the terminal summary.
"""
import json
import time

import numpy as np
import pytest

from pehopt.cluster import select_candidates
from pehopt.excitation import BridgeModel, TrafficSpec, synthesize, tone_window
from pehopt.femodel import ModelSettings, build_device
from pehopt.geometry import ShapeParams, design_bounds
from pehopt.modal import fundamental_frequency, reduce_design, solve_modes
from pehopt.optimizer import PsoConfig, grid_search, optimize, spectral_objective
from pehopt.pipeline.campaign import run_campaign, spearman
from pehopt.response import energy_from_voltage, energy_spectral, frf, frf_full, simulate

from oracles import (CFFF_SQUARE_LAMBDA, euler_bernoulli_bimorph, ritz_plate_frequency,
                     uniform_materials)

RESULTS: dict[int, str] = {}
NOMINAL = ShapeParams(L=0.3, l=0.5, H=0.2)


class Check:
    """Collects named sub-checks and a runtime budget for one criterion."""

    def __init__(self, number, title, budget_s):
        self.number, self.title, self.budget = number, title, budget_s
        self.items = []
        self.t0 = time.perf_counter()

    def add(self, name, ok, detail=""):
        self.items.append((name, bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.t0
        self.add("runtime", elapsed < self.budget, f"{elapsed:.1f} s < {self.budget:g} s")
        ok = all(i[1] for i in self.items)
        parts = "; ".join(f"{n} {'ok' if g else 'FAIL'} ({d})" if d else f"{n} {'ok' if g else 'FAIL'}"
                          for n, g, d in self.items)
        line = f"criterion {self.number:2d} {'PASS' if ok else 'FAIL'}  {self.title}: {parts}"
        RESULTS[self.number] = line
        print(line)
        failed = [f"{n} ({d})" for n, g, d in self.items if not g]
        assert ok, "; ".join(failed)


def _rel(a, b):
    return abs(a - b) / abs(b)


# ---------------------------------------------------------------------------

def test_criterion_01_plate_against_ritz():
    c = Check(1, "uniform clamped-free square plate vs Rayleigh-Ritz", 10)
    mats = uniform_materials()
    s = mats.substrate
    a, h = 0.3, 1e-3
    f_iga = fundamental_frequency(build_device(ShapeParams(L=a, l=1.0, H=0.2, h=h),
                                               ModelSettings(elements=(16, 16), materials=mats)))
    f_rr = ritz_plate_frequency(a, a, h, s.E, s.nu, s.rho, terms=(15, 15))
    D = s.E * h ** 3 / (12 * (1 - s.nu ** 2))
    lam = 2 * np.pi * f_rr * a * a * np.sqrt(s.rho * h / D)
    c.add("IGA 16x16 vs RR 15x15", _rel(f_iga, f_rr) < 0.01,
          f"{f_iga:.4f} vs {f_rr:.4f} Hz, {100 * _rel(f_iga, f_rr):.3f}%")
    c.add("RR vs tabulated parameter", _rel(lam, CFFF_SQUARE_LAMBDA) < 0.01, f"lambda {lam:.4f}")
    c.finish()


def test_criterion_02_composite_beam():
    c = Check(2, "full-coverage narrow bimorph vs Euler-Bernoulli", 5)
    p = ShapeParams(L=0.3, l=1.0, H=0.2, R=0.1)
    settings = ModelSettings(R=0.1)
    f = fundamental_frequency(build_device(p, settings))
    ref = euler_bernoulli_bimorph(p, settings.materials)
    c.add("within 2%", _rel(f, ref) < 0.02, f"{f:.4f} vs {ref:.4f} Hz, {100 * _rel(f, ref):.3f}%")
    c.finish()


def test_criterion_03_matrix_identities():
    c = Check(3, "F = M 1, symmetry, SPD on 50 random shapes", 30)
    rng = np.random.default_rng(2024)
    lo, hi = design_bounds()
    worst_f = worst_sym = 0.0
    spd = True
    for _ in range(50):
        x = lo + rng.random(3) * (hi - lo)
        m = build_device(ShapeParams.from_vector(x))
        one = np.ones(m.M.shape[0])
        worst_f = max(worst_f, np.linalg.norm(m.F - m.M @ one) / np.linalg.norm(m.F))
        for A in (m.M, m.K):
            worst_sym = max(worst_sym, np.max(np.abs(A - A.T)) / np.max(np.abs(A)))
        M, K, _, _ = m.constrained()
        spd &= np.linalg.eigvalsh(M).min() > 0 and np.linalg.eigvalsh(K).min() > 0
    c.add("F = M 1", worst_f < 1e-10, f"worst {worst_f:.1e}")
    c.add("symmetry", worst_sym < 1e-12, f"worst {worst_sym:.1e}")
    c.add("SPD constrained M, K", spd)
    c.finish()


def test_criterion_04_reduction_fidelity():
    c = Check(4, "modal reduction fidelity", 20)
    device = build_device(NOMINAL)
    f = np.linspace(0.5, 60.0, 200)
    full = frf_full(device, f).values
    red = frf(solve_modes(device, device.n_dof), f).values
    err_n = np.max(np.abs(red - full) / np.abs(full))
    c.add("K = N", err_n < 1e-8, f"max rel {err_n:.1e}")
    f15 = np.linspace(0.5, 15.0, 200)
    full15 = frf_full(device, f15).values
    err_5 = np.max(np.abs(frf(solve_modes(device, 5), f15).values - full15) / np.abs(full15))
    c.add("K = 5 below 15 Hz", err_5 < 1e-3, f"max rel {err_5:.1e}")
    c.finish()


def test_criterion_05_frf_time_consistency():
    c = Check(5, "FRF and time-domain consistency", 60)
    reduced = reduce_design(NOMINAL, ModelSettings())
    f0, A = 0.9 * reduced.frequencies_hz[0], 0.3
    tau = 1.0 / (reduced.zeta[0] * reduced.omega[0])
    sim = simulate(reduced, tone_window([f0], [A], max(12 * tau, 20.0), 400.0))
    tail = sim.voltage[sim.time > 10 * tau]
    amp = 0.5 * (tail.max() - tail.min())
    H = abs(frf(reduced, [f0]).values[0])
    c.add("steady-state amplitude", _rel(amp, H * A) < 0.01, f"{100 * _rel(amp, H * A):.3f}%")

    rate = 10 * reduced.mode_frequencies_hz[-1]
    worst = 0.0
    for seed in (4, 5):
        w = synthesize(BridgeModel(), TrafficSpec(rate_per_hour=30, seed=seed), "mid", 600.0, rate=rate)
        sim = simulate(reduced, w)
        keep = sim.time >= tau
        e_time = energy_from_voltage(sim.voltage[keep], w.dt, reduced.R_l)
        e_spec = energy_spectral(reduced, w) * keep.sum() / w.samples.size
        worst = max(worst, _rel(e_spec, e_time))
    c.add("broadband spectral vs time", worst < 0.05, f"worst {100 * worst:.2f}% at {rate:.0f} Hz")
    c.finish()


def test_criterion_06_tuning():
    c = Check(6, "single-tone tuning vs 30^3 grid oracle", 600)
    settings = ModelSettings(elements=(4, 4))
    tone = 2.5
    w = tone_window([tone], [0.1], 60.0, 100.0)
    cfg = PsoConfig()
    res = optimize(w, cfg, settings)
    c.add("fundamental at tone", _rel(res.frequency, tone) < 0.05, f"{res.frequency:.3f} Hz")
    _, best_grid = grid_search(spectral_objective(w, settings, cfg.bin_hz), n=30)
    c.add("PSO >= 99% of grid", res.objective >= 0.99 * best_grid,
          f"ratio {res.objective / best_grid:.4f}")
    c.finish()


def test_criterion_07_clustering():
    c = Check(7, "silhouette clustering", 30)

    class Opt:
        def __init__(self, x, i):
            self.params, self.window_id, self.frequency = ShapeParams(*x), f"w{i:02d}", 0.0

    rng = np.random.default_rng(7)
    lo, hi = design_bounds()
    centres = [(0.15, 0.3, 0.1), (0.3, 0.6, 0.25), (0.45, 0.9, 0.4)]
    pts = np.clip(np.vstack([np.array(m) + 0.01 * rng.standard_normal((8, 3)) for m in centres]), lo, hi)
    opts = [Opt(x, i) for i, x in enumerate(pts)]
    cands, rep = select_candidates(opts, analyze=False)
    c.add("three blobs give k = 3", rep.k == 3, f"k = {rep.k}")
    _, same = select_candidates([Opt((0.3, 0.5, 0.2), i) for i in range(12)], analyze=False)
    c.add("coincident optima give k = 1", same.k == 1 and same.fallback)
    shuffled = [opts[i] for i in rng.permutation(len(opts))]
    cands2, rep2 = select_candidates(shuffled, analyze=False)
    c.add("permutation invariance", rep2.assignments == rep.assignments
          and [x.params for x in cands2] == [x.params for x in cands])
    c.finish()


def _campaign(seed, **over):
    doc = {
        "seed": seed,
        "locations": [{"id": "mid"}],
        "windows": {"count": 3, "duration": 3600.0, "rate": 40.0},
        "traffic": {"rates_per_hour": [5, 15, 25]},
        "pso": {"swarm_size": 6, "max_iter": 5},
        "model": {"elements": [4, 4]},
        "threads": 4,
        "plots": False,
    }
    doc.update(over)
    return doc


def test_criterion_08_traffic_effect():
    c = Check(8, "traffic volume vs best-device energy over 20 campaigns", 900)
    rows = []
    for seed in range(20):
        report = run_campaign(_campaign(seed), out_dir=False)
        rows += report.locations["mid"].traffic["rows"]
    means = {}
    for cls in ("Low", "Medium", "High"):
        vals = [r["energy_J"] for r in rows if r["traffic_class"] == cls]
        means[cls] = np.mean(vals) if vals else np.nan
    ordered = means["Low"] < means["Medium"] < means["High"]
    c.add("Low < Medium < High", ordered,
          ", ".join(f"{k} {1e3 * v:.2f} mJ" for k, v in means.items()))
    rho = spearman([r["vehicle_count"] for r in rows], [r["energy_J"] for r in rows])
    c.add("Spearman > 0.7", rho is not None and rho > 0.7, f"rho {rho:.3f} over {len(rows)} windows")
    c.finish()


def test_criterion_09_location_effect():
    c = Check(9, "midspan vs near-support energy", 1200)
    doc = _campaign(11, locations=[{"id": "mid"}, {"id": "support"}],
                    bridge={"frequencies": [2.01], "damping": [0.02]},
                    windows={"count": 4, "duration": 3600.0, "rate": 40.0},
                    traffic={"rates_per_hour": [10, 20]})
    report = run_campaign(doc, out_dir=False)
    e_mid = report.locations["mid"].best_energy
    e_sup = report.locations["support"].best_energy
    c.add("mid >= 2x support", e_mid >= 2 * e_sup, f"ratio {e_mid / e_sup:.2f}")
    c.finish()


def test_criterion_10_reproducibility(tmp_path):
    c = Check(10, "byte-identical campaign reports", 600)
    doc = _campaign(5, locations=[{"id": "mid"}, {"id": "support"}],
                    windows={"count": 3, "duration": 600.0, "rate": 40.0}, plots=True)
    run_campaign(doc, out_dir=tmp_path / "a")
    run_campaign({**doc, "threads": 1}, out_dir=tmp_path / "b")
    a = (tmp_path / "a" / "report.json").read_bytes()
    b = (tmp_path / "b" / "report.json").read_bytes()
    c.add("report.json identical", a == b, f"{len(a)} bytes")
    c.add("report parses", bool(json.loads(a)["locations"]))
    c.finish()
