"""
Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

The runs use the default configurations of the experiment runner.  The
soft box-run criterion (10) always reports its slope; its range is a
diagnostic and does not fail the suite.  Set VFPNS_SKIP_BOX=1 to skip the
~15 minute box run.
"""
import os
import time

import numpy as np
import pytest

from conftest import random_state
from vfpns import experiments as ex
from vfpns import linear_analysis as la
from vfpns import spatial_spectral as sp
from vfpns import timestepper as ts
from vfpns import velocity_basis as vb
from vfpns import verification
from vfpns.params import ModelParams


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail, soft=False):
        label = ("PASS" if ok else "FAIL") + (" (soft)" if soft else "")
        with capsys.disabled():
            print(f"\nCRITERION {number:>2}: {label}  {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def torus_run(tmp_path_factory):
    cfg = ex.resolve_config({}, "torus_run", output_dir=str(tmp_path_factory.mktemp("torus")))
    start = time.perf_counter()
    code, rep = ex.run_experiment(cfg)
    return code, rep, time.perf_counter() - start


def test_criterion_01_operator_oracle(report):
    start = time.perf_counter()
    worst = {N: max(verification.oracle_deltas(N, 3, 200, seed=0).values()) for N in (4, 6, 8)}
    wall = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-10 and wall < 30
    detail = ", ".join(f"N={N}: {w:.1e}" for N, w in worst.items())
    assert report(1, ok, f"oracle deltas {detail} (tol 1e-10); {wall:.1f} s (< 30 s)")


def test_criterion_02_structural_identities(report):
    start = time.perf_counter()
    worst, coercive = 0.0, np.inf
    for N in range(2, 9):
        s = verification.structural_identities(N, 3, 50, seed=0)
        worst = max(worst, s["kernel_identity"], s["idempotency"], s["orthogonality"])
        coercive = min(coercive, s["coercivity"])
    wall = time.perf_counter() - start
    ok = worst <= 1e-14 and coercive > 0 and wall < 10
    assert report(2, ok, f"identities {worst:.1e} (tol 1e-14), min lambda_0(N<=8) = {coercive:.4f} > 0; "
                         f"{wall:.1f} s (< 10 s)")


def test_criterion_03_gap_shape(report):
    start = time.perf_counter()
    params = ModelParams()
    trunc = vb.enumerate_truncation(3, 6)
    kmags = np.geomspace(0.05, 20.0, 50)
    rates, c = la.gap_survey(kmags, trunc, params)
    shape = kmags ** 2 / (1 + kmags ** 2)
    kdim = la.kernel_dimension(la.build_mode_matrix(np.zeros(3), trunc, params))
    wall = time.perf_counter() - start
    ok = c > 0 and bool(np.all(rates >= c * shape * (1 - 1e-12))) and kdim == 5 and wall < 60
    assert report(3, ok, f"c = {c:.4f} > 0 over 50 |k| in [0.05, 20], kernel dim {kdim} (d+2 = 5); "
                         f"{wall:.1f} s (< 60 s)")


def decay_slope(m, low):
    params = ModelParams()
    trunc = vb.enumerate_truncation(3, 6)
    times = ex.decay_times()
    values = la.semigroup_decay_curve(times, trunc, params, m=m, low_cutoff=1.0 if low else None)
    return la.fit_decay_exponent(times, values, (10.0, 1000.0)).fitted_exponent


def test_criterion_04_semigroup_decay(report):
    start = time.perf_counter()
    s0, s1 = decay_slope(0, False), decay_slope(1, False)
    wall = time.perf_counter() - start
    ok = abs(s0 + 0.75) <= 0.08 and abs(s1 + 1.25) <= 0.10 and wall < 300
    assert report(4, ok, f"m=0 slope {s0:.4f} (-0.75 +- 0.08), m=1 slope {s1:.4f} (-1.25 +- 0.10); "
                         f"{wall:.1f} s (< 300 s)")


def test_criterion_05_low_frequency_decay(report):
    s0, s1 = decay_slope(0, True), decay_slope(1, True)
    ok = abs(s0 + 0.75) <= 0.08 and abs(s1 + 1.25) <= 0.10
    assert report(5, ok, f"phi_0-restricted: m=0 slope {s0:.4f} (-0.75 +- 0.08), "
                         f"m=1 slope {s1:.4f} (-1.25 +- 0.10)")


def test_criterion_06_torus_exponential_decay(report, torus_run):
    code, rep, wall = torus_run
    s = rep.summary
    drift = max(s["conservation_drift"].values())
    ok = (s["r_squared"] > 0.99 and s["decay_rate"] > 0 and drift <= 1e-8
          and s["positivity_min"] > 0 and wall < 600)
    assert report(6, ok, f"rate {s['decay_rate']:.4f} > 0, R^2 {s['r_squared']:.5f} (> 0.99), "
                         f"drift {drift:.1e} (<= 1e-8 per unit time), positivity min "
                         f"{s['positivity_min']:.2e} > 0; {wall:.0f} s (< 600 s)")


def test_criterion_07_energy_dissipation(report, torus_run):
    code, rep, _ = torus_run
    s = rep.summary
    so = s["second_order"]
    ok = (s["max_energy_increase"] <= 1e-9 and s["lambda_fit"] > 0
          and so["holds_on_second_half"])
    assert report(7, ok, f"max E increase per sample {s['max_energy_increase']:.1e} (<= 1e-9), "
                         f"fitted lambda {s['lambda_fit']:.4f} > 0; E1 bound with C = {so['C']:.3g} "
                         f"holds: {so['holds_on_second_half']} (E1 fit lambda {so['lambda']:.3g})")


def test_criterion_08_bernstein(report):
    grid = sp.make_grid(3, 16)
    viol, worst = verification.bernstein_violations(grid, 100, seed=0)
    assert report(8, viol == 0, f"{viol} violations on 100 band-limited fields "
                                f"(worst lhs/rhs {worst:.3f})")


def test_criterion_09_integrator(report):
    params = ModelParams()
    grid = sp.make_grid(3, 8)
    trunc = vb.enumerate_truncation(3, 4)
    rng = np.random.default_rng(2024)
    s0 = random_state(grid, trunc, 1.0, rng, band=2)
    dt = 0.05
    res = ts.integrate(s0, params, 100 * dt, dt, sample_every=100, nonlinear=False)
    x0, x1 = s0.stack().reshape(s0.n_components, -1), res.final_state.stack().reshape(s0.n_components, -1)
    modes = grid.mode_numbers.reshape(3, -1)
    worst = 0.0
    for j in np.flatnonzero(grid.dealias_mask.reshape(-1)):
        mm = la.build_mode_matrix(grid.dk * modes[:, j].astype(float), trunc, params)
        ref = la.propagator(mm, 100 * dt) @ x0[:, j]
        worst = max(worst, np.linalg.norm(x1[:, j] - ref) / max(np.linalg.norm(x0[:, j]), 1e-300))

    s_nl = random_state(grid, trunc, 0.5, rng, band=2)

    def run(h):
        return ts.integrate(s_nl, params, 1.0, h, sample_every=10 ** 6).final_state.stack()

    ref = run(1 / 64)
    errs = [np.linalg.norm(run(h) - ref) for h in (0.25, 0.125, 1 / 16)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = worst <= 1e-10 and np.all(orders >= 1.8)
    assert report(9, ok, f"linear vs exact propagators {worst:.1e} (tol 1e-10) over 100 steps; "
                         f"observed orders {', '.join(f'{o:.3f}' for o in orders)} (>= 1.8)")


@pytest.mark.skipif(os.environ.get("VFPNS_SKIP_BOX") == "1", reason="VFPNS_SKIP_BOX=1")
def test_criterion_10_box_run_soft(report, tmp_path):
    cfg = ex.resolve_config({}, "box_run", output_dir=str(tmp_path / "box"))
    start = time.perf_counter()
    code, rep = ex.run_experiment(cfg)
    wall = time.perf_counter() - start
    slope = rep.summary["l2_slope"]["fitted_exponent"]
    in_range = -0.95 <= slope <= -0.55
    report(10, in_range and wall < 1800,
           f"L2 slope {slope:.4f} on t in [5, 80] (soft range [-0.95, -0.55], target -0.75); "
           f"{wall:.0f} s (< 1800 s)", soft=True)
    # the range is diagnostic only; the run itself must complete
    assert code in (0, 1) and rep.checks["completed"]
