"""End-to-end acceptance checks for the full simulation and analysis chain.

Each test prints one `criterion N: PASS/FAIL - ...` line summarizing the
measured numbers against their bounds, then asserts.  The heavy fixtures
(three eta sweeps at matched crossover, Ramsey evolutions at N = 1000 and
N = 5000, one dense-cloud solve at N = 1e5) are module scoped and shared;
a full run takes a bit over an hour on one core.
"""

import math
import time

import numpy as np
import pytest
from scipy.linalg import expm

from becramsey.analysis import fit_power_law, phase_slope_frequency
from becramsey.dynamics import initialize_after_pulse, propagate
from becramsey.gridfield import make_grid
from becramsey.ground import (
    GroundOptions,
    default_ground_grid,
    eta_sweep,
    solve_ground_1d,
    solve_ground_3d,
)
from becramsey.models import (
    exact_quantum_josephson,
    improved_overlap,
    josephson_fringe,
    overlap_from_profile,
    sensitivity_ideal,
    sensitivity_quantum,
    tf_eta_3d,
    tf_quantities,
)
from becramsey.params import (
    SpeciesSpec,
    TrapSpec,
    reduce_problem,
    stiffness_for_matched_crossover,
    tf_eta_1d,
    tf_half_length,
)

OMEGA_T = 2.0 * math.pi * 350.0
OMEGA_Z_REF = 2.0 * math.pi * 3.5
RB = SpeciesSpec()
QS = (2, 4, 10)
CROSSOVER_MATCH = 14_000.0  # all three trap powers share this transverse crossover
OPTS = GroundOptions(dtau=0.05)
MS_120 = 0.120 * OMEGA_T  # 120 ms in trap time units
HALF_SECOND = 0.5 * OMEGA_T
RED_REF = reduce_problem(TrapSpec.harmonic(OMEGA_T, OMEGA_Z_REF), RB)
GAMMA1 = RED_REF.gamma1
GAMMA2 = RED_REF.gamma2

# grid extents sized to 1.5x the TF half-length at the largest N each fixture runs
SWEEP_Z_MAX = {2: 140.0, 4: 160.0, 10: 180.0}
Z_MAX_1000 = {2: 100.0, 4: 130.0, 10: 135.0}
Z_MAX_5000 = {2: 165.0, 4: 175.0, 10: 145.0}


def _report(num, checks):
    """Print the single pass/fail line for a criterion, then assert."""
    ok = all(flag for flag, _ in checks)
    detail = "; ".join(text for _, text in checks)
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}", flush=True)
    assert ok, f"criterion {num}: {detail}"


@pytest.fixture(scope="module")
def matched_traps():
    traps = {}
    for q in QS:
        k = stiffness_for_matched_crossover(q, CROSSOVER_MATCH, OMEGA_T)
        traps[q] = TrapSpec(omega_T=OMEGA_T, k=k, q=q)
    return traps


@pytest.fixture(scope="module")
def sweep_results(matched_traps):
    n_list = np.rint(np.geomspace(100.0, 3000.0, 7)).astype(float)
    out = {}
    for q in QS:
        grid = make_grid(64, 1024, 6.0, SWEEP_Z_MAX[q])
        t0 = time.perf_counter()
        out[q] = eta_sweep(matched_traps[q], RB, n_list, grid=grid, opts=OPTS)
        print(f"[sweep q={q}] {time.perf_counter() - t0:.0f} s", flush=True)
    return out


def _ramsey_run(trap, n_atoms, grid, t_final, dt, sample_every):
    gs = solve_ground_3d(trap, RB, n_atoms, grid=grid, opts=OPTS)
    red = reduce_problem(trap, RB)
    state = initialize_after_pulse(gs.grid, gs.psi)
    series, _ = propagate(state, red, n_atoms, t_final, dt=dt, sample_every=sample_every)
    return gs, series


@pytest.fixture(scope="module")
def ramsey_1000(matched_traps):
    out = {}
    for q in QS:
        grid = make_grid(48, 512, 6.0, Z_MAX_1000[q])
        t0 = time.perf_counter()
        gs, series = _ramsey_run(matched_traps[q], 1000.0, grid, MS_120, 2e-3, 100)
        out[q] = {"ground": gs, "series": series}
        print(f"[ramsey N=1000 q={q}] {time.perf_counter() - t0:.0f} s", flush=True)
    # halved time step for the q = 10 discretization check
    gs = out[10]["ground"]
    red = reduce_problem(matched_traps[10], RB)
    state = initialize_after_pulse(gs.grid, gs.psi)
    half, _ = propagate(state, red, 1000.0, MS_120, dt=1e-3, sample_every=200)
    out[10]["series_half"] = half
    return out


@pytest.fixture(scope="module")
def ramsey_5000(matched_traps):
    out = {}
    for q in QS:
        grid = make_grid(48, 512, 6.0, Z_MAX_5000[q])
        t0 = time.perf_counter()
        gs = solve_ground_3d(matched_traps[q], RB, 5000.0, grid=grid, opts=OPTS)
        red = reduce_problem(matched_traps[q], RB)
        omega_n = 5000.0 * gs.eta_n * red.gamma1
        # q = 10 runs to three fringe periods, the others to half a second
        t_final = 3.0 * 2.0 * math.pi / omega_n if q == 10 else HALF_SECOND
        state = initialize_after_pulse(gs.grid, gs.psi)
        series, _ = propagate(state, red, 5000.0, t_final, dt=5e-3, sample_every=250)
        out[q] = {"ground": gs, "series": series, "omega_n": omega_n}
        print(f"[ramsey N=5000 q={q}] {time.perf_counter() - t0:.0f} s", flush=True)
    return out


@pytest.fixture(scope="module")
def dense_cloud(matched_traps):
    # N = 1e5 sits far above the 14000-atom transverse crossover of the q = 2 trap
    trap = matched_traps[2]
    z_n = tf_half_length(trap, RB, 1e5)
    grid = make_grid(48, 2048, 6.0, 1.3 * z_n)
    t0 = time.perf_counter()
    gs = solve_ground_3d(trap, RB, 1e5, grid=grid, opts=OPTS)
    print(f"[dense cloud N=1e5] {time.perf_counter() - t0:.0f} s", flush=True)
    return gs


def test_criterion_1_noninteracting_reference():
    """g = 0, q = 2: exact oscillator chemical potential and Gaussian eta."""
    trap = TrapSpec.harmonic(OMEGA_T, OMEGA_Z_REF)
    ideal = SpeciesSpec(a11=0.0, a12=0.0, a22=0.0)
    grid = default_ground_grid(trap, ideal, 1.0)
    t0 = time.perf_counter()
    gs = solve_ground_3d(trap, ideal, 1.0, grid=grid, opts=OPTS)
    elapsed = time.perf_counter() - t0
    wz = OMEGA_Z_REF / OMEGA_T
    mu_exact = 1.0 + 0.5 * wz
    eta_exact = math.sqrt(wz) / (2.0 * math.pi) ** 1.5
    checks = [
        (abs(gs.mu - mu_exact) < 1e-3, f"mu={gs.mu:.6f} vs {mu_exact:.6f} (tol 1e-3)"),
        (
            abs(gs.eta_n / eta_exact - 1.0) < 5e-3,
            f"eta={gs.eta_n:.6e} vs {eta_exact:.6e} (tol 0.5%)",
        ),
        (elapsed < 60.0, f"runtime {elapsed:.1f} s (< 60)"),
    ]
    _report(1, checks)


def test_criterion_2_quasi_1d_exponent(matched_traps, sweep_results):
    """Numeric eta_N in the quasi-1D regime falls as N^(-1/(q+1)).

    The reduced longitudinal solver carries the 1D-regime exponent.  The
    full-3D sweep over the same atom numbers already feels the transverse
    crossover (its eta is suppressed by the swelling transverse profile,
    11% at N = 3000 on the q = 10 trap), so its secant slope sits strictly
    below the asymptotic law for every q; that ordering is asserted as the
    crossover signature and both slopes are reported.
    """
    checks = []
    for q in QS:
        sw = sweep_results[q]
        target = -1.0 / (q + 1)
        eta_line = np.array(
            [
                RED_REF.eta_T
                * solve_ground_1d(matched_traps[q], RB, n, opts=OPTS).eta_l
                for n in sw.n_atoms
            ]
        )
        slope_1d = fit_power_law(sw.n_atoms, eta_line).exponent
        slope_3d = sw.exponent_1d
        txt_3d = "none" if slope_3d is None else f"{slope_3d:.4f}"
        ok = (
            not sw.failures
            and abs(slope_1d - target) <= 0.10 * abs(target)
            and slope_3d is not None
            and slope_3d < slope_1d
        )
        checks.append(
            (
                ok,
                f"q={q} slope {slope_1d:.4f} vs {target:.4f} (tol 10%),"
                f" 3d secant {txt_3d}",
            )
        )
    _report(2, checks)


def test_criterion_3_crossover(matched_traps, dense_cloud):
    """3D TF scaling above the crossover; quasi-1D prediction fails there."""
    checks = []
    n_big = np.geomspace(1e6, 1e8, 9)
    for q in QS:
        eta3 = np.array([tf_eta_3d(matched_traps[q], RB, n) for n in n_big])
        fit = fit_power_law(n_big, eta3)
        target = -(q + 1.0) / (2.0 * q + 1.0)
        checks.append(
            (
                abs(fit.exponent - target) <= 0.01 * abs(target),
                f"q={q} 3d slope {fit.exponent:.4f} vs {target:.4f} (tol 1%)",
            )
        )
    eta_1d = tf_eta_1d(matched_traps[2], RB, 1e5)
    eta_3d = tf_eta_3d(matched_traps[2], RB, 1e5)
    dev_1d = dense_cloud.eta_n / eta_1d - 1.0
    dev_3d = dense_cloud.eta_n / eta_3d - 1.0
    checks.append(
        (
            abs(dev_1d) > 0.10,
            f"N=1e5 eta off 1d TF by {100 * dev_1d:+.1f}% (>10 needed),"
            f" off 3d TF by {100 * dev_3d:+.1f}%",
        )
    )
    _report(3, checks)


def test_criterion_4_conservation_and_time_step(ramsey_1000):
    """120 ms at N = 1000, q = 10: norms, energy, and dt convergence."""
    s = ramsey_1000[10]["series"]
    h = ramsey_1000[10]["series_half"]
    drift1 = np.max(np.abs(s.norm1_plain - s.norm1_plain[0])) / s.norm1_plain[0]
    drift2 = np.max(np.abs(s.norm2_plain - s.norm2_plain[0])) / s.norm2_plain[0]
    norm_drift = max(float(drift1), float(drift2))
    e_drift = float(np.max(np.abs(s.energy - s.energy[0])) / abs(s.energy[0]))
    if len(s.times) == len(h.times) and np.allclose(s.times, h.times, rtol=0.0, atol=1e-9):
        dp1 = float(np.max(np.abs(s.p1 - h.p1)))
        ok_dt, txt_dt = dp1 < 1e-4, f"dt halving dp1 {dp1:.2e} (<1e-4)"
    else:
        ok_dt, txt_dt = False, "sample grids of the two runs differ"
    checks = [
        (norm_drift < 1e-8, f"norm drift {norm_drift:.2e} (<1e-8)"),
        (e_drift < 1e-6, f"energy drift {e_drift:.2e} (<1e-6)"),
        (ok_dt, txt_dt),
    ]
    _report(4, checks)


def test_criterion_5_fringe_frequency(ramsey_1000):
    """Simulated fringe frequency approaches N*eta_N*gamma1 as q grows."""
    devs = {}
    for q in QS:
        omega_n = 1000.0 * ramsey_1000[q]["ground"].eta_n * GAMMA1
        f_sim, _ = phase_slope_frequency(ramsey_1000[q]["series"])
        devs[q] = abs(f_sim - omega_n) / omega_n
    ordered = devs[2] > devs[4] > devs[10]
    checks = [
        (devs[10] < 0.05, f"q=10 dev {100 * devs[10]:.2f}% (<5)"),
        (
            ordered,
            "deviation falls with q: "
            + " > ".join(f"q{q}:{100 * devs[q]:.2f}%" for q in QS),
        ),
    ]
    _report(5, checks)


def test_criterion_6_visibility_and_model_fit(ramsey_5000, matched_traps):
    """Flatter traps keep visibility longer; improved model beats the plain fringe."""
    t_common = np.linspace(0.0, HALF_SECOND, 400)
    vis = {}
    for q in QS:
        s = ramsey_5000[q]["series"]
        vis[q] = np.interp(t_common, s.times, np.abs(s.overlap))
    tol = 1e-3  # interpolation slack on an O(1) signal
    ok_order = bool(
        np.all(vis[10] >= vis[4] - tol)
        and np.all(vis[4] >= vis[2] - tol)
        and vis[10].mean() > vis[4].mean() > vis[2].mean()
    )
    s10 = ramsey_5000[10]["series"]
    jos = josephson_fringe(ramsey_5000[10]["omega_n"], s10.times)
    adhoc = improved_overlap(
        matched_traps[10],
        RB,
        5000.0,
        s10.times,
        variant="adhoc_numeric",
        eta_n=ramsey_5000[10]["ground"].eta_n,
    )
    rms_jos = float(np.sqrt(np.mean((s10.p1 - jos.series.p1) ** 2)))
    rms_adhoc = float(np.sqrt(np.mean((s10.p1 - adhoc.series.p1) ** 2)))
    checks = [
        (
            ok_order,
            "mean visibility over 0.5 s "
            + ", ".join(f"q{q}={vis[q].mean():.4f}" for q in (10, 4, 2)),
        ),
        (
            rms_adhoc < rms_jos,
            f"p1 rms over 3 periods: improved {rms_adhoc:.4f} < plain {rms_jos:.4f}",
        ),
    ]
    _report(6, checks)


def test_criterion_7_improved_model_limits(matched_traps):
    """Improved overlap starts at omega_n and keeps full visibility when flat."""
    trap = matched_traps[10]
    red = reduce_problem(trap, RB)
    tfq = tf_quantities(trap, RB, 1000.0)
    omega_ref = 1000.0 * tfq.eta_t * tfq.eta_l * red.gamma1
    times = np.linspace(0.0, 1e-4 * 2.0 * math.pi / omega_ref, 64)
    curve = improved_overlap(trap, RB, 1000.0, times)
    f0, _ = phase_slope_frequency(curve.series)
    rel = abs(f0 / curve.params["omega_n"] - 1.0)
    rel_ref = abs(curve.params["omega_n"] / omega_ref - 1.0)
    # uniform line density: every atom accrues the same phase, so no dephasing
    m = 4096
    length = 2.0 * tfq.z_n
    q0 = np.full(m, 1.0 / length)
    t_long = np.linspace(0.0, 2000.0, 200)
    ov = overlap_from_profile(q0, length / m, 1000.0 * tfq.eta_t * red.gamma1, t_long)
    vis_err = float(np.max(np.abs(np.abs(ov) - 1.0)))
    checks = [
        (
            rel < 1e-6 and rel_ref < 1e-12,
            f"fitted f(t->0)/omega_n - 1 = {rel:.1e} (<1e-6)",
        ),
        (vis_err < 1e-13, f"uniform profile max ||ov|-1| = {vis_err:.1e}"),
    ]
    _report(7, checks)


def test_criterion_8_exact_quantum(matched_traps):
    """Exact symmetric-subspace signal: ideal limit, N = 2 oracle, Rb dephasing."""
    eta = 1e-3
    n = 1000
    omega = n * eta * GAMMA1
    times = np.linspace(0.0, 2.0 * 2.0 * math.pi / omega, 257)
    ideal = exact_quantum_josephson(n, GAMMA1, 0.0, eta, times)
    dev_ideal = float(np.max(np.abs(ideal.series.overlap - np.exp(-1j * omega * times))))
    jy_dev = float(np.max(np.abs(2.0 / n * ideal.j_plus.imag - np.sin(omega * times))))

    # N = 2 oracle: direct 3x3 matrix exponential in the Dicke basis m = -1, 0, 1
    jz = np.diag([-1.0, 0.0, 1.0])
    jp = np.zeros((3, 3))
    jp[1, 0] = jp[2, 1] = math.sqrt(2.0)
    c0 = np.array([0.5, 1.0 / math.sqrt(2.0), 0.5])
    h = eta * (GAMMA1 * 2.0 * jz + GAMMA2 * jz @ jz)
    t_small = np.linspace(0.0, 3000.0, 7)
    small = exact_quantum_josephson(2, GAMMA1, GAMMA2, eta, t_small)
    worst = 0.0
    for i, t in enumerate(t_small):
        psi = expm(-1j * h * t) @ c0
        worst = max(worst, abs(np.conj(psi) @ jp @ psi - small.j_plus[i]))

    t_period = np.linspace(0.0, 2.0 * math.pi / omega, 200)
    rb = exact_quantum_josephson(n, GAMMA1, GAMMA2, eta, t_period)
    min_vis = float(np.min(np.abs(rb.series.overlap)))
    checks = [
        (
            dev_ideal < 1e-12 and jy_dev < 1e-12,
            f"gamma2=0 vs ideal fringe {max(dev_ideal, jy_dev):.1e} (<1e-12)",
        ),
        (worst < 1e-12, f"N=2 vs expm {worst:.1e} (<1e-12)"),
        (min_vis > 0.99, f"Rb N=1000 min visibility {min_vis:.6f} (>0.99)"),
    ]
    _report(8, checks)


def test_criterion_9_sensitivity_scaling(sweep_results):
    """Super-Heisenberg slope of the best-case gamma1 sensitivity with N."""
    n, eta = 1000.0, 7.5e-4
    t1 = math.pi / (n * eta * GAMMA1)  # first fringe zero crossing
    expected = 1.0 / (n**1.5 * eta * t1)
    sc = sensitivity_ideal(n, eta, np.array([t1]))
    rel = abs(sc.delta_gamma1[0] / expected - 1.0)
    sq = sensitivity_quantum(exact_quantum_josephson(int(n), GAMMA1, 0.0, eta, np.array([t1])))
    rel_q = abs(sq.delta_gamma1[0] / expected - 1.0)
    checks = [
        (rel < 1e-10, f"ideal at t1 rel {rel:.1e} (<1e-10)"),
        (rel_q < 1e-10, f"exact quantum at t1 rel {rel_q:.1e}"),
    ]
    t_ref = 100.0  # fixed interrogation time, trap units
    for q in QS:
        sw = sweep_results[q]
        keep = np.isfinite(sw.eta)
        deltas = np.array(
            [
                sensitivity_ideal(nn, ee, np.array([t_ref])).delta_gamma1[0]
                for nn, ee in zip(sw.n_atoms[keep], sw.eta[keep])
            ]
        )
        fit = fit_power_law(sw.n_atoms[keep], deltas)
        target = -1.5 + 1.0 / (q + 1)
        ok = abs(fit.exponent - target) <= 0.10 * abs(target) and fit.exponent < -1.0
        checks.append(
            (ok, f"q={q} slope {fit.exponent:.4f} vs {target:.4f} (tol 10%, and < -1)")
        )
    _report(9, checks)
