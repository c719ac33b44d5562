"""Ground-state solvers for the single-mode GP equation.

Imaginary-time propagation in trap units with Strang splitting: a half step
of the local part (potential plus interaction, solved exactly as a Bernoulli
flow), a full kinetic step (spectral along z, Crank-Nicolson for the radial
operator), the second local half step, then renormalization.  The local part
is shifted by a running chemical-potential estimate so the norm is roughly
conserved within each step; without the shift the amplitude decay inside a
step weakens the nonlinear term and the renormalized fixed point picks up an
O(dtau) bias, since renormalization does not commute with the nonlinear
flow.  With it the fixed point carries only the O(dtau^2) splitting bias,
which the driver removes by halving dtau whenever the chemical potential has
stalled while the GP residual is still above tolerance.  dtau is also halved
if the total energy ever rises, which in exact arithmetic it cannot.

The 3D solver works on the cylindrical grid; the 1D solver treats the
longitudinal equation with the transverse direction integrated out into an
effective coupling g*N*eta_T.  eta_sweep chains 3D solves over atom number,
warm-starting each from the previous solution rescaled to the new
Thomas-Fermi width.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import fft as sfft
from scipy.linalg import solve_banded

from .gridfield import (
    CylindricalGrid,
    EnergyBreakdown,
    apply_hamiltonian,
    density_moment,
    energy_breakdown,
    gp_residual,
    make_grid,
    norm,
    normalize,
    potential_grid,
    radial_kinetic_tridiag,
)
from .params import (
    ConvergenceError,
    SpeciesSpec,
    TrapSpec,
    critical_atom_numbers,
    reduce_problem,
    tf_half_length,
)


@dataclass
class GroundOptions:
    """Knobs for the imaginary-time drivers.

    Diagnostics run on fixed windows of imaginary time (check_tau), not step
    counts, so the stall test |dmu|/mu < tol_mu per window means the same
    thing at every dtau.  After a step halving the solver waits relax_tau
    before judging again, long enough for the fast modes that carry the
    splitting bias to settle at the new fixed point.
    """

    dtau: float = 1e-3  # initial step, trap units
    tol_mu: float = 1e-10  # relative mu change per diagnostic window that counts as stalled
    tol_residual: float = 1e-6  # GP residual target, trap units
    max_iters: int = 600_000
    check_tau: float = 1.0  # diagnostic window, trap units of imaginary time
    relax_tau: float = 8.0  # post-halving settling span before judging again
    min_dtau: float = 1e-5  # below this, a high residual is reported as stagnation


@dataclass(frozen=True)
class GroundState:
    """Converged 3D ground state; psi is real positive and unit normalized."""

    grid: CylindricalGrid
    psi: np.ndarray
    mu: float
    energies: EnergyBreakdown
    eta_n: float  # inverse condensate volume, rho0**-3
    n_atoms: float
    iterations: int
    residual: float


@dataclass(frozen=True)
class LineGrid:
    """Uniform cell-centered z grid for the reduced longitudinal problem."""

    n_z: int
    z_max: float
    dz: float
    z: np.ndarray
    kz: np.ndarray


@dataclass(frozen=True)
class GroundState1D:
    grid: LineGrid
    phi: np.ndarray
    mu: float
    kinetic: float
    potential: float
    interaction: float
    eta_l: float  # int phi^4 dz, 1/rho0
    n_atoms: float
    iterations: int
    residual: float


@dataclass(frozen=True)
class SweepResult:
    """eta_N and mu tabulated against atom number from chained 3D solves."""

    n_atoms: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray
    n_crossover: float  # transverse crossover atom number of the trap
    failures: tuple  # (N, message) for points whose solve failed
    exponent_1d: Optional[float] = None  # log-log slope fitted below crossover
    window_1d: Optional[tuple] = None
    exponent_3d: Optional[float] = None  # slope fitted above crossover
    window_3d: Optional[tuple] = None


def make_line_grid(n_z: int, z_max: float) -> LineGrid:
    if n_z < 8 or n_z & (n_z - 1):
        raise ValueError(f"n_z must be a power of two >= 8, got {n_z}")
    if z_max <= 0:
        raise ValueError(f"z_max must be positive, got {z_max}")
    dz = 2.0 * z_max / n_z
    z = -z_max + (np.arange(n_z) + 0.5) * dz
    kz = 2.0 * math.pi * np.fft.fftfreq(n_z, d=dz)
    return LineGrid(n_z=n_z, z_max=z_max, dz=dz, z=z, kz=kz)


def default_ground_grid(
    trap: TrapSpec,
    species: SpeciesSpec,
    n_atoms: float,
    n_r: int = 96,
    r_max: float = 6.0,
    n_z: Optional[int] = None,
    z_max: Optional[float] = None,
) -> CylindricalGrid:
    """Grid sized to hold the cloud: transverse wall at several Gaussian
    widths, z extent covering both the TF half-length and the bare
    longitudinal oscillator scale, and dz near a third of rho0."""
    red = reduce_problem(trap, species)
    z_bare = red.k ** (-1.0 / (trap.q + 2))
    z_n = tf_half_length(trap, species, n_atoms) if n_atoms > 0 else 0.0
    if z_max is None:
        z_max = max(1.5 * z_n, 8.0 * z_bare)
    if n_z is None:
        n_z = 1 << max(3, math.ceil(math.log2(2.0 * z_max / 0.32)))
    return make_grid(n_r, n_z, r_max, z_max)


def initial_guess(grid: CylindricalGrid, trap: TrapSpec, species: SpeciesSpec, n_atoms: float) -> np.ndarray:
    """TF line density (with a small Gaussian floor) under the transverse
    Gaussian where the TF width beats the bare oscillator; bare Gaussian
    product otherwise."""
    red = reduce_problem(trap, species)
    z_bare = red.k ** (-1.0 / (trap.q + 2))
    z_n = tf_half_length(trap, species, n_atoms) if red.g11 * n_atoms > 0 else 0.0
    rho2 = grid.r[:, None] ** 2
    if z_n > z_bare:
        peak = (trap.q + 1) / (2.0 * trap.q * z_n)
        q0 = peak * np.clip(1.0 - (grid.z / z_n) ** trap.q, 0.0, None)
        q0 = q0 + 1e-4 * peak * np.exp(-((grid.z / z_n) ** 2))
    else:
        q0 = np.exp(-((grid.z / z_bare) ** 2))
    psi = np.sqrt(q0[None, :]) * np.exp(-0.5 * rho2)
    return normalize(grid, psi)


def _local_step_factors(v: np.ndarray, g_eff: float, half_tau: float, mu_shift: float = 0.0):
    """Factors of the exact local half-step in imaginary time.

    The shifted local flow dpsi/dtau = -(v - mu_shift + g|psi|^2) psi solves
    in closed form (Bernoulli equation for the density), giving
        psi -> psi * E / sqrt(1 + F * psi^2),
    with a = v - mu_shift, E = exp(-a*half_tau) and
    F = g*(1 - exp(-2*a*half_tau))/a, which is positive for every a and
    finite through a = 0.  The shift keeps the norm roughly constant within
    a step, so the nonlinear term sees the correctly normalized density;
    without it the fixed point of the renormalized iteration is displaced
    from the ground state by O(dtau).
    """
    a = v - mu_shift
    small = np.abs(a) < 1e-12
    a_safe = np.where(small, 1.0, a)
    e_half = np.exp(-half_tau * a)
    f_half = np.where(
        small,
        2.0 * g_eff * half_tau,
        g_eff * (-np.expm1(-2.0 * half_tau * a_safe) / a_safe),
    )
    return e_half, f_half


def _radial_cn_bands(grid: CylindricalGrid, dtau: float):
    """Banded forms of A = 1 + (dtau/2) K_rho and the bands of B = 1 - ..."""
    lower, diag, upper = radial_kinetic_tridiag(grid)
    half = 0.5 * dtau
    ab = np.zeros((3, grid.n_r))
    ab[0, 1:] = half * upper[:-1]
    ab[1, :] = 1.0 + half * diag
    ab[2, :-1] = half * lower[1:]
    return ab, (-half * lower, 1.0 - half * diag, -half * upper)


def _apply_tridiag(bands, psi: np.ndarray) -> np.ndarray:
    lower, diag, upper = bands
    out = diag[:, None] * psi
    out[1:] += lower[1:, None] * psi[:-1]
    out[:-1] += upper[:-1, None] * psi[1:]
    return out


def solve_ground_3d(
    trap: TrapSpec,
    species: SpeciesSpec,
    n_atoms: float,
    grid: Optional[CylindricalGrid] = None,
    opts: Optional[GroundOptions] = None,
    psi0: Optional[np.ndarray] = None,
    callback: Optional[Callable] = None,
) -> GroundState:
    """Imaginary-time ground state of the full cylindrical GP equation.

    Converged when the chemical potential is stationary to opts.tol_mu
    between diagnostic checks and the GP residual is below
    opts.tol_residual.  callback, if given, is invoked at every check with
    (iteration, mu, total_energy, residual, dtau).
    """
    if n_atoms < 1:
        raise ValueError(f"atom number must be >= 1, got {n_atoms}")
    opts = opts or GroundOptions()
    red = reduce_problem(trap, species)
    if grid is None:
        grid = default_ground_grid(trap, species, n_atoms)
    if grid.dr > 0.5:
        raise ValueError(f"radial spacing {grid.dr:.3f} is too coarse to resolve the transverse width")
    z_n = tf_half_length(trap, species, n_atoms) if red.g11 * n_atoms > 0 else 0.0
    if z_n > 0 and grid.z_max < 1.1 * z_n:
        raise ValueError(
            f"z extent {grid.z_max:.1f} does not hold the TF half-length {z_n:.1f}"
        )
    g_eff = red.g11 * n_atoms
    v = potential_grid(grid, red.k, trap.q)
    psi = initial_guess(grid, trap, species, n_atoms) if psi0 is None else normalize(grid, psi0.real)
    psi = np.ascontiguousarray(psi, dtype=np.float64)

    kz2 = grid.kz[: grid.n_z // 2 + 1] ** 2
    dtau = opts.dtau
    mu_est = energy_breakdown(grid, psi, v, g_eff).chemical_potential

    def build(dt):
        ab, b_bands = _radial_cn_bands(grid, dt)
        steps = max(1, round(opts.check_tau / dt))
        e_half, f_half = _local_step_factors(v, g_eff, 0.5 * dt, mu_shift=mu_est)
        return ab, b_bands, np.exp(-0.5 * dt * kz2)[None, :], e_half, f_half, steps

    ab, b_bands, exp_kz, e_half, f_half, check_steps = build(dtau)
    relax_checks = 0
    last_mu = None
    last_energy = None
    it = 0
    residual = math.inf
    while it < opts.max_iters:
        for _ in range(check_steps):
            psi *= e_half / np.sqrt(1.0 + f_half * psi * psi)
            psi = sfft.irfft(exp_kz * sfft.rfft(psi, axis=1), n=grid.n_z, axis=1)
            psi = solve_banded(
                (1, 1), ab, _apply_tridiag(b_bands, psi), overwrite_b=True, check_finite=False
            )
            psi *= e_half / np.sqrt(1.0 + f_half * psi * psi)
            psi /= norm(grid, psi)
            it += 1
        bd = energy_breakdown(grid, psi, v, g_eff)
        mu = bd.chemical_potential
        residual = gp_residual(grid, psi, v, g_eff, mu=mu)
        if callback is not None:
            callback(it, mu, bd.total, residual, dtau)
        if relax_checks > 0:
            relax_checks -= 1
            continue
        halve = False
        if last_energy is not None and bd.total > last_energy + 1e-12 * max(1.0, abs(last_energy)):
            halve = True  # energy rose: step too large for the frozen-density map
        elif last_mu is not None and abs(mu - last_mu) < opts.tol_mu * max(abs(mu), 1.0) * (
            check_steps * dtau / opts.check_tau
        ):
            if residual < opts.tol_residual:
                break
            halve = True  # mu stalled with the residual high: splitting bias floor
        if halve:
            dtau *= 0.5
            if dtau < opts.min_dtau:
                raise ConvergenceError(
                    f"ground-state residual stagnated at {residual:.3e} "
                    f"(target {opts.tol_residual:.1e}) with dtau {dtau:.1e} "
                    f"after {it} iterations, mu {mu:.10g}"
                )
            # refresh the shift here, where the map changes anyway; keeping it
            # fixed within a stage leaves each stage strictly energy-monotone
            mu_est = mu
            ab, b_bands, exp_kz, e_half, f_half, check_steps = build(dtau)
            relax_checks = math.ceil(opts.relax_tau / opts.check_tau)
            last_mu = None
            last_energy = None
        else:
            last_mu = mu
            last_energy = bd.total
    else:
        raise ConvergenceError(
            f"ground state not converged in {opts.max_iters} iterations: "
            f"residual {residual:.3e}, dtau {dtau:.1e}"
        )

    psi = normalize(grid, np.abs(psi))
    psi_c = psi.astype(np.complex128)
    h_psi = apply_hamiltonian(grid, psi_c, v, g_eff)
    s = float(np.vdot(psi_c * grid.wr[:, None], psi_c).real) * grid.dz
    mu_op = float(np.vdot(psi_c * grid.wr[:, None], h_psi).real) * grid.dz / s
    bd = energy_breakdown(grid, psi, v, g_eff)
    return GroundState(
        grid=grid,
        psi=psi,
        mu=mu_op,
        energies=bd,
        eta_n=density_moment(grid, psi, 2),
        n_atoms=float(n_atoms),
        iterations=it,
        residual=gp_residual(grid, psi, v, g_eff, mu=mu_op),
    )


def solve_ground_1d(
    trap: TrapSpec,
    species: SpeciesSpec,
    n_atoms: float,
    eta_t: Optional[float] = None,
    grid: Optional[LineGrid] = None,
    opts: Optional[GroundOptions] = None,
) -> GroundState1D:
    """Ground state of the reduced longitudinal GP equation.

    The transverse direction is integrated out: the line wave function phi
    sees the effective coupling g11*N*eta_t, with eta_t the inverse
    transverse cross section (Gaussian value by default).
    """
    if n_atoms < 0:
        raise ValueError(f"atom number must be >= 0, got {n_atoms}")
    opts = opts or GroundOptions()
    red = reduce_problem(trap, species)
    eta_t = red.eta_T if eta_t is None else eta_t
    g_eff = red.g11 * n_atoms * eta_t
    if grid is None:
        z_bare = red.k ** (-1.0 / (trap.q + 2))
        z_n = tf_half_length(trap, species, n_atoms) if red.g11 * n_atoms > 0 else 0.0
        z_max = max(1.5 * z_n, 8.0 * z_bare)
        grid = make_line_grid(1 << max(3, math.ceil(math.log2(2.0 * z_max / 0.32))), z_max)
    v = 0.5 * red.k * grid.z**trap.q
    z_bare = red.k ** (-1.0 / (trap.q + 2))
    z_n = tf_half_length(trap, species, n_atoms) if g_eff > 0 else 0.0
    if z_n > z_bare:
        peak = (trap.q + 1) / (2.0 * trap.q * z_n)
        phi = np.sqrt(
            peak * np.clip(1.0 - (grid.z / z_n) ** trap.q, 0.0, None)
            + 1e-4 * peak * np.exp(-((grid.z / z_n) ** 2))
        )
    else:
        phi = np.exp(-0.5 * (grid.z / z_bare) ** 2)
    phi = phi / math.sqrt(float(np.sum(phi**2)) * grid.dz)

    kz2 = grid.kz[: grid.n_z // 2 + 1] ** 2
    dtau = opts.dtau

    def diagnostics(p):
        dp = sfft.ifft(1j * grid.kz * sfft.fft(p.astype(np.complex128)))
        kin = 0.5 * float(np.sum(np.abs(dp) ** 2)) * grid.dz
        pot = float(np.sum(v * p * p)) * grid.dz
        inter = 0.5 * g_eff * float(np.sum(p**4)) * grid.dz
        mu = kin + pot + 2.0 * inter
        h_p = (
            sfft.ifft(0.5 * grid.kz**2 * sfft.fft(p.astype(np.complex128))).real
            + (v + g_eff * p * p) * p
        )
        res = math.sqrt(float(np.sum((h_p - mu * p) ** 2)) * grid.dz)
        return mu, kin + pot + inter, res, (kin, pot, inter)

    mu_est = diagnostics(phi)[0]
    exp_kz = np.exp(-0.5 * dtau * kz2)
    e_half, f_half = _local_step_factors(v, g_eff, 0.5 * dtau, mu_shift=mu_est)
    check_steps = max(1, round(opts.check_tau / dtau))

    relax_checks = 0
    last_mu = None
    last_energy = None
    it = 0
    residual = math.inf
    while it < opts.max_iters:
        for _ in range(check_steps):
            phi *= e_half / np.sqrt(1.0 + f_half * phi * phi)
            phi = sfft.irfft(exp_kz * sfft.rfft(phi), n=grid.n_z)
            phi *= e_half / np.sqrt(1.0 + f_half * phi * phi)
            phi /= math.sqrt(float(np.sum(phi**2)) * grid.dz)
            it += 1
        mu, energy, residual, parts = diagnostics(phi)
        if relax_checks > 0:
            relax_checks -= 1
            continue
        halve = False
        if last_energy is not None and energy > last_energy + 1e-12 * max(1.0, abs(last_energy)):
            halve = True
        elif last_mu is not None and abs(mu - last_mu) < opts.tol_mu * max(abs(mu), 1.0) * (
            check_steps * dtau / opts.check_tau
        ):
            if residual < opts.tol_residual:
                break
            halve = True
        if halve:
            dtau *= 0.5
            if dtau < opts.min_dtau:
                raise ConvergenceError(
                    f"1D ground-state residual stagnated at {residual:.3e} after {it} iterations"
                )
            mu_est = mu
            exp_kz = np.exp(-0.5 * dtau * kz2)
            e_half, f_half = _local_step_factors(v, g_eff, 0.5 * dtau, mu_shift=mu_est)
            check_steps = max(1, round(opts.check_tau / dtau))
            relax_checks = math.ceil(opts.relax_tau / opts.check_tau)
            last_mu = None
            last_energy = None
        else:
            last_mu = mu
            last_energy = energy
    else:
        raise ConvergenceError(
            f"1D ground state not converged in {opts.max_iters} iterations: residual {residual:.3e}"
        )

    phi = np.abs(phi)
    phi /= math.sqrt(float(np.sum(phi**2)) * grid.dz)
    mu, energy, residual, (kin, pot, inter) = diagnostics(phi)
    return GroundState1D(
        grid=grid,
        phi=phi,
        mu=mu,
        kinetic=kin,
        potential=pot,
        interaction=inter,
        eta_l=float(np.sum(phi**4)) * grid.dz,
        n_atoms=float(n_atoms),
        iterations=it,
        residual=residual,
    )


def _rescale_warm_start(
    grid: CylindricalGrid, psi: np.ndarray, stretch: float
) -> np.ndarray:
    """Stretch a solution along z by the given factor, row by row."""
    out = np.empty_like(psi)
    for i in range(grid.n_r):
        out[i] = np.interp(grid.z / stretch, grid.z, psi[i], left=0.0, right=0.0)
    return out / math.sqrt(stretch)


def eta_sweep(
    trap: TrapSpec,
    species: SpeciesSpec,
    n_list,
    grid: Optional[CylindricalGrid] = None,
    opts: Optional[GroundOptions] = None,
    callback: Optional[Callable] = None,
) -> SweepResult:
    """3D ground solves over an ascending list of atom numbers.

    Each point is warm-started from the previous solution stretched to the
    new TF width; failed points are recorded and skipped without aborting
    the sweep.  Log-log exponents of eta(N) are fitted separately on the
    points well below and well above the transverse crossover (at least a
    factor of 4 away, three points minimum).
    """
    n_arr = np.asarray(list(n_list), dtype=float)
    if len(n_arr) == 0 or np.any(np.diff(n_arr) <= 0):
        raise ValueError("n_list must be ascending and non-empty")
    if grid is None:
        grid = default_ground_grid(trap, species, float(n_arr[-1]))
    opts = opts or GroundOptions()
    crossover = critical_atom_numbers(trap, species).n_transverse

    eta = np.full(len(n_arr), math.nan)
    mu = np.full(len(n_arr), math.nan)
    res = np.full(len(n_arr), math.nan)
    iters = np.zeros(len(n_arr), dtype=int)
    failures = []
    prev = None  # (psi, z_n)
    for i, n_atoms in enumerate(n_arr):
        z_n = tf_half_length(trap, species, n_atoms)
        psi0 = None
        if prev is not None:
            psi0 = _rescale_warm_start(grid, prev[0], z_n / prev[1])
        t0 = time.perf_counter()
        try:
            state = solve_ground_3d(trap, species, n_atoms, grid=grid, opts=opts, psi0=psi0)
        except ConvergenceError as exc:
            failures.append((float(n_atoms), str(exc)))
            prev = None
            continue
        eta[i] = state.eta_n
        mu[i] = state.mu
        res[i] = state.residual
        iters[i] = state.iterations
        prev = (state.psi, z_n)
        if callback is not None:
            callback(i, float(n_atoms), state, time.perf_counter() - t0)

    def regime_fit(mask):
        ok = mask & np.isfinite(eta)
        if np.count_nonzero(ok) < 3:
            return None, None
        slope = np.polyfit(np.log(n_arr[ok]), np.log(eta[ok]), 1)[0]
        return float(slope), (float(n_arr[ok][0]), float(n_arr[ok][-1]))

    exp_1d, win_1d = regime_fit(n_arr <= crossover / 4.0)
    exp_3d, win_3d = regime_fit(n_arr >= crossover * 4.0)
    return SweepResult(
        n_atoms=n_arr,
        eta=eta,
        mu=mu,
        residual=res,
        iterations=iters,
        n_crossover=crossover,
        failures=tuple(failures),
        exponent_1d=exp_1d,
        window_1d=win_1d,
        exponent_3d=exp_3d,
        window_3d=win_3d,
    )
