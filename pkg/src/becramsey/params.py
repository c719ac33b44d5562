"""Physical parameters, derived couplings, and trap units.

The system is a two-component condensate held in a cylindrically symmetric
trap

    V(rho, z) = (m * omega_T**2 * rho**2 + k * z**q) / 2

with an even power q >= 2 in the loose (z) direction.  Everything downstream
works in trap units: lengths in rho0 = sqrt(hbar / (m * omega_T)), times in
1 / omega_T, energies in hbar * omega_T.  SI values appear only at the
boundaries (configuration input, file output), through UnitSystem.

Interaction strengths follow from s-wave scattering lengths,
g_ab = 4 * pi * hbar**2 * a_ab / m.  Two combinations control the Ramsey
signal: the fringe coupling gamma1 = (g11 - g22) / 2 and the phase-diffusion
coupling gamma2 = (g11 + g22) / 2 - g12.  For the default scattering lengths
gamma1 corresponds to 2.70 Bohr radii and gamma2 to 0.04, so dephasing from
gamma2 is strongly suppressed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from scipy.optimize import brentq

HBAR = 1.054571817e-34  # J s
BOHR_RADIUS = 5.29177210903e-11  # m
RB87_MASS = 1.44316060e-25  # kg


class ConvergenceError(RuntimeError):
    """A root find or iterative solve failed to converge."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Fundamental constants used throughout (SI)."""

    hbar: float = HBAR
    bohr_radius: float = BOHR_RADIUS
    mass: float = RB87_MASS


@dataclass(frozen=True)
class SpeciesSpec:
    """Scattering lengths of the two-component mixture, in Bohr radii.

    Defaults are the standard values for the 87Rb hyperfine pair used for
    two-component interferometry.
    """

    a11: float = 100.40
    a12: float = 97.66
    a22: float = 95.00
    mass: float = RB87_MASS

    def swapped(self) -> "SpeciesSpec":
        """Mixture with the roles of the two components exchanged."""
        return replace(self, a11=self.a22, a22=self.a11)


@dataclass(frozen=True)
class TrapSpec:
    """Trap parameters: omega_T in rad/s, stiffness k in SI (J / m**q)."""

    omega_T: float
    k: float
    q: int = 2
    mass: float = RB87_MASS

    def __post_init__(self) -> None:
        if self.omega_T <= 0:
            raise ValueError(f"omega_T must be positive, got {self.omega_T}")
        if self.k <= 0:
            raise ValueError(f"trap stiffness k must be positive, got {self.k}")
        if self.q < 2 or self.q % 2 != 0:
            raise ValueError(f"trap power q must be even and >= 2, got {self.q}")

    @classmethod
    def harmonic(cls, omega_T: float, omega_z: float, mass: float = RB87_MASS) -> "TrapSpec":
        """q = 2 trap with longitudinal frequency omega_z (rad/s), k = m*omega_z**2."""
        return cls(omega_T=omega_T, k=mass * omega_z**2, q=2, mass=mass)


@dataclass(frozen=True)
class DerivedCouplings:
    """Pair interaction strengths and their Ramsey combinations (SI, J m**3)."""

    g11: float
    g12: float
    g22: float
    gamma1: float
    gamma2: float


@dataclass(frozen=True)
class CriticalNumbers:
    """Atom numbers bounding the quasi-1D window, plus the trap lengths."""

    n_transverse: float  # above this the transverse profile starts to swell
    n_longitudinal: float  # below this the longitudinal profile is not Thomas-Fermi
    rho0: float  # m
    z0: float  # m


def derive_couplings(species: SpeciesSpec) -> DerivedCouplings:
    """Couplings g_ab = 4*pi*hbar**2*a_ab/m and the combinations gamma1, gamma2.

    gamma1 = (g11 - g22)/2 sets the fringe frequency; gamma2 = (g11+g22)/2 - g12
    sets the strength of nonlinear phase diffusion.
    """
    scale = 4.0 * math.pi * HBAR**2 * BOHR_RADIUS / species.mass
    g11 = scale * species.a11
    g12 = scale * species.a12
    g22 = scale * species.a22
    return DerivedCouplings(
        g11=g11,
        g12=g12,
        g22=g22,
        gamma1=0.5 * (g11 - g22),
        gamma2=0.5 * (g11 + g22) - g12,
    )


def trap_lengths(trap: TrapSpec) -> tuple[float, float]:
    """(rho0, z0) in meters.

    rho0 = sqrt(hbar/(m*omega_T)) is the transverse oscillator length, and
    z0 = (hbar**2/(m*k))**(1/(q+2)) is the bare single-particle width of the
    power-law direction.  For q = 2 with k = m*omega_z**2 this reduces to the
    usual sqrt(hbar/(m*omega_z)).
    """
    rho0 = math.sqrt(HBAR / (trap.mass * trap.omega_T))
    z0 = (HBAR**2 / (trap.mass * trap.k)) ** (1.0 / (trap.q + 2))
    return rho0, z0


def transverse_crossover_prefactor(q: int) -> float:
    """Dimensionless prefactor C(q) in the transverse crossover number.

    C(q) = q/(2(q+1)) * ((2q+1)/q)**((q+1)/q).  Decreases monotonically from
    about 1.3176 at q = 2 toward 1 as q grows.
    """
    return q / (2.0 * (q + 1)) * ((2.0 * q + 1) / q) ** ((q + 1) / q)


@dataclass(frozen=True)
class ReducedProblem:
    """Trap-unit coefficients for the dimensionless GP problem.

    k is the stiffness of the z potential in units hbar*omega_T / rho0**q,
    so V(rho, z) = (rho**2 + k*z**q)/2 in trap units.  Couplings g_ab are in
    units hbar*omega_T*rho0**3 (g_ab = 4*pi*a_ab/rho0 with a_ab in meters).
    eta_T = 1/(2*pi) is the inverse effective area of the bare transverse
    Gaussian, in rho0**-2.
    """

    q: int
    k: float
    g11: float
    g12: float
    g22: float
    gamma1: float
    gamma2: float
    eta_T: float
    rho0: float  # m, kept for unit conversions
    z0: float  # trap units


def reduce_problem(trap: TrapSpec, species: SpeciesSpec) -> ReducedProblem:
    """Cast trap and species parameters to trap units."""
    rho0, z0 = trap_lengths(trap)
    k_t = trap.k * rho0**trap.q / (HBAR * trap.omega_T)
    gs = 4.0 * math.pi * BOHR_RADIUS / rho0
    g11 = gs * species.a11
    g12 = gs * species.a12
    g22 = gs * species.a22
    return ReducedProblem(
        q=trap.q,
        k=k_t,
        g11=g11,
        g12=g12,
        g22=g22,
        gamma1=0.5 * (g11 - g22),
        gamma2=0.5 * (g11 + g22) - g12,
        eta_T=1.0 / (2.0 * math.pi),
        rho0=rho0,
        z0=z0 / rho0,
    )


def tf_half_length(trap: TrapSpec, species: SpeciesSpec, n_atoms: float) -> float:
    """Thomas-Fermi half-length z_N of the 1D longitudinal profile, trap units.

    z_N = ((q+1)/q * N*g11*eta_T / k)**(1/(q+1)) with everything in trap units.
    """
    red = reduce_problem(trap, species)
    q = red.q
    return ((q + 1) / q * n_atoms * red.g11 * red.eta_T / red.k) ** (1.0 / (q + 1))


def tf_eta_1d(trap: TrapSpec, species: SpeciesSpec, n_atoms: float) -> float:
    """Closed-form inverse volume eta_N of the quasi-1D Thomas-Fermi state.

    Returned in rho0**-3.  Scales as N**(-1/(q+1)); this is the prediction the
    numeric ground states are compared against in the quasi-1D window.
    """
    red = reduce_problem(trap, species)
    q = red.q
    pref = q / (2.0 * q + 1) * ((q + 1) / q) ** (q / (q + 1))
    return (
        pref
        * (red.k / (n_atoms * red.g11)) ** (1.0 / (q + 1))
        * (2.0 * math.pi) ** (-q / (q + 1))
    )


def _bare_longitudinal_kinetic(q: int) -> float:
    """Kinetic constant c_q: bare z kinetic energy is c_q * hbar**2/(2*m*z0**2).

    From the best Gaussian for the z potential, c_q = (2*q*(q-1)!!)**(2/(q+2))/4,
    which is exact at q = 2.
    """
    dfact = 1.0
    for j in range(q - 1, 1, -2):
        dfact *= j
    return 0.25 * (2.0 * q * dfact) ** (2.0 / (q + 2))


def critical_atom_numbers(trap: TrapSpec, species: SpeciesSpec) -> CriticalNumbers:
    """Atom numbers that bracket the quasi-1D Thomas-Fermi window.

    n_transverse is the closed-form crossover where the scattering energy per
    atom, g11*N*eta_N/2 with the 1D Thomas-Fermi eta, reaches the transverse
    kinetic energy of the bare Gaussian:

        N_T = C(q) * (z0/a11) * (z0/rho0)**(2/q)

    n_longitudinal is where the scattering energy instead falls to the bare
    longitudinal kinetic energy c_q*hbar**2/(2*m*z0**2); below it the z profile
    is no longer Thomas-Fermi.  It is found by a bracketed root solve and is a
    handful of atoms for realistic traps.
    """
    rho0, z0 = trap_lengths(trap)
    q = trap.q
    a11_m = species.a11 * BOHR_RADIUS
    n_t = transverse_crossover_prefactor(q) * (z0 / a11_m) * (z0 / rho0) ** (2.0 / q)

    red = reduce_problem(trap, species)
    kin = _bare_longitudinal_kinetic(q) / (2.0 * red.z0**2)

    def excess(n: float) -> float:
        return 0.5 * red.g11 * n * tf_eta_1d(trap, species, n) - kin

    lo, hi = 1e-6, max(10.0 * n_t, 1e3)
    if excess(lo) > 0 or excess(hi) < 0:
        raise ConvergenceError(
            f"could not bracket the longitudinal crossover in [{lo}, {hi}]"
        )
    try:
        n_l = brentq(excess, lo, hi, xtol=1e-12, rtol=1e-14, maxiter=200)
    except RuntimeError as exc:
        raise ConvergenceError(f"longitudinal crossover solve failed: {exc}") from exc
    return CriticalNumbers(n_transverse=n_t, n_longitudinal=n_l, rho0=rho0, z0=z0)


def stiffness_for_matched_crossover(
    q: int,
    n_target: float,
    omega_T: float,
    species: SpeciesSpec = SpeciesSpec(),
) -> float:
    """Stiffness k (SI) placing the transverse crossover at n_target atoms.

    Inverts the closed form for n_transverse: z0**(1+2/q) is proportional to
    n_target, so

        z0 = (n_target * a11 * rho0**(2/q) / C(q))**(q/(q+2))
        k  = hbar**2 / (m * z0**(q+2))

    Used to compare different q at a common crossover, e.g. matching the
    q = 4 and q = 10 traps to the q = 2 reference.
    """
    if q < 2 or q % 2 != 0:
        raise ValueError(f"trap power q must be even and >= 2, got {q}")
    if n_target <= 0:
        raise ValueError(f"target atom number must be positive, got {n_target}")
    mass = species.mass
    rho0 = math.sqrt(HBAR / (mass * omega_T))
    a11_m = species.a11 * BOHR_RADIUS
    c_q = transverse_crossover_prefactor(q)
    z0 = (n_target * a11_m * rho0 ** (2.0 / q) / c_q) ** (q / (q + 2.0))
    return HBAR**2 / (mass * z0 ** (q + 2))


@dataclass(frozen=True)
class UnitSystem:
    """Conversions between SI and trap units.

    One trap unit of length is rho0 (m), of time 1/omega_T (s), of energy
    hbar*omega_T (J).  The inverse-volume moment eta carries rho0**-3.
    """

    length: float  # m per trap unit
    time: float  # s per trap unit
    energy: float  # J per trap unit

    def length_si(self, x: float) -> float:
        return x * self.length

    def length_trap(self, x: float) -> float:
        return x / self.length

    def time_si(self, t: float) -> float:
        return t * self.time

    def time_trap(self, t: float) -> float:
        return t / self.time

    def energy_si(self, e: float) -> float:
        return e * self.energy

    def energy_trap(self, e: float) -> float:
        return e / self.energy

    def eta_si(self, eta: float) -> float:
        """rho0**-3 to m**-3."""
        return eta / self.length**3

    def eta_trap(self, eta: float) -> float:
        return eta * self.length**3

    def rate_si(self, w: float) -> float:
        """Angular frequency, trap units to rad/s."""
        return w / self.time

    def rate_trap(self, w: float) -> float:
        return w * self.time


def unit_system(trap: TrapSpec) -> UnitSystem:
    rho0, _ = trap_lengths(trap)
    return UnitSystem(length=rho0, time=1.0 / trap.omega_T, energy=HBAR * trap.omega_T)
