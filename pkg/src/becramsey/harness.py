"""Command-line harness: configuration, orchestration, and output files.

Batch-only surface for the simulation and model toolkit.  A run is driven by
a JSON config file with nested sections (species, trap, run, grid, solver,
output); every command resolves the config fully (defaults filled in, trap
stiffness reduced to an explicit k), writes a manifest before doing any real
work, and finalizes it with file digests afterwards.  All outputs are plain
CSV with '# key = value' provenance headers; rerunning a command with the
same resolved config reproduces the files byte for byte.

Command-line flags override file keys, which override defaults.  The only
environment variable consulted is BECRAMSEY_OUTPUT_ROOT, the directory all
run directories live under (default: current directory).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (
    compare_series,
    extract_fringe,
    fringe_stats_lines,
)
from .dynamics import FringeSeries, initialize_after_pulse, propagate
from .gridfield import CylindricalGrid, load_field, make_grid, save_field
from .ground import GroundOptions, default_ground_grid, eta_sweep, solve_ground_3d
from .models import (
    exact_quantum_josephson,
    improved_overlap,
    josephson_fringe,
    tf_eta_3d,
)
from .params import (
    ConvergenceError,
    SpeciesSpec,
    TrapSpec,
    critical_atom_numbers,
    reduce_problem,
    stiffness_for_matched_crossover,
    tf_eta_1d,
)

OUTPUT_ROOT_VAR = "BECRAMSEY_OUTPUT_ROOT"

DEFAULTS = {
    "species": {"a11": 100.40, "a12": 97.66, "a22": 95.00, "mass": 1.44316060e-25},
    "trap": {
        "omega_t_hz": 350.0,
        "q": 2,
        "omega_z_hz": None,
        "k_si": None,
        "match_crossover": None,
    },
    "run": {
        "n_atoms": 1000.0,
        "n_list": None,
        "t_final_s": 0.5,
        "dt": 1e-3,
        "sample_every": 20,
        "horizon_s": None,
        "use_numba": True,
        "workers": 1,
    },
    "grid": {"n_r": 96, "n_z": None, "r_max": 6.0, "z_max": None},
    "solver": {
        "dtau": 1e-3,
        "tol_mu": 1e-10,
        "tol_residual": 1e-6,
        "max_iters": 600000,
        "check_tau": 1.0,
        "relax_tau": 8.0,
        "min_dtau": 1e-5,
    },
    "output": {"dir": None},
}

MODEL_NAMES = ("josephson", "improved_tf", "improved_adhoc", "quantum")


class ConfigError(ValueError):
    """Invalid or unresolvable configuration; message names the key."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run configuration.

    raw holds the resolved nested dict (the serialization form); the other
    fields are the ready-to-use derived objects.  to_dict/resolve round-trip
    to the identical dict.
    """

    raw: dict
    species: SpeciesSpec
    trap: TrapSpec
    ground_opts: GroundOptions
    provided: frozenset  # dotted keys set by file or flags, not defaults

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    @property
    def n_atoms(self) -> float:
        return self.raw["run"]["n_atoms"]

    @property
    def n_list(self):
        return self.raw["run"]["n_list"]

    @property
    def omega_t(self) -> float:
        return 2.0 * math.pi * self.raw["trap"]["omega_t_hz"]

    def t_final_trap(self) -> float:
        return self.raw["run"]["t_final_s"] * self.omega_t

    def build_grid(self) -> CylindricalGrid:
        g = self.raw["grid"]
        return make_grid(g["n_r"], g["n_z"], g["r_max"], g["z_max"])


def _check_unknown_keys(data: dict, path: str = "") -> None:
    for key, value in data.items():
        where = f"{path}{key}"
        if path == "":
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config section: {where}")
            if not isinstance(value, dict):
                raise ConfigError(f"config section '{where}' must be an object")
            for sub in value:
                if sub not in DEFAULTS[key]:
                    raise ConfigError(f"unknown config key: {where}.{sub}")


def _dotted_keys(data: dict) -> set:
    keys = set()
    for section, value in data.items():
        if isinstance(value, dict):
            for sub in value:
                keys.add(f"{section}.{sub}")
    return keys


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def resolve_config(
    data: Optional[dict] = None,
    overrides: Optional[dict] = None,
    command: str = "run",
) -> RunConfig:
    """Merge defaults <- file data <- flag overrides and resolve everything.

    overrides maps dotted keys ('trap.q') to values.  The result has no
    implicit defaults left: the trap stiffness is an explicit k_si, and the
    grid extents are concrete numbers.
    """
    data = data or {}
    _check_unknown_keys(data)
    merged = copy.deepcopy(DEFAULTS)
    for section, value in data.items():
        merged[section].update(value)
    provided = _dotted_keys(data)
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        if section not in merged or key not in merged[section]:
            raise ConfigError(f"unknown config key: {dotted}")
        merged[section][key] = value
        provided.add(dotted)

    sp = merged["species"]
    for key in ("a11", "a12", "a22"):
        _require(isinstance(sp[key], (int, float)) and sp[key] >= 0, f"species.{key} must be >= 0")
    _require(sp["mass"] > 0, "species.mass must be positive")
    species = SpeciesSpec(a11=float(sp["a11"]), a12=float(sp["a12"]), a22=float(sp["a22"]), mass=float(sp["mass"]))

    tr = merged["trap"]
    _require(tr["omega_t_hz"] > 0, "trap.omega_t_hz must be positive")
    q = tr["q"]
    _require(isinstance(q, int) and q >= 2 and q % 2 == 0, "trap.q must be an even integer >= 2")
    omega_t = 2.0 * math.pi * float(tr["omega_t_hz"])
    chosen = [key for key in ("omega_z_hz", "k_si", "match_crossover") if tr[key] is not None]
    if not chosen:
        if q == 2:
            tr["omega_z_hz"] = 3.5
            chosen = ["omega_z_hz"]
        else:
            raise ConfigError("trap.k_si or trap.match_crossover is required when trap.q != 2")
    _require(
        len(chosen) == 1,
        f"exactly one of trap.omega_z_hz, trap.k_si, trap.match_crossover may be set, got {chosen}",
    )
    if chosen[0] == "omega_z_hz":
        _require(q == 2, "trap.omega_z_hz applies only to q = 2; set trap.k_si or trap.match_crossover")
        _require(tr["omega_z_hz"] > 0, "trap.omega_z_hz must be positive")
        trap = TrapSpec.harmonic(omega_t, 2.0 * math.pi * float(tr["omega_z_hz"]), mass=species.mass)
    elif chosen[0] == "k_si":
        _require(tr["k_si"] > 0, "trap.k_si must be positive")
        trap = TrapSpec(omega_T=omega_t, k=float(tr["k_si"]), q=q, mass=species.mass)
    else:
        _require(tr["match_crossover"] > 0, "trap.match_crossover must be positive")
        k = stiffness_for_matched_crossover(q, float(tr["match_crossover"]), omega_t, species)
        trap = TrapSpec(omega_T=omega_t, k=k, q=q, mass=species.mass)
    merged["trap"] = {"omega_t_hz": float(tr["omega_t_hz"]), "q": q, "omega_z_hz": None,
                      "k_si": trap.k, "match_crossover": None}

    rn = merged["run"]
    _require(rn["n_atoms"] >= 1, "run.n_atoms must be >= 1")
    rn["n_atoms"] = float(rn["n_atoms"])
    if rn["n_list"] is not None:
        lst = [float(x) for x in rn["n_list"]]
        _require(len(lst) > 0 and all(x >= 1 for x in lst), "run.n_list entries must be >= 1")
        _require(all(b > a for a, b in zip(lst, lst[1:])), "run.n_list must be strictly ascending")
        rn["n_list"] = lst
    _require(rn["t_final_s"] > 0, "run.t_final_s must be positive")
    _require(rn["dt"] > 0, "run.dt must be positive")
    _require(isinstance(rn["sample_every"], int) and rn["sample_every"] >= 1,
             "run.sample_every must be an integer >= 1")
    if rn["horizon_s"] is not None:
        _require(rn["horizon_s"] > 0, "run.horizon_s must be positive")
    _require(isinstance(rn["workers"], int) and rn["workers"] >= 1, "run.workers must be an integer >= 1")

    gr = merged["grid"]
    _require(isinstance(gr["n_r"], int) and gr["n_r"] >= 16, "grid.n_r must be an integer >= 16")
    _require(gr["r_max"] > 0, "grid.r_max must be positive")
    n_ref = max(rn["n_list"]) if rn["n_list"] else rn["n_atoms"]
    auto = default_ground_grid(trap, species, n_ref, n_r=gr["n_r"], r_max=gr["r_max"],
                               n_z=gr["n_z"], z_max=gr["z_max"])
    merged["grid"] = {"n_r": gr["n_r"], "n_z": auto.n_z, "r_max": float(gr["r_max"]),
                      "z_max": float(auto.z_max)}

    sv = merged["solver"]
    for key in ("dtau", "tol_mu", "tol_residual", "check_tau", "relax_tau", "min_dtau"):
        _require(sv[key] > 0, f"solver.{key} must be positive")
    _require(isinstance(sv["max_iters"], int) and sv["max_iters"] >= 1,
             "solver.max_iters must be an integer >= 1")
    opts = GroundOptions(dtau=float(sv["dtau"]), tol_mu=float(sv["tol_mu"]),
                         tol_residual=float(sv["tol_residual"]), max_iters=sv["max_iters"],
                         check_tau=float(sv["check_tau"]), relax_tau=float(sv["relax_tau"]),
                         min_dtau=float(sv["min_dtau"]))

    if merged["output"]["dir"] is None:
        merged["output"]["dir"] = command
    return RunConfig(raw=merged, species=species, trap=trap, ground_opts=opts,
                     provided=frozenset(provided))


def load_config(path, overrides: Optional[dict] = None, command: str = "run") -> RunConfig:
    """Read and resolve a JSON config file; unknown keys are rejected."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object of sections")
    return resolve_config(data, overrides, command)


# ---------------------------------------------------------------- output ---


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Run manifest written before the work starts and finalized after."""

    def __init__(self, out_dir: str, slug: str, cfg: RunConfig, command: str):
        self.path = os.path.join(out_dir, f"manifest_{slug}.json")
        self.out_dir = out_dir
        self.t0 = time.perf_counter()
        self.doc = {
            "command": command,
            "code_version": __version__,
            "config": cfg.to_dict(),
            "grid": dict(cfg.raw["grid"]),
            "status": "running",
            "convergence": {},
            "wall_time_s": None,
            "files": {},
        }
        self._write()

    def _write(self) -> None:
        with open(self.path, "w") as fh:
            json.dump(self.doc, fh, indent=1, sort_keys=True)
            fh.write("\n")

    def finalize(self, files, convergence: Optional[dict] = None) -> None:
        self.doc["files"] = {
            name: _digest(os.path.join(self.out_dir, name)) for name in sorted(files)
        }
        if convergence:
            self.doc["convergence"] = convergence
        self.doc["wall_time_s"] = round(time.perf_counter() - self.t0, 3)
        self.doc["status"] = "complete"
        self._write()


def _header_lines(cfg: RunConfig, extra: Optional[dict] = None) -> list:
    items = {
        "code_version": __version__,
        "omega_t_hz": cfg.raw["trap"]["omega_t_hz"],
        "q": cfg.raw["trap"]["q"],
        "k_si": cfg.raw["trap"]["k_si"],
        "a11_bohr": cfg.raw["species"]["a11"],
        "a12_bohr": cfg.raw["species"]["a12"],
        "a22_bohr": cfg.raw["species"]["a22"],
        "mass_kg": cfg.raw["species"]["mass"],
    }
    items.update(extra or {})
    return [f"# {key} = {_fmt(value)}" for key, value in items.items()]


def write_series_csv(path, cfg: RunConfig, series: FringeSeries,
                     extra_header: Optional[dict] = None,
                     extra_columns: Optional[dict] = None) -> None:
    """FringeSeries (or model curve series) as CSV with provenance header."""
    omega_t = cfg.omega_t
    columns = ["t_s", "t_trap", "re_overlap", "im_overlap", "abs_overlap", "p1", "p2"]
    arrays = [
        np.asarray(series.times) / omega_t,
        np.asarray(series.times),
        np.real(series.overlap),
        np.imag(series.overlap),
        np.abs(series.overlap),
        np.asarray(series.p1),
        np.asarray(series.p2),
    ]
    for name, values in (extra_columns or {}).items():
        columns.append(name)
        arrays.append(np.asarray(values))
    with open(path, "w") as fh:
        for line in _header_lines(cfg, extra_header):
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in zip(*arrays):
            fh.write(",".join(f"{value:.17g}" for value in row) + "\n")


def read_series_csv(path):
    """Read back a series CSV; returns (FringeSeries, header dict)."""
    meta = {}
    rows = []
    names = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if names is None:
                names = line.split(",")
                continue
            rows.append([float(x) for x in line.split(",")])
    if names is None or not rows:
        raise ValueError(f"{path}: no data rows")
    table = {name: np.array(col) for name, col in zip(names, zip(*rows))}
    for needed in ("t_trap", "re_overlap", "im_overlap", "p1", "p2"):
        if needed not in table:
            raise ValueError(f"{path}: missing column {needed}")
    n = len(rows)
    ones = np.ones(n)
    series = FringeSeries(
        times=table["t_trap"],
        overlap=table["re_overlap"] + 1j * table["im_overlap"],
        p1=table["p1"],
        p2=table["p2"],
        norm1=ones,
        norm2=ones.copy(),
        norm1_plain=ones.copy(),
        norm2_plain=ones.copy(),
        energy=np.zeros(n),
    )
    return series, meta


def write_sweep_csv(path, cfg: RunConfig, result, reference: bool = False) -> None:
    """Sweep table: N, eta_N [rho0^-3], mu [hbar omega_T], residual, iterations.

    reference adds the analytic 1D and 3D Thomas-Fermi eta columns used by
    the crossover figure.
    """
    columns = "n_atoms,eta_n,mu,residual,iterations"
    ref_1d = ref_3d = None
    if reference:
        columns += ",eta_tf_1d,eta_tf_3d"
        ref_1d = [tf_eta_1d(cfg.trap, cfg.species, n) for n in result.n_atoms]
        ref_3d = [tf_eta_3d(cfg.trap, cfg.species, n) for n in result.n_atoms]
    extra = {
        "n_crossover": result.n_crossover,
        "eta_unit": "rho0^-3",
        "mu_unit": "hbar*omega_T",
    }
    with open(path, "w") as fh:
        for line in _header_lines(cfg, extra):
            fh.write(line + "\n")
        fh.write(columns + "\n")
        for i in range(len(result.n_atoms)):
            row = [result.n_atoms[i], result.eta[i], result.mu[i], result.residual[i],
                   float(result.iterations[i])]
            if reference:
                row += [ref_1d[i], ref_3d[i]]
            fh.write(",".join(f"{value:.17g}" for value in row) + "\n")


# ------------------------------------------------------------- commands ---


def _ground_key(cfg: RunConfig, n_atoms: float) -> str:
    return f"q{cfg.raw['trap']['q']}_N{n_atoms:g}"


def _summary_path(out_dir: str) -> str:
    return os.path.join(out_dir, "ground_summary.json")


def _load_summary(out_dir: str) -> dict:
    path = _summary_path(out_dir)
    if os.path.exists(path):
        with open(path) as fh:
            return json.load(fh)
    return {}


def _obtain_ground(cfg: RunConfig, out_dir: str, n_atoms: float):
    """Ground state for n_atoms: reuse a stored field when it matches."""
    key = _ground_key(cfg, n_atoms)
    summary = _load_summary(out_dir)
    grid = cfg.build_grid()
    entry = summary.get(key)
    if entry:
        field_path = os.path.join(out_dir, entry["field"])
        if os.path.exists(field_path):
            stored_grid, psi, _ = load_field(field_path)
            if (stored_grid.n_r, stored_grid.n_z, stored_grid.r_max, stored_grid.z_max) == (
                grid.n_r, grid.n_z, grid.r_max, grid.z_max
            ) and entry["residual"] <= cfg.ground_opts.tol_residual:
                return psi, entry, None
    state = solve_ground_3d(cfg.trap, cfg.species, n_atoms, grid=grid, opts=cfg.ground_opts)
    field_name = f"ground_{key}.field"
    save_field(os.path.join(out_dir, field_name), state.grid, state.psi,
               meta={"n_atoms": n_atoms, "q": cfg.raw["trap"]["q"], "mu": state.mu})
    entry = {
        "n_atoms": n_atoms,
        "q": cfg.raw["trap"]["q"],
        "eta_n": state.eta_n,
        "mu": state.mu,
        "residual": state.residual,
        "iterations": state.iterations,
        "field": field_name,
    }
    summary = _load_summary(out_dir)
    summary[key] = entry
    with open(_summary_path(out_dir), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return state.psi, entry, state


def cmd_ground(cfg: RunConfig, out_dir: str) -> int:
    manifest = Manifest(out_dir, "ground", cfg, "ground")
    _, entry, _ = _obtain_ground(cfg, out_dir, cfg.n_atoms)
    manifest.finalize(
        files=[entry["field"], "ground_summary.json"],
        convergence={
            "mu": entry["mu"],
            "eta_n": entry["eta_n"],
            "residual": entry["residual"],
            "iterations": entry["iterations"],
        },
    )
    print(f"ground: N={cfg.n_atoms:g} q={cfg.raw['trap']['q']} mu={entry['mu']:.10g} "
          f"eta_n={entry['eta_n']:.10g} residual={entry['residual']:.3e}")
    return 0


def cmd_eta_sweep(cfg: RunConfig, out_dir: str, reference: bool = False) -> int:
    if not cfg.n_list:
        raise ConfigError("run.n_list is required for eta-sweep")
    q = cfg.raw["trap"]["q"]
    manifest = Manifest(out_dir, f"eta_sweep_q{q}", cfg, "eta-sweep")
    result = eta_sweep(cfg.trap, cfg.species, cfg.n_list, grid=cfg.build_grid(),
                       opts=cfg.ground_opts)
    name = f"eta_sweep_q{q}.csv"
    write_sweep_csv(os.path.join(out_dir, name), cfg, result, reference=reference)
    manifest.finalize(
        files=[name],
        convergence={
            "failures": list(result.failures),
            "exponent_1d": result.exponent_1d,
            "exponent_3d": result.exponent_3d,
            "n_crossover": result.n_crossover,
        },
    )
    for n_atoms, message in result.failures:
        print(f"eta-sweep: solve failed at N={n_atoms:g}: {message}", file=sys.stderr)
    ok = int(np.sum(np.isfinite(result.eta)))
    print(f"eta-sweep: q={q} {ok}/{len(cfg.n_list)} points converged -> {name}")
    return 0 if ok else 3


def _sample_times(t_final: float, dt: float, sample_every: int) -> np.ndarray:
    """The times propagate() records for the same stepping parameters."""
    n_steps = max(1, int(round(t_final / dt)))
    dt = t_final / n_steps
    picks = [0] + [s for s in range(1, n_steps + 1)
                   if s % sample_every == 0 or s == n_steps]
    return np.array(picks, dtype=float) * dt


def cmd_evolve(cfg: RunConfig, out_dir: str) -> int:
    q = cfg.raw["trap"]["q"]
    n_atoms = cfg.n_atoms
    manifest = Manifest(out_dir, f"evolve_q{q}_N{n_atoms:g}", cfg, "evolve")
    psi, entry, _ = _obtain_ground(cfg, out_dir, n_atoms)
    red = reduce_problem(cfg.trap, cfg.species)
    state = initialize_after_pulse(cfg.build_grid(), psi.astype(np.complex128))
    series, _ = propagate(
        state, red, n_atoms, cfg.t_final_trap(), dt=cfg.raw["run"]["dt"],
        sample_every=cfg.raw["run"]["sample_every"], use_numba=cfg.raw["run"]["use_numba"],
    )
    omega_n = red.gamma1 * n_atoms * entry["eta_n"]
    overlay = josephson_fringe(omega_n, np.asarray(series.times))
    name = f"evolve_q{q}_N{n_atoms:g}.csv"
    write_series_csv(
        os.path.join(out_dir, name), cfg, series,
        extra_header={"n_atoms": n_atoms, "eta_n": entry["eta_n"], "omega_n_trap": omega_n,
                      "dt_trap": cfg.raw["run"]["dt"]},
        extra_columns={"p1_josephson": overlay.series.p1},
    )
    manifest.finalize(
        files=[name, entry["field"], "ground_summary.json"],
        convergence={"ground_residual": entry["residual"], "eta_n": entry["eta_n"],
                     "norm_drift": float(np.max(np.abs(series.norm1_plain - 1.0)))},
    )
    print(f"evolve: q={q} N={n_atoms:g} t_final={cfg.raw['run']['t_final_s']:g}s "
          f"samples={len(series.times)} -> {name}")
    return 0


def cmd_models(cfg: RunConfig, out_dir: str, which) -> int:
    q = cfg.raw["trap"]["q"]
    n_atoms = cfg.n_atoms
    requested = list(MODEL_NAMES) if which == "all" else [which]
    needs_eta = [name for name in requested if name != "improved_tf"]
    eta_n = None
    if needs_eta:
        entry = _load_summary(out_dir).get(_ground_key(cfg, n_atoms))
        if entry is None:
            raise ConfigError(
                f"models {', '.join(needs_eta)} need the numerical eta_N for "
                f"q={q}, N={n_atoms:g}, and no ground-state summary was found in "
                f"{out_dir}; run the ground command first"
            )
        eta_n = entry["eta_n"]
    manifest = Manifest(out_dir, f"models_q{q}_N{n_atoms:g}", cfg, "models")
    red = reduce_problem(cfg.trap, cfg.species)
    times = _sample_times(cfg.t_final_trap(), cfg.raw["run"]["dt"], cfg.raw["run"]["sample_every"])
    files = []
    for name in requested:
        if name == "josephson":
            curve = josephson_fringe(red.gamma1 * n_atoms * eta_n, times)
        elif name == "improved_tf":
            curve = improved_overlap(cfg.trap, cfg.species, n_atoms, times, variant="thomas_fermi")
        elif name == "improved_adhoc":
            curve = improved_overlap(cfg.trap, cfg.species, n_atoms, times,
                                     variant="adhoc_numeric", eta_n=eta_n)
        else:
            curve = exact_quantum_josephson(int(round(n_atoms)), red.gamma1, red.gamma2,
                                            eta_n, times)
        fname = f"model_{name}_q{q}_N{n_atoms:g}.csv"
        header = {"model": name, "n_atoms": n_atoms}
        header.update({key: value for key, value in curve.params.items()
                       if isinstance(value, (int, float, str))})
        write_series_csv(os.path.join(out_dir, fname), cfg, curve.series, extra_header=header)
        files.append(fname)
        print(f"models: {name} q={q} N={n_atoms:g} -> {fname}")
    manifest.finalize(files=files)
    return 0


def cmd_analyze(cfg: RunConfig, out_dir: str, series_path, reference_path=None) -> int:
    series, meta = read_series_csv(series_path)
    stats = extract_fringe(series, omega_t=cfg.omega_t)
    stem = os.path.splitext(os.path.basename(series_path))[0]
    manifest = Manifest(out_dir, f"analyze_{stem}", cfg, "analyze")
    print(f"analyze: {series_path}")
    for line in fringe_stats_lines(stats):
        print("  " + line)
    name = f"analyze_{stem}.csv"
    horizon = cfg.raw["run"]["horizon_s"]
    horizon_trap = horizon * cfg.omega_t if horizon is not None else None
    with open(os.path.join(out_dir, name), "w") as fh:
        for line in _header_lines(cfg, {"series": os.path.basename(series_path)}):
            fh.write(line + "\n")
        columns = ("series,frequency_trap,frequency_uncertainty_trap,frequency_rad_per_s,"
                   "zero_crossings,visibility_min")
        values = [stats.frequency, stats.frequency_uncertainty, stats.frequency_si,
                  float(len(stats.zero_crossings)), float(np.min(stats.visibility))]
        if reference_path is not None:
            ref_series, _ = read_series_csv(reference_path)
            metrics = compare_series(series, ref_series, horizon=horizon_trap)
            columns += ",max_p1_dev,rms_p1_dev,frequency_ratio"
            values += [metrics.max_p1, metrics.rms_p1, metrics.frequency_ratio]
            print(f"  vs {reference_path}: max|dp1| = {metrics.max_p1:.6g}, "
                  f"rms|dp1| = {metrics.rms_p1:.6g}, "
                  f"frequency ratio = {metrics.frequency_ratio:.9g}")
        fh.write(columns + "\n")
        fh.write(os.path.basename(series_path) + "," +
                 ",".join(f"{value:.17g}" for value in values) + "\n")
    manifest.finalize(files=[name])
    return 0


FIGURE_PLANS = {
    1: {"kind": "sweep"},
    2: {"kind": "fringes", "n_atoms": 1000.0, "t_final_s": 1.0, "model": "josephson"},
    3: {"kind": "fringes", "n_atoms": 5000.0, "t_final_s": 1.0, "model": "josephson"},
    4: {"kind": "fringes", "n_atoms": 5000.0, "t_final_s": 0.12, "model": "josephson"},
    5: {"kind": "fringes", "n_atoms": 1000.0, "t_final_s": 1.0, "model": "improved_tf"},
    6: {"kind": "fringes", "n_atoms": 1000.0, "t_final_s": 1.0, "model": "improved_adhoc"},
    7: {"kind": "fringes", "n_atoms": 5000.0, "t_final_s": 1.0, "model": "improved_adhoc"},
}


def _provided_data(cfg: RunConfig) -> dict:
    """Rebuild the config dict the user effectively supplied: only the keys
    they set, so everything else resolves fresh (grid sizing in particular).
    The trap section is omitted; the figure plans own the trap family."""
    data = {}
    for dotted in sorted(cfg.provided):
        section, key = dotted.split(".", 1)
        if section == "trap":
            continue
        data.setdefault(section, {})[key] = cfg.raw[section][key]
    return data


def _matched_configs(cfg: RunConfig, command: str, run_over: dict):
    """Configs for the figure trap family: the q=2 reference trap plus q=4
    and q=10 traps matched to the same transverse-crossover atom number."""
    data = _provided_data(cfg)
    omega_t_hz = cfg.raw["trap"]["omega_t_hz"]
    ref = resolve_config(data, dict(run_over, **{"trap.omega_t_hz": omega_t_hz}),
                         command=command)
    n_bar = critical_atom_numbers(ref.trap, ref.species).n_transverse
    out = [(2, ref)]
    for q in (4, 10):
        over = dict(run_over)
        over["trap.omega_t_hz"] = omega_t_hz
        over["trap.q"] = q
        over["trap.match_crossover"] = n_bar
        out.append((q, resolve_config(data, over, command=command)))
    return out


def cmd_reproduce_figure(cfg: RunConfig, out_dir: str, fig: int) -> int:
    plan = FIGURE_PLANS[fig]
    manifest = Manifest(out_dir, f"figure{fig}", cfg, "reproduce-figure")
    files = []
    convergence = {}
    if plan["kind"] == "sweep":
        n_list = cfg.n_list or [float(round(x)) for x in np.geomspace(100.0, 3000.0, 7)]
        subs = _matched_configs(cfg, f"figure{fig}", {"run.n_list": n_list})

        def run_one(item):
            q, sub = item
            result = eta_sweep(sub.trap, sub.species, sub.n_list, grid=sub.build_grid(),
                               opts=sub.ground_opts)
            return q, sub, result

        workers = min(cfg.raw["run"]["workers"], len(subs))
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                done = list(pool.map(run_one, subs))
        else:
            done = [run_one(item) for item in subs]
        for q, sub, result in done:
            name = f"eta_sweep_q{q}.csv"
            write_sweep_csv(os.path.join(out_dir, name), sub, result, reference=True)
            files.append(name)
            convergence[f"q{q}"] = {"exponent_1d": result.exponent_1d,
                                    "failures": list(result.failures)}
            print(f"figure 1: q={q} sweep done -> {name}")
    else:
        n_atoms = cfg.n_atoms if "run.n_atoms" in cfg.provided else plan["n_atoms"]
        t_final = (cfg.raw["run"]["t_final_s"] if "run.t_final_s" in cfg.provided
                   else plan["t_final_s"])
        run_over = {"run.n_atoms": n_atoms, "run.t_final_s": t_final}
        for q, sub in _matched_configs(cfg, f"figure{fig}", run_over):
            cmd_evolve(sub, out_dir)
            cmd_models(sub, out_dir, plan["model"])
            files += [f"evolve_q{q}_N{n_atoms:g}.csv",
                      f"model_{plan['model']}_q{q}_N{n_atoms:g}.csv"]
            entry = _load_summary(out_dir)[_ground_key(sub, n_atoms)]
            convergence[f"q{q}"] = {"eta_n": entry["eta_n"], "residual": entry["residual"]}
    manifest.finalize(files=files, convergence=convergence)
    print(f"figure {fig}: wrote {len(files)} data files to {out_dir}")
    return 0


# ------------------------------------------------------------------ CLI ---


def _parse_n_list(text: str):
    return [float(x) for x in text.split(",") if x.strip()]


FLAG_KEYS = [
    ("--omega-t-hz", "trap.omega_t_hz", float, "transverse trap frequency in Hz"),
    ("--q", "trap.q", int, "longitudinal power-law exponent (even)"),
    ("--omega-z-hz", "trap.omega_z_hz", float, "longitudinal frequency in Hz (q=2 only)"),
    ("--k-si", "trap.k_si", float, "longitudinal stiffness in SI units"),
    ("--match-crossover", "trap.match_crossover", float,
     "choose k so the transverse crossover equals this atom number"),
    ("--n", "run.n_atoms", float, "atom number"),
    ("--n-list", "run.n_list", _parse_n_list, "comma-separated atom numbers for sweeps"),
    ("--t-final-s", "run.t_final_s", float, "evolution horizon in seconds"),
    ("--dt", "run.dt", float, "real-time step in trap units"),
    ("--sample-every", "run.sample_every", int, "record every this many steps"),
    ("--horizon-s", "run.horizon_s", float, "comparison horizon in seconds"),
    ("--workers", "run.workers", int, "concurrent sweep workers"),
    ("--n-r", "grid.n_r", int, "radial points"),
    ("--n-z", "grid.n_z", int, "longitudinal points (power of two)"),
    ("--r-max", "grid.r_max", float, "radial extent in trap units"),
    ("--z-max", "grid.z_max", float, "half extent along z in trap units"),
    ("--dtau", "solver.dtau", float, "initial imaginary-time step"),
    ("--tol-residual", "solver.tol_residual", float, "GP residual target"),
    ("--max-iters", "solver.max_iters", int, "imaginary-time iteration cap"),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="becramsey",
        description="Two-mode BEC Ramsey interferometry: simulation and models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--output", help="run directory (under the output root)")
        p.add_argument("--no-numba", action="store_true",
                       help="use the plain numpy propagation kernels")
        for flag, dotted, cast, help_text in FLAG_KEYS:
            p.add_argument(flag, dest=dotted.replace(".", "_"), type=cast,
                           default=None, metavar=dotted.split(".")[1].upper(),
                           help=help_text)

    add_common(sub.add_parser("ground", help="solve one 3D ground state"))
    add_common(sub.add_parser("eta-sweep", help="ground solves over run.n_list"))
    add_common(sub.add_parser("evolve", help="two-mode Ramsey evolution"))
    p_models = sub.add_parser("models", help="analytic fringe models")
    add_common(p_models)
    p_models.add_argument("--model", choices=MODEL_NAMES + ("all",), default="all")
    p_analyze = sub.add_parser("analyze", help="fringe statistics from a series CSV")
    add_common(p_analyze)
    p_analyze.add_argument("--series", required=True, help="series CSV to analyze")
    p_analyze.add_argument("--reference", help="second series CSV to compare against")
    p_fig = sub.add_parser("reproduce-figure", help="rebuild the data behind one figure")
    add_common(p_fig)
    p_fig.add_argument("--fig", type=int, required=True, choices=sorted(FIGURE_PLANS),
                       help="figure number")
    return parser


def _overrides_from_args(args) -> dict:
    overrides = {}
    for _, dotted, _, _ in FLAG_KEYS:
        value = getattr(args, dotted.replace(".", "_"), None)
        if value is not None:
            overrides[dotted] = value
    if args.no_numba:
        overrides["run.use_numba"] = False
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = _overrides_from_args(args)
    if args.output:
        overrides["output.dir"] = args.output
    command = args.command
    if command == "reproduce-figure":
        command = f"figure{args.fig}"
    try:
        if args.config:
            cfg = load_config(args.config, overrides, command=command)
        else:
            cfg = resolve_config({}, overrides, command=command)
        out_dir = os.path.join(os.environ.get(OUTPUT_ROOT_VAR, "."), cfg.raw["output"]["dir"])
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "ground":
            return cmd_ground(cfg, out_dir)
        if args.command == "eta-sweep":
            return cmd_eta_sweep(cfg, out_dir)
        if args.command == "evolve":
            return cmd_evolve(cfg, out_dir)
        if args.command == "models":
            return cmd_models(cfg, out_dir, args.model)
        if args.command == "analyze":
            return cmd_analyze(cfg, out_dir, args.series, args.reference)
        return cmd_reproduce_figure(cfg, out_dir, args.fig)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
