"""Config resolution, CSV round trips, and CLI integration for the harness."""

import hashlib
import json
import math
import os

import numpy as np
import pytest

from becramsey.analysis import extract_fringe
from becramsey.dynamics import FringeSeries, initialize_after_pulse, propagate
from becramsey.gridfield import make_grid, normalize
from becramsey.harness import (
    ConfigError,
    Manifest,
    _matched_configs,
    _sample_times,
    load_config,
    main,
    read_series_csv,
    resolve_config,
    write_series_csv,
)
from becramsey.params import critical_atom_numbers, reduce_problem


def test_defaults_resolve_to_reference_trap():
    cfg = resolve_config({})
    assert cfg.raw["trap"]["omega_t_hz"] == 350.0
    assert cfg.trap.q == 2
    assert math.isclose(cfg.trap.omega_T, 2.0 * math.pi * 350.0)
    # default longitudinal frequency is 3.5 Hz, stored as an explicit stiffness
    k_expected = cfg.species.mass * (2.0 * math.pi * 3.5) ** 2
    assert math.isclose(cfg.trap.k, k_expected, rel_tol=1e-12)
    assert cfg.raw["trap"]["omega_z_hz"] is None
    assert cfg.species.a11 == 100.40 and cfg.species.a22 == 95.00
    g = cfg.raw["grid"]
    assert g["n_z"] >= 8 and (g["n_z"] & (g["n_z"] - 1)) == 0
    assert g["z_max"] > 0
    assert cfg.raw["output"]["dir"] == "run"


def test_config_round_trip_identity():
    cfg = resolve_config({}, {"run.n_atoms": 250.0, "trap.q": 4, "trap.k_si": 1e-30})
    again = resolve_config(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_unknown_keys_rejected_with_path():
    with pytest.raises(ConfigError, match=r"trap\.wobble"):
        resolve_config({"trap": {"wobble": 1}})
    with pytest.raises(ConfigError, match="unknown config section: turbo"):
        resolve_config({"turbo": {}})
    with pytest.raises(ConfigError, match=r"solver\.nope"):
        resolve_config({}, {"solver.nope": 3})


def test_json_parse_error_carries_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"trap":\n {"q": }}\n')
    with pytest.raises(ConfigError, match=r"bad\.json:2:8"):
        load_config(path)


def test_trap_selector_rules():
    with pytest.raises(ConfigError, match=r"trap\.k_si or trap\.match_crossover"):
        resolve_config({"trap": {"q": 4}})
    with pytest.raises(ConfigError, match="only to q = 2"):
        resolve_config({"trap": {"q": 4, "omega_z_hz": 5.0}})
    with pytest.raises(ConfigError, match="exactly one of"):
        resolve_config({"trap": {"omega_z_hz": 5.0, "k_si": 1e-25}})
    with pytest.raises(ConfigError, match="even integer"):
        resolve_config({"trap": {"q": 3, "k_si": 1e-20}})
    cfg = resolve_config({"trap": {"q": 10, "match_crossover": 14000.0}})
    got = critical_atom_numbers(cfg.trap, cfg.species).n_transverse
    assert math.isclose(got, 14000.0, rel_tol=1e-10)


def test_flag_overrides_beat_file_values():
    data = {"run": {"n_atoms": 300.0}}
    assert resolve_config(data).n_atoms == 300.0
    assert resolve_config(data, {"run.n_atoms": 400.0}).n_atoms == 400.0
    assert resolve_config({}).n_atoms == 1000.0
    cfg = resolve_config(data, {"run.n_atoms": 400.0})
    assert "run.n_atoms" in cfg.provided


def test_validation_names_the_key():
    cases = [
        ({"run": {"n_atoms": 0.5}}, r"run\.n_atoms"),
        ({"run": {"dt": -1.0}}, r"run\.dt"),
        ({"run": {"n_list": [100.0, 50.0]}}, r"run\.n_list"),
        ({"run": {"workers": 0}}, r"run\.workers"),
        ({"solver": {"dtau": 0.0}}, r"solver\.dtau"),
        ({"grid": {"n_r": 4}}, r"grid\.n_r"),
    ]
    for data, pattern in cases:
        with pytest.raises(ConfigError, match=pattern):
            resolve_config(data)


def test_sample_times_match_propagate():
    times = _sample_times(1.0, 0.3, 2)
    assert np.allclose(times, [0.0, 2.0 / 3.0, 1.0])
    grid = make_grid(16, 8, 4.0, 4.0)
    psi = normalize(grid, np.exp(-0.5 * (grid.r[:, None] ** 2 + grid.z[None, :] ** 2)))
    red = reduce_problem(resolve_config({}).trap, resolve_config({}).species)
    state = initialize_after_pulse(grid, psi.astype(np.complex128))
    series, _ = propagate(state, red, 2.0, 0.01, dt=0.004, sample_every=2, use_numba=False)
    assert np.allclose(series.times, _sample_times(0.01, 0.004, 2), atol=1e-15)


def test_series_csv_round_trip(tmp_path):
    cfg = resolve_config({})
    rng = np.random.default_rng(20260822)
    t = np.sort(rng.uniform(0.0, 50.0, 40))
    ov = np.exp(-1j * 0.37 * t) * (1.0 - 0.01 * t / 50.0)
    n = len(t)
    series = FringeSeries(
        times=t, overlap=ov, p1=0.5 * (1 - ov.imag), p2=0.5 * (1 + ov.imag),
        norm1=np.ones(n), norm2=np.ones(n), norm1_plain=np.ones(n),
        norm2_plain=np.ones(n), energy=np.zeros(n),
    )
    path = tmp_path / "series.csv"
    write_series_csv(path, cfg, series, extra_header={"n_atoms": 123.0})
    back, meta = read_series_csv(path)
    assert meta["n_atoms"] == "123"
    assert np.array_equal(back.times, t)
    assert np.array_equal(back.overlap, ov)
    assert np.array_equal(back.p1, series.p1)
    # the reconstructed series feeds the analysis layer directly
    stats = extract_fringe(back)
    # 40 irregular samples over 50 time units: crossing interpolation is coarse
    assert math.isclose(stats.frequency, 0.37, rel_tol=2e-2)


def test_manifest_lifecycle(tmp_path):
    cfg = resolve_config({})
    manifest = Manifest(str(tmp_path), "demo", cfg, "ground")
    doc = json.loads((tmp_path / "manifest_demo.json").read_text())
    assert doc["status"] == "running" and doc["files"] == {}
    payload = tmp_path / "out.csv"
    payload.write_text("a,b\n1,2\n")
    manifest.finalize(files=["out.csv"], convergence={"mu": 1.0})
    doc = json.loads((tmp_path / "manifest_demo.json").read_text())
    assert doc["status"] == "complete"
    assert doc["convergence"]["mu"] == 1.0
    assert doc["wall_time_s"] >= 0.0
    expected = hashlib.sha256(payload.read_bytes()).hexdigest()
    assert doc["files"]["out.csv"] == expected
    assert doc["config"]["trap"]["omega_t_hz"] == 350.0


def test_matched_configs_share_crossover():
    cfg = resolve_config({}, {"run.n_atoms": 40.0})
    subs = _matched_configs(cfg, "fig", {})
    assert [q for q, _ in subs] == [2, 4, 10]
    ref_cross = critical_atom_numbers(subs[0][1].trap, subs[0][1].species).n_transverse
    for q, sub in subs:
        assert sub.trap.q == q
        assert sub.n_atoms == 40.0
        got = critical_atom_numbers(sub.trap, sub.species).n_transverse
        assert math.isclose(got, ref_cross, rel_tol=1e-9)
    # flatter traps hold longer clouds, so their grids must reach further
    assert subs[2][1].raw["grid"]["z_max"] > subs[0][1].raw["grid"]["z_max"]


def test_models_need_ground_summary_first(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("BECRAMSEY_OUTPUT_ROOT", str(tmp_path))
    code = main(["models", "--model", "improved_adhoc", "--n", "77", "--output", "m"])
    assert code == 2
    assert "run the ground command first" in capsys.readouterr().err


def test_eta_sweep_requires_n_list(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("BECRAMSEY_OUTPUT_ROOT", str(tmp_path))
    code = main(["eta-sweep", "--output", "s"])
    assert code == 2
    assert "run.n_list" in capsys.readouterr().err


def test_improved_tf_model_runs_standalone(tmp_path, monkeypatch):
    monkeypatch.setenv("BECRAMSEY_OUTPUT_ROOT", str(tmp_path))
    code = main([
        "models", "--model", "improved_tf", "--n", "100", "--t-final-s", "0.01",
        "--dt", "1e-3", "--sample-every", "50", "--output", "m",
    ])
    assert code == 0
    out = tmp_path / "m" / "model_improved_tf_q2_N100.csv"
    assert out.exists()
    _, meta = read_series_csv(out)
    assert meta["model"] == "improved_tf"


def test_cli_ground_evolve_models_analyze(tmp_path, monkeypatch):
    monkeypatch.setenv("BECRAMSEY_OUTPUT_ROOT", str(tmp_path))
    small = ["--n", "5", "--n-r", "32", "--n-z", "128", "--z-max", "14",
             "--dtau", "0.05", "--output", "d"]
    assert main(["ground"] + small) == 0
    out = tmp_path / "d"
    summary = json.loads((out / "ground_summary.json").read_text())
    assert "q2_N5" in summary and summary["q2_N5"]["residual"] < 1e-6

    evolve = ["evolve"] + small + ["--t-final-s", "0.002", "--dt", "2e-3",
                                   "--sample-every", "5"]
    assert main(evolve) == 0
    csv_path = out / "evolve_q2_N5.csv"
    first = hashlib.sha256(csv_path.read_bytes()).hexdigest()
    assert main(evolve) == 0  # rerun reuses the stored ground state
    assert hashlib.sha256(csv_path.read_bytes()).hexdigest() == first

    doc = json.loads((out / "manifest_evolve_q2_N5.json").read_text())
    assert doc["status"] == "complete"
    assert doc["files"]["evolve_q2_N5.csv"] == first
    assert doc["config"]["run"]["n_atoms"] == 5.0

    assert main(["models", "--model", "josephson"] + small +
                ["--t-final-s", "0.002", "--dt", "2e-3", "--sample-every", "5"]) == 0
    series, meta = read_series_csv(out / "model_josephson_q2_N5.csv")
    sim, _ = read_series_csv(csv_path)
    assert np.allclose(series.times, sim.times, atol=1e-12)

    # too short for a crossing-based frequency: analyze should fail politely
    code = main(["analyze", "--series", str(csv_path), "--output", "d"])
    assert code == 2


def test_output_root_env_is_respected(tmp_path, monkeypatch):
    monkeypatch.setenv("BECRAMSEY_OUTPUT_ROOT", str(tmp_path / "root"))
    code = main([
        "models", "--model", "improved_tf", "--n", "60", "--t-final-s", "0.005",
        "--dt", "1e-3", "--sample-every", "50", "--output", "sub",
    ])
    assert code == 0
    assert (tmp_path / "root" / "sub" / "model_improved_tf_q2_N60.csv").exists()
