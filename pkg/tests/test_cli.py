import json

import numpy as np
import pytest

from optoclone import cli
from optoclone.cli import ConfigError, load_result, main, resolve_config, run


def table(command, user=None, threads=1):
    return run(command, resolve_config(command, user or {}), threads)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        resolve_config("effparams", {"system": {"omega_x": 1}})
    with pytest.raises(ConfigError):
        resolve_config("effparams", {"sweep": {"V": {"min": 0, "max": 1, "points": 3, "values": [1]}}})
    with pytest.raises(ConfigError):
        resolve_config("nope", {})


def test_overrides_merge():
    cfg = resolve_config("gate-fidelity", {"gate": {"target": "F2"}}, seed=9, tolerance=(1e-6, 1e-9))
    assert cfg["gate"]["target"] == "F2"
    assert cfg["gate"]["t_max"] == 12.0
    assert cfg["seed"] == 9
    assert cfg["integrator"] == {"rtol": 1e-6, "atol": 1e-9}


def test_effparams_grid():
    t = table("effparams", {"sweep": {"V": {"min": 0, "max": 0.046, "points": 3}, "omega_A": {"values": [0.95, 0.998]}}})
    assert len(t.rows) == 6
    V, g = t.column("V"), t.column("g_eff")
    assert np.all(g[V == 0] == 0)
    pick = (V == 0.046) & (t.column("omega_A") == 0.998)
    assert (g / t.column("omega_eff"))[pick][0] == pytest.approx(0.5, abs=0.01)


def test_gate_fidelity_markers_match_analytic():
    t = table("gate-fidelity", {"gate": {"n_states": 3, "points": 301, "markers": 15}})
    cols = t.column_index()
    rows = np.array(t.rows)
    for k in range(3):
        num = rows[:, cols[f"numeric_state{k}"]]
        ok = np.isfinite(num)
        assert ok.sum() == 15
        assert np.max(np.abs(num[ok] - rows[ok, cols[f"F_state{k}"]])) <= 1e-10
    gt = t.extra["gate_time"]
    assert gt["t_star"] == pytest.approx(np.pi, rel=0.05)
    assert gt["fidelity"] >= 0.999


def test_gate_fidelity_zero_time_value():
    from optoclone.gates import random_amplitudes

    t = table("gate-fidelity", {"gate": {"n_states": 2, "points": 11, "markers": 0}, "seed": 4})
    alphas = random_amplitudes(np.random.default_rng(4), 2)
    for k, a in enumerate(alphas):
        assert t.rows[0][1 + k] == pytest.approx(1 - 2 * (abs(a[6]) ** 2 + abs(a[7]) ** 2))


SWEEP = {
    "sweep": {"kappa": {"values": [1e-4, 1e-3, 1e-2, 1e-1]}, "n_th": {"values": [0, 10]}},
    "gate": {"n_random": 2},
}


def test_sweep_properties():
    t = table("sweep-kappa-nth", SWEEP, threads=2)
    data = {(r[0], r[1]): r[2] for r in t.rows}
    assert data[(1e-4, 0)] >= 0.99
    along = [data[(k, 0)] for k in (1e-4, 1e-3, 1e-2, 1e-1)]
    assert all(b <= a + 1e-4 for a, b in zip(along, along[1:]))
    assert data[(1e-1, 10)] < data[(1e-3, 0)]
    assert set(t.extra["contours"]) == {"0.99", "0.95"}
    assert not t.failures


def test_sweep_parallel_equals_serial():
    cfg = resolve_config("sweep-kappa-nth", SWEEP)
    assert run("sweep-kappa-nth", cfg, 1).rows == run("sweep-kappa-nth", cfg, 3).rows


def test_sweep_failed_cell_is_logged(monkeypatch):
    real = cli.dissipative_cpfg_fidelity

    def flaky(p, *args, **kw):
        if p.kappa == 1e-2:
            raise RuntimeError("forced")
        return real(p, *args, **kw)

    monkeypatch.setattr(cli, "dissipative_cpfg_fidelity", flaky)
    t = table("sweep-kappa-nth", SWEEP)
    missing = [r for r in t.rows if np.isnan(r[2])]
    assert len(missing) == 2
    assert {(f["kappa"], f["n_th"]) for f in t.failures} == {(1e-2, 0.0), (1e-2, 10.0)}


def test_contour_interpolation():
    k = np.array([1e-4, 1e-3, 1e-2])
    assert cli.contour_kappa(k, [0.999, 0.995, 0.985], 0.99) == pytest.approx(np.sqrt(1e-3 * 1e-2))
    assert np.isnan(cli.contour_kappa(k, [0.98, 0.97, 0.96], 0.99))


def test_transmission_properties():
    t = table("transmission", {"transmission": {"G": [0.0, 0.05, 0.1, 0.15, 0.2], "t_max": 60.0, "points": 6001}})
    peaks = t.extra["peaks"]
    assert np.isnan(peaks[0]["peak_time"])
    G, T = t.column("G"), t.column("T_a_b1")
    assert np.all(T[G == 0] == 0)
    times = [p["peak_time"] for p in peaks[1:]]
    assert all(a > b for a, b in zip(times, times[1:]))


def test_transmission_rabi_without_loss():
    t = table("transmission", {"system": {"kappa": 0.0, "n_th": 0.0, "gamma": 0.0}, "transmission": {"G": [0.1]}})
    assert t.extra["peaks"][0]["peak_time"] == pytest.approx(np.pi / 0.2, rel=0.01)


def test_transmission_master_column():
    t = table("transmission", {"system": {"gamma": 0.0}, "transmission": {"G": [0.2], "t_max": 5.0, "points": 11, "master": True}})
    # with kappa only, the photon-to-phonon population is the same in both pictures
    assert np.allclose(t.column("n_b1_master"), t.column("T_a_b1"), atol=1e-6)


@pytest.mark.parametrize(
    "protocol,check",
    [
        ({"name": "pqcm", "theta": float(np.pi / 4)}, lambda i: i["success_probability"] == pytest.approx(1) and i["fidelity_b1"] == pytest.approx(1)),
        ({"name": "real_state"}, lambda i: i["fidelity_b1"] == pytest.approx(0.9239, rel=0.01)),
        ({"name": "uqcm"}, lambda i: i["fidelity_b1"] == pytest.approx(5 / 6, abs=1e-6)),
    ],
)
def test_clone_ideal_outcomes(protocol, check):
    t = table("clone", {"protocol": {**protocol, "n_inputs": 2}, "sweep": {"kappa": {"values": [0.0]}, "n_th": {"values": [0]}}})
    assert check(t.extra["ideal"])
    assert t.extra["schedule"]


def test_compare_wom_plumbing():
    t = table("compare-wom", {"compare": {"t_max": 20.0, "dt": 0.5, "n_random": 1}})
    assert t.columns == ["t", "F_OM_ideal", "F_WOM_ideal", "F_OM_diss", "F_WOM_diss"]
    assert len(t.rows) == 41
    assert t.extra["heff_gate_time"] == pytest.approx(21.99, abs=0.05) or t.extra["heff_gate_time"] is None


def test_mean_field_zero_drive():
    t = table("mean-field", {"system": {"epsilon": 0.0}, "mean_field": {"t_end": 5.0}})
    assert np.all(t.column("alpha_re") == 0) and np.all(t.column("abs_G_eff_1") == 0)
    assert "rolling_var_last" in t.extra["late_time"]


def test_write_is_deterministic_and_round_trips(tmp_path):
    user = {"sweep": {"V": {"values": [0.0, 0.046]}, "omega_A": {"values": [0.998]}}}
    cfg = resolve_config("effparams", user)
    a = run("effparams", cfg).write(tmp_path / "a", plot=False)
    b = run("effparams", cfg).write(tmp_path / "b", plot=False)
    assert a["csv"].read_bytes() == b["csv"].read_bytes()
    assert a["csv"].name == b["csv"].name
    back = load_result(a["csv"])
    assert back.config == cfg
    np.testing.assert_array_equal(back.rows, run("effparams", cfg).rows)
    meta = json.loads(a["json"].read_text())
    assert meta["omega_m_hz"] == 2e6 and meta["seed"] == 0


def test_main_success_writes_files(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"sweep": {"V": {"values": [0.046]}, "omega_A": {"values": [0.998, 0.999]}}}))
    rc = main(["effparams", "--config", str(conf), "--out", str(tmp_path), "--seed", "3", "--tolerance", "1e-7,1e-9"])
    assert rc == 0
    summary = json.loads(capsys.readouterr().out)
    for key in ("csv", "json", "png"):
        assert (tmp_path / summary[key].split("/")[-1]).exists()


def test_main_error_json(tmp_path, capsys):
    conf = tmp_path / "bad.json"
    conf.write_text(json.dumps({"bogus": 1}))
    assert main(["effparams", "--config", str(conf), "--out", str(tmp_path)]) != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    assert main(["effparams", "--config", str(tmp_path / "missing.json")]) != 0


def test_tolerance_flag_validation():
    with pytest.raises(SystemExit):
        main(["effparams", "--tolerance", "abc"])
