"""Command-line front end: one CSV table plus a JSON sidecar (and a PNG) per run."""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .cloning import (
    CloneConfig,
    default_inputs,
    pqcm_ideal,
    real_state_clone_ideal,
    run_dissipative,
    schedule_from_circuit,
    uqcm_ideal,
)
from .dynamics import EvolutionSpec, evolve_master, thermal_channels
from .gates import (
    GATE_LAYOUT,
    GateTarget,
    GateTimeNotFoundError,
    build_linearized_hamiltonian,
    cpfg_fidelity,
    dissipative_cpfg_fidelity,
    find_gate_time,
    first_peak,
    five_mode_cpfg_series,
    phase_factors,
    random_amplitudes,
    transfer_dynamics,
    worst_case_fidelity,
)
from .model import (
    OMEGA_M_HZ,
    LinearizedParams,
    MeanFieldState,
    SystemParams,
    build_effective_hamiltonian,
    effective_params,
    mean_field_trajectory,
)
from .operators import QuantumState, number

COMMANDS = (
    "effparams",
    "gate-fidelity",
    "sweep-kappa-nth",
    "transmission",
    "clone",
    "compare-wom",
    "mean-field",
)

WORKING_POINT = {
    "omega_m": 1.0,
    "omega_A": 0.998,
    "g": 1e-3,
    "V": 0.046,
    "gamma": 1e-5,
    "gamma_A": 1e-3,
    "kappa": 0.0,
    "n_th": 0.0,
    "Delta_c_prime": 2.0,
    "epsilon": 0.0,
    "omega_d": 0.0,
}

BASE = {"system": WORKING_POINT, "integrator": {"rtol": 1e-8, "atol": 1e-10}, "seed": 0, "plot": True}

DEFAULTS = {
    "effparams": {
        "sweep": {
            "V": {"min": 0.0, "max": 0.1, "points": 31, "scale": "linear"},
            "omega_A": {"min": 0.9, "max": 1.1, "points": 31, "scale": "linear"},
        }
    },
    "gate-fidelity": {
        "gate": {"target": "F1", "n_states": 5, "t_max": 12.0, "points": 1201, "markers": 24, "threshold": 0.999}
    },
    "sweep-kappa-nth": {
        "sweep": {
            "kappa": {"min": 1e-4, "max": 1e-1, "points": 31, "scale": "log"},
            "n_th": {"min": 0.0, "max": 600.0, "points": 31, "scale": "linear"},
        },
        "gate": {"target": "F1", "n_random": 8, "t_max": 12.0, "threshold": 0.999, "gamma_A_channel": False},
    },
    "transmission": {
        "system": {"kappa": 0.1, "n_th": 10.0},
        "transmission": {"G": [0.05, 0.1, 0.15, 0.2], "t_max": 40.0, "points": 4001, "master": False},
    },
    "clone": {
        "protocol": {"name": "pqcm", "theta": 0.5, "sign": 1, "n_inputs": 4, "n_ideal_inputs": 50, "t_cpfg": None, "t_swap": 3.1},
        "sweep": {
            "kappa": {"values": [0.0, 0.01, 0.03]},
            "n_th": {"values": [0.0]},
        },
    },
    "compare-wom": {
        "compare": {"V_om": 0.03, "kappa": 0.01, "t_max": 4000.0, "dt": 0.05, "n_random": 8, "threshold": 0.99, "gamma_A_channel": False},
    },
    "mean-field": {
        "system": {"epsilon": 10.0},
        "mean_field": {
            "t_end": 200.0,
            "dt": 0.05,
            "alpha0": [0.0, 0.0],
            "beta0": [[0.0, 0.0], [0.0, 0.0]],
            "beta_b0": [[0.0, 0.0], [0.0, 0.0]],
            "late_fraction": 0.5,
        },
    },
}


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    text = resources.files("optoclone").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "sweep":
            out[k] = _merge(out[k], v)
        elif k == "sweep" and isinstance(out.get(k), dict):
            out[k] = {**out[k], **copy.deepcopy(v)}
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(command: str, user: dict | None = None, *, seed=None, tolerance=None, output_dir=None) -> dict:
    """Validate ``user`` and fill in the command defaults."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    schema = load_schema()
    user = user or {}
    try:
        jsonschema.validate(user, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation at {list(exc.absolute_path)}: {exc.message}") from None
    cfg = _merge(_merge(BASE, DEFAULTS[command]), user)
    if seed is not None:
        cfg["seed"] = int(seed)
    if tolerance is not None:
        cfg["integrator"] = {"rtol": float(tolerance[0]), "atol": float(tolerance[1])}
    if output_dir is not None:
        cfg["output_dir"] = str(output_dir)
    jsonschema.validate(cfg, schema)
    return cfg


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in ("output_dir", "plot")}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:12]


def axis_values(axis: dict) -> np.ndarray:
    if "values" in axis:
        return np.asarray(axis["values"], dtype=float)
    if axis.get("scale", "linear") == "log":
        if axis["min"] <= 0:
            raise ConfigError("log axis needs a positive minimum")
        return np.geomspace(axis["min"], axis["max"], axis["points"])
    return np.linspace(axis["min"], axis["max"], axis["points"])


def system_params(block: dict, **override) -> SystemParams:
    b = {**block, **override}
    return SystemParams.symmetric(
        Delta_c_prime=b["Delta_c_prime"],
        omega_A=b["omega_A"],
        omega_m=b["omega_m"],
        g=b["g"],
        V=b["V"],
        gamma=b["gamma"],
        gamma_A=b["gamma_A"],
        kappa=b["kappa"],
        n_th=b["n_th"],
        epsilon=b["epsilon"],
        omega_d=b["omega_d"],
    )


@dataclass
class ResultTable:
    command: str
    columns: list[str]
    rows: list[list[float]]
    config: dict
    extra: dict = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    wall_time: float = 0.0

    def column_index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.columns)}

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    @property
    def stem(self) -> str:
        return f"{self.command}-{config_hash(self.config)}"

    def write(self, out_dir: str | Path, plot: bool = True) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.stem}.csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(x) for x in row])
        meta = {
            "command": self.command,
            "artifact_version": __version__,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "seed": self.config.get("seed"),
            "omega_m_hz": OMEGA_M_HZ,
            "units": "frequencies and rates in omega_m, times in 1/omega_m",
            "columns": self.columns,
            "n_rows": len(self.rows),
            "failures": self.failures,
            "extra": _jsonable(self.extra),
            "wall_time_s": self.wall_time,
            "csv": csv_path.name,
        }
        json_path = out / f"{self.stem}.json"
        json_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
        paths = {"csv": csv_path, "json": json_path}
        if plot:
            from .plotting import render

            paths["png"] = render(self, out / f"{self.stem}.png")
        return paths


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    return "" if np.isnan(x) else repr(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return None if np.isnan(x) else float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def load_result(path: str | Path) -> ResultTable:
    """Read a CSV table and its sidecar back; ``config`` is the exact run configuration."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    with open(path.with_suffix(".csv"), newline="") as fh:
        r = csv.reader(fh)
        cols = next(r)
        rows = [[float(v) if v != "" else float("nan") for v in row] for row in r]
    return ResultTable(meta["command"], cols, rows, meta["config"], meta["extra"], meta["failures"], meta["wall_time_s"])


def _pool_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ------------------------------------------------------------------ commands


def cmd_effparams(cfg: dict, threads: int = 1) -> ResultTable:
    Vs = axis_values(cfg["sweep"]["V"])
    wAs = axis_values(cfg["sweep"]["omega_A"])
    rows = []
    for V in Vs:
        for wA in wAs:
            e = effective_params(system_params(cfg["system"], V=float(V), omega_A=float(wA)))
            w, g, gam = e.omega_eff[0], e.g_eff[0], e.gamma_eff[0]
            ratio = g / w if w != 0 else np.nan
            log_ratio = np.log10(ratio) if ratio > 0 else np.nan
            rows.append([V, wA, e.delta[0], w, g, gam, log_ratio, g / gam])
    cols = ["V", "omega_A", "delta", "omega_eff", "g_eff", "gamma_eff", "log10_g_over_omega", "g_over_gamma"]
    return ResultTable("effparams", cols, rows, cfg)


def _gate_setup(cfg: dict):
    p = system_params(cfg["system"])
    target = GateTarget.of(cfg["gate"]["target"])
    eff = effective_params(p)
    mu = phase_factors(eff, target.g_mask)
    return p, target, eff, mu


def cmd_gate_fidelity(cfg: dict, threads: int = 1) -> ResultTable:
    from .dynamics import evolve_unitary

    g = cfg["gate"]
    p, target, eff, mu = _gate_setup(cfg)
    t = np.linspace(0.0, g["t_max"], g["points"])
    rng = np.random.default_rng(cfg["seed"])
    alphas = random_amplitudes(rng, g["n_states"])
    curves = [cpfg_fidelity(target, mu, a, t) for a in alphas]
    wc = worst_case_fidelity(target, mu, t)
    H = build_effective_hamiltonian(eff.masked(target.g_mask), GATE_LAYOUT)
    marker_idx = set(np.linspace(0, len(t) - 1, g["markers"]).astype(int)) if g["markers"] else set()
    numeric = np.full((len(alphas), len(t)), np.nan)
    for k, a in enumerate(alphas):
        tgt = target.signs * a
        for i in marker_idx:
            psi = evolve_unitary(H, QuantumState(GATE_LAYOUT, a), t[i]).data
            numeric[k, i] = abs(np.vdot(tgt, psi))
    rows = [
        [t[i], *[c[i] for c in curves], wc[i], *numeric[:, i]] for i in range(len(t))
    ]
    n = len(alphas)
    cols = ["t", *[f"F_state{k}" for k in range(n)], "worst_case", *[f"numeric_state{k}" for k in range(n)]]
    extra = {"mu": list(mu.mu), "effective": _jsonable(asdict(eff))}
    try:
        gt = find_gate_time(target, mu, g["t_max"], g["threshold"], seed=cfg["seed"])
        extra["gate_time"] = {"t_star": gt.t_star, "fidelity": gt.fidelity, "period": gt.period, "ensemble_fidelity": gt.ensemble_fidelity}
    except GateTimeNotFoundError as exc:
        extra["gate_time"] = {"error": str(exc)}
    return ResultTable("gate-fidelity", cols, rows, cfg, extra)


def _sweep_cell(args):
    system, gate, integ, kappa, n_th, seed = args
    p = system_params(system, kappa=float(kappa), n_th=float(n_th))
    target = GateTarget.of(gate["target"])
    try:
        eff = effective_params(p)
        gt = find_gate_time(target, phase_factors(eff, target.g_mask), gate["t_max"], gate["threshold"])
        r = dissipative_cpfg_fidelity(
            p, target, gt.t_star, n_random=gate["n_random"], seed=seed,
            rtol=integ["rtol"], atol=integ["atol"], gamma_A_channel=gate["gamma_A_channel"],
        )
        return [kappa, n_th, r["fidelity"], r["min"], gt.t_star, r["trace_drift"]], None
    except Exception as exc:  # recorded as a missing cell
        return [kappa, n_th, np.nan, np.nan, np.nan, np.nan], {
            "kappa": float(kappa), "n_th": float(n_th), "error": type(exc).__name__, "message": str(exc)
        }


def contour_kappa(kappas, fid, level: float) -> float:
    """Largest kappa (log-interpolated) with fidelity >= level, scanning from small kappa."""
    kappas, fid = np.asarray(kappas), np.asarray(fid)
    if not np.isfinite(fid[0]) or fid[0] < level:
        return float("nan")
    for i in range(1, len(kappas)):
        if not np.isfinite(fid[i]) or fid[i] < level:
            if not np.isfinite(fid[i]):
                return float(kappas[i - 1])
            x0, x1 = np.log(kappas[i - 1]), np.log(kappas[i])
            f0, f1 = fid[i - 1], fid[i]
            return float(np.exp(x0 + (level - f0) * (x1 - x0) / (f1 - f0)))
    return float(kappas[-1])


def cmd_sweep_kappa_nth(cfg: dict, threads: int = 1) -> ResultTable:
    kappas = axis_values(cfg["sweep"]["kappa"])
    nths = axis_values(cfg["sweep"]["n_th"])
    cells = [
        (cfg["system"], cfg["gate"], cfg["integrator"], float(k), float(n), cfg["seed"])
        for n in nths
        for k in kappas
    ]
    results = _pool_map(_sweep_cell, cells, threads)
    rows = [r for r, _ in results]
    failures = [f for _, f in results if f]
    cols = ["kappa", "n_th", "fidelity", "min_fidelity", "t_gate", "trace_drift"]
    contours = {}
    for level in (0.99, 0.95):
        line = []
        for j, n in enumerate(nths):
            fid = [rows[j * len(kappas) + i][2] for i in range(len(kappas))]
            line.append([float(n), contour_kappa(kappas, fid, level)])
        contours[str(level)] = line
    return ResultTable("sweep-kappa-nth", cols, rows, cfg, {"contours": contours}, failures)


def cmd_transmission(cfg: dict, threads: int = 1) -> ResultTable:
    tr = cfg["transmission"]
    s = cfg["system"]
    t = np.linspace(0.0, tr["t_max"], tr["points"])
    rows, peaks = [], []
    for G in tr["G"]:
        lp = LinearizedParams.direct(
            (G, 0.0), omega_c_eff=s["omega_m"], omega=s["omega_m"], kappa_eff=s["kappa"], gamma_eff=s["gamma"]
        )
        curves = transfer_dynamics(lp, t)
        cols_extra = []
        if tr["master"]:
            H = build_linearized_hamiltonian(lp, GATE_LAYOUT)
            ch = thermal_channels(GATE_LAYOUT, kappa=s["kappa"], gamma=(s["gamma"],) * 2, n_th=(s["n_th"],) * 2)
            res = evolve_master(
                EvolutionSpec(H, ch, t_end=t[-1], record_times=t, **cfg["integrator"]),
                QuantumState.basis(GATE_LAYOUT, {"a": 1}),
            )
            nb = number(GATE_LAYOUT, "b_1")
            cols_extra = [st.expect(nb).real for st in res.states]
        for i in range(len(t)):
            row = [G, t[i], curves.T_a_b1[i], curves.T_a_b2[i], curves.T_b1_a[i], curves.norm_from_a[i]]
            if tr["master"]:
                row.append(cols_extra[i])
            rows.append(row)
        try:
            tp, Tp = first_peak(t, curves.T_a_b1)
        except ValueError:
            tp, Tp = float("nan"), float("nan")
        peaks.append({"G": G, "peak_time": tp, "peak_T": Tp, "rabi_time": np.pi / (2 * G) if G else None})
    cols = ["G", "t", "T_a_b1", "T_a_b2", "T_b1_a", "norm_from_a"] + (["n_b1_master"] if tr["master"] else [])
    return ResultTable("transmission", cols, rows, cfg, {"peaks": peaks})


def _clone_cell(args):
    schedule, ccfg, kappa, n_th, system, integ, inputs = args
    try:
        o = run_dissipative(
            schedule, ccfg, kappa, n_th, params=system_params(system), inputs=inputs, **integ
        )
        return [kappa, n_th, o.success_probability, o.fidelity_b1, o.fidelity_a], None
    except Exception as exc:
        return [kappa, n_th, np.nan, np.nan, np.nan], {
            "kappa": kappa, "n_th": n_th, "error": type(exc).__name__, "message": str(exc)
        }


def _clone_config(block: dict) -> CloneConfig:
    name = block["name"]
    if name == "pqcm":
        return CloneConfig("pqcm", theta=block["theta"], sign=block["sign"])
    if name == "real_state":
        return CloneConfig.real_state()
    return CloneConfig("uqcm")


def cmd_clone(cfg: dict, threads: int = 1) -> ResultTable:
    pr = cfg["protocol"]
    ccfg = _clone_config(pr)
    seed = cfg["seed"]
    if ccfg.protocol == "pqcm":
        ideal = pqcm_ideal(ccfg)
    elif ccfg.protocol == "real_state":
        ideal = real_state_clone_ideal(ccfg, n=pr["n_ideal_inputs"], seed=seed)
    else:
        ideal = uqcm_ideal(ccfg, n=pr["n_ideal_inputs"], seed=seed)
    t_cpfg = pr["t_cpfg"]
    if t_cpfg is None:
        p = system_params(cfg["system"])
        target = GateTarget.of("F1")
        t_cpfg = find_gate_time(target, phase_factors(effective_params(p), target.g_mask), 12.0).t_star
    schedule = schedule_from_circuit(ccfg, {"t_cpfg": t_cpfg, "t_swap": pr["t_swap"]})
    inputs = default_inputs(ccfg, pr["n_inputs"], seed)
    cells = [
        (schedule, ccfg, float(k), float(n), cfg["system"], cfg["integrator"], inputs)
        for n in axis_values(cfg["sweep"]["n_th"])
        for k in axis_values(cfg["sweep"]["kappa"])
    ]
    results = _pool_map(_clone_cell, cells, threads)
    rows = [r for r, _ in results]
    failures = [f for _, f in results if f]
    extra = {
        "ideal": {
            "success_probability": ideal.success_probability,
            "failure_probability": ideal.failure_probability,
            "fidelity_b1": ideal.fidelity_b1,
            "fidelity_a": ideal.fidelity_a,
        },
        "fidelity_convention": ideal.convention,
        "clone_config": _jsonable(ccfg.to_dict()),
        "schedule": schedule.to_records(),
        "pulse_units": schedule.pulse_units,
        "t_cpfg": t_cpfg,
        "t_swap": pr["t_swap"],
    }
    cols = ["kappa", "n_th", "success_probability", "fidelity_b1", "fidelity_a"]
    return ResultTable("clone", cols, rows, cfg, extra, failures)


def _series_peaks(t, f, threshold):
    k = int(np.nanargmax(f))
    above = np.nonzero(f >= threshold)[0]
    first = None
    if above.size:
        # walk up to the local maximum of the first excursion above threshold
        i = above[0]
        while i + 1 < len(f) and f[i + 1] >= f[i]:
            i += 1
        first = float(t[i])
    return {"max_time": float(t[k]), "max_fidelity": float(f[k]), "first_peak_above_threshold": first}


def cmd_compare_wom(cfg: dict, threads: int = 1) -> ResultTable:
    c = cfg["compare"]
    s = cfg["system"]
    g = s["g"][0] if isinstance(s["g"], list) else s["g"]
    t = np.arange(0.0, c["t_max"] + c["dt"] / 2, c["dt"])
    target = GateTarget.of("F1")
    om = system_params(s, V=c["V_om"], g=(g, 0.0))
    wom = system_params(s, V=0.0, g=(g, 0.0))
    kw = {"n_random": c["n_random"], "seed": cfg["seed"], "gamma_A_channel": c["gamma_A_channel"]}
    series = {
        "F_OM_ideal": five_mode_cpfg_series(om, target, t, **kw),
        "F_WOM_ideal": five_mode_cpfg_series(wom, target, t, encoding=("a", "b_A1", "b_A2"), **kw),
        "F_OM_diss": five_mode_cpfg_series(om.with_(kappa=c["kappa"]), target, t, dissipative=True, **kw),
        "F_WOM_diss": five_mode_cpfg_series(
            wom.with_(kappa=c["kappa"]), target, t, encoding=("a", "b_A1", "b_A2"), dissipative=True, **kw
        ),
    }
    cols = ["t", *series]
    data = np.column_stack([t, *series.values()])
    extra = {name: _series_peaks(t, f, c["threshold"]) for name, f in series.items()}
    try:
        eff = effective_params(om)
        gt = find_gate_time(target, phase_factors(eff, target.g_mask), c["t_max"], c["threshold"])
        extra["heff_gate_time"] = gt.t_star
    except GateTimeNotFoundError as exc:
        extra["heff_gate_time"] = None
        extra["heff_error"] = str(exc)
    return ResultTable("compare-wom", cols, data.tolist(), cfg, extra)


def cmd_mean_field(cfg: dict, threads: int = 1) -> ResultTable:
    m = cfg["mean_field"]
    p = system_params(cfg["system"])
    init = MeanFieldState(
        complex(*m["alpha0"]),
        tuple(complex(*b) for b in m["beta0"]),
        tuple(complex(*b) for b in m["beta_b0"]),
    )
    traj = mean_field_trajectory(
        p, init, m["t_end"], m["dt"], late_fraction=m["late_fraction"], **cfg["integrator"]
    )
    G = np.abs(traj.G_eff)
    G = np.where(np.isfinite(G), G, np.nan)
    data = np.column_stack(
        [
            traj.t,
            traj.alpha.real,
            traj.alpha.imag,
            traj.beta[:, 0].real,
            traj.beta[:, 0].imag,
            np.abs(traj.beta_b[:, 0]),
            G[:, 0],
            G[:, 1],
        ]
    )
    cols = ["t", "alpha_re", "alpha_im", "beta1_re", "beta1_im", "abs_beta_b1", "abs_G_eff_1", "abs_G_eff_2"]
    return ResultTable("mean-field", cols, data.tolist(), cfg, {"late_time": traj.stats})


HANDLERS = {
    "effparams": cmd_effparams,
    "gate-fidelity": cmd_gate_fidelity,
    "sweep-kappa-nth": cmd_sweep_kappa_nth,
    "transmission": cmd_transmission,
    "clone": cmd_clone,
    "compare-wom": cmd_compare_wom,
    "mean-field": cmd_mean_field,
}


def run(command: str, cfg: dict, threads: int = 1) -> ResultTable:
    start = time.perf_counter()
    table = HANDLERS[command](cfg, threads)
    table.wall_time = time.perf_counter() - start
    return table


def _tolerance(text: str) -> tuple[float, float]:
    try:
        rel, abs_ = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected <rel>,<abs>") from None
    if rel <= 0 or abs_ <= 0:
        raise argparse.ArgumentTypeError("tolerances must be positive")
    return rel, abs_


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optoclone", description="Photon-phonon cloning simulations; writes CSV + JSON (+ PNG)."
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON run configuration")
        sp.add_argument("--out", type=Path, help="output directory (default: config output_dir or ./results)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--tolerance", type=_tolerance, metavar="REL,ABS")
        sp.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        user = json.loads(args.config.read_text()) if args.config else {}
        cfg = resolve_config(args.command, user, seed=args.seed, tolerance=args.tolerance)
        out_dir = args.out or Path(cfg.get("output_dir", "results"))
        table = run(args.command, cfg, max(args.threads, 1))
        paths = table.write(out_dir, plot=cfg["plot"] and not args.no_plot)
        summary = {"command": args.command, "rows": len(table.rows), "failures": len(table.failures)}
        summary.update({k: str(v) for k, v in paths.items()})
        print(json.dumps(summary))
        return 0
    except Exception as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, json.JSONDecodeError, OSError)) else 1


if __name__ == "__main__":
    sys.exit(main())
