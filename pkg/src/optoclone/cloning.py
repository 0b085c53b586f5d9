"""Cloning circuits, their compilation into pulse schedules, and execution.

Three protocols are provided:

* ``pqcm`` -- probabilistic cloner of the two real states
  ``sin(theta)|0> +- cos(theta)|1>`` with a projective measurement on b_2;
* ``real_state`` -- deterministic symmetric cloner for real inputs;
* ``uqcm`` -- deterministic universal cloner built from four CNOTs.

The input always lives on b_1; the two clones end up on b_1 and a.
Circuits are tuples of hashable operations addressed by mode label; they run
either with ideal gates on state vectors or as pulse schedules under the
master equation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence, Union

import numpy as np

from .dynamics import EvolutionSpec, Segment, evolve_master, thermal_channels
from .gates import (
    GATE_LAYOUT,
    LinearizedParams,
    build_linearized_hamiltonian,
    random_amplitudes,
    ry,
    single_qubit_gates,
)
from .model import SystemParams, build_effective_hamiltonian, effective_params
from .operators import Operator, QuantumState, embed, fidelity, partial_trace

PULSE_UNIT = 6.2


def _frozen(m) -> tuple:
    return tuple(tuple(complex(x) for x in row) for row in np.asarray(m))


@dataclass(frozen=True)
class Local:
    mode: str
    matrix: tuple
    name: str = ""

    @classmethod
    def of(cls, mode: str, m, name: str = "") -> "Local":
        return cls(mode, _frozen(m), name)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.matrix, dtype=complex)


@dataclass(frozen=True)
class CZ:
    """Controlled phase flip on a mode pair, or the fan-out flip ('a', 'b_1', 'b_2')."""

    modes: tuple[str, ...]

    def __post_init__(self):
        ok = {("a", "b_1"), ("a", "b_2"), ("b_1", "b_2"), ("a", "b_1", "b_2")}
        if tuple(self.modes) not in ok:
            raise ValueError(f"unsupported controlled gate on {self.modes}")


@dataclass(frozen=True)
class Project:
    """Post-selection onto ``vector`` on ``mode``."""

    mode: str
    vector: tuple

    @classmethod
    def of(cls, mode: str, v) -> "Project":
        return cls(mode, tuple(complex(x) for x in v))


Op = Union[Local, CZ, Project]


@dataclass(frozen=True)
class CloneConfig:
    protocol: str
    theta: float = np.pi / 4
    sign: int = 1
    theta1: float = np.pi / 8
    theta2: float = np.pi / 8
    s: float = 1 / np.sqrt(3)
    t: float = 1 / np.sqrt(3)

    def __post_init__(self):
        if self.protocol not in ("pqcm", "real_state", "uqcm"):
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.protocol == "pqcm":
            if not 0 < self.theta <= np.pi / 4 + 1e-15:
                raise ValueError("pqcm needs 0 < theta <= pi/4 (arcsin domain)")
            if self.sign not in (1, -1):
                raise ValueError("sign must be +1 or -1")
            s2, c2 = np.sin(self.theta) ** 2, np.cos(self.theta) ** 2
            chi = np.arctan2(c2, s2)
            object.__setattr__(self, "theta1", 0.5 * np.arcsin(np.sqrt((1 + np.tan(self.theta) ** 4) / 2)))
            object.__setattr__(self, "theta2", -np.pi / 8 - chi / 2)

    @classmethod
    def real_state(cls) -> "CloneConfig":
        th = np.arccos(np.sqrt(0.5 + 1 / np.sqrt(8)))
        return cls("real_state", theta1=th, theta2=th)

    @property
    def nu1(self) -> float:
        c, s = np.cos(self.theta1), np.sin(self.theta1)
        return float(np.arctan2(c - s, c + s))

    @property
    def chi(self) -> float:
        return float(np.arctan2(np.cos(self.theta) ** 2, np.sin(self.theta) ** 2))

    def input_state(self) -> np.ndarray:
        """The PQCM input ``sin(theta)|0> + sign cos(theta)|1>``."""
        return np.array([np.sin(self.theta), self.sign * np.cos(self.theta)], dtype=complex)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Circuit:
    """Ancilla preparation (per-mode vectors or a two-mode entangled state) plus gates."""

    ancilla: tuple
    ops: tuple[Op, ...]

    def initial_state(self, phi: np.ndarray) -> QuantumState:
        phi = np.asarray(phi, dtype=complex)
        kind, data = self.ancilla
        if kind == "product":
            locals_ = dict(data)
            locals_["b_1"] = phi
            return QuantumState.product(GATE_LAYOUT, locals_)
        # entangled (b_2, a) reference state; layout order is (a, b_1, b_2)
        ref = np.asarray(data, dtype=complex).reshape(2, 2)
        psi = np.einsum("j,ka->ajk", phi, ref)
        return QuantumState(GATE_LAYOUT, psi.ravel())


def _cz_matrix(modes: Sequence[str]) -> np.ndarray:
    d = np.ones(8)
    for idx in range(8):
        occ = dict(zip(GATE_LAYOUT.labels, np.unravel_index(idx, GATE_LAYOUT.dims)))
        if len(modes) == 2 and occ[modes[0]] and occ[modes[1]]:
            d[idx] = -1
        elif len(modes) == 3 and occ["a"]:
            d[idx] = (-1) ** (occ["b_1"] + occ["b_2"])
    return np.diag(d)


def op_matrix(op: Op) -> np.ndarray:
    if isinstance(op, Local):
        return embed(GATE_LAYOUT, op.mode, op.array).matrix
    if isinstance(op, CZ):
        return _cz_matrix(op.modes)
    v = np.array(op.vector)
    return embed(GATE_LAYOUT, op.mode, np.outer(v, v.conj())).matrix


def _cnot(control: str, target: str) -> list[Op]:
    h = single_qubit_gates()["U2"]
    return [Local.of(target, h, "U2"), CZ(tuple(sorted((control, target), key=GATE_LAYOUT.index))), Local.of(target, h, "U2")]


def pqcm_circuit(cfg: CloneConfig) -> Circuit:
    gates = single_qubit_gates(-np.pi / 2)
    nu1 = cfg.nu1
    psi_b2 = np.array([np.sin(nu1), np.cos(nu1)])
    beta = np.pi / 4 - cfg.chi
    gamma = np.pi / 4 + cfg.chi
    ops = (
        CZ(("b_1", "b_2")),
        Project.of("b_2", psi_b2),
        CZ(("a", "b_1")),
        Local.of("a", ry(gamma), "Ry"),
        Local.of("b_1", gates["U1"], "U1"),
        Local.of("b_1", gates["U2"], "U2"),
        CZ(("a", "b_1")),
        Local.of("b_1", gates["U2"], "U2"),
    )
    return Circuit(("product", (("b_2", tuple(psi_b2)), ("a", tuple(ry(beta)[:, 0])))), ops)


# R_y angles in units of pi/8 for the (b_1, b_2, a) layers around each controlled gate
_REAL_LAYERS = ((-6, 6, -4), (4, 6, 0), (2, -4, 4), (0, -2, 6))
_REAL_GATES = (("a", "b_1"), ("b_1", "b_2"), ("a", "b_2"))


def real_state_circuit(cfg: CloneConfig) -> Circuit:
    ops: list[Op] = []
    for k, layer in enumerate(_REAL_LAYERS):
        for mode, x in zip(("b_1", "b_2", "a"), layer):
            if x:
                ops.append(Local.of(mode, ry(x * np.pi / 8), "Ry"))
        if k < len(_REAL_GATES):
            ops.append(CZ(_REAL_GATES[k]))
    prep = (
        ("b_2", (np.cos(cfg.theta1), np.sin(cfg.theta1))),
        ("a", (np.cos(cfg.theta2), np.sin(cfg.theta2))),
    )
    return Circuit(("product", prep), tuple(ops))


def uqcm_reference(s: float, t: float) -> np.ndarray:
    """``s|Phi+> + t|0>|+>`` on (b_2, a), normalized."""
    ref = s * np.array([1, 0, 0, 1]) / np.sqrt(2) + t * np.array([1, 1, 0, 0]) / np.sqrt(2)
    return ref / np.linalg.norm(ref)


def uqcm_circuit(cfg: CloneConfig) -> Circuit:
    ref = uqcm_reference(cfg.s, cfg.t)
    ops: list[Op] = []
    for c, tgt in (("b_2", "b_1"), ("a", "b_1"), ("b_1", "b_2"), ("b_1", "a")):
        ops += _cnot(c, tgt)
    return Circuit(("entangled", tuple(ref)), tuple(ops))


def protocol_circuit(cfg: CloneConfig) -> Circuit:
    return {"pqcm": pqcm_circuit, "real_state": real_state_circuit, "uqcm": uqcm_circuit}[
        cfg.protocol
    ](cfg)


def run_circuit(circuit: Circuit, phi) -> tuple[QuantumState, float, float]:
    """Ideal execution: returns (post-selected state, success and failure weights)."""
    psi = circuit.initial_state(phi).data
    p_ok, p_fail = 1.0, 0.0
    for op in circuit.ops:
        m = op_matrix(op)
        if isinstance(op, Project):
            kept = m @ psi
            w = float(np.vdot(kept, kept).real)
            p_fail += p_ok * (1 - w)
            p_ok *= w
            psi = kept / np.sqrt(w)
        else:
            psi = m @ psi
    return QuantumState(GATE_LAYOUT, psi), p_ok, p_fail


@dataclass
class CloneOutcome:
    success_probability: float
    fidelity_b1: float
    fidelity_a: float
    mode: str
    params: dict = field(default_factory=dict)
    per_input: np.ndarray | None = None
    failure_probability: float = 0.0
    convention: str = "root"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for f in (self.fidelity_b1, self.fidelity_a):
            if not -1e-12 <= f <= 1 + 1e-12:
                raise ValueError(f"fidelity {f} outside [0, 1]")


def fidelity_convention(protocol: str) -> str:
    """Universal cloning is scored by the overlap <phi|rho|phi>, the others by its square root."""
    return "overlap" if protocol == "uqcm" else "root"


def clone_fidelities(state: QuantumState, phi, convention: str = "root") -> tuple[float, float]:
    phi = np.asarray(phi, dtype=complex)
    out = []
    for mode in ("b_1", "a"):
        red = partial_trace(state, {mode})
        f = fidelity(QuantumState(red.layout, phi), red)
        out.append(f * f if convention == "overlap" else f)
    return out[0], out[1]


def sample_inputs(protocol: str, n: int, seed: int = 0) -> np.ndarray:
    """Deterministic input samples: real angles or Haar-random qubits."""
    if protocol == "real_state":
        rng = np.random.default_rng(seed)
        a = rng.uniform(0, 2 * np.pi, n)
        return np.stack([np.cos(a), np.sin(a)], axis=1).astype(complex)
    return random_amplitudes(np.random.default_rng(seed), n, 2)


def _ideal(cfg: CloneConfig, inputs) -> CloneOutcome:
    circuit = protocol_circuit(cfg)
    rows, probs = [], []
    for phi in inputs:
        state, p_ok, p_fail = run_circuit(circuit, phi)
        rows.append(clone_fidelities(state, phi, fidelity_convention(cfg.protocol)))
        probs.append((p_ok, p_fail))
    rows, probs = np.array(rows), np.array(probs)
    return CloneOutcome(
        success_probability=float(probs[:, 0].mean()),
        failure_probability=float(probs[:, 1].mean()),
        fidelity_b1=float(rows[:, 0].mean()),
        fidelity_a=float(rows[:, 1].mean()),
        mode="ideal",
        params=cfg.to_dict(),
        per_input=rows,
        convention=fidelity_convention(cfg.protocol),
    )


def pqcm_ideal(cfg: CloneConfig) -> CloneOutcome:
    if cfg.protocol != "pqcm":
        raise ValueError("config is not a pqcm config")
    return _ideal(cfg, [cfg.input_state()])


def real_state_clone_ideal(cfg: CloneConfig, inputs=None, *, n: int = 50, seed: int = 0) -> CloneOutcome:
    if cfg.protocol != "real_state":
        raise ValueError("config is not a real_state config")
    inputs = sample_inputs("real_state", n, seed) if inputs is None else np.asarray(inputs)
    if np.any(np.abs(np.imag(inputs)) > 0):
        raise ValueError("real-state cloner needs real input amplitudes")
    return _ideal(cfg, inputs)


def uqcm_ideal(cfg: CloneConfig, inputs=None, *, n: int = 50, seed: int = 0) -> CloneOutcome:
    if cfg.protocol != "uqcm":
        raise ValueError("config is not a uqcm config")
    if cfg.s == cfg.t == 1 / np.sqrt(3):
        raw = cfg.s * np.array([1, 0, 0, 1]) / np.sqrt(2) + cfg.t * np.array([1, 1, 0, 0]) / np.sqrt(2)
        assert abs(np.linalg.norm(raw) - 1) < 1e-12
    inputs = sample_inputs("uqcm", n, seed) if inputs is None else np.asarray(inputs)
    return _ideal(cfg, inputs)


# ---------------------------------------------------------------- schedules


@dataclass(frozen=True)
class PulseSegment:
    duration: float
    regime: str
    kerr_mask: tuple[bool, bool] = (False, False)
    pair: str | None = None
    actions: tuple[Op, ...] = ()

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("negative segment duration")
        if self.regime not in ("weak_drive_cpfg", "strong_drive_swap", "idle"):
            raise ValueError(f"unknown regime {self.regime!r}")

    @property
    def units(self) -> float:
        return self.duration / PULSE_UNIT


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple[PulseSegment, ...]
    prelude: tuple[Op, ...] = ()
    t_cpfg: float = np.pi
    t_swap: float = 3.1

    @property
    def pulse_units(self) -> int:
        return sum(1 for s in self.segments if s.regime != "idle")

    @property
    def total_time(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def to_records(self) -> list[dict]:
        out = []
        for k, s in enumerate(self.segments):
            out.append(
                {
                    "index": k,
                    "regime": s.regime,
                    "duration": s.duration,
                    "duration_units": s.units,
                    "kerr_mask": list(s.kerr_mask),
                    "pair": s.pair,
                    "gates_after": [_describe(op) for op in s.actions],
                }
            )
        return out


def _describe(op: Op) -> str:
    if isinstance(op, Local):
        return f"{op.name or 'U'}({op.mode})"
    if isinstance(op, Project):
        return f"project({op.mode})"
    return "CZ(" + ",".join(op.modes) + ")"


def _kerr(mask, t_cpfg) -> PulseSegment:
    return PulseSegment(t_cpfg, "weak_drive_cpfg", mask)


def _swap(pair, t_swap) -> PulseSegment:
    return PulseSegment(t_swap, "strong_drive_swap", (False, False), pair)


def schedule_from_circuit(circuit: Circuit | str | CloneConfig, gate_times: dict | None = None) -> PulseSchedule:
    """Compile a circuit into timed segments with local gates on the boundaries.

    Photon-phonon gates take one Kerr segment; the phonon-phonon gate becomes
    swap(a, b_1), CZ(a, b_2), swap(a, b_1).
    """
    gate_times = gate_times or {}
    t_cpfg = float(gate_times.get("t_cpfg", np.pi))
    t_swap = float(gate_times.get("t_swap", 3.1))
    if t_cpfg <= 0 or t_swap <= 0:
        raise ValueError("gate times must be positive")
    if isinstance(circuit, str):
        circuit = CloneConfig.real_state() if circuit == "real_state" else CloneConfig(circuit)
    if isinstance(circuit, CloneConfig):
        circuit = protocol_circuit(circuit)
    segs: list[PulseSegment] = []
    prelude: list[Op] = []
    pending: list[Op] = []

    def flush():
        nonlocal pending
        if not pending:
            return
        if segs:
            last = segs[-1]
            segs[-1] = PulseSegment(last.duration, last.regime, last.kerr_mask, last.pair, last.actions + tuple(pending))
        else:
            prelude.extend(pending)
        pending = []

    for op in circuit.ops:
        if not isinstance(op, CZ):
            pending.append(op)
            continue
        flush()
        if op.modes == ("a", "b_1"):
            segs.append(_kerr((True, False), t_cpfg))
        elif op.modes == ("a", "b_2"):
            segs.append(_kerr((False, True), t_cpfg))
        elif op.modes == ("a", "b_1", "b_2"):
            segs.append(_kerr((True, True), t_cpfg))
        else:
            segs += [_swap("a_b1", t_swap), _kerr((False, True), t_cpfg), _swap("a_b1", t_swap)]
    flush()
    return PulseSchedule(tuple(segs), tuple(prelude), t_cpfg, t_swap)


def _segment_hamiltonian(seg: PulseSegment, p: SystemParams, t_swap: float) -> Operator:
    if seg.regime == "weak_drive_cpfg":
        eff = effective_params(p).masked(seg.kerr_mask)
        return build_effective_hamiltonian(eff, GATE_LAYOUT)
    G = np.pi / (2 * t_swap)
    G_eff = (G, 0.0) if seg.pair == "a_b1" else (0.0, G)
    if seg.regime == "idle":
        G_eff = (0.0, 0.0)
    lp = LinearizedParams.direct(G_eff, omega_c_eff=p.omega_m[0], omega=p.omega_m)
    return build_linearized_hamiltonian(lp, GATE_LAYOUT)


def _phase_correction(H: Operator, seg: PulseSegment) -> Operator:
    """Local phases undoing the free evolution accumulated by single excitations."""
    w, v = np.linalg.eigh(H.matrix)
    U = (v * np.exp(-1j * w * seg.duration)) @ v.conj().T
    dest = {"a": "a", "b_1": "b_1", "b_2": "b_2"}
    if seg.regime == "strong_drive_swap":
        x, y = ("a", "b_1") if seg.pair == "a_b1" else ("a", "b_2")
        dest[x], dest[y] = y, x
    corr = np.eye(H.layout.dim, dtype=complex)
    for mode, target in dest.items():
        src = GATE_LAYOUT.basis_index({mode: 1})
        dst = GATE_LAYOUT.basis_index({target: 1})
        phase = np.angle(U[dst, src])
        corr = corr @ embed(GATE_LAYOUT, target, np.diag([1.0, np.exp(-1j * phase)])).matrix
    return Operator(GATE_LAYOUT, corr)


def compile_segments(schedule: PulseSchedule, p: SystemParams) -> list[Segment]:
    """Turn pulse segments into master-equation segments with boundary maps."""
    channels = thermal_channels(GATE_LAYOUT, kappa=p.kappa, gamma=p.gamma, n_th=p.n_th)
    out = []
    for k, seg in enumerate(schedule.segments):
        H = _segment_hamiltonian(seg, p, schedule.t_swap)
        kraus = [_phase_correction(H, seg)]
        kraus += [Operator(GATE_LAYOUT, op_matrix(op)) for op in seg.actions]
        out.append(
            Segment(
                H,
                channels,
                seg.duration,
                tuple(kraus),
                postselect=any(isinstance(op, Project) for op in seg.actions),
                label=f"{k}:{seg.regime}",
            )
        )
    return out


def default_inputs(cfg: CloneConfig, n: int = 4, seed: int = 0) -> np.ndarray:
    if cfg.protocol == "pqcm":
        return np.array([cfg.input_state(), CloneConfig("pqcm", cfg.theta, -cfg.sign).input_state()])
    return sample_inputs(cfg.protocol, n, seed)


def run_dissipative(
    schedule: PulseSchedule,
    cfg: CloneConfig,
    kappa: float,
    n_th: float,
    *,
    params: SystemParams | None = None,
    inputs=None,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> CloneOutcome:
    """Execute a pulse schedule under the master equation and score both clones.

    Kerr segments use the effective Hamiltonian, swap segments the resonant
    beam-splitter Hamiltonian; both carry cavity decay ``kappa`` and thermal
    damping of b_1, b_2 at the bare rate with occupation ``n_th``.
    """
    p = (params or SystemParams.symmetric()).with_(kappa=kappa, n_th=(n_th, n_th))
    circuit = protocol_circuit(cfg)
    inputs = default_inputs(cfg) if inputs is None else np.asarray(inputs)
    segs = compile_segments(schedule, p)
    prelude = [op_matrix(op) for op in schedule.prelude]
    rows, probs, drift = [], [], 0.0
    for phi in inputs:
        psi = circuit.initial_state(phi).data
        for m in prelude:
            psi = m @ psi
        rho0 = QuantumState(GATE_LAYOUT, psi)
        if segs:
            res = evolve_master(EvolutionSpec(segs, rtol=rtol, atol=atol), rho0)
            final = res.final
            probs.append(float(np.prod(res.diagnostics["branch_probabilities"] or [1.0])))
            drift = max(drift, res.diagnostics["trace_drift"] if not res.diagnostics["branch_probabilities"] else 0.0)
        else:
            final = rho0.as_density()
            probs.append(1.0)
        rows.append(clone_fidelities(final, phi, fidelity_convention(cfg.protocol)))
    rows = np.array(rows)
    params_snapshot = cfg.to_dict() | {"kappa": kappa, "n_th": n_th}
    return CloneOutcome(
        success_probability=float(np.mean(probs)),
        failure_probability=float(1 - np.mean(probs)),
        fidelity_b1=float(rows[:, 0].mean()),
        fidelity_a=float(rows[:, 1].mean()),
        mode="dissipative",
        params=params_snapshot,
        per_input=rows,
        convention=fidelity_convention(cfg.protocol),
        diagnostics={"trace_drift": drift, "pulse_units": schedule.pulse_units},
    )
