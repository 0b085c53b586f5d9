import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optoclone.cloning import (
    PULSE_UNIT,
    Circuit,
    CloneConfig,
    clone_fidelities,
    pqcm_ideal,
    protocol_circuit,
    real_state_clone_ideal,
    run_circuit,
    run_dissipative,
    sample_inputs,
    schedule_from_circuit,
    uqcm_ideal,
    uqcm_reference,
)
from optoclone.gates import GATE_LAYOUT
from optoclone.operators import QuantumState, partial_trace

F_REAL = np.sqrt(0.5 + np.sqrt(1 / 8))


def p_formula(theta):
    return 1 / (1 + np.cos(2 * theta))


def test_config_validation():
    with pytest.raises(ValueError):
        CloneConfig("pqcm", theta=1.0)
    with pytest.raises(ValueError):
        CloneConfig("pqcm", theta=0.3, sign=2)
    with pytest.raises(ValueError):
        CloneConfig("other")
    cfg = CloneConfig.real_state()
    assert np.cos(cfg.theta1) == pytest.approx(np.sqrt(0.5 + 1 / np.sqrt(8)))
    assert cfg.theta1 == cfg.theta2


def test_pqcm_nu1_relation():
    cfg = CloneConfig("pqcm", theta=0.5)
    c, s = np.cos(cfg.theta1), np.sin(cfg.theta1)
    assert np.sin(cfg.nu1) == pytest.approx((c - s) / np.sqrt(2), abs=1e-14)
    assert np.cos(cfg.nu1) == pytest.approx((c + s) / np.sqrt(2), abs=1e-14)


def test_pqcm_at_quarter_pi():
    out = pqcm_ideal(CloneConfig("pqcm", theta=np.pi / 4))
    assert out.success_probability == pytest.approx(1.0, abs=1e-10)
    assert out.fidelity_b1 == pytest.approx(1.0, abs=1e-10)
    assert out.fidelity_a == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("theta", [0.2, 0.5, np.pi / 4])
@pytest.mark.parametrize("sign", [1, -1])
def test_pqcm_success_probability_formula(theta, sign):
    out = pqcm_ideal(CloneConfig("pqcm", theta=theta, sign=sign))
    assert abs(out.success_probability - p_formula(theta)) <= 1e-10
    assert abs(out.fidelity_b1 - 1) <= 1e-10 and abs(out.fidelity_a - 1) <= 1e-10
    assert abs(out.success_probability + out.failure_probability - 1) <= 1e-10


def test_pqcm_output_is_product_of_clones():
    cfg = CloneConfig("pqcm", theta=0.4)
    phi = cfg.input_state()
    state, _, _ = run_circuit(protocol_circuit(cfg), phi)
    for mode in ("b_1", "a"):
        red = partial_trace(state, {mode}).data
        assert np.allclose(red, np.outer(phi, phi.conj()), atol=1e-10)


def test_real_state_cloner():
    out = real_state_clone_ideal(CloneConfig.real_state(), n=50, seed=0)
    assert out.fidelity_b1 == pytest.approx(F_REAL, rel=0.01)
    assert abs(out.fidelity_b1 - out.fidelity_a) <= 1e-10
    zero = real_state_clone_ideal(CloneConfig.real_state(), inputs=[[1, 0]])
    assert zero.fidelity_b1 == pytest.approx(zero.fidelity_a, abs=1e-10)
    assert zero.fidelity_b1 == pytest.approx(F_REAL, abs=1e-9)


def test_real_state_rejects_complex_inputs():
    with pytest.raises(ValueError):
        real_state_clone_ideal(CloneConfig.real_state(), inputs=[[1 / np.sqrt(2), 1j / np.sqrt(2)]])


def test_uqcm_basis_input():
    out = uqcm_ideal(CloneConfig("uqcm"), inputs=[[1, 0]])
    assert out.fidelity_b1 == pytest.approx(5 / 6, abs=1e-9)
    assert out.fidelity_a == pytest.approx(5 / 6, abs=1e-9)


def test_uqcm_universal():
    out = uqcm_ideal(CloneConfig("uqcm"), n=50, seed=7)
    assert np.std(out.per_input) <= 1e-6
    assert out.fidelity_b1 == pytest.approx(5 / 6, abs=1e-6)


def test_uqcm_reference_normalized_at_default():
    s = 1 / np.sqrt(3)
    raw = s * np.array([1, 0, 0, 1]) / np.sqrt(2) + s * np.array([1, 1, 0, 0]) / np.sqrt(2)
    assert np.linalg.norm(raw) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(uqcm_reference(s, s), raw)


def _cnot_perm(control, target):
    # permutation matrix on (a, b_1, b_2), built from bit flips rather than H-CZ-H
    idx = {m: i for i, m in enumerate(GATE_LAYOUT.labels)}
    U = np.zeros((8, 8))
    for k in range(8):
        bits = list(np.unravel_index(k, (2, 2, 2)))
        if bits[idx[control]]:
            bits[idx[target]] ^= 1
        U[np.ravel_multi_index(bits, (2, 2, 2)), k] = 1
    return U


@given(st.floats(0, 1), st.integers(0, 2**16))
def test_uqcm_circuit_matches_cnot_network(s, seed):
    t = np.sqrt(max(1 - s * s, 0))
    if s == 0 and t == 0:
        return
    cfg = CloneConfig("uqcm", s=s, t=t)
    phi = sample_inputs("uqcm", 1, seed)[0]
    state, _, _ = run_circuit(protocol_circuit(cfg), phi)
    ref = uqcm_reference(s, t).reshape(2, 2)
    psi = np.einsum("j,ka->ajk", phi, ref).ravel()
    for c, tg in (("b_2", "b_1"), ("a", "b_1"), ("b_1", "b_2"), ("b_1", "a")):
        psi = _cnot_perm(c, tg) @ psi
    assert np.allclose(state.data, psi, atol=1e-12)


def test_uqcm_bell_reference_branch():
    # s = 1, t = 0: the clones are the input with probability 1/2, maximally mixed otherwise
    cfg = CloneConfig("uqcm", s=1.0, t=0.0)
    state, _, _ = run_circuit(protocol_circuit(cfg), [1, 0])
    f_b1, f_a = clone_fidelities(state, [1, 0], "overlap")
    assert np.isclose(f_b1 + f_a, 1.5)


@given(st.floats(0, 2 * np.pi), st.sampled_from(["real_state", "uqcm"]), st.integers(0, 2**16))
def test_global_phase_invariance(phase, protocol, seed):
    cfg = CloneConfig.real_state() if protocol == "real_state" else CloneConfig("uqcm")
    phi = sample_inputs(protocol, 1, seed)[0]
    a = clone_fidelities(run_circuit(protocol_circuit(cfg), phi)[0], phi)
    b = clone_fidelities(run_circuit(protocol_circuit(cfg), np.exp(1j * phase) * phi)[0], phi)
    assert np.allclose(a, b, atol=1e-10)


@given(st.floats(0.05, np.pi / 4), st.floats(0, 2 * np.pi))
def test_pqcm_global_phase_and_branch_sum(theta, phase):
    cfg = CloneConfig("pqcm", theta=theta)
    _, p_ok, p_fail = run_circuit(protocol_circuit(cfg), np.exp(1j * phase) * cfg.input_state())
    assert abs(p_ok + p_fail - 1) <= 1e-10
    assert p_ok == pytest.approx(p_formula(theta), abs=1e-10)


@pytest.mark.parametrize("protocol,units", [("real_state", 5), ("uqcm", 8), ("pqcm", 5)])
def test_schedule_pulse_counts(protocol, units):
    cfg = CloneConfig.real_state() if protocol == "real_state" else CloneConfig(protocol)
    sched = schedule_from_circuit(cfg)
    assert sched.pulse_units == units
    for rec in sched.to_records():
        assert rec["duration_units"] == pytest.approx(rec["duration"] / PULSE_UNIT)


def test_empty_schedule():
    sched = schedule_from_circuit(Circuit(("product", ()), ()))
    assert sched.segments == () and sched.pulse_units == 0


def test_schedule_deterministic():
    a = schedule_from_circuit("uqcm", {"t_cpfg": 3.14, "t_swap": 3.1})
    b = schedule_from_circuit("uqcm", {"t_cpfg": 3.14, "t_swap": 3.1})
    assert a.to_records() == b.to_records()
    assert a.segments == b.segments


def test_schedule_rejects_bad_times():
    with pytest.raises(ValueError):
        schedule_from_circuit("uqcm", {"t_cpfg": 0.0})


@pytest.mark.parametrize(
    "cfg",
    [CloneConfig("pqcm", theta=0.5), CloneConfig.real_state(), CloneConfig("uqcm")],
    ids=["pqcm", "real_state", "uqcm"],
)
def test_dissipative_closed_limit_reproduces_ideal(cfg):
    sched = schedule_from_circuit(cfg, {"t_cpfg": 3.14642, "t_swap": 3.1})
    inputs = sample_inputs(cfg.protocol, 3, 1) if cfg.protocol != "pqcm" else [cfg.input_state()]
    noisy = run_dissipative(sched, cfg, 0.0, 0.0, inputs=inputs)
    if cfg.protocol == "pqcm":
        ideal = pqcm_ideal(cfg)
    elif cfg.protocol == "uqcm":
        ideal = uqcm_ideal(cfg, inputs)
    else:
        ideal = real_state_clone_ideal(cfg, inputs)
    assert noisy.fidelity_b1 == pytest.approx(ideal.fidelity_b1, abs=1e-3)
    assert noisy.fidelity_a == pytest.approx(ideal.fidelity_a, abs=1e-3)


def test_dissipative_monotone_in_kappa_and_nth():
    cfg = CloneConfig.real_state()
    sched = schedule_from_circuit(cfg, {"t_cpfg": 3.14642})
    inputs = sample_inputs("real_state", 2, 0)
    along_k = [run_dissipative(sched, cfg, k, 0.0, inputs=inputs).fidelity_b1 for k in (0, 0.003, 0.01, 0.03)]
    along_n = [run_dissipative(sched, cfg, 0.003, n, inputs=inputs).fidelity_b1 for n in (0, 10, 100, 600)]
    for seq in (along_k, along_n):
        assert all(b <= a + 1e-4 for a, b in zip(seq, seq[1:]))


def test_outcome_validates_range():
    from optoclone.cloning import CloneOutcome

    with pytest.raises(ValueError):
        CloneOutcome(1.0, 1.2, 0.5, "ideal")


def test_clone_fidelity_conventions():
    lay = GATE_LAYOUT
    mixed = QuantumState(lay, np.eye(8) / 8)
    root = clone_fidelities(mixed, [1, 0], "root")
    overlap = clone_fidelities(mixed, [1, 0], "overlap")
    assert root == pytest.approx((np.sqrt(0.5),) * 2)
    assert overlap == pytest.approx((0.5, 0.5))
