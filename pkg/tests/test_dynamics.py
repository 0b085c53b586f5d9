import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from optoclone.dynamics import (
    Channel,
    DegenerateSteadyStateError,
    EvolutionSpec,
    IntegrationError,
    Segment,
    SpectralPropagator,
    evolve_master,
    evolve_unitary,
    liouvillian,
    steady_state,
    thermal_channels,
)
from optoclone.gates import GATE_LAYOUT
from optoclone.model import SystemParams, build_effective_hamiltonian, effective_params
from optoclone.operators import ModeLayout, Operator, QuantumState, compose, fidelity, ladder, number

ONE = ModeLayout.of(("a",))
ONE3 = ModeLayout.of(("b_1",), 3)


def random_state(rng, n):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def heff():
    return build_effective_hamiltonian(effective_params(SystemParams.symmetric(g=(1e-3, 0))), GATE_LAYOUT)


def driven_h():
    return compose(GATE_LAYOUT, [(1.0, ["a+", "a"]), (0.3, ["a+", "b_1"]), (0.3, ["b_1+", "a"]), (0.2, ["b_2+", "b_2"]), (0.1, ["a+"]), (0.1, ["a"])])


def test_unitary_identity_at_zero(rng):
    psi = QuantumState(GATE_LAYOUT, random_state(rng, 8))
    assert np.allclose(evolve_unitary(heff(), psi, 0.0).data, psi.data)


def test_unitary_phase_on_c7():
    H = heff()
    mu7 = H.element((1, 1, 0), (1, 1, 0)).real
    psi = evolve_unitary(H, QuantumState.basis(GATE_LAYOUT, (1, 1, 0)), 1.7)
    assert psi.data[6] == pytest.approx(np.exp(-1j * mu7 * 1.7), abs=1e-13)


@given(st.integers(0, 2**32 - 1), st.floats(0, 50))
def test_unitary_preserves_norm(seed, t):
    psi = QuantumState(GATE_LAYOUT, random_state(np.random.default_rng(seed), 8))
    assert abs(np.linalg.norm(evolve_unitary(driven_h(), psi, t).data) - 1) < 1e-12


def test_unitary_rejects_non_hermitian():
    X = compose(ONE, [(1, ["a"])])
    with pytest.raises(ValueError):
        evolve_unitary(X, QuantumState.basis(ONE, (0,)), 1.0)


@pytest.mark.parametrize("exact", [True, False])
def test_closed_limit_matches_unitary(rng, exact):
    H = driven_h()
    psi = QuantumState(GATE_LAYOUT, random_state(rng, 8))
    res = evolve_master(EvolutionSpec(H, (), t_end=10.0, exact_closed=exact), psi)
    ref = evolve_unitary(H, psi, 10.0)
    assert fidelity(ref, res.final) >= 1 - 1e-6
    assert res.diagnostics["trace_drift"] <= 1e-8


def test_pure_decay_exponential():
    kappa = 0.3
    H = Operator(ONE, np.zeros((2, 2)))
    t = np.linspace(0, 10, 21)
    res = evolve_master(
        EvolutionSpec(H, [Channel(ladder(ONE, "a"), kappa)], t_end=10, record_times=t),
        QuantumState.basis(ONE, (1,)),
    )
    n = [s.expect(number(ONE, "a")).real for s in res.states]
    assert np.allclose(n, np.exp(-kappa * t), rtol=1e-6, atol=1e-9)


def _column_major_liouvillian(H, channels):
    # independent construction: vec stacks columns, vec(A X B) = (B^T kron A) vec X
    n = H.shape[0]
    I = np.eye(n)
    L = -1j * (np.kron(I, H) - np.kron(H.T, I))
    for rate, c in channels:
        cdc = c.conj().T @ c
        L += rate * (np.kron(c.conj(), c) - 0.5 * np.kron(I, cdc) - 0.5 * np.kron(cdc.T, I))
    return L


def test_thermal_steady_state_matches_nullspace_oracle():
    gamma, nth = 0.05, 1.0
    chans = thermal_channels(ONE3, gamma=(gamma,), n_th=(nth,), modes=("b_1",))
    H = Operator(ONE3, np.zeros((3, 3)))
    b = ladder(ONE3, "b_1").matrix
    L = _column_major_liouvillian(np.zeros((3, 3)), [(gamma * (nth + 1), b), (gamma * nth, b.conj().T)])
    null = scipy.linalg.null_space(L)
    assert null.shape[1] == 1
    oracle = null[:, 0].reshape(3, 3, order="F")
    oracle = oracle / np.trace(oracle)
    res = evolve_master(EvolutionSpec(H, chans, t_end=400.0), QuantumState.basis(ONE3, (2,)))
    assert np.allclose(res.final.data, oracle, atol=1e-8)
    assert np.allclose(steady_state(H, chans).data, oracle, atol=1e-8)
    # three-level rate balance: populations proportional to (1, r, r^2), r = n/(n+1)
    r = nth / (nth + 1)
    assert np.allclose(np.diag(oracle).real, np.array([1, r, r * r]) / (1 + r + r * r), atol=1e-12)


def test_liouvillian_vectorization_convention(rng):
    H = driven_h()
    chans = thermal_channels(GATE_LAYOUT, kappa=0.1, gamma=(0.02, 0.03), n_th=(1.0, 2.0))
    rho = np.outer(*(2 * [random_state(rng, 8)]))
    rho = 0.5 * (rho + rho.conj().T)
    direct = -1j * (H.matrix @ rho - rho @ H.matrix)
    for ch in chans:
        c = ch.operator.matrix
        cdc = c.conj().T @ c
        direct += ch.rate * (c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc))
    assert np.allclose(liouvillian(H, chans) @ rho.ravel(), direct.ravel())


def test_steady_state_examples():
    H = Operator(ONE, np.zeros((2, 2)))
    vac = steady_state(H, [Channel(ladder(ONE, "a"), 0.5)])
    assert np.allclose(vac.data, np.diag([1, 0]))
    ground = steady_state(
        Operator(ONE3, np.zeros((3, 3))), thermal_channels(ONE3, gamma=(0.1,), n_th=(0.0,), modes=("b_1",))
    )
    assert np.allclose(ground.data, np.diag([1, 0, 0]))
    with pytest.raises(DegenerateSteadyStateError):
        steady_state(H, [])


@given(st.integers(0, 2**16), st.floats(0.0, 0.2), st.floats(0.0, 5.0))
def test_master_invariants(seed, kappa, nth):
    rng = np.random.default_rng(seed)
    chans = thermal_channels(GATE_LAYOUT, kappa=kappa, gamma=(0.05, 0.05), n_th=(nth, nth))
    psi = QuantumState(GATE_LAYOUT, random_state(rng, 8))
    d = evolve_master(EvolutionSpec(driven_h(), chans, t_end=3.0), psi).diagnostics
    assert d["trace_drift"] <= 1e-8
    assert d["hermiticity_error"] <= 1e-8
    assert d["min_eigenvalue"] >= -1e-8


def test_segment_boundary_continuity(rng):
    H = driven_h()
    chans = thermal_channels(GATE_LAYOUT, kappa=0.1, gamma=(0.01, 0.01), n_th=(1, 1))
    psi = QuantumState(GATE_LAYOUT, random_state(rng, 8))
    whole = evolve_master(EvolutionSpec(H, chans, t_end=4.0), psi).final.data
    split = evolve_master(
        EvolutionSpec([Segment(H, chans, 1.5), Segment(H, chans, 2.5)]), psi
    ).final.data
    assert np.max(np.abs(whole - split)) < 1e-7


def test_tolerance_halving_self_consistency(rng):
    H = driven_h()
    chans = thermal_channels(GATE_LAYOUT, kappa=0.05, gamma=(0.01, 0.01), n_th=(2, 2))
    psi = QuantumState(GATE_LAYOUT, random_state(rng, 8))
    target = QuantumState(GATE_LAYOUT, random_state(rng, 8))
    coarse = evolve_master(EvolutionSpec(H, chans, t_end=5.0, rtol=1e-6, atol=1e-8), psi).final
    fine = evolve_master(EvolutionSpec(H, chans, t_end=5.0, rtol=5e-7, atol=5e-9), psi).final
    ref = evolve_master(EvolutionSpec(H, chans, t_end=5.0, rtol=1e-11, atol=1e-13), psi).final
    err_coarse = abs(fidelity(target, coarse) - fidelity(target, ref))
    err_fine = abs(fidelity(target, fine) - fidelity(target, ref))
    assert abs(fidelity(target, coarse) - fidelity(target, fine)) <= max(err_coarse, 1e-6) + 1e-6
    assert err_fine <= 1e-5


def test_postselection_records_branch_weight():
    proj = Operator(ONE, np.diag([1.0, 0.0]))
    seg = Segment(Operator(ONE, np.zeros((2, 2))), (), 1.0, (proj,), postselect=True)
    plus = QuantumState(ONE, np.array([0.6, 0.8]))
    res = evolve_master(EvolutionSpec([seg]), plus)
    assert res.diagnostics["branch_probabilities"] == [pytest.approx(0.36)]
    assert np.allclose(res.final.data, np.diag([1, 0]))


def test_record_before_boundary_maps():
    flip = Operator(ONE, np.array([[0, 1], [1, 0]]))
    seg = Segment(Operator(ONE, np.zeros((2, 2))), (), 1.0, (flip,))
    res = evolve_master(EvolutionSpec([seg], record_times=[1.0]), QuantumState.basis(ONE, (0,)))
    assert np.allclose(res.final.data, np.diag([1, 0]))
    res = evolve_master(EvolutionSpec([seg]), QuantumState.basis(ONE, (0,)))
    assert np.allclose(res.final.data, np.diag([0, 1]))


def test_step_budget_raises():
    chans = thermal_channels(GATE_LAYOUT, kappa=0.1)
    spec = EvolutionSpec(driven_h(), chans, t_end=100.0, max_steps=50)
    with pytest.raises(IntegrationError) as err:
        evolve_master(spec, QuantumState.basis(GATE_LAYOUT, (1, 0, 0)))
    assert err.value.diagnostics["rhs_evaluations"] > 50


def test_record_times_validated():
    with pytest.raises(ValueError):
        evolve_master(EvolutionSpec(driven_h(), (), t_end=1.0, record_times=[0.5, 0.2]), QuantumState.basis(GATE_LAYOUT, (0, 0, 0)))


def test_spectral_propagator_matches_integrator(rng):
    H = driven_h()
    chans = thermal_channels(GATE_LAYOUT, kappa=0.07, gamma=(0.02, 0.01), n_th=(1, 0))
    psi = QuantumState(GATE_LAYOUT, random_state(rng, 8))
    probe = random_state(rng, 8)
    t = np.linspace(0, 6, 13)
    res = evolve_master(EvolutionSpec(H, chans, t_end=6, record_times=t, rtol=1e-11, atol=1e-13), psi)
    direct = [np.real(probe.conj() @ s.data @ probe) for s in res.states]
    series = SpectralPropagator(H, chans).overlap_series(psi, probe, t)
    assert np.allclose(series, direct, atol=1e-9)


def test_negative_rate_rejected():
    with pytest.raises(ValueError):
        Channel(ladder(ONE, "a"), -0.1)
