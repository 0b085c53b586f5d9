"""Unitary and Lindblad time evolution on dense density matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .operators import LayoutError, ModeLayout, Operator, QuantumState, ladder


class IntegrationError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateSteadyStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class Channel:
    operator: Operator
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"negative channel rate {self.rate}")


@dataclass(frozen=True)
class Segment:
    """Constant generator over ``duration``; ``kraus`` maps applied at its end.

    If ``postselect`` is set the state is renormalised after the boundary maps
    and the discarded weight is recorded as a branch probability.
    """

    hamiltonian: Operator
    channels: tuple[Channel, ...] = ()
    duration: float = 0.0
    kraus: tuple[Operator, ...] = ()
    postselect: bool = False
    label: str = ""


@dataclass
class EvolutionSpec:
    hamiltonian: Operator | Sequence[Segment]
    collapse_channels: Sequence[Channel] = ()
    t_end: float | None = None
    rtol: float = 1e-8
    atol: float = 1e-10
    record_times: Sequence[float] | None = None
    max_steps: int = 2_000_000
    method: str = "DOP853"
    exact_closed: bool = True

    def segments(self) -> list[Segment]:
        if isinstance(self.hamiltonian, Operator):
            if self.t_end is None:
                raise ValueError("t_end is required for a constant Hamiltonian")
            return [Segment(self.hamiltonian, tuple(self.collapse_channels), float(self.t_end))]
        segs = list(self.hamiltonian)
        if self.collapse_channels:
            raise ValueError("piecewise schedules carry their own channels")
        return segs

    @property
    def total_time(self) -> float:
        return float(sum(s.duration for s in self.segments()))


@dataclass
class EvolutionResult:
    times: np.ndarray
    states: list[QuantumState]
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> QuantumState:
        return self.states[-1]


def evolve_unitary(H: Operator, psi0: QuantumState, t: float) -> QuantumState:
    """``exp(-iHt) psi0`` through the eigendecomposition of H."""
    if not H.is_hermitian(1e-12):
        raise ValueError(f"Hamiltonian is not Hermitian (error {H.hermiticity_error():.2e})")
    if psi0.layout != H.layout:
        raise LayoutError("state and Hamiltonian live on different layouts")
    return psi0.apply(propagator(H, t))


def propagator(H: Operator, t: float) -> Operator:
    w, v = np.linalg.eigh(H.matrix)
    return Operator(H.layout, (v * np.exp(-1j * w * t)) @ v.conj().T)


def thermal_channels(
    layout: ModeLayout,
    *,
    kappa: float = 0.0,
    gamma: Sequence[float] = (),
    n_th: Sequence[float] = (),
    modes: Sequence[str] = ("b_1", "b_2"),
    extra: Sequence[tuple[str, float]] = (),
) -> tuple[Channel, ...]:
    """Cavity decay plus thermal damping/heating of the mechanical modes.

    ``extra`` adds zero-temperature decay channels such as ``("b_A1", gamma_A)``.
    """
    out = []
    if kappa > 0 and "a" in layout:
        out.append(Channel(ladder(layout, "a"), kappa))
    for label, g, n in zip(modes, gamma, n_th):
        if label not in layout or g == 0:
            continue
        b = ladder(layout, label)
        out.append(Channel(b, g * (n + 1)))
        if n > 0:
            out.append(Channel(b.dag(), g * n))
    for label, rate in extra:
        if rate > 0 and label in layout:
            out.append(Channel(ladder(layout, label), rate))
    return tuple(out)


def liouvillian(H: Operator, channels: Sequence[Channel] = ()) -> np.ndarray:
    """Superoperator acting on row-major ``vec(rho)``: vec(A rho B) = (A kron B^T) vec(rho)."""
    n = H.layout.dim
    eye = np.eye(n)
    h = H.matrix
    L = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for ch in channels:
        c = ch.operator.matrix
        cdc = c.conj().T @ c
        L += ch.rate * (
            np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
        )
    return L


def steady_state(H: Operator, channels: Sequence[Channel] = (), tol: float = 1e-10) -> QuantumState:
    """Trace-one null vector of the Liouvillian."""
    L = liouvillian(H, channels)
    _, s, vh = np.linalg.svd(L)
    if s[-2] < tol * max(s[0], 1.0):
        raise DegenerateSteadyStateError(
            f"Liouvillian null space is degenerate (singular values {s[-2]:.2e}, {s[-1]:.2e})"
        )
    n = H.layout.dim
    rho = vh[-1].conj().reshape(n, n)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    return QuantumState(H.layout, rho)


class _Generator:
    """Right-hand side of the master equation with an evaluation budget."""

    def __init__(self, seg: Segment, n: int, budget: int):
        self.n = n
        heff = seg.hamiltonian.matrix.copy()
        self.jumps = []
        for ch in seg.channels:
            c = ch.operator.matrix
            heff = heff - 0.5j * ch.rate * (c.conj().T @ c)
            if ch.rate > 0:
                self.jumps.append((ch.rate, c, c.conj().T))
        self.heff = heff
        self.heff_dag = heff.conj().T
        self.calls = 0
        self.budget = budget

    def __call__(self, t, y):
        self.calls += 1
        if self.calls > self.budget:
            raise IntegrationError(
                "step budget exhausted", {"rhs_evaluations": self.calls, "t": float(t)}
            )
        rho = y.reshape(self.n, self.n)
        out = -1j * (self.heff @ rho - rho @ self.heff_dag)
        for r, c, cd in self.jumps:
            out += r * (c @ rho @ cd)
        return out.ravel()


def _is_closed(seg: Segment) -> bool:
    return not any(ch.rate > 0 for ch in seg.channels)


def _propagate_segment(seg, rho, t0, times, spec, diag):
    """Evolve ``rho`` over one segment, returning (rho_end, recorded states)."""
    n = rho.shape[0]
    recorded = []
    if seg.duration == 0:
        return rho, [rho.copy() for _ in times]
    if spec.exact_closed and _is_closed(seg):
        w, v = np.linalg.eigh(seg.hamiltonian.matrix)
        vd = v.conj().T

        def at(tau):
            u = (v * np.exp(-1j * w * tau)) @ vd
            return u @ rho @ u.conj().T

        recorded = [at(t - t0) for t in times]
        return at(seg.duration), recorded
    gen = _Generator(seg, n, spec.max_steps)
    t_eval = sorted(set([t0 + seg.duration] + list(times)))
    sol = solve_ivp(
        gen, (t0, t0 + seg.duration), rho.ravel(), method=spec.method,
        t_eval=t_eval, rtol=spec.rtol, atol=spec.atol,
    )
    diag["rhs_evaluations"] += gen.calls
    if sol.status != 0:
        raise IntegrationError(
            f"integration failed in segment {seg.label!r}: {sol.message}",
            {"rhs_evaluations": gen.calls, "segment": seg.label},
        )
    lookup = {t: sol.y[:, k].reshape(n, n) for k, t in enumerate(sol.t)}
    recorded = [lookup[t] for t in times]
    return lookup[t_eval[-1]], recorded


def evolve_master(spec: EvolutionSpec, rho0: QuantumState) -> EvolutionResult:
    """Integrate the Lindblad equation over a constant or piecewise generator.

    States are recorded at ``spec.record_times``; a recorded time on a segment
    boundary returns the state before that boundary's Kraus maps.  Without
    record times only the final state, after every boundary map, is returned.
    """
    segs = spec.segments()
    for s in segs:
        if s.duration < 0:
            raise ValueError("segment durations must be non-negative")
        for ch in s.channels:
            if ch.operator.layout != rho0.layout:
                raise LayoutError("channel operator on a different layout")
        if s.hamiltonian.layout != rho0.layout:
            raise LayoutError("Hamiltonian on a different layout")
    total = float(sum(s.duration for s in segs))
    record = [] if spec.record_times is None else [float(t) for t in spec.record_times]
    if any(np.diff(record) < 0) or (record and (record[0] < 0 or record[-1] > total + 1e-12)):
        raise ValueError("record_times must be sorted and within [0, t_end]")

    rho = rho0.density().astype(complex)
    diag = {"rhs_evaluations": 0, "branch_probabilities": []}
    out_t, out_rho = [], []
    pending = list(record)
    t0 = 0.0
    for k, seg in enumerate(segs):
        t1 = t0 + seg.duration
        last = k == len(segs) - 1
        here = [t for t in pending if t <= t1 + (1e-12 if last else 0.0) and t >= t0]
        pending = pending[len(here):]
        rho, rec = _propagate_segment(seg, rho, t0, [min(t, t1) for t in here], spec, diag)
        out_t += here
        out_rho += rec
        for K in seg.kraus:
            rho = K.matrix @ rho @ K.matrix.conj().T
        if seg.postselect:
            p = float(np.trace(rho).real)
            diag["branch_probabilities"].append(p)
            if p <= 0:
                raise IntegrationError(f"post-selection in segment {seg.label!r} has zero weight")
            rho = rho / p
        t0 = t1
    if pending:
        out_t += pending
        out_rho += [rho.copy() for _ in pending]
    if spec.record_times is None:
        out_t.append(total)
        out_rho.append(rho)

    states = []
    drift, herm, min_eig = 0.0, 0.0, np.inf
    for r in out_rho:
        drift = max(drift, abs(np.trace(r).real - 1.0))
        herm = max(herm, float(np.max(np.abs(r - r.conj().T))))
        r = 0.5 * (r + r.conj().T)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(r)[0]))
        states.append(QuantumState(rho0.layout, r))
    diag.update(
        trace_drift=drift,
        hermiticity_error=herm,
        min_eigenvalue=min_eig,
        positivity_ok=min_eig >= -1e-8,
        rtol=spec.rtol,
        atol=spec.atol,
    )
    if drift > 1e-8 and not any(s.postselect or s.kraus for s in segs):
        raise IntegrationError(f"trace drift {drift:.2e} exceeds 1e-8", diag)
    return EvolutionResult(np.asarray(out_t), states, diag)



class SpectralPropagator:
    """Evaluate linear functionals of rho(t) on long, dense time grids.

    Diagonalises the Liouvillian once; ``overlap_series`` returns
    ``<psi|rho(t)|psi>`` without stepping.  Use for time-independent
    generators whose eigenvector matrix is well conditioned.
    """

    def __init__(self, H: Operator, channels: Sequence[Channel] = (), max_cond: float = 1e8):
        L = liouvillian(H, channels)
        self.eigvals, self.vecs = np.linalg.eig(L)
        self.cond = float(np.linalg.cond(self.vecs))
        if self.cond > max_cond:
            raise IntegrationError(
                f"Liouvillian eigenvectors ill-conditioned (cond {self.cond:.2e})",
                {"cond": self.cond},
            )
        self.inv = np.linalg.inv(self.vecs)
        self.n = H.layout.dim

    def overlap_series(self, rho0: QuantumState, psi: np.ndarray, times, chunk: int = 2048) -> np.ndarray:
        return self.overlap_series_many([(rho0, psi)], times, chunk)[:, 0]

    def overlap_series_many(self, pairs, times, chunk: int = 2048) -> np.ndarray:
        """``<psi_k|rho_k(t)|psi_k>`` for each (rho0_k, psi_k); shape (len(times), len(pairs))."""
        amps = []
        for rho0, psi in pairs:
            c = self.inv @ rho0.density().ravel()
            u = np.kron(np.conj(psi), psi) @ self.vecs
            amps.append(u * c)
        amps = np.array(amps).T
        times = np.asarray(times, dtype=float)
        out = np.empty((len(times), amps.shape[1]))
        for k in range(0, len(times), chunk):
            t = times[k : k + chunk]
            out[k : k + chunk] = np.real(np.exp(np.multiply.outer(t, self.eigvals)) @ amps)
        return out
