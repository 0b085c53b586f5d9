"""Hamiltonians and effective parameters of the five-mode optomechanical system.

All frequencies, couplings and rates are in units of the bare mechanical
frequency omega_m; times in units of 1/omega_m.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .operators import LayoutError, ModeLayout, Operator, compose

OMEGA_M_HZ = 2e6

FULL_MODES = ("a", "b_A1", "b_A2", "b_1", "b_2")
GATE_MODES = ("a", "b_1", "b_2")


class DegenerateEliminationError(ValueError):
    """The auxiliary mode cannot be eliminated (|A| = 0)."""


class SingularDetuningError(ValueError):
    """omega_m' equals omega_m, the linearized coupling G' diverges."""


class MeanFieldInstabilityError(RuntimeError):
    """Mean-field amplitudes overflowed."""


def _pair(x) -> tuple[float, float]:
    if np.isscalar(x):
        return (float(x), float(x))
    x = tuple(float(v) for v in x)
    if len(x) != 2:
        raise ValueError("expected a scalar or a pair")
    return x


@dataclass(frozen=True)
class SystemParams:
    """Bare model constants.  Per-mechanical-mode quantities are pairs (j = 1, 2).

    ``omega_c`` is the bare cavity frequency; the drive-frame cavity energy
    used by the gate models is ``Delta_c_prime = omega_c - g1 - g2 - omega_d``.
    """

    omega_c: float = 2.002
    omega_A: tuple[float, float] = (0.998, 0.998)
    omega_m: tuple[float, float] = (1.0, 1.0)
    g: tuple[float, float] = (1e-3, 1e-3)
    V: tuple[float, float] = (0.046, 0.046)
    epsilon: float = 0.0
    omega_d: float = 0.0
    kappa: float = 0.0
    gamma_A: tuple[float, float] = (1e-3, 1e-3)
    gamma: tuple[float, float] = (1e-5, 1e-5)
    n_th: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if np.iscomplexobj(np.asarray(self.V)):
            raise ValueError("V_j must be real")
        for name in ("omega_A", "omega_m", "g", "V", "gamma_A", "gamma", "n_th"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        rates = [self.kappa, *self.gamma_A, *self.gamma, *self.n_th]
        if any(r < 0 for r in rates):
            raise ValueError("dissipation rates and thermal occupations must be >= 0")

    @classmethod
    def symmetric(
        cls,
        *,
        Delta_c_prime: float = 2.0,
        omega_A: float = 0.998,
        omega_m: float = 1.0,
        g: float | Sequence[float] = 1e-3,
        V: float | Sequence[float] = 0.046,
        gamma: float = 1e-5,
        gamma_A: float = 1e-3,
        kappa: float = 0.0,
        n_th: float = 0.0,
        epsilon: float = 0.0,
        omega_d: float = 0.0,
    ) -> "SystemParams":
        """Identical mechanical pairs, parameterised by the drive-frame detuning."""
        g1, g2 = _pair(g)
        return cls(
            omega_c=Delta_c_prime + g1 + g2 + omega_d,
            omega_A=omega_A,
            omega_m=omega_m,
            g=(g1, g2),
            V=V,
            epsilon=epsilon,
            omega_d=omega_d,
            kappa=kappa,
            gamma_A=gamma_A,
            gamma=gamma,
            n_th=n_th,
        )

    @property
    def omega_c_prime(self) -> float:
        return self.omega_c - sum(self.g)

    @property
    def Delta_c_prime(self) -> float:
        return self.omega_c_prime - self.omega_d

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class EffectiveParams:
    delta: tuple[float, float]
    omega_eff: tuple[float, float]
    g_eff: tuple[float, float]
    gamma_eff: tuple[float, float]
    Delta_c_prime: float
    A: tuple[complex, complex]

    def masked(self, g_mask: Sequence[bool]) -> "EffectiveParams":
        g = tuple(gj if on else 0.0 for gj, on in zip(self.g_eff, g_mask))
        return replace(self, g_eff=g)


@dataclass(frozen=True)
class LinearizedParams:
    G: tuple[complex, complex]
    G_eff: tuple[complex, complex]
    omega_c_eff: float
    kappa_eff: float
    omega: tuple[float, float]
    gamma_eff: tuple[float, float]
    Delta_c: float
    G_eff_exact: tuple[complex, complex] = (0j, 0j)
    omega_m_prime: tuple[float, float] = (np.nan, np.nan)

    @classmethod
    def direct(
        cls,
        G_eff: Sequence[complex],
        *,
        omega_c_eff: float = 1.0,
        omega: float | Sequence[float] = 1.0,
        kappa_eff: float = 0.0,
        gamma_eff: float | Sequence[float] = 0.0,
    ) -> "LinearizedParams":
        """Set the effective beam-splitter model directly (e.g. G_j' = G, omega_m' = omega_m)."""
        G_eff = tuple(complex(x) for x in G_eff)
        return cls(
            G=(np.nan, np.nan),
            G_eff=G_eff,
            omega_c_eff=float(omega_c_eff),
            kappa_eff=float(kappa_eff),
            omega=_pair(omega),
            gamma_eff=_pair(gamma_eff),
            Delta_c=float(omega_c_eff),
            G_eff_exact=G_eff,
        )


def _require(layout: ModeLayout, labels: Sequence[str]):
    missing = [lab for lab in labels if lab not in layout]
    if missing:
        raise LayoutError(f"layout is missing modes {missing}")


def _drive_terms(p: SystemParams, frame: str, t: float):
    if p.epsilon == 0:
        return []
    if frame == "lab":
        ph = np.exp(-1j * p.omega_d * t)
        return [(p.epsilon * ph, ["a+"]), (p.epsilon * np.conj(ph), ["a"])]
    return [(p.epsilon, ["a+"]), (p.epsilon, ["a"])]


def build_full_hamiltonian(
    p: SystemParams, layout: ModeLayout, frame: str = "lab", t: float = 0.0
) -> Operator:
    """Five-mode Hamiltonian with the quadratic coupling kept in full.

    ``(b + b^dag)^2`` is expanded in normal order as ``2 b^dag b + b^2 + b^dag^2 + 1``
    so matrix elements agree with the untruncated operator.  In the lab frame
    the drive term is evaluated at time ``t``.
    """
    if frame not in ("lab", "drive"):
        raise ValueError("frame must be 'lab' or 'drive'")
    _require(layout, FULL_MODES)
    wc = p.omega_c if frame == "lab" else p.omega_c - p.omega_d
    terms = [(wc, ["a+", "a"])]
    for j, (bA, b) in enumerate((("b_A1", "b_1"), ("b_A2", "b_2"))):
        g = p.g[j]
        terms += [
            (p.omega_A[j], [bA + "+", bA]),
            (-2 * g, ["a+", "a", bA + "+", bA]),
            (-g, ["a+", "a", bA, bA]),
            (-g, ["a+", "a", bA + "+", bA + "+"]),
            (-g, ["a+", "a"]),
            (p.omega_m[j], [b + "+", b]),
            (p.V[j], [bA + "+", b]),
            (p.V[j], [b + "+", bA]),
        ]
    terms += _drive_terms(p, frame, t)
    return compose(layout, terms)


def build_rwa_hamiltonian(p: SystemParams, layout: ModeLayout, frame: str = "drive") -> Operator:
    """Rotating-wave Hamiltonian: cross-Kerr ``-2 g a^dag a b_A^dag b_A`` and shifted cavity."""
    if frame not in ("lab", "drive"):
        raise ValueError("frame must be 'lab' or 'drive'")
    _require(layout, FULL_MODES)
    wc = p.omega_c_prime if frame == "lab" else p.Delta_c_prime
    terms = [(wc, ["a+", "a"])]
    for j, (bA, b) in enumerate((("b_A1", "b_1"), ("b_A2", "b_2"))):
        terms += [
            (p.omega_A[j], [bA + "+", bA]),
            (p.omega_m[j], [b + "+", b]),
            (-2 * p.g[j], ["a+", "a", bA + "+", bA]),
            (p.V[j], [bA + "+", b]),
            (p.V[j], [bA, b + "+"]),
        ]
    terms += _drive_terms(p, frame, 0.0)
    return compose(layout, terms)


def effective_params(p: SystemParams) -> EffectiveParams:
    """Weak-drive parameters after eliminating the internal membranes b_Aj."""
    delta, w, g, gam, A = [], [], [], [], []
    for j in range(2):
        Aj = 1j * (p.omega_A[j] - p.omega_m[j]) + (p.gamma_A[j] - p.gamma[j]) / 2
        if abs(Aj) == 0:
            raise DegenerateEliminationError(
                f"mode {j + 1}: omega_A == omega_m and gamma_A == gamma, cannot eliminate b_A"
            )
        d = abs(p.V[j]) ** 2 / abs(Aj) ** 2
        delta.append(d)
        w.append(p.omega_m[j] - d * (p.omega_A[j] - p.omega_m[j]))
        g.append(2 * d * p.g[j])
        gam.append(p.gamma[j] + d * (p.gamma_A[j] - p.gamma[j]))
        A.append(Aj)
    return EffectiveParams(
        delta=tuple(delta),
        omega_eff=tuple(w),
        g_eff=tuple(g),
        gamma_eff=tuple(gam),
        Delta_c_prime=p.Delta_c_prime,
        A=tuple(A),
    )


def build_effective_hamiltonian(eff: EffectiveParams, layout: ModeLayout) -> Operator:
    if layout.labels != GATE_MODES:
        raise LayoutError(f"effective Hamiltonian needs layout {GATE_MODES}, got {layout.labels}")
    terms = [(eff.Delta_c_prime, ["a+", "a"])]
    for j, b in enumerate(("b_1", "b_2")):
        terms += [
            (eff.omega_eff[j], [b + "+", b]),
            (-eff.g_eff[j], ["a+", "a", b + "+", b]),
        ]
    return compose(layout, terms)


def linearized_params(
    p: SystemParams, alpha: complex, beta: Sequence[complex]
) -> LinearizedParams:
    """Strong-drive beam-splitter parameters around the mean field (alpha, beta_j).

    The mechanical frequency and damping shifts use the same sign convention as
    the weak-drive elimination (level repulsion, added damping).
    """
    beta = tuple(complex(b) for b in beta)
    G = tuple(2 * alpha * np.conj(beta[j]) * p.g[j] for j in range(2))
    Delta_c = p.Delta_c_prime - sum(2 * p.g[j] * abs(beta[j]) ** 2 for j in range(2))
    wmp = tuple(p.omega_A[j] - 2 * p.g[j] * abs(alpha) ** 2 for j in range(2))

    wc_eff, k_eff = Delta_c, p.kappa
    omega, gamma_eff, G_eff, G_exact = [], [], [], []
    for j in range(2):
        dc = wmp[j] - Delta_c
        den_c = dc**2 + (p.gamma_A[j] - p.kappa) ** 2 / 4
        if abs(G[j]) > 0:
            wc_eff -= abs(G[j]) ** 2 * dc / den_c
            k_eff += abs(G[j]) ** 2 * (p.gamma_A[j] - p.kappa) / den_c
        dm = wmp[j] - p.omega_m[j]
        den_m = dm**2 + (p.gamma_A[j] - p.gamma[j]) ** 2 / 4
        omega.append(p.omega_m[j] - p.V[j] ** 2 * dm / den_m)
        gamma_eff.append(p.gamma[j] + p.V[j] ** 2 * (p.gamma_A[j] - p.gamma[j]) / den_m)
        if G[j] == 0:
            G_eff.append(0j)
            G_exact.append(0j)
            continue
        if dm == 0:
            raise SingularDetuningError(
                f"mode {j + 1}: omega_m' == omega_m ({wmp[j]}), G' diverges"
            )
        G_eff.append(G[j] * p.V[j] / dm)
        G_exact.append(
            1j * G[j] * p.V[j] / (1j * dm + (p.gamma_A[j] - p.gamma[j]) / 2)
        )
    return LinearizedParams(
        G=G,
        G_eff=tuple(G_eff),
        omega_c_eff=float(wc_eff),
        kappa_eff=float(k_eff),
        omega=tuple(omega),
        gamma_eff=tuple(gamma_eff),
        Delta_c=float(Delta_c),
        G_eff_exact=tuple(G_exact),
        omega_m_prime=wmp,
    )


@dataclass(frozen=True)
class MeanFieldState:
    alpha: complex = 0j
    beta: tuple[complex, complex] = (0j, 0j)
    beta_b: tuple[complex, complex] = (0j, 0j)
    t: float = 0.0


@dataclass
class MeanFieldTrajectory:
    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    beta_b: np.ndarray
    G_eff: np.ndarray
    late_fraction: float = 0.5
    stats: dict = field(default_factory=dict)

    def state(self, k: int) -> MeanFieldState:
        return MeanFieldState(
            complex(self.alpha[k]), tuple(self.beta[k]), tuple(self.beta_b[k]), float(self.t[k])
        )


def _mean_field_rhs(p: SystemParams):
    g = np.asarray(p.g)
    wA = np.asarray(p.omega_A)
    wm = np.asarray(p.omega_m)
    gA = np.asarray(p.gamma_A)
    gm = np.asarray(p.gamma)
    V = np.asarray(p.V)
    D, k, eps = p.Delta_c_prime, p.kappa, p.epsilon

    def rhs(t, y):
        al, b, bb = y[0], y[1:3], y[3:5]
        dal = -(1j * D + k / 2) * al + 2j * np.sum(g * np.abs(b) ** 2) * al - 1j * eps
        db = -(1j * wA + gA / 2) * b + 2j * g * abs(al) ** 2 * b - 1j * V * bb
        dbb = -(1j * wm + gm / 2) * bb - 1j * V * b
        return np.concatenate(([dal], db, dbb))

    return rhs


def mean_field_trajectory(
    p: SystemParams,
    initial: MeanFieldState,
    t_end: float,
    dt: float,
    *,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    late_fraction: float = 0.5,
    overflow: float = 1e8,
) -> MeanFieldTrajectory:
    """Integrate the c-number equations for <a>, <b_Aj>, <b_j> and track |G'(t)|.

    The classical drive enters the cavity equation as ``-i epsilon``; the
    auxiliary-mode frequency is shifted by the cavity intensity.
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    y0 = np.array(
        [initial.alpha, *initial.beta, *initial.beta_b], dtype=complex
    )
    rhs = _mean_field_rhs(p)

    def blowup(t, y):
        return overflow - np.max(np.abs(y))

    blowup.terminal = True
    n = int(round(t_end / dt))
    t_eval = initial.t + dt * np.arange(n + 1)
    sol = solve_ivp(
        rhs, (t_eval[0], t_eval[-1]), y0, method="DOP853", t_eval=t_eval,
        rtol=rtol, atol=atol, events=blowup,
    )
    if sol.status == 1 or not np.all(np.isfinite(sol.y)):
        raise MeanFieldInstabilityError(f"mean-field trajectory diverged for parameters {p}")
    if sol.status != 0:
        raise RuntimeError(f"mean-field integration failed: {sol.message}")
    al, beta, beta_b = sol.y[0], sol.y[1:3].T, sol.y[3:5].T
    g = np.asarray(p.g)
    wmp = np.asarray(p.omega_A)[None, :] - 2 * g[None, :] * np.abs(al)[:, None] ** 2
    dm = wmp - np.asarray(p.omega_m)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        G = 2 * al[:, None] * np.conj(beta) * g[None, :] * np.asarray(p.V)[None, :] / dm
    traj = MeanFieldTrajectory(sol.t, al, beta, beta_b, G, late_fraction)
    traj.stats = late_time_stats(traj.t, np.abs(G[:, 0]), late_fraction)
    return traj


def late_time_stats(t: np.ndarray, x: np.ndarray, late_fraction: float = 0.5) -> dict:
    """Mean, spread and a rolling-variance convergence diagnostic of a late-time window."""
    start = int(len(t) * (1 - late_fraction))
    late = x[start:]
    w = max(len(late) // 10, 2)
    if len(late) >= 2 * w:
        windows = np.lib.stride_tricks.sliding_window_view(late, w)
        rolling = windows.var(axis=1)
        drift = float(abs(rolling[-1] - rolling[0]))
    else:
        rolling, drift = np.array([np.nan]), np.nan
    return {
        "mean": float(np.mean(late)),
        "std": float(np.std(late)),
        "min": float(np.min(late)),
        "max": float(np.max(late)),
        "rolling_var_last": float(rolling[-1]),
        "rolling_var_drift": drift,
        "t_start": float(t[start]),
    }
