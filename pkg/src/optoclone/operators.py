"""Dense operator algebra on composite truncated Fock spaces.

Modes are addressed by label; the tensor-product order is the order in which
modes appear in the :class:`ModeLayout`, first mode most significant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

MODE_LABELS = ("a", "b_A1", "b_A2", "b_1", "b_2")


class LayoutError(ValueError):
    """Raised when operators or states live on incompatible layouts."""


@dataclass(frozen=True)
class ModeLayout:
    modes: tuple[tuple[str, int], ...]

    def __post_init__(self):
        labels = [m[0] for m in self.modes]
        if not labels:
            raise LayoutError("layout needs at least one mode")
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate mode labels in {labels}")
        for label, dim in self.modes:
            if label not in MODE_LABELS:
                raise LayoutError(f"unknown mode label {label!r}")
            if int(dim) < 2:
                raise LayoutError(f"mode {label!r} needs local dimension >= 2")

    @classmethod
    def of(cls, labels: Iterable[str], dim: int | Sequence[int] = 2) -> "ModeLayout":
        labels = list(labels)
        dims = [dim] * len(labels) if np.isscalar(dim) else list(dim)
        return cls(tuple((lab, int(d)) for lab, d in zip(labels, dims)))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m[0] for m in self.modes)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m[1] for m in self.modes)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"mode {label!r} not in layout {self.labels}") from None

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def basis_index(self, occupations: dict[str, int] | Sequence[int]) -> int:
        """Flat index of a Fock basis state."""
        if isinstance(occupations, dict):
            unknown = set(occupations) - set(self.labels)
            if unknown:
                raise LayoutError(f"modes {sorted(unknown)} not in layout")
            occ = [occupations.get(lab, 0) for lab in self.labels]
        else:
            occ = list(occupations)
        if len(occ) != len(self.modes):
            raise LayoutError("occupation list length does not match layout")
        for n, d in zip(occ, self.dims):
            if not 0 <= n < d:
                raise ValueError(f"occupation {n} outside truncation {d}")
        return int(np.ravel_multi_index(occ, self.dims))

    def sub(self, labels: Iterable[str]) -> "ModeLayout":
        keep = set(labels)
        return ModeLayout(tuple(m for m in self.modes if m[0] in keep))


@dataclass(frozen=True, eq=False)
class Operator:
    layout: ModeLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise LayoutError(
                f"matrix shape {m.shape} does not match layout dimension {self.layout.dim}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def _check(self, other: "Operator"):
        if other.layout != self.layout:
            raise LayoutError("operators live on different layouts")

    def __add__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.layout, self.matrix - other.matrix)

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check(other)
        return Operator(self.layout, self.matrix @ other.matrix)

    def __mul__(self, c: complex) -> "Operator":
        return Operator(self.layout, c * self.matrix)

    __rmul__ = __mul__

    def __neg__(self) -> "Operator":
        return Operator(self.layout, -self.matrix)

    def dag(self) -> "Operator":
        return Operator(self.layout, self.matrix.conj().T)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return self.hermiticity_error() <= atol

    def element(self, bra: Sequence[int] | dict, ket: Sequence[int] | dict) -> complex:
        return complex(self.matrix[self.layout.basis_index(bra), self.layout.basis_index(ket)])


def identity(layout: ModeLayout) -> Operator:
    return Operator(layout, np.eye(layout.dim))


def embed(layout: ModeLayout, label: str, local: np.ndarray) -> Operator:
    """Embed a single-mode matrix into the full space."""
    k = layout.index(label)
    local = np.asarray(local, dtype=complex)
    if local.shape != (layout.dims[k],) * 2:
        raise LayoutError(f"local matrix for {label!r} must be {layout.dims[k]}x{layout.dims[k]}")
    mats = [np.eye(d) for d in layout.dims]
    mats[k] = local
    return Operator(layout, reduce(np.kron, mats))


def ladder(layout: ModeLayout, label: str) -> Operator:
    """Annihilation operator of ``label``, identity on every other mode."""
    d = layout.dims[layout.index(label)]
    return embed(layout, label, np.diag(np.sqrt(np.arange(1, d)), 1))


def number(layout: ModeLayout, label: str) -> Operator:
    d = layout.dims[layout.index(label)]
    return embed(layout, label, np.diag(np.arange(d, dtype=float)))


def _factor(layout: ModeLayout, token: str) -> Operator:
    if token.endswith("+"):
        return ladder(layout, token[:-1]).dag()
    return ladder(layout, token)


def compose(layout: ModeLayout, terms: Iterable[tuple[complex, Sequence[str]]]) -> Operator:
    """Sum of coefficient-weighted ladder-operator products.

    Each term is ``(c, factors)`` where ``factors`` lists mode labels,
    a trailing ``+`` marking the creation operator, e.g.
    ``(1.0, ["a+", "a", "b_1+", "b_1"])``.
    """
    out = np.zeros((layout.dim, layout.dim), dtype=complex)
    for c, factors in terms:
        if isinstance(factors, str):
            factors = [factors]
        prod = identity(layout)
        for tok in factors:
            prod = prod @ _factor(layout, tok)
        out += c * prod.matrix
    return Operator(layout, out)


@dataclass(frozen=True, eq=False)
class QuantumState:
    layout: ModeLayout
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        n = self.layout.dim
        if d.shape not in ((n,), (n, n)):
            raise LayoutError(f"state shape {d.shape} incompatible with layout dimension {n}")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def kind(self) -> str:
        return "vector" if self.data.ndim == 1 else "density"

    @classmethod
    def basis(cls, layout: ModeLayout, occupations) -> "QuantumState":
        v = np.zeros(layout.dim, dtype=complex)
        v[layout.basis_index(occupations)] = 1.0
        return cls(layout, v)

    @classmethod
    def product(cls, layout: ModeLayout, locals_: dict[str, Sequence[complex]]) -> "QuantumState":
        """Product state from per-mode amplitude vectors; missing modes in vacuum."""
        vecs = []
        for label, d in layout.modes:
            v = np.zeros(d, dtype=complex)
            if label in locals_:
                amp = np.asarray(locals_[label], dtype=complex)
                v[: len(amp)] = amp
            else:
                v[0] = 1.0
            vecs.append(v)
        return cls(layout, reduce(np.kron, vecs))

    def density(self) -> np.ndarray:
        if self.kind == "vector":
            return np.outer(self.data, self.data.conj())
        return self.data

    def as_density(self) -> "QuantumState":
        return self if self.kind == "density" else QuantumState(self.layout, self.density())

    def norm_error(self) -> float:
        if self.kind == "vector":
            return abs(np.linalg.norm(self.data) - 1.0)
        return abs(np.trace(self.data).real - 1.0)

    def apply(self, op: Operator) -> "QuantumState":
        if op.layout != self.layout:
            raise LayoutError("operator and state live on different layouts")
        if self.kind == "vector":
            return QuantumState(self.layout, op.matrix @ self.data)
        return QuantumState(self.layout, op.matrix @ self.data @ op.matrix.conj().T)

    def expect(self, op: Operator) -> complex:
        if self.kind == "vector":
            return complex(self.data.conj() @ op.matrix @ self.data)
        return complex(np.trace(op.matrix @ self.data))


def partial_trace(state: QuantumState, keep: Iterable[str]) -> QuantumState:
    """Reduced density matrix on the modes in ``keep`` (layout order preserved)."""
    keep = set(keep)
    if not keep:
        raise ValueError("keep set must not be empty")
    layout = state.layout
    for lab in keep:
        layout.index(lab)
    if keep == set(layout.labels):
        return state.as_density()
    dims = layout.dims
    n = len(dims)
    kept = [i for i, lab in enumerate(layout.labels) if lab in keep]
    traced = [i for i in range(n) if i not in kept]
    sub = layout.sub(keep)
    if state.kind == "vector":
        psi = state.data.reshape(dims)
        psi = np.transpose(psi, kept + traced).reshape(sub.dim, -1)
        return QuantumState(sub, psi @ psi.conj().T)
    rho = state.data.reshape(dims + dims)
    row = list(range(n))
    col = [i + n if i in kept else i for i in range(n)]
    out = [i for i in kept] + [i + n for i in kept]
    red = np.einsum(rho, row + col, out)
    return QuantumState(sub, red.reshape(sub.dim, sub.dim))


def fidelity(s1: QuantumState, s2: QuantumState) -> float:
    """Root fidelity: ``|<a|b>|`` for pure states, ``sqrt(<a|rho|a>)`` pure vs mixed.

    Two mixed states use the Uhlmann form ``tr sqrt(sqrt(r1) r2 sqrt(r1))``.
    """
    if s1.layout != s2.layout:
        raise LayoutError("fidelity of states on different layouts")
    if s1.kind == "vector" and s2.kind == "vector":
        f = abs(np.vdot(s1.data, s2.data))
    elif s1.kind == "vector" or s2.kind == "vector":
        psi, rho = (s1.data, s2.data) if s1.kind == "vector" else (s2.data, s1.data)
        f = np.sqrt(max(np.real(psi.conj() @ rho @ psi), 0.0))
    else:
        r = scipy.linalg.sqrtm(s1.data)
        f = np.real(np.trace(scipy.linalg.sqrtm(r @ s2.data @ r)))
    return float(min(max(f, 0.0), 1.0))
