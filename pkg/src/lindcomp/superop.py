"""Hermitian-preserving superoperators as sparse Pauli process matrices.

A map E acts as ``E[rho] = sum_{a,b} chi[a,b] P_a rho P_b``; the process
matrix of a Hermitian-preserving map is Hermitian, ``chi[a,b] = conj(chi[b,a])``.
Vectorization is column-stacking everywhere: ``vec(A rho B) = (B^T kron A) vec(rho)``,
``vec(rho) = rho.reshape(-1, order='F')``.  The oracle module shares this
convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .pauli import PRUNE_THRESHOLD, PauliString, PauliSum

ChiKey = tuple[PauliString, PauliString]


def vec(mat: np.ndarray) -> np.ndarray:
    return mat.reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    dim = int(round(np.sqrt(v.size)))
    return v.reshape(dim, dim, order="F")


class ChiMap:
    """Sparse Pauli process matrix of a superoperator."""

    __slots__ = ("n", "entries")

    def __init__(self, n: int, entries: dict[ChiKey, complex] | None = None):
        self.n = n
        self.entries = {} if entries is None else entries

    @classmethod
    def identity(cls, n: int) -> "ChiMap":
        ident = PauliString.identity(n)
        return cls(n, {(ident, ident): 1.0 + 0.0j})

    @classmethod
    def zero(cls, n: int) -> "ChiMap":
        return cls(n)

    def copy(self) -> "ChiMap":
        return ChiMap(self.n, dict(self.entries))

    def prune(self, threshold: float = PRUNE_THRESHOLD) -> "ChiMap":
        self.entries = {k: v for k, v in self.entries.items() if abs(v) > threshold}
        return self

    def add_entry(self, alpha: PauliString, beta: PauliString, value: complex):
        key = (alpha, beta)
        self.entries[key] = self.entries.get(key, 0.0) + value

    def __add__(self, other: "ChiMap") -> "ChiMap":
        if self.n != other.n:
            raise ValueError("qubit counts differ")
        out = dict(self.entries)
        for k, v in other.entries.items():
            out[k] = out.get(k, 0.0) + v
        return ChiMap(self.n, out).prune()

    def __sub__(self, other: "ChiMap") -> "ChiMap":
        return self + (other * -1.0)

    def __mul__(self, scalar: complex) -> "ChiMap":
        return ChiMap(self.n, {k: v * scalar for k, v in self.entries.items()})

    __rmul__ = __mul__

    def one_norm(self) -> float:
        """|chi| = sum |chi_ab|; upper-bounds the map's induced trace norm."""
        return float(sum(abs(v) for v in self.entries.values()))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        scale = max((abs(v) for v in self.entries.values()), default=1.0)
        for (a, b), v in self.entries.items():
            w = self.entries.get((b, a), 0.0)
            if abs(v - w.conjugate()) > tol * max(1.0, scale):
                return False
        return True

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho, dtype=complex)
        for (a, b), v in self.entries.items():
            out += v * (a.dense() @ rho @ b.dense())
        return out

    def sorted_items(self):
        return sorted(
            self.entries.items(), key=lambda it: (it[0][0].key(), it[0][1].key())
        )

    def __len__(self):
        return len(self.entries)

    def __repr__(self):
        inner = ", ".join(
            f"({a.label()},{b.label()}): {v:.4g}" for (a, b), v in self.entries.items()
        )
        return f"ChiMap{{{inner}}}"


def chi_of_hamiltonian(h: PauliSum) -> ChiMap:
    """chi of the commutator generator rho -> -i[H, rho]."""
    if not h.is_hermitian():
        raise ValueError("Hamiltonian must have real Pauli coefficients")
    out = ChiMap(h.n)
    ident = PauliString.identity(h.n)
    for p, c in h.terms.items():
        if p.is_identity():
            continue  # identity commutes away
        out.add_entry(p, ident, -1j * c)
        out.add_entry(ident, p, 1j * c)
    return out.prune()


def chi_of_dissipator_parts(d: PauliSum) -> tuple[ChiMap, ChiMap, ChiMap]:
    """The three dissipator pieces D rho D', (D'D) rho, rho (D'D) as chi maps."""
    n = d.n
    ident = PauliString.identity(n)
    part1 = ChiMap(n)
    for pa, ca in d.terms.items():
        for pb, cb in d.terms.items():
            part1.add_entry(pa, pb, ca * cb.conjugate())
    dd = d.dagger() @ d
    part2 = ChiMap(n)
    part3 = ChiMap(n)
    for p, c in dd.terms.items():
        part2.add_entry(p, ident, c)
        part3.add_entry(ident, p, c)
    return part1.prune(), part2.prune(), part3.prune()


def chi_of_dissipator(d: PauliSum) -> ChiMap:
    """chi of the full single-jump dissipator D rho D' - (1/2){D'D, rho}."""
    p1, p2, p3 = chi_of_dissipator_parts(d)
    return (p1 + (-0.5) * p2 + (-0.5) * p3).prune()


def compose(a: ChiMap, b: ChiMap) -> ChiMap:
    """chi of the sequential action a after b (a o b)."""
    if a.n != b.n:
        raise ValueError("qubit counts differ")
    out = ChiMap(a.n)
    for (a1, b1), v1 in a.entries.items():
        for (a2, b2), v2 in b.entries.items():
            ph_a, pa = a1 * a2
            ph_b, pb = b1 * b2
            out.add_entry(pa, pb, v1 * v2 * ph_a * ph_b.conjugate())
    return out.prune()


def to_dense_superop(x: ChiMap, dense_limit: int = 4) -> np.ndarray:
    """Column-stacking superoperator matrix M with vec(x[rho]) = M vec(rho)."""
    if x.n > dense_limit:
        raise ValueError(f"n={x.n} exceeds dense superoperator limit {dense_limit}")
    dim2 = 4**x.n
    out = np.zeros((dim2, dim2), dtype=complex)
    for (a, b), v in x.entries.items():
        # vec(P_a rho P_b) = (P_b^T kron P_a) vec(rho); P_b Hermitian so B = P_b
        out += v * np.kron(b.dense().conj(), a.dense())
    return out


def conjugation_superop(u: np.ndarray) -> np.ndarray:
    """Column-stacking superoperator of rho -> U rho U^dagger."""
    return np.kron(u.conj(), u)


def kraus_superop(kraus: list[np.ndarray]) -> np.ndarray:
    """Column-stacking superoperator of rho -> sum_a K_a rho K_a^dagger."""
    return sum(np.kron(k.conj(), k) for k in kraus)


@dataclass
class LindbladSpec:
    """Problem description: Hamiltonian, jump operators, optional driving.

    ``time_profile(t)`` returns ``(H(t), [D_l(t)])`` for driven problems;
    ``H``/``jumps`` then hold the t=0 snapshot.  ``ldot_bound`` is the
    user-supplied bound on the diamond norm of dL/dt, required by the
    time-dependent planner.
    """

    n: int
    hamiltonian: PauliSum
    jumps: list[PauliSum] = field(default_factory=list)
    time_profile: Callable[[float], tuple[PauliSum, list[PauliSum]]] | None = None
    ldot_bound: float | None = None

    def __post_init__(self):
        if not self.hamiltonian.is_hermitian():
            raise ValueError("Hamiltonian must be Hermitian (real coefficients)")
        for d in self.jumps:
            if d.n != self.n:
                raise ValueError("jump operator qubit count mismatch")

    @property
    def m(self) -> int:
        return len(self.jumps)

    def is_time_dependent(self) -> bool:
        return self.time_profile is not None

    def at(self, t: float) -> tuple[PauliSum, list[PauliSum]]:
        if self.time_profile is None:
            return self.hamiltonian, self.jumps
        return self.time_profile(t)

    def pauli_norm_at(self, t: float) -> float:
        h, ds = self.at(t)
        return 2.0 * (h.norm(1) + sum(d.norm(1) ** 2 for d in ds))

    def pauli_norm(self, t_max: float | None = None, grid: int = 257) -> float:
        """2(||H||_1 + sum ||D_l||_1^2); driven specs maximize over a t-grid."""
        if self.time_profile is None:
            return self.pauli_norm_at(0.0)
        if t_max is None:
            raise ValueError("time-dependent spec needs t_max to bound its norm")
        ts = np.linspace(0.0, t_max, grid)
        return max(self.pauli_norm_at(float(t)) for t in ts)

    def chi_generator_at(self, t: float) -> ChiMap:
        """chi map of the full Lindbladian generator at time t."""
        h, ds = self.at(t)
        out = chi_of_hamiltonian(h)
        for d in ds:
            out = out + chi_of_dissipator(d)
        return out
