"""Dense density-matrix state and the coarse-grained physical steps.

The dissipative step attaches one transient ancilla qubit (prepended as the
most significant qubit), evolves under the Hermitian coupling for sqrt(tau),
and traces the ancilla back out, so the stored state never grows.  Trotter
factors are multiplied in the insertion order of the Pauli sum; that ordering
is part of the step's definition and is matched by the compensation builders.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm

from .compensation import dilation_operator
from .pauli import PauliSum
from .superop import ChiMap, to_dense_superop, unvec, vec

DENSE_QUBIT_LIMIT = 8
DENSE_SUPEROP_LIMIT = 4


class DensityState:
    """System density matrix plus the accumulated log of renormalization factors."""

    __slots__ = ("n", "mat", "log_renorm")

    def __init__(self, n: int, mat: np.ndarray, log_renorm: float = 0.0):
        self.n = n
        self.mat = mat
        self.log_renorm = log_renorm

    @classmethod
    def from_bitstring(cls, bits: str) -> "DensityState":
        """Computational basis state; qubit 0 is the leftmost bit."""
        n = len(bits)
        idx = int(bits, 2)
        mat = np.zeros((1 << n, 1 << n), dtype=complex)
        mat[idx, idx] = 1.0
        return cls(n, mat)

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "DensityState":
        dim = mat.shape[0]
        n = dim.bit_length() - 1
        if mat.shape != (dim, dim) or (1 << n) != dim:
            raise ValueError("density matrix dimension must be a power of two")
        return cls(n, np.array(mat, dtype=complex))

    def copy(self) -> "DensityState":
        return DensityState(self.n, self.mat.copy(), self.log_renorm)

    def renorm_factor(self) -> float:
        return math.exp(self.log_renorm)

    def expectation(self, obs: np.ndarray) -> float:
        return float(np.trace(self.mat @ obs).real) * self.renorm_factor()

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.mat - self.mat.conj().T)) <= tol)


def trotter_unitary(h: PauliSum, tau: float) -> np.ndarray:
    """First-order product unitary: factors in insertion order, first leftmost."""
    dim = 1 << h.n
    u = np.eye(dim, dtype=complex)
    for p, c in h.terms.items():
        angle = c.real * tau
        factor = math.cos(angle) * np.eye(dim) - 1j * math.sin(angle) * p.dense()
        u = u @ factor
    return u


def apply_unitary(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    return u @ rho @ u.conj().T


def trotter_H_step(state: DensityState, h: PauliSum, tau: float) -> DensityState:
    if not h.is_hermitian():
        raise ValueError("Hamiltonian must be Hermitian")
    u = trotter_unitary(h, tau)
    return DensityState(state.n, apply_unitary(state.mat, u), state.log_renorm)


def embed_ancilla(rho: np.ndarray) -> np.ndarray:
    """|0><0| (x) rho with the ancilla as the new most significant qubit."""
    dim = rho.shape[0]
    out = np.zeros((2 * dim, 2 * dim), dtype=complex)
    out[:dim, :dim] = rho
    return out


def trace_out_ancilla(rho_dilated: np.ndarray) -> np.ndarray:
    dim = rho_dilated.shape[0] // 2
    return rho_dilated[:dim, :dim] + rho_dilated[dim:, dim:]


def dilated_unitary(d: PauliSum, tau: float, mode: str = "exact") -> np.ndarray:
    """Evolution under the dilated coupling for time sqrt(tau) on n+1 qubits."""
    j = dilation_operator(d)
    root = math.sqrt(tau)
    if mode == "exact":
        return expm(-1j * root * j.dense())
    if mode == "trotter":
        return trotter_unitary(j, root)
    raise ValueError(f"unknown mode {mode!r}")


def dilated_kraus(d: PauliSum, tau: float, mode: str = "exact") -> tuple[np.ndarray, np.ndarray]:
    """The two Kraus blocks of the traced dilated step, K_a = <a|U|0>."""
    u = dilated_unitary(d, tau, mode)
    dim = u.shape[0] // 2
    return u[:dim, :dim], u[dim:, :dim]


def dilated_D_step(
    state: DensityState, d: PauliSum, tau: float, mode: str = "exact"
) -> DensityState:
    """Coarse dissipative step: ancilla attach, dilated evolution, partial trace."""
    if tau == 0:
        return state.copy()
    k0, k1 = dilated_kraus(d, tau, mode)
    mat = k0 @ state.mat @ k0.conj().T + k1 @ state.mat @ k1.conj().T
    return DensityState(state.n, mat, state.log_renorm)


def exact_step(state: DensityState, generator: ChiMap, tau: float) -> DensityState:
    """rho <- unvec(expm(tau M) vec(rho)) for the dense superoperator M."""
    if generator.n > DENSE_SUPEROP_LIMIT:
        raise ValueError(
            f"n={generator.n} exceeds the dense superoperator limit {DENSE_SUPEROP_LIMIT}"
        )
    if not generator.entries:
        return state.copy()
    prop = expm(tau * to_dense_superop(generator, DENSE_SUPEROP_LIMIT))
    mat = unvec(prop @ vec(state.mat))
    return DensityState(state.n, mat, state.log_renorm)
