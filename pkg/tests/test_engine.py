import math

import numpy as np
import pytest
from scipy.linalg import expm

from lindcomp.engine import (
    DensityState,
    dilated_D_step,
    embed_ancilla,
    exact_step,
    trace_out_ancilla,
    trotter_H_step,
    trotter_unitary,
)
from lindcomp.pauli import PauliSum
from lindcomp.presets import lowering_jump
from lindcomp.superop import ChiMap, chi_of_dissipator, chi_of_hamiltonian


def test_single_term_trotter_is_exact():
    h = PauliSum.from_terms([("ZZ", 0.37)])
    state = DensityState.from_bitstring("01")
    out = trotter_H_step(state, h, 0.2)
    u = expm(-1j * 0.2 * h.dense())
    np.testing.assert_allclose(out.mat, u @ state.mat @ u.conj().T, atol=1e-12)


def test_trotter_matches_ordered_product():
    h = PauliSum.from_terms([("ZZ", 1.0), ("XI", 1.0)])
    tau = 0.1
    state = DensityState.from_bitstring("00")
    out = trotter_H_step(state, h, tau)
    f1 = expm(-1j * tau * PauliSum.from_terms([("ZZ", 1.0)]).dense())
    f2 = expm(-1j * tau * PauliSum.from_terms([("XI", 1.0)]).dense())
    u = f1 @ f2  # insertion order, first factor leftmost
    np.testing.assert_allclose(out.mat, u @ state.mat @ u.conj().T, atol=1e-12)


def test_trotter_preserves_trace_and_hermiticity():
    rng = np.random.default_rng(0)
    h = PauliSum.from_terms([("XY", 0.3), ("ZI", 0.5), ("YZ", 0.2)])
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    out = trotter_H_step(DensityState.from_matrix(rho), h, 0.3)
    assert np.trace(out.mat).real == pytest.approx(1.0, abs=1e-12)
    assert out.is_hermitian(1e-12)


def test_trotter_rejects_non_hermitian():
    with pytest.raises(ValueError):
        trotter_H_step(DensityState.from_bitstring("0"), PauliSum.from_terms([("X", 1j)]), 0.1)


def test_dilated_step_survival_probability():
    gamma, tau = 1.5, 0.3
    d = lowering_jump(1, 0, gamma)
    state = DensityState.from_bitstring("1")
    out = dilated_D_step(state, d, tau, mode="exact")
    survive = math.cos(math.sqrt(gamma * tau)) ** 2
    np.testing.assert_allclose(np.diag(out.mat).real, [1 - survive, survive], atol=1e-12)


def test_dilated_step_zero_time():
    d = lowering_jump(1, 0, 1.5)
    state = DensityState.from_bitstring("1")
    out = dilated_D_step(state, d, 0.0)
    np.testing.assert_allclose(out.mat, state.mat)


def test_dilated_step_is_cptp():
    rng = np.random.default_rng(1)
    d = PauliSum.from_terms([("X", 0.4 + 0.1j), ("Y", 0.3)], n=1)
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    for mode in ("exact", "trotter"):
        out = dilated_D_step(DensityState.from_matrix(rho), d, 0.05, mode=mode)
        assert np.trace(out.mat).real == pytest.approx(1.0, abs=1e-12)
        assert out.is_hermitian(1e-12)
        assert min(np.linalg.eigvalsh(out.mat)) > -1e-12


def test_dilated_step_first_order_expansion():
    # (result - rho - tau D[rho]) shrinks as tau^2: slope 2 under halving
    rng = np.random.default_rng(2)
    d = PauliSum.from_terms([("X", 0.5 + 0.2j), ("Z", 0.3)], n=1)
    gen = chi_of_dissipator(d)
    m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    state = DensityState.from_matrix(rho)
    taus = [0.02 / 2**i for i in range(5)]
    resid = []
    for tau in taus:
        out = dilated_D_step(state, d, tau, mode="exact")
        resid.append(np.max(np.abs(out.mat - rho - tau * gen.apply(rho))))
    slopes = [math.log2(resid[i] / resid[i + 1]) for i in range(4)]
    assert all(abs(s - 2.0) < 0.1 for s in slopes)


def test_dilated_trotter_converges_to_exact():
    # per-step gap between the split and exact dilated evolutions is O(tau)
    d = PauliSum.from_terms([("X", 0.5 + 0.2j), ("Z", 0.3)], n=1)
    state = DensityState.from_bitstring("1")
    taus = [0.04 / 2**i for i in range(5)]
    gaps = []
    for tau in taus:
        a = dilated_D_step(state, d, tau, mode="exact")
        b = dilated_D_step(state, d, tau, mode="trotter")
        gaps.append(np.max(np.abs(a.mat - b.mat)))
    slopes = [math.log2(gaps[i] / gaps[i + 1]) for i in range(4)]
    assert all(abs(s - 1.0) < 0.15 for s in slopes)


def test_embed_and_trace_round_trip():
    rng = np.random.default_rng(3)
    rho = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    big = embed_ancilla(rho)
    assert big.shape == (8, 8)
    np.testing.assert_allclose(trace_out_ancilla(big), rho)


def test_exact_step_zero_generator():
    state = DensityState.from_bitstring("0")
    out = exact_step(state, ChiMap.zero(1), 0.7)
    np.testing.assert_allclose(out.mat, state.mat)


def test_exact_step_amplitude_damping_decay():
    gamma = 1.5
    gen = chi_of_dissipator(lowering_jump(1, 0, gamma))
    state = DensityState.from_bitstring("1")
    out = exact_step(state, gen, 1.0)
    assert out.mat[1, 1].real == pytest.approx(math.exp(-gamma), abs=1e-10)


def test_exact_step_trace_preserving():
    rng = np.random.default_rng(4)
    h = PauliSum.from_terms([("XY", 0.3), ("ZZ", 0.4)])
    d = PauliSum.from_terms([("XI", 0.2 + 0.1j), ("IY", 0.3)], n=2)
    gen = chi_of_hamiltonian(h) + chi_of_dissipator(d)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    out = exact_step(DensityState.from_matrix(rho), gen, 0.8)
    assert np.trace(out.mat).real == pytest.approx(1.0, abs=1e-10)


def test_exact_step_dimension_guard():
    with pytest.raises(ValueError):
        exact_step(DensityState(5, np.eye(32, dtype=complex) / 32), ChiMap.identity(5), 0.1)


def test_trotter_unitary_is_unitary():
    h = PauliSum.from_terms([("XY", 0.3), ("ZI", 0.5), ("YZ", 0.2)])
    u = trotter_unitary(h, 0.4)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(4), atol=1e-12)
