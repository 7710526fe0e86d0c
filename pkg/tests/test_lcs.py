import numpy as np
import pytest

from lindcomp.lcs import (
    PauliConjugateTerm,
    apply_term,
    compose,
    from_chi,
    identity_formula,
    reuse_equivalence_check,
    sample,
)
from lindcomp.pauli import PauliString, PauliSum
from lindcomp.superop import ChiMap, chi_of_dissipator, chi_of_hamiltonian, to_dense_superop


def random_hp_chi(rng, n):
    h = PauliSum.from_terms(
        [(PauliString(n, int(rng.integers(1 << n)), int(rng.integers(1 << n))),
          rng.normal()) for _ in range(3)], n=n
    )
    d = PauliSum.from_terms(
        [(PauliString(n, int(rng.integers(1 << n)), int(rng.integers(1 << n))),
          complex(rng.normal(), rng.normal())) for _ in range(2)], n=n
    )
    chi = chi_of_hamiltonian(h) + chi_of_dissipator(d)
    return chi


def test_from_chi_commutator_pair():
    chi = chi_of_hamiltonian(PauliSum.from_terms([("Z", 1.0)]))
    f = from_chi(chi)
    assert f.mu == pytest.approx(2.0)
    assert len(f.pairs) == 1
    w, term = f.pairs[0]
    assert w == pytest.approx(2.0)
    assert term.phi == pytest.approx(-np.pi / 2)
    labels = {term.alpha.label(), term.beta.label()}
    assert labels == {"Z", "I"}
    np.testing.assert_allclose(f.to_dense(), to_dense_superop(chi), atol=1e-12)


def test_from_chi_identity():
    f = from_chi(ChiMap.identity(1))
    assert f.mu == pytest.approx(1.0)
    assert f.is_identity()
    w, term = f.pairs[0]
    assert term.phi == pytest.approx(0.0)


def test_from_chi_reconstruction_random():
    rng = np.random.default_rng(0)
    for _ in range(20):
        chi = random_hp_chi(rng, 1)
        f = from_chi(chi)
        assert f.mu == pytest.approx(chi.one_norm(), rel=1e-10)
        np.testing.assert_allclose(f.to_dense(), to_dense_superop(chi), atol=1e-10)


def test_from_chi_reconstruction_two_qubits():
    rng = np.random.default_rng(1)
    chi = random_hp_chi(rng, 2)
    np.testing.assert_allclose(
        from_chi(chi).to_dense(), to_dense_superop(chi), atol=1e-10
    )


def test_from_chi_rejects_non_hermitian():
    z = PauliString.from_label("Z")
    i = PauliString.identity(1)
    with pytest.raises(ValueError):
        from_chi(ChiMap(1, {(z, i): 1.0 + 0j}))


def test_compose_identity_keeps_labels():
    rng = np.random.default_rng(2)
    f = from_chi(random_hp_chi(rng, 1))
    c = compose(identity_formula(1), f)
    assert c.mu == pytest.approx(f.mu)
    assert c.bias == pytest.approx(f.bias)


def test_compose_mu_product_rule():
    rng = np.random.default_rng(3)
    f = from_chi(random_hp_chi(rng, 1))
    g = from_chi(random_hp_chi(rng, 1))
    c = compose(f, g)
    assert c.mu == pytest.approx(f.mu * g.mu)
    np.testing.assert_allclose(c.to_dense(), f.to_dense() @ g.to_dense(), atol=1e-10)


def test_compose_bias_rules():
    a = identity_formula(1)
    a.bias, a.mu = 0.1, 1.2
    b = identity_formula(1)
    b.bias, b.mu = 0.2, 1.5
    c = compose(a, b)
    # both targets CPTP: refined rule
    assert c.bias == pytest.approx(0.1 + 0.2 + 0.02)
    b.target_cptp = False
    c2 = compose(a, b)
    assert c2.bias == pytest.approx(1.2 * 0.2 + 1.5 * 0.1 + 0.02)


def test_sample_single_term():
    f = identity_formula(2)
    rng = np.random.default_rng(4)
    for _ in range(5):
        assert sample(f, rng).is_identity()


def test_sample_two_equal_weights():
    x = PauliString.from_label("X")
    z = PauliString.from_label("Z")
    f_pairs = [
        (1.0, PauliConjugateTerm(1.0 + 0j, x, x)),
        (1.0, PauliConjugateTerm(1.0 + 0j, z, z)),
    ]
    from lindcomp.lcs import ExplicitLcs

    f = ExplicitLcs(1, f_pairs)
    rng = np.random.default_rng(5)
    draws = 100_000
    hits = sum(sample(f, rng).alpha == x for _ in range(draws))
    sigma = np.sqrt(draws * 0.25)
    assert abs(hits - draws / 2) <= 5 * sigma


def test_sample_deterministic_under_seed():
    rng1 = np.random.default_rng(6)
    rng2 = np.random.default_rng(6)
    f = from_chi(random_hp_chi(np.random.default_rng(7), 1))
    for _ in range(20):
        t1 = sample(f, rng1)
        t2 = sample(f, rng2)
        assert t1.alpha == t2.alpha and t1.beta == t2.beta and t1.phase == t2.phase


def test_sampler_unbiasedness():
    # empirical mean of sampled term superoperators converges to map / mu
    rng = np.random.default_rng(8)
    chi = random_hp_chi(rng, 1)
    f = from_chi(chi)
    draws = 20_000
    acc = np.zeros((4, 4), dtype=complex)
    for _ in range(draws):
        acc += sample(f, rng).dense_superop()
    acc /= draws
    target = f.to_dense() / f.mu
    # per-entry fluctuation scale ~ 1/sqrt(draws)
    assert np.max(np.abs(acc - target)) <= 5.0 / np.sqrt(draws)


def test_apply_term_identity():
    rho = np.array([[0.7, 0.2], [0.2, 0.3]], dtype=complex)
    term = PauliConjugateTerm(1.0 + 0j, PauliString.identity(1), PauliString.identity(1))
    np.testing.assert_allclose(apply_term(term, rho), rho)


def test_apply_term_bit_flip():
    rho = np.diag([1.0, 0.0]).astype(complex)
    x = PauliString.from_label("X")
    term = PauliConjugateTerm(1.0 + 0j, x, x)
    np.testing.assert_allclose(apply_term(term, rho), np.diag([0.0, 1.0]), atol=1e-14)


def test_apply_term_commutator_piece():
    plus = 0.5 * np.ones((2, 2), dtype=complex)
    term = PauliConjugateTerm(
        np.exp(-1j * np.pi / 2), PauliString.from_label("Z"), PauliString.identity(1)
    )
    out = apply_term(term, plus)
    z = np.diag([1.0, -1.0]).astype(complex)
    expected = 0.5 * (-1j * z @ plus + 1j * plus @ z)
    np.testing.assert_allclose(out, expected, atol=1e-14)
    np.testing.assert_allclose(out, out.conj().T, atol=1e-14)
    assert abs(np.trace(out)) < 1e-14


def test_apply_term_density_state():
    from lindcomp.engine import DensityState

    state = DensityState.from_bitstring("0")
    x = PauliString.from_label("X")
    out = apply_term(PauliConjugateTerm(1.0 + 0j, x, x), state)
    assert isinstance(out, DensityState)
    np.testing.assert_allclose(out.mat, np.diag([0.0, 1.0]), atol=1e-14)


def test_term_superop_matches_apply():
    rng = np.random.default_rng(9)
    from lindcomp.superop import unvec, vec

    for _ in range(20):
        a = PauliString(2, int(rng.integers(4)), int(rng.integers(4)))
        b = PauliString(2, int(rng.integers(4)), int(rng.integers(4)))
        term = PauliConjugateTerm(np.exp(1j * rng.normal()), a, b)
        rho = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = rho + rho.conj().T
        np.testing.assert_allclose(
            unvec(term.dense_superop() @ vec(rho)), term.apply(rho), atol=1e-12
        )


def test_reuse_identity_pair():
    assert reuse_equivalence_check(identity_formula(1), identity_formula(1)) < 1e-14


def test_reuse_random_formulas():
    rng = np.random.default_rng(10)
    for _ in range(5):
        f = from_chi(random_hp_chi(rng, 1))
        g = from_chi(random_hp_chi(rng, 1))
        assert reuse_equivalence_check(f, g) <= 1e-10


def test_reuse_hamiltonian_with_dissipator():
    f = from_chi(chi_of_hamiltonian(PauliSum.from_terms([("Z", 1.0)])))
    g = from_chi(chi_of_dissipator(PauliSum.from_terms([("X", 1.0)])))
    assert reuse_equivalence_check(f, g) <= 1e-10


def test_reuse_two_qubit_formulas():
    rng = np.random.default_rng(11)
    f = from_chi(random_hp_chi(rng, 2))
    g = from_chi(random_hp_chi(rng, 2))
    assert reuse_equivalence_check(f, g) <= 1e-10
