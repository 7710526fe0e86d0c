import math

import numpy as np
import pytest
from scipy.linalg import expm

from lindcomp.compensation import (
    LAMBDA_GEOM,
    build_dissipative_coefficients,
    build_J_tilde,
    build_M,
    build_N,
    build_V1,
    build_W,
    dilation_operator,
    pi_swap,
    series_tail_bound,
    trotter_compensation_series,
)
from lindcomp.engine import dilated_kraus, trotter_unitary
from lindcomp.oracle import superop_distance
from lindcomp.pauli import PauliString, PauliSum
from lindcomp.presets import lowering_jump
from lindcomp.superop import (
    LindbladSpec,
    chi_of_dissipator,
    chi_of_hamiltonian,
    kraus_superop,
    to_dense_superop,
)

COEFFS = build_dissipative_coefficients(8)


# ---------------------------------------------------------------------------
# coefficient tables
# ---------------------------------------------------------------------------


def test_first_order_dilation_coefficients():
    assert COEFFS.b[1] == {(1,): 1.0, (2,): -0.5, (3,): -0.5}


def test_b_support_shape():
    # only 2^a 3^b and 1 2^a 3^b strings appear
    for k in range(1, 9):
        for s in COEFFS.b[k]:
            body = s[1:] if s[0] == 1 else s
            assert all(j in (2, 3) for j in body)
            assert sorted(body) == list(body)


def test_compensation_vanishes_at_first_order():
    assert COEFFS.a[1] == {}


def test_golden_norms():
    golden = (1.0, 0.0, 1.5833, 2.0472)
    for k, g in enumerate(golden):
        assert COEFFS.a_norm(k) == pytest.approx(g, abs=5e-5)


def test_geometric_norm_bound():
    a2 = COEFFS.a_norm(2)
    for k in range(3, 9):
        assert COEFFS.a_norm(k) <= LAMBDA_GEOM ** (k - 2) * a2 * (1 + 1e-12)


def test_convolution_identity_exact():
    for k in range(9):
        assert COEFFS.convolution_residual(k) < 1e-12


def test_exponential_coefficients():
    # c is 1/k! times the product of per-index weights
    for s, v in COEFFS.c[3].items():
        w = 1.0
        for j in s:
            w *= 1.0 if j == 1 else -0.5
        assert v == pytest.approx(w / 6.0)


def test_dilation_series_against_traced_exponential():
    # sum_k tau^k sum_s b_s (parts product) equals the traced dilated step
    rng = np.random.default_rng(0)
    d = PauliSum.from_terms(
        [("X", 0.4 + 0.2j), ("Y", -0.3j), ("Z", 0.25)], n=1
    )
    from lindcomp.superop import chi_of_dissipator_parts

    parts = [to_dense_superop(c) for c in chi_of_dissipator_parts(d)]
    tau = 0.05
    series = np.eye(4, dtype=complex)
    for k in range(1, 9):
        for s, v in COEFFS.b[k].items():
            mat = np.eye(4, dtype=complex)
            for j in s:
                mat = mat @ parts[j - 1]
            series += tau**k * v * mat
    k0, k1 = dilated_kraus(d, tau, "exact")
    traced = kraus_superop([k0, k1])
    assert np.max(np.abs(series - traced)) < 1e-10


def test_pi_symmetry_superoperator_level():
    # swapping every index 2 <-> 3 leaves the assembled compensation unchanged
    rng = np.random.default_rng(1)
    for _ in range(5):
        d = PauliSum.from_terms(
            [(PauliString(1, int(rng.integers(2)), int(rng.integers(2))),
              complex(rng.normal(), rng.normal())) for _ in range(2)], n=1
        )
        if d.norm(1) == 0:
            continue
        nf = build_N(d, 0.02, 5, COEFFS)
        np.testing.assert_allclose(
            nf.to_dense(), nf.to_dense_swapped(), atol=1e-10
        )


def test_pi_symmetry_not_coefficientwise():
    # the canonical assignment that reproduces the golden norms is not
    # symmetric entry by entry; the symmetry lives at the map level
    a2 = COEFFS.a[2]
    assert a2[(2, 3)] != pytest.approx(a2[(3, 2)])
    assert a2[(2, 3)] == pytest.approx(-0.125)
    assert a2[(3, 2)] == pytest.approx(0.125)


# ---------------------------------------------------------------------------
# splitting compensation M
# ---------------------------------------------------------------------------


def amplitude_damping_spec(gamma=1.5, field=0.2):
    h = PauliSum.from_terms([("X", field)]) if field else PauliSum.zero(1)
    return LindbladSpec(1, h, [lowering_jump(1, 0, gamma)])


def test_m_is_identity_below_second_order():
    spec = amplitude_damping_spec()
    for K in (0, 1):
        f = build_M(spec, 0.05, K)
        assert f.is_identity()
        assert f.mu == pytest.approx(1.0)
        assert f.bias > 0


def test_m_one_norm_closed_form():
    spec = amplitude_damping_spec()
    x_total = spec.chi_generator_at(0.0).one_norm()
    # chi norms saturate: commutator part 2||H||_1, dissipative part 2||D||^2
    assert x_total == pytest.approx(2 * 0.2 + 2 * 1.5)
    tau = 0.1 / (2 * x_total)
    f = build_M(spec, tau, 40)
    assert f.mu == pytest.approx(math.exp(0.1) - 0.1)


def test_m_compensates_splitting_error():
    spec = amplitude_damping_spec()
    tau = 0.04
    chi_h = chi_of_hamiltonian(spec.hamiltonian)
    chi_d = chi_of_dissipator(spec.jumps[0])
    coarse = expm(tau * to_dense_superop(chi_d)) @ expm(tau * to_dense_superop(chi_h))
    target = expm(tau * (to_dense_superop(chi_h) + to_dense_superop(chi_d)))
    strength = spec.hamiltonian.norm(1) + spec.jumps[0].norm(1) ** 2
    prev = np.inf
    for K in range(1, 6):
        f = build_M(spec, tau, K)
        err = superop_distance(f.to_dense() @ coarse, target)
        bound = (4 * math.e * strength * tau / (K + 1)) ** (K + 1)
        assert err <= bound
        assert err <= prev * (1 + 1e-9) + 1e-15
        prev = err


def test_m_sampler_unbiased():
    # Monte-Carlo mean of sampled term superoperators, scaled by mu,
    # reproduces the truncated series
    spec = amplitude_damping_spec()
    f = build_M(spec, 0.3, 3)
    rng = np.random.default_rng(2)
    draws = 40_000
    acc = np.zeros((4, 4), dtype=complex)
    for _ in range(draws):
        acc += f.sample(rng).dense_superop()
    acc *= f.mu / draws
    assert np.max(np.abs(acc - f.to_dense())) <= 5 * f.mu / math.sqrt(draws)


def test_m_order_frequencies():
    spec = amplitude_damping_spec()
    tau, K = 0.3, 4
    f = build_M(spec, tau, K)
    x = 2.0 * spec.chi_generator_at(0.0).one_norm() * tau
    rng = np.random.default_rng(3)
    draws = 100_000
    counts = {0: 0, 2: 0, 3: 0, 4: 0}
    for _ in range(draws):
        u = rng.random()
        if u < f.p_identity:
            counts[0] += 1
            continue
        k = f.orders[
            min(
                np.searchsorted(f.order_cum, (u - f.p_identity) / (1 - f.p_identity),
                                side="right"),
                len(f.orders) - 1,
            )
        ]
        counts[k] += 1
    for k in counts:
        p = (1.0 if k == 0 else x**k / math.factorial(k)) / f.mu
        sigma = math.sqrt(draws * p * (1 - p))
        assert abs(counts[k] - draws * p) <= 5 * sigma


# ---------------------------------------------------------------------------
# dissipative compensation N
# ---------------------------------------------------------------------------


def test_n_is_identity_below_second_order():
    d = lowering_jump(1, 0, 1.5)
    f = build_N(d, 0.02, 1, COEFFS)
    assert f.is_identity() and f.mu == pytest.approx(1.0)
    assert f.bias > 0


def test_n_precondition():
    d = lowering_jump(1, 0, 1.5)
    with pytest.raises(ValueError):
        build_N(d, 1.0, 4, COEFFS)


def test_n_compensates_dilation_error():
    d = lowering_jump(1, 0, 1.5)
    tau = 0.02
    target = expm(tau * to_dense_superop(chi_of_dissipator(d)))
    coarse = kraus_superop(list(dilated_kraus(d, tau, "exact")))
    prev = np.inf
    for K in range(1, 6):
        f = build_N(d, tau, K, COEFFS)
        err = superop_distance(f.to_dense() @ coarse, target)
        assert err <= f.bias
        assert err <= prev * (1 + 1e-9) + 1e-15
        prev = err


def test_n_mu_bound():
    d = lowering_jump(1, 0, 1.5)
    tau = 0.02
    f = build_N(d, tau, 6, COEFFS)
    assert f.mu <= math.exp(2 * COEFFS.a_norm(2) * d.norm(1) ** 4 * tau**2)


def test_n_sampler_unbiased():
    d = PauliSum.from_terms([("X", 0.5 + 0.3j), ("Z", 0.4)], n=1)
    f = build_N(d, 0.15, 3, COEFFS)
    rng = np.random.default_rng(4)
    draws = 40_000
    acc = np.zeros((4, 4), dtype=complex)
    for _ in range(draws):
        acc += f.sample(rng).dense_superop()
    acc *= f.mu / draws
    assert np.max(np.abs(acc - f.to_dense())) <= 5 * f.mu / math.sqrt(draws)


# ---------------------------------------------------------------------------
# Trotter compensation V and the dilated variant
# ---------------------------------------------------------------------------


def test_v_identity_for_single_term():
    f = build_V1(PauliSum.from_terms([("Z", 0.7)]), 0.3, 5)
    assert f.is_identity() and f.bias == 0.0


def test_v_identity_for_commuting_terms():
    f = build_V1(PauliSum.from_terms([("XX", 0.3), ("YY", 0.2)]), 0.2, 4)
    assert f.is_identity()


def test_v_series_collapses_for_commuting_terms():
    # the collected product series is the identity order by order
    h = PauliSum.from_terms([("ZI", 0.3), ("IZ", 0.4)])
    series = trotter_compensation_series(h, 5)
    assert len(series[0]) == 1
    for order in series[1:]:
        assert order.norm(1) < 1e-12


def test_v_compensates_trotter_error():
    h = PauliSum.from_terms([("ZZ", 0.1), ("XI", 0.2), ("IX", 0.2)])
    tau, K = 0.05, 4
    f = build_V1(h, tau, K)
    eps_v = (2 * math.e * h.norm(1) * tau / (K + 1)) ** (K + 1)
    err = np.linalg.norm(f.v.dense() @ trotter_unitary(h, tau) - expm(-1j * tau * h.dense()), 2)
    assert err <= eps_v
    assert f.bias == pytest.approx(2 * eps_v + eps_v**2)


def test_v_mu_approaches_one():
    h = PauliSum.from_terms([("X", 0.3), ("Z", 0.4)])
    prev = np.inf
    for tau in (0.2, 0.1, 0.05, 0.025):
        f = build_V1(h, tau, 4)
        assert 1.0 <= f.mu <= prev + 1e-12
        prev = f.mu
    assert f.mu == pytest.approx(1.0, abs=1e-3)


def test_v_precondition():
    h = PauliSum.from_terms([("X", 1.0), ("Z", 1.0)])
    with pytest.raises(ValueError):
        build_V1(h, 0.6, 3)


def test_dilation_operator_lowering_jump():
    d = PauliSum.from_terms([("X", 0.5), ("Y", 0.5j)], n=1)  # |0><1|
    j = dilation_operator(d)
    assert j.terms == {
        PauliString.from_label("XX"): pytest.approx(0.5),
        PauliString.from_label("YY"): pytest.approx(0.5),
    }


def test_dilation_operator_matches_block_matrix():
    rng = np.random.default_rng(5)
    for _ in range(10):
        d = PauliSum.from_terms(
            [(PauliString(2, int(rng.integers(4)), int(rng.integers(4))),
              complex(rng.normal(), rng.normal())) for _ in range(3)], n=2
        )
        dd = d.dense()
        want = np.zeros((8, 8), dtype=complex)
        want[:4, 4:] = dd.conj().T
        want[4:, :4] = dd
        np.testing.assert_allclose(dilation_operator(d).dense(), want, atol=1e-12)


def test_j_tilde_identity_when_coupling_commutes():
    f = build_J_tilde(lowering_jump(1, 0, 1.5), 0.02, 4)
    assert f.is_identity() and f.bias == 0.0


def test_j_tilde_uses_doubled_order():
    d = PauliSum.from_terms([("X", 0.3 + 0.2j), ("Z", 0.25)], n=1)
    tau, K = 0.02, 2
    f = build_J_tilde(d, tau, K)
    j = dilation_operator(d)
    root = math.sqrt(tau)
    err = np.linalg.norm(
        f.v.dense() @ trotter_unitary(j, root) - expm(-1j * root * j.dense()), 2
    )
    # operator error matches a 2K-order truncation, far below the K-order one
    assert err <= series_tail_bound(2 * j.norm(1) * root, 2 * K)


def test_j_tilde_precondition():
    with pytest.raises(ValueError):
        build_J_tilde(lowering_jump(1, 0, 1.5), 0.1, 3)


# ---------------------------------------------------------------------------
# discretization compensation W
# ---------------------------------------------------------------------------


def scalar_driven_spec():
    def profile(t):
        return PauliSum.from_terms([("X", 0.2 + 0.1 * t)], n=1), []

    return LindbladSpec(1, profile(0.0)[0], [], time_profile=profile, ldot_bound=0.2)


def test_w_identity_for_time_independent():
    spec = amplitude_damping_spec()
    with pytest.warns(UserWarning):
        f = build_W(spec, 0.0, 0.05, 4, 5)
    assert f.is_identity()


def test_w_identity_below_third_order():
    f = build_W(scalar_driven_spec(), 0.0, 0.05, 4, 2)
    assert f.is_identity()
    assert f.mu == pytest.approx(1.0)


def test_w_compensates_discretization():
    spec = scalar_driven_spec()
    tau, M = 0.05, 4
    slices = [
        to_dense_superop(spec.chi_generator_at((j - 0.5) * tau / M))
        for j in range(1, M + 1)
    ]
    ordered = np.eye(4, dtype=complex)
    for s in slices:
        ordered = expm(tau / M * s) @ ordered
    averaged = expm(tau * sum(slices) / M)
    norm = spec.pauli_norm(tau)
    prev = np.inf
    for K in range(1, 6):
        f = build_W(spec, 0.0, tau, M, K)
        wd = f.to_dense()
        err = superop_distance(wd @ averaged, ordered)
        bound = (2 * math.e * norm * tau / (K + 1)) ** (K + 1)
        assert err <= bound
        assert err <= prev * (1 + 1e-9) + 1e-15
        prev = err


def test_w_noncommuting_within_residual():
    # structure-changing drive: the dropped second-order commutator term is
    # covered by the explicit residual bound added to the budget
    def profile(t):
        return PauliSum.from_terms([("X", 0.2), ("Z", 0.1 * t)], n=1), []

    spec = LindbladSpec(1, profile(0.0)[0], [], time_profile=profile, ldot_bound=0.2)
    tau, M = 0.05, 4
    slices = [
        to_dense_superop(spec.chi_generator_at((j - 0.5) * tau / M))
        for j in range(1, M + 1)
    ]
    ordered = np.eye(4, dtype=complex)
    for s in slices:
        ordered = expm(tau / M * s) @ ordered
    averaged = expm(tau * sum(slices) / M)
    for K in (3, 5):
        f = build_W(spec, 0.0, tau, M, K)
        err = superop_distance(f.to_dense() @ averaged, ordered)
        assert err <= f.bias + f.order2_residual


def test_w_sampler_unbiased():
    spec = scalar_driven_spec()
    f = build_W(spec, 0.0, 1.2, 3, 4)
    rng = np.random.default_rng(6)
    draws = 40_000
    acc = np.zeros((4, 4), dtype=complex)
    for _ in range(draws):
        acc += f.sample(rng).dense_superop()
    acc *= f.mu / draws
    assert np.max(np.abs(acc - f.to_dense())) <= 5 * f.mu / math.sqrt(draws)


def test_w_mu_bound():
    spec = scalar_driven_spec()
    tau = 0.05
    f = build_W(spec, 0.0, tau, 4, 6)
    norm = spec.pauli_norm(tau)
    assert f.mu <= math.exp(math.e * (2 * norm * tau) ** 3)
