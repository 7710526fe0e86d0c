"""Compensation series for the coarse-grained Lindblad step.

Four truncated power series, each packaged as a sampled Pauli-conjugate
formula with a certified 1-norm and truncation-bias bound:

* ``build_M``   -- cancels the Lie-Trotter splitting error of one step,
* ``build_N``   -- cancels the residual of the single-ancilla dilated
  dissipative step against the exact dissipative semigroup,
* ``build_V1``  -- cancels the first-order Trotter error of a Hamiltonian
  exponential (also used, at doubled order and time sqrt(tau), for the
  dilated coupling Hamiltonian via ``build_J_tilde``),
* ``build_W``   -- cancels the averaged-versus-time-ordered discrepancy of
  piecewise-constant driven steps.

Order-0 is always the identity; order 1 vanishes for M and N and orders 1-2
are dropped for W (the order-2 part is exactly zero whenever the slice
generators commute, e.g. scalar-modulated driving; ``WSampler.order2_residual``
bounds the omitted piece otherwise and is charged to the simulation budget).

Dissipative-series coefficients follow the canonical string assignment: the
ancilla-trace expansion is supported on strings ``2^a 3^b`` and ``1 2^a 3^b``
only (all 2s before all 3s).  The recursion coefficients are then unique and
their per-order 1-norms (1, 0, 1.5833, 2.0472, ...) are golden values; the
index swap 2<->3 is a symmetry of the assembled superoperators, not of the
individual string coefficients.
"""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass
from itertools import product as iproduct

import numpy as np
from scipy.special import gammainc

from .lcs import (
    ChiSampler,
    Draw,
    LcsFormula,
    PauliConjugateTerm,
    ProductConjugateLcs,
    identity_formula,
    identity_term,
)
from .pauli import PauliString, PauliSum, mul_phase_exp
from .superop import (
    ChiMap,
    LindbladSpec,
    chi_of_dissipator,
    chi_of_dissipator_parts,
    chi_of_hamiltonian,
    to_dense_superop,
)

LAMBDA_GEOM = 2.6  # geometric ratio for the dissipative-series bound (> 2.5)

_STRING_WEIGHT = {1: 1.0, 2: -0.5, 3: -0.5}


def exp_tail(x: float, k_max: int) -> float:
    """sum_{k > k_max} x^k / k!, exact up to float rounding."""
    if x <= 0:
        return 0.0
    return float(math.exp(x) * gammainc(k_max + 1, x))


def series_tail_bound(x: float, k_max: int) -> float:
    """Certified bound on the exponential tail: closed form when valid."""
    closed = (math.e * x / (k_max + 1)) ** (k_max + 1)
    if x <= k_max + 1:
        return closed
    return exp_tail(x, k_max)


# ---------------------------------------------------------------------------
# dissipative coefficient tables
# ---------------------------------------------------------------------------

Coeffs = dict[tuple[int, ...], float]


def pi_swap(string: tuple[int, ...]) -> tuple[int, ...]:
    """Elementwise index permutation (1)(23)."""
    return tuple({1: 1, 2: 3, 3: 2}[j] for j in string)


@dataclass
class DissipativeCoefficients:
    """Series coefficients a (compensation), b (dilated step), c (exponential).

    Stored per order as maps from index strings in {1,2,3}^k to real values;
    string position 1 is the outermost (last applied) factor.
    """

    K: int
    a: list[Coeffs]
    b: list[Coeffs]
    c: list[Coeffs]

    def a_norm(self, k: int) -> float:
        return float(sum(abs(v) for v in self.a[k].values()))

    def b_norm(self, k: int) -> float:
        return float(sum(abs(v) for v in self.b[k].values()))

    def convolution_residual(self, k: int) -> float:
        """Relative error of sum_i a^(k-i) (x) b^(i) = c^(k); exact recursion check."""
        acc: Coeffs = {}
        for i in range(k + 1):
            for sb, vb in self.b[i].items():
                for sa, va in self.a[k - i].items():
                    s = sa + sb
                    acc[s] = acc.get(s, 0.0) + va * vb
        num = 0.0
        den = 0.0
        for s in set(acc) | set(self.c[k]):
            num += abs(acc.get(s, 0.0) - self.c[k].get(s, 0.0))
            den += abs(self.c[k].get(s, 0.0))
        return num / max(den, 1.0)


def _b_order(k: int) -> Coeffs:
    if k == 0:
        return {(): 1.0}
    out: Coeffs = {}
    sign = (-1.0) ** k
    for j in range(k + 1):
        s = (2,) * j + (3,) * (k - j)
        out[s] = sign / (math.factorial(2 * j) * math.factorial(2 * (k - j)))
    for j in range(k):
        s = (1,) + (2,) * j + (3,) * (k - 1 - j)
        out[s] = -sign / (
            math.factorial(2 * j + 1) * math.factorial(2 * (k - j) - 1)
        )
    return out


def _c_order(k: int) -> Coeffs:
    if k == 0:
        return {(): 1.0}
    inv_fact = 1.0 / math.factorial(k)
    out: Coeffs = {}
    for s in iproduct((1, 2, 3), repeat=k):
        w = inv_fact
        for j in s:
            w *= _STRING_WEIGHT[j]
        out[s] = w
    return out


def build_dissipative_coefficients(K: int) -> DissipativeCoefficients:
    """Solve a^(k) = c^(k) - sum_{i=1}^{k-1} a^(k-i) (x) b^(i) - b^(k)."""
    if K < 0:
        raise ValueError("order must be non-negative")
    b = [_b_order(k) for k in range(K + 1)]
    c = [_c_order(k) for k in range(K + 1)]
    a: list[Coeffs] = [{(): 1.0}]
    for k in range(1, K + 1):
        acc = dict(c[k])
        for i in range(1, k):
            for sb, vb in b[i].items():
                for sa, va in a[k - i].items():
                    if va == 0.0:
                        continue
                    s = sa + sb
                    acc[s] = acc.get(s, 0.0) - va * vb
        for s, vb in b[k].items():
            acc[s] = acc.get(s, 0.0) - vb
        a.append({s: v for s, v in acc.items() if abs(v) > 1e-16})
    return DissipativeCoefficients(K, a, b, c)


# ---------------------------------------------------------------------------
# shared machinery for hierarchical order samplers
# ---------------------------------------------------------------------------


_I_POW = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)


class _HierarchicalLcs(LcsFormula):
    """Common order-selection layer: identity with weight 1, orders with
    weight mu_k tau^k, composite terms assembled from per-factor chi draws."""

    def __init__(self, n: int, orders: list[int], order_weights: list[float], bias: float):
        self.n = n
        self.orders = orders  # sampled orders (identity excluded)
        self.mu = 1.0 + float(sum(order_weights))
        self.bias = bias
        self.target_cptp = False
        self.p_identity = 1.0 / self.mu
        if order_weights:
            cum = np.cumsum(order_weights)
            cum /= cum[-1]
            cum[-1] = 1.0
            self.order_cum = cum.tolist()
        else:
            self.order_cum = []

    def is_identity(self) -> bool:
        return not self.orders

    def sample_with(self, u: float, draw: Draw) -> PauliConjugateTerm:
        if not self.orders or u < self.p_identity:
            return identity_term(self.n)
        u_tail = (u - self.p_identity) / (1.0 - self.p_identity)
        return self.sample_tail(u_tail, draw)

    def sample_tail(self, u_order: float, draw: Draw) -> PauliConjugateTerm:
        i = min(bisect.bisect_right(self.order_cum, u_order), len(self.orders) - 1)
        return self._sample_order(self.orders[i], draw)

    def _sample_order(self, k: int, draw: Draw) -> PauliConjugateTerm:
        raise NotImplementedError

    def _assemble(
        self,
        factor_samplers: list[ChiSampler],
        sign: float,
        draw: Draw,
    ) -> PauliConjugateTerm:
        """Draw one chi entry per factor (leftmost first) and fold the products.

        Pauli products are tracked on raw (x, z) masks; the accumulated power
        of i covers both the left product and the conjugated right product.
        """
        phase = complex(sign)
        ax = az = bx = bz = 0
        exp_i = 0
        for sampler in factor_samplers:
            (a_x, a_z), (b_x, b_z), ph = sampler.draw_entry(draw())
            phase *= ph
            exp_i += mul_phase_exp(ax, az, a_x, a_z) - mul_phase_exp(bx, bz, b_x, b_z)
            ax ^= a_x
            az ^= a_z
            bx ^= b_x
            bz ^= b_z
        phase *= _I_POW[exp_i % 4]
        return PauliConjugateTerm(
            phase, PauliString(self.n, ax, az), PauliString(self.n, bx, bz)
        )


# ---------------------------------------------------------------------------
# Lie-Trotter compensation M
# ---------------------------------------------------------------------------


class MSampler(_HierarchicalLcs):
    """Truncated splitting-compensation series.

    Components are the generator pieces (commutator part first, then one per
    jump operator).  A sampled order-k term draws k factor slots: with
    probability 1/2 a slot is a full-generator factor (component then chosen
    by chi weight, sign +), otherwise a direct inverse factor (sign -); direct
    factors are regrouped after the full-generator ones, ordered by component.
    """

    def __init__(self, chis: list[ChiMap], tau: float, K: int, strength: float):
        n = chis[0].n
        self.tau = tau
        self.K = K
        self.chis = chis
        self.norms = np.array([c.one_norm() for c in chis])
        self.samplers = [ChiSampler(c) if len(c) else None for c in chis]
        self.x_total = float(self.norms.sum())
        x = 2.0 * self.x_total * tau
        orders = [k for k in range(2, K + 1)] if self.x_total > 0 else []
        weights = [x**k / math.factorial(k) for k in orders]
        bias = series_tail_bound(4.0 * strength * tau, K)
        super().__init__(n, orders, weights, bias)
        if self.x_total > 0:
            cum = np.cumsum(self.norms / self.x_total)
            cum[-1] = 1.0
            self.comp_cum = cum.tolist()

    def _pick_component(self, u: float) -> int:
        return min(bisect.bisect_right(self.comp_cum, u), len(self.chis) - 1)

    def _sample_order(self, k: int, draw: Draw) -> PauliConjugateTerm:
        full: list[int] = []
        direct: list[int] = []
        for _ in range(k):
            u = draw()
            if u < 0.5:
                full.append(self._pick_component(draw()))
            else:
                direct.append(self._pick_component(2.0 * (u - 0.5)))
        direct.sort()
        sign = -1.0 if len(direct) % 2 else 1.0
        samplers = [self.samplers[c] for c in full + direct]
        return self._assemble(samplers, sign, draw)

    def to_dense(self, dense_limit: int = 3) -> np.ndarray:
        """Exact truncated series as a dense superoperator (enumeration)."""
        dim2 = 4**self.n
        comp = [
            to_dense_superop(c, dense_limit)
            if len(c)
            else np.zeros((dim2, dim2), dtype=complex)
            for c in self.chis
        ]
        total = sum(comp)
        out = np.eye(dim2, dtype=complex)
        n_comp = len(comp)
        pow_cache: dict[tuple[int, int], np.ndarray] = {}

        def power(mat_idx: int, p: int) -> np.ndarray:
            if p == 0:
                return np.eye(dim2, dtype=complex)
            key = (mat_idx, p)
            if key not in pow_cache:
                base = total if mat_idx < 0 else comp[mat_idx]
                pow_cache[key] = base @ power(mat_idx, p - 1)
            return pow_cache[key]

        for k in self.orders:
            acc = np.zeros((dim2, dim2), dtype=complex)
            for svec in _compositions(k, n_comp + 1):
                s = svec[0]
                coeff = (-1.0) ** (k - s)
                for c in svec:
                    coeff /= math.factorial(c)
                mat = power(-1, s)
                for idx, p in enumerate(svec[1:]):
                    if p:
                        mat = mat @ power(idx, p)
                acc += coeff * mat
            out = out + (self.tau**k) * acc
        return out


def _compositions(k: int, parts: int):
    """All tuples of `parts` non-negative ints summing to k."""
    if parts == 1:
        yield (k,)
        return
    for first in range(k + 1):
        for rest in _compositions(k - first, parts - 1):
            yield (first,) + rest


def build_M(spec: LindbladSpec, tau: float, K: int) -> LcsFormula:
    """Splitting compensation for one step of length tau, truncated at K."""
    if tau <= 0:
        raise ValueError("step length must be positive")
    if K < 0:
        raise ValueError("order must be non-negative")
    chis = [chi_of_hamiltonian(spec.hamiltonian)]
    chis += [chi_of_dissipator(d) for d in spec.jumps]
    strength = spec.hamiltonian.norm(1) + sum(d.norm(1) ** 2 for d in spec.jumps)
    if strength == 0:
        return identity_formula(spec.n)
    # K < 2 yields the identity with the matching truncation bias
    return MSampler(chis, tau, K, strength)


# ---------------------------------------------------------------------------
# dissipative compensation N
# ---------------------------------------------------------------------------


class NSampler(_HierarchicalLcs):
    """Truncated dilation-compensation series for a single jump operator."""

    def __init__(
        self,
        d: PauliSum,
        tau: float,
        K: int,
        coeffs: DissipativeCoefficients,
    ):
        self.tau = tau
        self.K = K
        parts = chi_of_dissipator_parts(d)
        self.part_chis = parts
        self.part_samplers = [ChiSampler(c) if len(c) else None for c in parts]
        part_norms = [c.one_norm() for c in parts]

        orders = []
        weights = []
        self.order_tables: dict[int, tuple[list[tuple[int, ...]], list[float], np.ndarray]] = {}
        for k in range(2, K + 1):
            strings = sorted(coeffs.a[k])
            w = []
            for s in strings:
                v = abs(coeffs.a[k][s])
                for j in s:
                    v *= part_norms[j - 1]
                w.append(v)
            mu_k = float(sum(w))
            if mu_k <= 0:
                continue
            orders.append(k)
            weights.append(mu_k * tau**k)
            signs = [1.0 if coeffs.a[k][s] >= 0 else -1.0 for s in strings]
            cum = np.cumsum(np.asarray(w) / mu_k)
            cum[-1] = 1.0
            self.order_tables[k] = (strings, signs, cum.tolist())

        d1 = d.norm(1)
        a2 = coeffs.a_norm(2) if coeffs.K >= 2 else 0.0
        bias = 2.0 * a2 * LAMBDA_GEOM ** (K - 1) * d1 ** (2 * K + 2) * tau ** (K + 1)
        super().__init__(d.n, orders, weights, bias)
        self.coeffs = coeffs

    def _sample_order(self, k: int, draw: Draw) -> PauliConjugateTerm:
        strings, signs, cum = self.order_tables[k]
        i = min(bisect.bisect_right(cum, draw()), len(strings) - 1)
        samplers = [self.part_samplers[j - 1] for j in strings[i]]
        return self._assemble(samplers, signs[i], draw)

    def to_dense(self, dense_limit: int = 3) -> np.ndarray:
        dim2 = 4**self.n
        parts = [to_dense_superop(c, dense_limit) for c in self.part_chis]
        out = np.eye(dim2, dtype=complex)
        cache: dict[tuple[int, ...], np.ndarray] = {(): np.eye(dim2, dtype=complex)}

        def prod(s: tuple[int, ...]) -> np.ndarray:
            if s not in cache:
                cache[s] = prod(s[:-1]) @ parts[s[-1] - 1]
            return cache[s]

        for k in self.orders:
            acc = np.zeros((dim2, dim2), dtype=complex)
            for s, v in self.coeffs.a[k].items():
                acc += v * prod(s)
            out = out + (self.tau**k) * acc
        return out

    def to_dense_swapped(self, dense_limit: int = 3) -> np.ndarray:
        """Same series with every index string replaced by its 2<->3 image.

        Equality with ``to_dense`` is the superoperator-level symmetry of the
        compensation under the adjoint permutation.
        """
        dim2 = 4**self.n
        parts = [to_dense_superop(c, dense_limit) for c in self.part_chis]
        out = np.eye(dim2, dtype=complex)
        for k in self.orders:
            acc = np.zeros((dim2, dim2), dtype=complex)
            for s, v in self.coeffs.a[k].items():
                mat = np.eye(dim2, dtype=complex)
                for j in pi_swap(s):
                    mat = mat @ parts[j - 1]
                acc += v * mat
            out = out + (self.tau**k) * acc
        return out


def build_N(
    d: PauliSum, tau: float, K: int, coeffs: DissipativeCoefficients
) -> LcsFormula:
    """Dilation compensation for one jump operator over a step of length tau."""
    if tau <= 0:
        raise ValueError("step length must be positive")
    d1sq = d.norm(1) ** 2
    if tau > 1.0 / (2.0 * LAMBDA_GEOM * d1sq):
        raise ValueError(
            f"tau={tau} violates the dissipative precondition "
            f"tau <= 1/(2*{LAMBDA_GEOM}*||D||_1^2) = {1.0 / (2 * LAMBDA_GEOM * d1sq):.6g}"
        )
    if coeffs.K < max(K, 2):
        raise ValueError("coefficient table order too small")
    if d1sq == 0:
        return identity_formula(d.n)
    # K < 2 yields the identity with the matching truncation bias
    return NSampler(d, tau, K, coeffs)


# ---------------------------------------------------------------------------
# Hamiltonian Trotter compensation V (and the dilated variant)
# ---------------------------------------------------------------------------


def _convolve_series(
    a: list[PauliSum], b: list[PauliSum], K: int, n: int
) -> list[PauliSum]:
    out = [PauliSum.zero(n) for _ in range(K + 1)]
    for i, ai in enumerate(a):
        if i > K or not ai.terms:
            continue
        for j, bj in enumerate(b):
            if i + j > K:
                break
            if not bj.terms:
                continue
            out[i + j] = out[i + j] + (ai @ bj)
    return out


def _factor_series(p: PauliString, c: complex, K: int, n: int) -> list[PauliSum]:
    """Order-by-order expansion of exp(+i c P t); even orders carry I."""
    ident = PauliString.identity(n)
    out = []
    coef = 1.0 + 0.0j
    for j in range(K + 1):
        label = ident if j % 2 == 0 else p
        out.append(PauliSum(n, {label: coef}))
        coef = coef * (1j * c) / (j + 1)
    return out


def trotter_compensation_series(h: PauliSum, K: int) -> list[PauliSum]:
    """tau-coefficients of exp(-iHt) S1(t)^dagger collected in the Pauli algebra.

    S1 multiplies the factors of H in insertion order, so its adjoint runs
    them reversed with conjugated angles.
    """
    n = h.n
    exp_series = [PauliSum.identity(n)]
    acc = PauliSum.identity(n)
    for s in range(1, K + 1):
        acc = (acc @ h) * (-1j / s)
        exp_series.append(acc.copy())
    s1_dag = [PauliSum.identity(n)]
    for p, c in reversed(list(h.terms.items())):
        s1_dag = _convolve_series(s1_dag, _factor_series(p, c, K, n), K, n)
    return _convolve_series(exp_series, s1_dag, K, n)


def _all_terms_commute(h: PauliSum) -> bool:
    labels = list(h.terms)
    return all(
        labels[i].commutes(labels[j])
        for i in range(len(labels))
        for j in range(i + 1, len(labels))
    )


def build_V1(h: PauliSum, tau: float, K: int) -> LcsFormula:
    """First-order Trotter compensation as a conjugation formula.

    The truncated operator series is evaluated at tau and squared into
    rho -> V rho V^dagger; mu is certified numerically as ||V||_1^2.
    """
    if tau <= 0:
        raise ValueError("step length must be positive")
    h1 = h.norm(1)
    if h1 == 0 or len(h.terms) == 1 or _all_terms_commute(h):
        # S1 is exact, the compensation is the identity at every order
        return identity_formula(h.n)
    if tau >= 1.0 / (2.0 * h1):
        raise ValueError(
            f"tau={tau} violates the Trotter precondition tau < 1/(2||H||_1) = {1/(2*h1):.6g}"
        )
    series = trotter_compensation_series(h, K)
    v = PauliSum.zero(h.n)
    scale = 1.0
    for k, term in enumerate(series):
        v = v + term * scale
        scale *= tau
    v.prune()
    eps_v = series_tail_bound(2.0 * h1 * tau, K)
    bias = 2.0 * eps_v + eps_v**2
    return ProductConjugateLcs(v, bias=bias, target_cptp=True)


def dilation_operator(d: PauliSum) -> PauliSum:
    """Hermitian coupling on one extra qubit whose short-time evolution,
    traced over that qubit, reproduces the dissipative semigroup to first
    order.  The ancilla is prepended as qubit 0."""
    n = d.n
    terms: dict[PauliString, complex] = {}
    for p, c in d.terms.items():
        xs = p.x << 1
        zs = p.z << 1
        if abs(c.real) > 0:
            terms[PauliString(n + 1, xs | 1, zs)] = c.real  # X on the ancilla
        if abs(c.imag) > 0:
            terms[PauliString(n + 1, xs | 1, zs | 1)] = c.imag  # Y on the ancilla
    return PauliSum(n + 1, terms).prune()


def build_J_tilde(d: PauliSum, tau: float, K: int) -> LcsFormula:
    """Trotter compensation for the dilated coupling step, at order 2K.

    The returned formula lives on n+1 qubits and is applied before the
    ancilla is traced out.
    """
    if tau <= 0:
        raise ValueError("step length must be positive")
    d1sq = d.norm(1) ** 2
    if d1sq > 0 and tau >= 1.0 / (16.0 * d1sq):
        raise ValueError(
            f"tau={tau} violates the dilated-step precondition tau < 1/(16||D||_1^2)"
            f" = {1.0 / (16 * d1sq):.6g}"
        )
    j = dilation_operator(d)
    if not j.terms:
        return identity_formula(d.n + 1)
    return build_V1(j, math.sqrt(tau), 2 * K)


# ---------------------------------------------------------------------------
# time-discretization compensation W
# ---------------------------------------------------------------------------


class WSampler(_HierarchicalLcs):
    """Compensation of the averaged step against the time-ordered slice product."""

    def __init__(self, slice_chis: list[ChiMap], tau: float, K: int):
        n = slice_chis[0].n
        self.tau = tau
        self.K = K
        self.M = len(slice_chis)
        self.slice_chis = slice_chis
        self.samplers = [ChiSampler(c) if len(c) else None for c in slice_chis]
        self.norms = np.array([c.one_norm() for c in slice_chis])
        total = float(self.norms.sum())
        x = 2.0 * total * tau / self.M
        orders = [k for k in range(3, K + 1)] if total > 0 else []
        weights = [x**k / math.factorial(k) for k in orders]
        super().__init__(n, orders, weights, series_tail_bound(x, K))
        if total > 0:
            cum = np.cumsum(self.norms / total)
            cum[-1] = 1.0
            self.slice_cum = cum.tolist()
        # binomial split tables Pr(s1 | k) = C(k, s1) / 2^k
        self.split_cum = {
            k: np.cumsum([math.comb(k, s) / 2.0**k for s in range(k + 1)]).tolist()
            for k in orders
        }
        self.order2_residual = self._order2_residual()

    def _order2_residual(self) -> float:
        """Diamond-norm bound on the omitted order-2 commutator part."""
        m = self.M
        if m < 2:
            return 0.0
        acc = 0.0
        for j2 in range(m - 1):
            for j1 in range(j2 + 1, m):
                delta = (self.slice_chis[j1] - self.slice_chis[j2]).one_norm()
                acc += 2.0 * delta * self.norms[j2]
        return 0.5 * (self.tau**2) * acc / (m * m)

    def _pick_slice(self, u: float) -> int:
        return min(bisect.bisect_right(self.slice_cum, u), self.M - 1)

    def _sample_order(self, k: int, draw: Draw) -> PauliConjugateTerm:
        cum = self.split_cum[k]
        s1 = min(bisect.bisect_right(cum, draw()), k)
        labels = [self._pick_slice(draw()) for _ in range(k)]
        # time ordering: later slices act later (leftmost);
        # the inverse-exponential part keeps its sampled order
        ordered = sorted(labels[:s1], reverse=True) + labels[s1:]
        sign = -1.0 if (k - s1) % 2 else 1.0
        samplers = [self.samplers[j] for j in ordered]
        return self._assemble(samplers, sign, draw)

    def to_dense(self, dense_limit: int = 2) -> np.ndarray:
        dim2 = 4**self.n
        mats = [to_dense_superop(c, dense_limit) for c in self.slice_chis]
        out = np.eye(dim2, dtype=complex)
        m = self.M
        for k in self.orders:
            acc = np.zeros((dim2, dim2), dtype=complex)
            for s1 in range(k + 1):
                s2 = k - s1
                coeff = (-1.0) ** s2 / (
                    m**k * math.factorial(s1) * math.factorial(s2)
                )
                for labels in iproduct(range(m), repeat=k):
                    ordered = tuple(sorted(labels[:s1], reverse=True)) + labels[s1:]
                    mat = np.eye(dim2, dtype=complex)
                    for j in ordered:
                        mat = mat @ mats[j]
                    acc += coeff * mat
            out = out + (self.tau**k) * acc
        return out


def build_W(
    spec: LindbladSpec, t0: float, tau: float, M: int, K: int
) -> LcsFormula:
    """Discretization compensation for the step [t0, t0 + tau) with M slices."""
    if tau <= 0:
        raise ValueError("step length must be positive")
    if M < 1:
        raise ValueError("need at least one slice")
    if not spec.is_time_dependent():
        warnings.warn("time-independent generator: discretization compensation is the identity")
        return identity_formula(spec.n)
    slice_chis = [
        spec.chi_generator_at(t0 + (j - 0.5) * tau / M) for j in range(1, M + 1)
    ]
    if all(len(c) == 0 for c in slice_chis):
        return identity_formula(spec.n)
    # K < 3 yields the identity with the matching truncation bias
    return WSampler(slice_chis, tau, K)
