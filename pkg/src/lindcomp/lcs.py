"""Sampled formulas over the Pauli-conjugate basis.

A basis term acts as ``V[rho] = (e^{i phi} P_a rho P_b + e^{-i phi} P_b rho P_a)/2``
(unit diamond norm, intrinsically Hermitian-symmetric).  A formula is a
positively weighted combination of such terms with 1-norm ``mu`` and a
truncation-bias bound ``bias``; it is realized by sampling one term per shot
and renormalizing measured expectations by ``mu``.

Terms are always applied as the deterministic two-branch sum above rather
than sampling one branch: per trajectory this keeps the state Hermitian and
strictly lowers estimator variance while leaving the expectation unchanged.
"""

from __future__ import annotations

import bisect
from typing import Callable, Iterable

import numpy as np

from .pauli import PauliString, PauliSum, phase_angle
from .superop import ChiMap

Draw = Callable[[], float]


class PauliConjugateTerm:
    """One symmetrized Pauli-conjugate map, stored as (unit phase, alpha, beta)."""

    __slots__ = ("phase", "alpha", "beta")

    def __init__(self, phase: complex, alpha: PauliString, beta: PauliString):
        self.phase = phase
        self.alpha = alpha
        self.beta = beta

    @property
    def phi(self) -> float:
        return phase_angle(self.phase)

    def is_identity(self) -> bool:
        return (
            self.alpha.is_identity()
            and self.beta.is_identity()
            and abs(self.phase - 1.0) < 1e-12
        )

    def mirror(self) -> "PauliConjugateTerm":
        """The equal-map representative with swapped labels and negated phase."""
        return PauliConjugateTerm(self.phase.conjugate(), self.beta, self.alpha)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Two-branch action on a Hermitian matrix.

        For Hermitian rho the second branch is the adjoint of the first, so
        the result is the Hermitian part of phase * P_a rho P_b.
        """
        half = self.phase * (self.alpha.dense() @ rho @ self.beta.dense())
        return 0.5 * (half + half.conj().T)

    def dense_superop(self) -> np.ndarray:
        a = self.alpha.dense()
        b = self.beta.dense()
        fwd = self.phase * np.kron(b.conj(), a)
        bwd = self.phase.conjugate() * np.kron(a.conj(), b)
        return 0.5 * (fwd + bwd)

    def __repr__(self):
        return (
            f"V(phi={self.phi:+.4f}, {self.alpha.label()}, {self.beta.label()})"
        )


def identity_term(n: int) -> PauliConjugateTerm:
    ident = PauliString.identity(n)
    return PauliConjugateTerm(1.0 + 0.0j, ident, ident)


def merge_terms(outer: PauliConjugateTerm, inner: PauliConjugateTerm) -> PauliConjugateTerm:
    """Single symmetrized term for 'outer after inner' (the merged-ancilla form)."""
    ph_a, alpha = outer.alpha * inner.alpha
    ph_b, beta = outer.beta * inner.beta
    phase = outer.phase * inner.phase * ph_a * ph_b.conjugate()
    return PauliConjugateTerm(phase, alpha, beta)


class ChiSampler:
    """Entry sampler over a chi map: (alpha, beta) with prob |chi_ab| / |chi|."""

    __slots__ = ("n", "one_norm", "cum", "alphas", "betas", "phases")

    def __init__(self, x: ChiMap):
        items = x.sorted_items()
        if not items:
            raise ValueError("cannot sample from an empty chi map")
        self.n = x.n
        w = np.array([abs(v) for _, v in items])
        self.one_norm = float(w.sum())
        cum = np.cumsum(w / self.one_norm)
        cum[-1] = 1.0
        self.cum = cum.tolist()
        self.alphas = [(a.x, a.z) for (a, _), _ in items]
        self.betas = [(b.x, b.z) for (_, b), _ in items]
        self.phases = [v / abs(v) for _, v in items]

    def draw_entry(self, u: float) -> tuple[tuple[int, int], tuple[int, int], complex]:
        i = min(bisect.bisect_right(self.cum, u), len(self.alphas) - 1)
        return self.alphas[i], self.betas[i], self.phases[i]


class LcsFormula:
    """Base class: weighted Pauli-conjugate combination with (mu, bias) labels."""

    n: int
    mu: float
    bias: float
    target_cptp: bool = False

    def is_identity(self) -> bool:
        return False

    def sample_with(self, u: float, draw: Draw) -> PauliConjugateTerm:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> PauliConjugateTerm:
        return self.sample_with(float(rng.random()), lambda: float(rng.random()))

    def to_dense(self) -> np.ndarray:
        """Dense superoperator of the represented (mu-weighted) map."""
        raise NotImplementedError

    def weighted_terms(self) -> Iterable[tuple[float, PauliConjugateTerm]]:
        raise NotImplementedError


class ExplicitLcs(LcsFormula):
    """Formula given by an explicit (weight, term) list."""

    def __init__(
        self,
        n: int,
        pairs: list[tuple[float, PauliConjugateTerm]],
        bias: float = 0.0,
        target_cptp: bool = False,
    ):
        if not pairs:
            raise ValueError("empty formula")
        if any(w <= 0 for w, _ in pairs):
            raise ValueError("weights must be strictly positive")
        self.n = n
        self.pairs = pairs
        self.mu = float(sum(w for w, _ in pairs))
        self.bias = bias
        self.target_cptp = target_cptp
        self.cum = np.cumsum([w / self.mu for w, _ in pairs])
        self.cum[-1] = 1.0

    def is_identity(self) -> bool:
        return len(self.pairs) == 1 and self.pairs[0][1].is_identity() and abs(self.mu - 1.0) < 1e-12

    def sample_with(self, u: float, draw: Draw) -> PauliConjugateTerm:
        i = min(int(np.searchsorted(self.cum, u, side="right")), len(self.pairs) - 1)
        return self.pairs[i][1]

    def to_dense(self) -> np.ndarray:
        return sum(w * t.dense_superop() for w, t in self.pairs)

    def weighted_terms(self):
        return iter(self.pairs)


def identity_formula(n: int) -> ExplicitLcs:
    return ExplicitLcs(n, [(1.0, identity_term(n))], bias=0.0, target_cptp=True)


class ProductConjugateLcs(LcsFormula):
    """Conjugation by an operator given as a Pauli sum: rho -> V rho V^dagger.

    Sampling draws the left and right Pauli independently from the |coeff|
    distribution of V, so mu = ||V||_1^2 and Pr(a,b) = Pr(b,a) automatically.
    """

    def __init__(self, v: PauliSum, bias: float = 0.0, target_cptp: bool = False):
        if not v.terms:
            raise ValueError("empty operator")
        self.n = v.n
        self.v = v
        items = v.sorted_items()
        w = np.array([abs(c) for _, c in items])
        self.op_norm1 = float(w.sum())
        self.mu = self.op_norm1**2
        self.bias = bias
        self.target_cptp = target_cptp
        self.cum = np.cumsum(w / self.op_norm1)
        self.cum[-1] = 1.0
        self.labels = [p for p, _ in items]
        self.phases = [c / abs(c) for _, c in items]
        self._identity = (
            len(items) == 1
            and items[0][0].is_identity()
            and abs(items[0][1] - 1.0) < 1e-12
        )

    def is_identity(self) -> bool:
        return self._identity

    def _draw_index(self, u: float) -> int:
        return min(int(np.searchsorted(self.cum, u, side="right")), len(self.labels) - 1)

    def sample_with(self, u: float, draw: Draw) -> PauliConjugateTerm:
        i = self._draw_index(u)
        j = self._draw_index(draw())
        phase = self.phases[i] * self.phases[j].conjugate()
        return PauliConjugateTerm(phase, self.labels[i], self.labels[j])

    def to_dense(self) -> np.ndarray:
        vd = self.v.dense()
        return np.kron(vd.conj(), vd)

    def weighted_terms(self):
        items = self.v.sorted_items()
        for pa, ca in items:
            for pb, cb in items:
                w = abs(ca) * abs(cb)
                phase = (ca / abs(ca)) * (cb / abs(cb)).conjugate()
                yield w, PauliConjugateTerm(phase, pa, pb)


class ComposedLcs(LcsFormula):
    """Bookkeeping composition f after g; terms sample independently per stage."""

    def __init__(self, outer: LcsFormula, inner: LcsFormula):
        if outer.n != inner.n:
            raise ValueError("qubit counts differ")
        self.n = outer.n
        self.outer = outer
        self.inner = inner
        self.mu = outer.mu * inner.mu
        if outer.target_cptp and inner.target_cptp:
            self.bias = outer.bias + inner.bias + outer.bias * inner.bias
        else:
            self.bias = (
                outer.mu * inner.bias + inner.mu * outer.bias + outer.bias * inner.bias
            )
        self.target_cptp = outer.target_cptp and inner.target_cptp

    def sample_pair(
        self, rng: np.random.Generator
    ) -> tuple[PauliConjugateTerm, PauliConjugateTerm]:
        """(inner term, outer term), to be applied in that order."""
        t_in = self.inner.sample(rng)
        t_out = self.outer.sample(rng)
        return t_in, t_out

    def sample_with(self, u: float, draw: Draw) -> PauliConjugateTerm:
        # merged single-ancilla realization; the coin flip between the two
        # representatives of the symmetrized inner term keeps it unbiased
        t_in = self.inner.sample_with(u, draw)
        t_out = self.outer.sample_with(draw(), draw)
        if draw() < 0.5:
            t_in = t_in.mirror()
        return merge_terms(t_out, t_in)

    def to_dense(self) -> np.ndarray:
        return self.outer.to_dense() @ self.inner.to_dense()


def from_chi(x: ChiMap) -> ExplicitLcs:
    """Exact (mu = |chi|, bias 0) Pauli-conjugate formula of an HP map.

    Conjugate entry pairs (a,b)/(b,a) are merged into one symmetrized term of
    weight 2|chi_ab|; diagonal entries give weight |chi_aa| with phase 0 or pi.
    """
    if not x.is_hermitian():
        raise ValueError("process matrix must be Hermitian")
    pairs: list[tuple[float, PauliConjugateTerm]] = []
    seen: set = set()
    for (a, b), v in x.sorted_items():
        if (a, b) in seen:
            continue
        if a == b:
            # chi_aa real for Hermitian chi
            pairs.append((abs(v), PauliConjugateTerm(v / abs(v), a, a)))
            seen.add((a, b))
        else:
            seen.add((a, b))
            seen.add((b, a))
            # canonical representative: larger label first
            if a.key() < b.key():
                a, b, v = b, a, v.conjugate()
            pairs.append((2 * abs(v), PauliConjugateTerm(v / abs(v), a, b)))
    if not pairs:
        raise ValueError("cannot build a formula from an empty chi map")
    return ExplicitLcs(x.n, pairs)


def compose(f: LcsFormula, g: LcsFormula) -> ComposedLcs:
    """Composition f after g with the 1-norm and bias rules of concatenation."""
    return ComposedLcs(f, g)


def sample(f: LcsFormula, rng: np.random.Generator) -> PauliConjugateTerm:
    if f.mu <= 0:
        raise ValueError("formula has no weight to sample")
    return f.sample(rng)


def apply_term(term: PauliConjugateTerm, rho):
    """Apply a term to a dense matrix or to a DensityState-like object."""
    mat = getattr(rho, "mat", None)
    if mat is None:
        return term.apply(rho)
    out = rho.__class__(rho.n, term.apply(mat), rho.log_renorm)
    return out


def _mirror_expanded(formula: LcsFormula):
    """Terms with the (a,b)/(b,a) ensemble made explicit at half weight each."""
    for w, t in formula.weighted_terms():
        if t.alpha == t.beta:
            yield w, t
        else:
            yield 0.5 * w, t
            yield 0.5 * w, t.mirror()


def reuse_equivalence_check(f: LcsFormula, g: LcsFormula, atol: float = 1e-10) -> float:
    """Max-entry deviation between the two concatenation realizations of g after f.

    Side one composes the symmetrized terms stage by stage; side two merges
    every sampled label pair into a single conjugate, the single-ancilla
    form.  Equality needs the mirror symmetry of the sampling ensemble,
    Pr(a,b) = Pr(b,a) with opposite phases, which the expansion makes
    explicit.
    """
    if f.n != g.n:
        raise ValueError("qubit counts differ")
    dim2 = 4**f.n
    separate = np.zeros((dim2, dim2), dtype=complex)
    merged = np.zeros((dim2, dim2), dtype=complex)
    for w_f, t_f in f.weighted_terms():
        s_f = t_f.dense_superop()
        for w_g, t_g in g.weighted_terms():
            separate += w_f * w_g * (t_g.dense_superop() @ s_f)
    for w_f, t_f in _mirror_expanded(f):
        for w_g, t_g in _mirror_expanded(g):
            merged += w_f * w_g * merge_terms(t_g, t_f).dense_superop()
    return float(np.max(np.abs(separate - merged)))
