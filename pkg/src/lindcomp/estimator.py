"""Monte-Carlo simulation drivers and the step/order/round planner.

Execution model
---------------
Rounds are independent trajectories.  Round ``r`` owns the uniform stream of
``default_rng(seed ^ r)`` and consumes it in pipeline order, so results are
reproducible bit-for-bit for a fixed (seed, plan) regardless of how rounds
are chunked or scheduled.  Internally rounds are processed in fixed-size
chunks; per step the coarse stage is applied to the whole chunk with dense
linear algebra, while sampled compensation terms, identity for most rounds,
are grouped by sampled term and applied only where needed.

Per-step renormalization multiplies the 1-norms of every sampled formula in
the step (splitting, dissipative, and both Trotter compensations); the
product over steps scales each round's measured expectation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import compensation as comp
from .compensation import (
    LAMBDA_GEOM,
    DissipativeCoefficients,
    build_dissipative_coefficients,
    build_J_tilde,
    build_M,
    build_N,
    build_V1,
    build_W,
    dilation_operator,
    series_tail_bound,
)
from .engine import DensityState, dilated_unitary, trotter_unitary
from .lcs import LcsFormula, PauliConjugateTerm, ProductConjugateLcs
from .pauli import PauliSum
from .superop import LindbladSpec, conjugation_superop, kraus_superop, vec

VEC_PATH_MAX_DIM2 = 64  # superoperator-vector batching up to 3 qubits
CHUNK_BYTES = 64 * 2**20


class PlanInfeasible(Exception):
    pass


@dataclass
class SimPlan:
    """Resolved simulation parameters for one run."""

    T: float
    tau: float
    K: int
    rounds: int
    seed: int = 0
    mode: str = "trotter"
    M: int = 1
    mu_bound: float = 1.0
    bias_budget: float = 0.0

    def step_lengths(self) -> list[float]:
        full = int(math.floor(self.T / self.tau + 1e-9))
        rem = self.T - full * self.tau
        out = [self.tau] * full
        if rem > 1e-12 * max(1.0, self.T):
            out.append(rem)
        return out


@dataclass
class EstimateReport:
    mean: float
    stderr: float
    mu_total: float
    bias_budget: float
    rounds: int
    wall_time: float
    trajectory: list[tuple[float, float, float]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------


def _max_jump_norms(spec: LindbladSpec, T: float, grid: int = 65) -> list[float]:
    if not spec.is_time_dependent():
        return [d.norm(1) for d in spec.jumps]
    out = [0.0] * spec.m
    for t in np.linspace(0.0, T, grid):
        _, ds = spec.at(float(t))
        for l, d in enumerate(ds):
            out[l] = max(out[l], d.norm(1))
    return out


def _max_h_norm(spec: LindbladSpec, T: float, grid: int = 65) -> float:
    if not spec.is_time_dependent():
        return spec.hamiltonian.norm(1)
    return max(spec.at(float(t))[0].norm(1) for t in np.linspace(0.0, T, grid))


def _plan_step_bias(
    spec: LindbladSpec,
    tau: float,
    K: int,
    mode: str,
    a2: float,
    h1: float,
    d1s: list[float],
) -> tuple[float, float]:
    """(bias, mu) closed-form bounds for one step.

    Commutation checks use the t=0 operator structure; driven problems are
    assumed to modulate coefficients without changing which Pauli terms occur.
    """
    k_eff = max(K, 1)
    strength = h1 + sum(d * d for d in d1s)
    mu_m = 1.0 + comp.exp_tail(4.0 * strength * tau, 1) if K >= 2 else 1.0
    eps_m = series_tail_bound(4.0 * strength * tau, k_eff)

    h0, jumps0 = spec.at(0.0)
    mu_step = mu_m
    eps_hd = 0.0
    if mode == "trotter" and h1 > 0 and not comp._all_terms_commute(h0):
        eps_v = series_tail_bound(2.0 * h1 * tau, K)
        eps_hd = 2.0 * eps_v + eps_v * eps_v
        mu_step *= math.exp(2.0 * 3.5 * (2.0 * h1 * tau) ** 4)
    for l, d1 in enumerate(d1s):
        if d1 == 0:
            continue
        mu_n = math.exp(2.0 * a2 * d1**4 * tau**2)
        eps_n = (
            2.0 * a2 * LAMBDA_GEOM ** (k_eff - 1) * d1 ** (2 * k_eff + 2) * tau ** (k_eff + 1)
        )
        eps_j = 0.0
        if mode == "trotter" and not comp._all_terms_commute(dilation_operator(jumps0[l])):
            ev = series_tail_bound(4.0 * d1 * math.sqrt(tau), 2 * K)
            eps_j = 2.0 * ev + ev * ev
            mu_step *= math.exp(2.0 * 3.5 * (16.0 * d1**2 * tau) ** 2)
        eps_d = eps_j * mu_n + eps_n
        eps_hd = (1.0 + eps_hd) * (1.0 + eps_d) - 1.0
        mu_step *= mu_n
    eps_step = eps_hd * mu_m + eps_m
    return eps_step, mu_step


def plan(
    spec: LindbladSpec,
    T: float,
    epsilon: float,
    delta: float,
    mode: str = "trotter",
    c_tau: float = 0.5,
    seed: int = 0,
    tau: float | None = None,
    K: int | None = None,
    rounds: int | None = None,
) -> SimPlan:
    """Choose (tau, K, M, N) meeting the target error with probability 1 - delta.

    The step length targets c_tau / (norm^2 T) and is clamped to every
    builder precondition; K is the smallest order whose accumulated
    closed-form bias bound fits in epsilon/2; N follows the Hoeffding bound
    N = ceil(8 mu^2 ln(2/delta) / epsilon^2) with the planned 1-norm bound.
    Explicit tau/K/rounds arguments override the corresponding choice.
    """
    if not (0 < epsilon < 1 and 0 < delta < 1):
        raise ValueError("epsilon and delta must be in (0, 1)")
    if T <= 0:
        raise ValueError("T must be positive")
    norm = spec.pauli_norm(T if spec.is_time_dependent() else None)
    if norm == 0:
        return SimPlan(T=T, tau=T, K=0, rounds=rounds or 1, seed=seed, mode=mode)

    h1 = _max_h_norm(spec, T)
    d1s = _max_jump_norms(spec, T)
    if tau is None:
        tau = c_tau / (norm**2 * T)
        for d1 in d1s:
            if d1 > 0:
                tau = min(tau, 0.99 / (2.0 * LAMBDA_GEOM * d1 * d1))
                if mode == "trotter":
                    tau = min(tau, 0.99 / (16.0 * d1 * d1))
        if mode == "trotter" and h1 > 0:
            tau = min(tau, 0.99 / (2.0 * h1))
        tau = min(tau, T)
    n_steps = max(1, math.ceil(T / tau - 1e-9))

    m_slices = 1
    disc_total = 0.0
    if spec.is_time_dependent():
        if spec.ldot_bound is None:
            raise PlanInfeasible("time-dependent spec needs an ldot_bound for planning")
        m_slices = max(1, math.ceil(2.0 * c_tau * spec.ldot_bound / (epsilon * norm**2)))
        while True:
            disc_total = (
                n_steps * tau**2 * spec.ldot_bound * math.exp(norm * tau) / (2.0 * m_slices)
            )
            if disc_total <= epsilon / 4.0 or m_slices > 10**7:
                break
            m_slices *= 2

    a2 = build_dissipative_coefficients(2).a_norm(2)
    bias_cap = epsilon / 2.0 - disc_total
    if bias_cap <= 0:
        raise PlanInfeasible("discretization error alone exceeds the bias budget")

    def totals(k: int) -> tuple[float, float]:
        eps_step, mu_step = _plan_step_bias(spec, tau, k, mode, a2, h1, d1s)
        if spec.is_time_dependent():
            mu_w = 1.0 + comp.exp_tail(2.0 * norm * tau, 2)
            w2 = tau**3 * spec.ldot_bound * norm / 6.0
            eps_step = eps_step * mu_w + series_tail_bound(2.0 * norm * tau, k) + w2
            mu_step *= mu_w
        return (1.0 + eps_step) ** n_steps - 1.0, mu_step**n_steps

    if K is None:
        K = next((k for k in range(1, 31) if totals(k)[0] <= bias_cap), None)
        if K is None:
            raise PlanInfeasible(
                f"no truncation order up to 30 meets the bias budget at tau={tau:.4g}"
            )
    series_bias, mu_bound = totals(K)
    if rounds is None:
        rounds = math.ceil(8.0 * mu_bound**2 * math.log(2.0 / delta) / epsilon**2)
    return SimPlan(
        T=T,
        tau=tau,
        K=K,
        rounds=rounds,
        seed=seed,
        mode=mode,
        M=m_slices,
        mu_bound=mu_bound,
        bias_budget=series_bias + disc_total,
    )


# ---------------------------------------------------------------------------
# step kernels
# ---------------------------------------------------------------------------


class _Stage:
    """One pipeline element: a fixed linear map or a sampled formula."""

    __slots__ = ("kind", "payload", "formula", "cache")

    def __init__(self, kind: str, payload=None, formula: LcsFormula | None = None):
        self.kind = kind
        self.payload = payload
        self.formula = formula
        self.cache: dict = {}


class StepKernel:
    """Precomputed pipeline for one step of one length."""

    def __init__(
        self,
        h: PauliSum,
        jumps: list[PauliSum],
        tau: float,
        K: int,
        mode: str,
        coeffs: DissipativeCoefficients,
        w_formula: LcsFormula | None = None,
    ):
        self.n = h.n
        self.tau = tau
        self.mode = mode
        self.stages: list[_Stage] = []
        self.mu = 1.0
        self.eps_f = 0.0
        dim = 1 << self.n

        if h.terms:
            if mode == "trotter":
                self.stages.append(_Stage("unitary", trotter_unitary(h, tau)))
                v_f = build_V1(h, tau, K)
                self.eps_f = v_f.bias
                if not v_f.is_identity():
                    self.stages.append(_Stage("vsample", formula=v_f))
                    self.mu *= v_f.mu
            else:
                self.stages.append(_Stage("unitary", expm(-1j * tau * h.dense())))

        self.eps_d: list[float] = []
        used_jumps: list[PauliSum] = []
        for d in jumps:
            if not d.terms:
                continue
            used_jumps.append(d)
            u_j = dilated_unitary(d, tau, "trotter" if mode == "trotter" else "exact")
            eps_j = 0.0
            if mode == "trotter":
                j_form = build_J_tilde(d, tau, K)
                eps_j = j_form.bias
            else:
                j_form = None
            if j_form is None or j_form.is_identity():
                self.stages.append(_Stage("kraus", (u_j[:dim, :dim], u_j[dim:, :dim])))
            else:
                self.stages.append(_Stage("dilated", u_j, formula=j_form))
                self.mu *= j_form.mu
            n_f = build_N(d, tau, K, coeffs)
            if not n_f.is_identity():
                self.stages.append(_Stage("hsample", formula=n_f))
            self.mu *= n_f.mu
            self.eps_d.append(eps_j * n_f.mu + n_f.bias)

        m_f = build_M(LindbladSpec(self.n, h, used_jumps), tau, K)
        if not m_f.is_identity():
            self.stages.append(_Stage("hsample", formula=m_f))
        self.mu *= m_f.mu
        self.mu_m = m_f.mu
        self.eps_m = m_f.bias if (h.terms or used_jumps) else 0.0

        self.w_formula = w_formula
        if w_formula is not None and not w_formula.is_identity():
            self.stages.append(_Stage("hsample", formula=w_formula))
            self.mu *= w_formula.mu

    def step_bias(self) -> float:
        """Composed bias bound for this step from the built formulas."""
        eps_hd = self.eps_f
        for e in self.eps_d:
            eps_hd = (1.0 + eps_hd) * (1.0 + e) - 1.0
        eps = eps_hd * self.mu_m + self.eps_m
        if self.w_formula is not None:
            eps = eps * self.w_formula.mu + self.w_formula.bias
            eps += getattr(self.w_formula, "order2_residual", 0.0)
        return eps

    def to_dense_superop(self) -> np.ndarray:
        """Exact expected superoperator of the step (mu-weighted), for tests."""
        dim = 1 << self.n
        out = np.eye(dim * dim, dtype=complex)
        for st in self.stages:
            if st.kind == "unitary":
                s = conjugation_superop(st.payload)
            elif st.kind == "kraus":
                s = kraus_superop(list(st.payload))
            elif st.kind == "dilated":
                s = (
                    _trace_superop(self.n)
                    @ st.formula.to_dense()
                    @ conjugation_superop(st.payload)
                    @ _embed_superop(self.n)
                )
            else:
                s = st.formula.to_dense()
            out = s @ out
        return out


def _embed_superop(n: int) -> np.ndarray:
    """vec(rho) -> vec(|0><0| (x) rho), ancilla as the new top qubit."""
    dim = 1 << n
    big = 2 * dim
    e = np.zeros((big * big, dim * dim))
    for col in range(dim):
        for row in range(dim):
            e[col * big + row, col * dim + row] = 1.0
    return e


def _trace_superop(n: int) -> np.ndarray:
    dim = 1 << n
    big = 2 * dim
    t = np.zeros((dim * dim, big * big))
    for col in range(dim):
        for row in range(dim):
            t[col * dim + row, col * big + row] = 1.0
            t[col * dim + row, (col + dim) * big + row + dim] = 1.0
    return t


def build_td_kernel(
    spec: LindbladSpec,
    t0: float,
    tau: float,
    M: int,
    K: int,
    mode: str,
    coeffs: DissipativeCoefficients,
) -> StepKernel:
    """Averaged-generator kernel plus discretization compensation for one step.

    The average of the M slice generators is itself a Lindbladian whose jump
    list collects every slice's operators scaled by 1/sqrt(M).
    """
    mids = [t0 + (j - 0.5) * tau / M for j in range(1, M + 1)]
    snaps = [spec.at(t) for t in mids]
    h_avg = PauliSum.zero(spec.n)
    for h_t, _ in snaps:
        h_avg = h_avg + h_t * (1.0 / M)
    jumps_avg: list[PauliSum] = []
    scale = 1.0 / math.sqrt(M)
    for _, ds in snaps:
        jumps_avg.extend(d * scale for d in ds)
    w_f = build_W(spec, t0, tau, M, K)
    return StepKernel(h_avg, jumps_avg, tau, K, mode, coeffs, w_formula=w_f)


# ---------------------------------------------------------------------------
# batched execution
# ---------------------------------------------------------------------------


_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _mix64_int(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class _RoundStreams:
    """Counter-based per-round uniform streams, consumed in pipeline order.

    Round r draws value c as the splitmix64 output of key (S ^ r), where S is
    the scrambled global seed (scrambling stops nearby seeds from merely
    permuting each other's round streams).  Per-round keying keeps results
    independent of chunking and scheduling.
    """

    def __init__(self, seed: int, round_ids: np.ndarray):
        base = _mix64_int((seed * _GAMMA + _MIX1) & _MASK64)
        self.keys = np.uint64(base) ^ round_ids.astype(np.uint64)
        self.ctr = np.zeros(len(round_ids), dtype=np.uint64)

    def take_all(self) -> np.ndarray:
        self.ctr += np.uint64(1)
        with np.errstate(over="ignore"):
            z = _mix64_array(self.keys + self.ctr * np.uint64(_GAMMA))
        return (z >> np.uint64(11)) * 2.0**-53

    def draw_for(self, i: int) -> float:
        self.ctr[i] += np.uint64(1)
        z = _mix64_int((int(self.keys[i]) + int(self.ctr[i]) * _GAMMA) & _MASK64)
        return (z >> 11) * 2.0**-53


def _term_key(term: PauliConjugateTerm) -> tuple:
    return (term.alpha.key(), term.beta.key(), term.phase.real, term.phase.imag)


def _collect_hsample(formula, streams: _RoundStreams):
    """Vectorized order selection; path sampling only for non-identity rounds."""
    u = streams.take_all()
    hot = np.nonzero(u >= formula.p_identity)[0]
    terms: dict[tuple, PauliConjugateTerm] = {}
    rows_by_key: dict[tuple, list[int]] = {}
    for i in hot:
        u_tail = (u[i] - formula.p_identity) / (1.0 - formula.p_identity)
        term = formula.sample_tail(u_tail, lambda: streams.draw_for(i))
        if term.is_identity():
            continue
        key = _term_key(term)
        terms.setdefault(key, term)
        rows_by_key.setdefault(key, []).append(int(i))
    return [(terms[k], np.asarray(rows_by_key[k])) for k in sorted(rows_by_key)]


def _collect_vsample(formula: ProductConjugateLcs, streams: _RoundStreams):
    """Both conjugation indices drawn vectorized; grouped by (left, right) pair."""
    u1 = streams.take_all()
    u2 = streams.take_all()
    nlab = len(formula.labels)
    i_idx = np.minimum(np.searchsorted(formula.cum, u1, side="right"), nlab - 1)
    j_idx = np.minimum(np.searchsorted(formula.cum, u2, side="right"), nlab - 1)
    ident = next((k for k, p in enumerate(formula.labels) if p.is_identity()), -1)
    flat = i_idx * nlab + j_idx
    out = []
    for code in np.unique(flat):
        i, j = divmod(int(code), nlab)
        if i == j == ident:
            continue
        rows = np.nonzero(flat == code)[0]
        phase = formula.phases[i] * formula.phases[j].conjugate()
        out.append((PauliConjugateTerm(phase, formula.labels[i], formula.labels[j]), rows))
    return out


class _VecBatch:
    """State batch as vectorized density matrices, shape (rounds, dim^2)."""

    def __init__(self, rho0: np.ndarray, count: int):
        self.x = np.tile(vec(rho0), (count, 1))

    def apply_matrix(self, s: np.ndarray, rows=None):
        if rows is None:
            self.x = self.x @ s.T
        else:
            self.x[rows] = self.x[rows] @ s.T

    def apply_term(self, term: PauliConjugateTerm, rows):
        self.apply_matrix(term.dense_superop(), rows)

    def expectations(self, obs: np.ndarray) -> np.ndarray:
        return (self.x @ vec(obs.T)).real


class _MatBatch:
    """State batch as dense matrices, shape (rounds, dim, dim)."""

    def __init__(self, rho0: np.ndarray, count: int):
        self.dim = rho0.shape[0]
        self.r = np.broadcast_to(rho0, (count, self.dim, self.dim)).copy()

    @staticmethod
    def _left(mat: np.ndarray, batch: np.ndarray) -> np.ndarray:
        c, d, _ = batch.shape
        out = batch.transpose(0, 2, 1).reshape(c * d, d) @ mat.T
        return out.reshape(c, d, d).transpose(0, 2, 1)

    @staticmethod
    def _right(batch: np.ndarray, mat: np.ndarray) -> np.ndarray:
        c, d, _ = batch.shape
        return (batch.reshape(c * d, d) @ mat).reshape(c, d, d)

    def conjugate(self, u: np.ndarray):
        self.r = self._left(u, self._right(self.r, u.conj().T))

    def kraus(self, k0: np.ndarray, k1: np.ndarray):
        acc = self._left(k0, self._right(self.r, k0.conj().T))
        acc += self._left(k1, self._right(self.r, k1.conj().T))
        self.r = acc

    def apply_term(self, term: PauliConjugateTerm, rows):
        pa, sa = term.alpha.perm_phase()
        pb, sb = term.beta.perm_phase()
        # (A rho)[i, :] = sa[pa[i]] rho[pa[i], :]; (rho B)[:, j] = sb[j] rho[:, pb[j]]
        sub = self.r[rows]
        sub = sub[:, pa, :] * sa[pa][None, :, None]
        sub = sub[:, :, pb] * sb[None, None, :]
        sub *= term.phase
        self.r[rows] = 0.5 * (sub + sub.conj().transpose(0, 2, 1))

    def dilate(self) -> "_MatBatch":
        c, d, _ = self.r.shape
        big = _MatBatch.__new__(_MatBatch)
        big.dim = 2 * d
        big.r = np.zeros((c, 2 * d, 2 * d), dtype=complex)
        big.r[:, :d, :d] = self.r
        return big

    def absorb_trace(self, big: "_MatBatch"):
        d = self.dim
        self.r = big.r[:, :d, :d] + big.r[:, d:, d:]

    def expectations(self, obs: np.ndarray) -> np.ndarray:
        return np.einsum("rij,ji->r", self.r, obs).real


def _stage_cached(st: _Stage, name: str, builder):
    if name not in st.cache:
        st.cache[name] = builder()
    return st.cache[name]


def _run_chunk_vec(kernels, rho0, obs, streams):
    n = rho0.shape[0].bit_length() - 1
    batch = _VecBatch(rho0, len(streams.keys))
    per_time = [batch.expectations(obs)]
    for kern in kernels:
        for st in kern.stages:
            if st.kind == "unitary":
                batch.apply_matrix(
                    _stage_cached(st, "sop", lambda s=st: conjugation_superop(s.payload))
                )
            elif st.kind == "kraus":
                batch.apply_matrix(
                    _stage_cached(st, "sop", lambda s=st: kraus_superop(list(s.payload)))
                )
            elif st.kind == "dilated":
                batch.apply_matrix(_stage_cached(st, "pre", lambda: _embed_superop(n)))
                batch.apply_matrix(
                    _stage_cached(st, "conj", lambda s=st: conjugation_superop(s.payload))
                )
                for term, rows in _collect_vsample(st.formula, streams):
                    batch.apply_term(term, rows)
                batch.apply_matrix(_stage_cached(st, "post", lambda: _trace_superop(n)))
            elif st.kind == "vsample":
                for term, rows in _collect_vsample(st.formula, streams):
                    batch.apply_term(term, rows)
            else:
                for term, rows in _collect_hsample(st.formula, streams):
                    batch.apply_term(term, rows)
        per_time.append(batch.expectations(obs))
    return per_time


def _run_chunk_mat(kernels, rho0, obs, streams):
    batch = _MatBatch(rho0, len(streams.keys))
    per_time = [batch.expectations(obs)]
    for kern in kernels:
        for st in kern.stages:
            if st.kind == "unitary":
                batch.conjugate(st.payload)
            elif st.kind == "kraus":
                batch.kraus(*st.payload)
            elif st.kind == "dilated":
                big = batch.dilate()
                big.conjugate(st.payload)
                for term, rows in _collect_vsample(st.formula, streams):
                    big.apply_term(term, rows)
                batch.absorb_trace(big)
            elif st.kind == "vsample":
                for term, rows in _collect_vsample(st.formula, streams):
                    batch.apply_term(term, rows)
            else:
                for term, rows in _collect_hsample(st.formula, streams):
                    batch.apply_term(term, rows)
        per_time.append(batch.expectations(obs))
    return per_time


def _chunk_size(dim: int, rounds: int) -> int:
    per_round = 16 * 4 * dim * dim  # dilated worst case
    return int(min(rounds, max(256, CHUNK_BYTES // per_round)))


def _execute(kernels, rho0, obs, rounds, seed):
    """Per-time sums and sums of squares of raw per-round expectations."""
    dim = rho0.shape[0]
    n_times = len(kernels) + 1
    sums = np.zeros(n_times)
    sumsq = np.zeros(n_times)
    chunk = _chunk_size(dim, rounds)
    runner = _run_chunk_vec if dim * dim <= VEC_PATH_MAX_DIM2 else _run_chunk_mat
    start = 0
    while start < rounds:
        ids = np.arange(start, min(start + chunk, rounds))
        streams = _RoundStreams(seed, ids)
        for t, vals in enumerate(runner(kernels, rho0, obs, streams)):
            sums[t] += float(vals.sum())
            sumsq[t] += float((vals * vals).sum())
        start += len(ids)
    return sums, sumsq


def _report_from_sums(sums, sumsq, rounds, mu_cum, times, bias_budget, wall):
    traj = []
    for t, time_t in enumerate(times):
        mean_raw = sums[t] / rounds
        var = max(sumsq[t] / rounds - mean_raw**2, 0.0) * rounds / max(rounds - 1, 1)
        traj.append(
            (float(time_t), mu_cum[t] * mean_raw, mu_cum[t] * math.sqrt(var / rounds))
        )
    return EstimateReport(
        mean=traj[-1][1],
        stderr=traj[-1][2],
        mu_total=float(mu_cum[-1]),
        bias_budget=bias_budget,
        rounds=rounds,
        wall_time=wall,
        trajectory=traj,
    )


def _as_matrices(obs, rho0):
    obs_mat = obs.dense() if isinstance(obs, PauliSum) else np.asarray(obs, dtype=complex)
    rho_mat = rho0.mat if isinstance(rho0, DensityState) else np.asarray(rho0, dtype=complex)
    return obs_mat, rho_mat


def run_time_independent(
    spec: LindbladSpec,
    obs: PauliSum | np.ndarray,
    rho0: DensityState | np.ndarray,
    sim_plan: SimPlan,
) -> EstimateReport:
    """Monte-Carlo estimate of Tr(rho(T) O) for a constant generator."""
    if spec.is_time_dependent():
        raise ValueError("spec is time-dependent; use run_time_dependent")
    t_start = time.perf_counter()
    obs_mat, rho_mat = _as_matrices(obs, rho0)

    coeffs = build_dissipative_coefficients(max(sim_plan.K, 2))
    lengths = sim_plan.step_lengths()
    kernel_by_tau: dict[float, StepKernel] = {}
    kernels = []
    for tau_s in lengths:
        if tau_s not in kernel_by_tau:
            kernel_by_tau[tau_s] = StepKernel(
                spec.hamiltonian, spec.jumps, tau_s, sim_plan.K, sim_plan.mode, coeffs
            )
        kernels.append(kernel_by_tau[tau_s])

    sums, sumsq = _execute(kernels, rho_mat, obs_mat, sim_plan.rounds, sim_plan.seed)
    mu_cum = np.cumprod([1.0] + [k.mu for k in kernels])
    times = np.concatenate([[0.0], np.cumsum(lengths)])
    bias = float(np.prod([1.0 + k.step_bias() for k in kernels]) - 1.0)
    return _report_from_sums(
        sums, sumsq, sim_plan.rounds, mu_cum, times, bias, time.perf_counter() - t_start
    )


def run_time_dependent(
    spec: LindbladSpec,
    obs: PauliSum | np.ndarray,
    rho0: DensityState | np.ndarray,
    sim_plan: SimPlan,
) -> EstimateReport:
    """Monte-Carlo estimate for a driven generator via midpoint slice averaging."""
    if not spec.is_time_dependent():
        # constant coefficients through the driven path: identical pipeline
        return run_time_independent(spec, obs, rho0, sim_plan)
    t_start = time.perf_counter()
    obs_mat, rho_mat = _as_matrices(obs, rho0)

    coeffs = build_dissipative_coefficients(max(sim_plan.K, 2))
    lengths = sim_plan.step_lengths()
    kernels = []
    t0 = 0.0
    for tau_s in lengths:
        kernels.append(
            build_td_kernel(spec, t0, tau_s, sim_plan.M, sim_plan.K, sim_plan.mode, coeffs)
        )
        t0 += tau_s

    sums, sumsq = _execute(kernels, rho_mat, obs_mat, sim_plan.rounds, sim_plan.seed)
    mu_cum = np.cumprod([1.0] + [k.mu for k in kernels])
    times = np.concatenate([[0.0], np.cumsum(lengths)])
    bias = float(np.prod([1.0 + k.step_bias() for k in kernels]) - 1.0)
    if spec.ldot_bound is not None:
        norm = spec.pauli_norm(sim_plan.T)
        bias += sum(
            t_s**2 * spec.ldot_bound * math.exp(norm * t_s) / (2.0 * sim_plan.M)
            for t_s in lengths
        )
    return _report_from_sums(
        sums, sumsq, sim_plan.rounds, mu_cum, times, bias, time.perf_counter() - t_start
    )
