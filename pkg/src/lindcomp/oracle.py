"""Reference propagators and norm probes used by tests and acceptance checks.

``exact_propagate`` exponentiates the vectorized generator (column-stacking,
shared with the superoperator module) and is limited to small systems;
``rk4_propagate`` integrates the master equation directly on the density
matrix and covers the time-dependent and larger cases.  Golden trajectories
are CSV files ``time,expectation`` with 12 significant digits.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .engine import DENSE_SUPEROP_LIMIT
from .superop import LindbladSpec, to_dense_superop, unvec, vec


@dataclass
class OracleResult:
    times: list[float]
    expectations: list[float]
    method: str


def exact_propagate(
    spec: LindbladSpec,
    rho0: np.ndarray,
    obs: np.ndarray,
    times: list[float],
) -> OracleResult:
    """Dense expm of the vectorized generator at each requested time."""
    if spec.is_time_dependent():
        raise ValueError("exact propagation needs a time-independent generator")
    if spec.n > DENSE_SUPEROP_LIMIT:
        raise ValueError(f"n={spec.n} exceeds the dense superoperator limit")
    gen = to_dense_superop(spec.chi_generator_at(0.0), DENSE_SUPEROP_LIMIT)
    v0 = vec(rho0)
    out = []
    for t in times:
        rho_t = unvec(expm(t * gen) @ v0)
        out.append(float(np.trace(rho_t @ obs).real))
    return OracleResult(list(times), out, "expm")


def _rhs_builder(spec: LindbladSpec):
    """Master-equation right-hand side; operators are cached when constant."""

    def materialize(t: float):
        h, jumps = spec.at(t)
        hd = h.dense()
        ds = [d.dense() for d in jumps]
        dds = [d.conj().T @ d for d in ds]
        return hd, ds, dds

    if spec.is_time_dependent():
        def rhs(t, rho):
            hd, ds, dds = materialize(t)
            out = -1j * (hd @ rho - rho @ hd)
            for d, dd in zip(ds, dds):
                out += d @ rho @ d.conj().T - 0.5 * (dd @ rho + rho @ dd)
            return out
    else:
        hd0, ds0, dds0 = materialize(0.0)

        def rhs(t, rho):
            out = -1j * (hd0 @ rho - rho @ hd0)
            for d, dd in zip(ds0, dds0):
                out += d @ rho @ d.conj().T - 0.5 * (dd @ rho + rho @ dd)
            return out

    return rhs


def rk4_propagate(
    spec: LindbladSpec,
    rho0: np.ndarray,
    obs: np.ndarray,
    times: list[float],
    h: float = 1e-4,
) -> OracleResult:
    """Classical fixed-step RK4 on d rho / dt = L(t)[rho]."""
    if h <= 0:
        raise ValueError("step must be positive")
    rhs = _rhs_builder(spec)
    rho = np.array(rho0, dtype=complex)
    t = 0.0
    out = []
    for target in times:
        while t < target - 1e-12:
            dt = min(h, target - t)
            k1 = rhs(t, rho)
            k2 = rhs(t + dt / 2, rho + dt / 2 * k1)
            k3 = rhs(t + dt / 2, rho + dt / 2 * k2)
            k4 = rhs(t + dt, rho + dt * k3)
            rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += dt
        out.append(float(np.trace(rho @ obs).real))
    return OracleResult(list(times), out, "rk4")


def trace_norm(mat: np.ndarray) -> float:
    return float(np.linalg.svd(mat, compute_uv=False).sum())


def induced_trace_norm_lb(
    superop: np.ndarray, probes: int = 48, seed: int = 0
) -> float:
    """Lower bound on the 1->1 induced norm of a vectorized superoperator.

    Maximizes ||E[X]||_tr over unit-trace-norm probes: every computational
    |i><j| (these are exactly the columns of the superoperator matrix) plus
    seeded random rank-one inputs.  Any probe certifies a lower bound, and
    the diamond norm dominates the result.
    """
    dim2 = superop.shape[0]
    dim = int(round(np.sqrt(dim2)))
    best = max(trace_norm(unvec(superop[:, j])) for j in range(dim2))
    rng = np.random.default_rng(seed)
    for _ in range(probes):
        u = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        x = np.outer(u, v.conj())
        best = max(best, trace_norm(unvec(superop @ vec(x))))
    return best


def superop_distance(a: np.ndarray, b: np.ndarray, probes: int = 48, seed: int = 0) -> float:
    """Induced-trace-norm lower bound on the distance between two superoperators."""
    return induced_trace_norm_lb(a - b, probes=probes, seed=seed)


def write_golden(path, result: OracleResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "expectation"])
        for t, e in zip(result.times, result.expectations):
            w.writerow([f"{t:.12g}", f"{e:.12g}"])


def read_golden(path) -> OracleResult:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    times = [float(r[0]) for r in rows[1:]]
    vals = [float(r[1]) for r in rows[1:]]
    return OracleResult(times, vals, "golden")
