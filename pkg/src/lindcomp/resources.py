"""Per-step gate counts and precision-versus-count tables.

Compilation rules (elementary set: CNOT, single-qubit rotations, single-qubit
Cliffords; rotation-class gates are reported as Rz):

* Pauli rotation of weight w: 1 Rz and 2(w-1) CNOT (the usual CNOT ladder;
  a weight-2 rotation costs 1 Rz + 2 CNOT).
* Controlled Pauli of weight w: w CNOT-class gates.
* Controlled rotation of weight w: 2 CNOT + 3 Rz for the core plus a
  Clifford conjugation on each side costing w CNOT each.
* A sampled-formula gadget uses two controlled gates plus one ancilla phase
  rotation; order-K compensation terms carry Pauli weight w_max * K where
  w_max is the largest generator term weight.

The dissipative coarse step evolves under the one-ancilla coupling whose
terms are the jump operator's Paulis extended by one ancilla site; the
coupling-step Trotter gadget is omitted when those terms all commute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .compensation import _all_terms_commute, dilation_operator
from .estimator import PlanInfeasible, plan
from .superop import LindbladSpec


@dataclass
class ResourceReport:
    rz_per_step: int
    cnot_per_step: int
    steps: int
    total_rz: int
    total_cnot: int
    ancillas: int
    method: str
    K: int


def _rotation_cost(weight: int) -> tuple[int, int]:
    return 1, (2 * (weight - 1) if weight >= 2 else 0)


def _coarse_step_cost(spec: LindbladSpec) -> tuple[int, int]:
    rz = cnot = 0
    for p in spec.hamiltonian.terms:
        r, c = _rotation_cost(p.weight())
        rz += r
        cnot += c
    for d in spec.jumps:
        for p in dilation_operator(d).terms:
            r, c = _rotation_cost(p.weight())
            rz += r
            cnot += c
    return rz, cnot


def _max_generator_weight(spec: LindbladSpec) -> int:
    w = max((p.weight() for p in spec.hamiltonian.terms), default=1)
    for d in spec.jumps:
        w = max(w, max((p.weight() for p in d.terms), default=1))
        dd = d.dagger() @ d
        w = max(w, max((p.weight() for p in dd.terms), default=1))
    return w


def count_step(spec: LindbladSpec, method: str, K: int = 0) -> ResourceReport:
    """Per-step Rz/CNOT counts for the plain-Trotter or two-stage method."""
    rz, cnot = _coarse_step_cost(spec)
    if method == "trotter":
        return ResourceReport(rz, cnot, 1, rz, cnot, 1, "trotter", K)
    if method != "two-stage":
        raise ValueError(f"unknown method {method!r}")
    w = _max_generator_weight(spec) * K
    # Hamiltonian Trotter compensation: two controlled rotations + phase
    rz += 7
    cnot += 4 + 4 * w
    for d in spec.jumps:
        if not _all_terms_commute(dilation_operator(d)):
            rz += 7
            cnot += 4 + 4 * (2 * w)  # doubled order for the coupling step
        # dissipative compensation: two controlled Paulis + phase
        rz += 1
        cnot += 2 * w
    # splitting compensation: two controlled Paulis + phase
    rz += 1
    cnot += 2 * w
    return ResourceReport(rz, cnot, 1, rz, cnot, 2, "two-stage", K)


def _trotter_steps_for(spec: LindbladSpec, T: float, epsilon: float) -> int:
    """First-order splitting error model: (sum of strengths)^2 tau T <= epsilon.

    The constant is fixed to 1; absolute positions of the resulting curve are
    model-dependent, its 1/epsilon slope is not.
    """
    strength = spec.hamiltonian.norm(1) + sum(d.norm(1) ** 2 for d in spec.jumps)
    return max(1, math.ceil(strength**2 * T**2 / epsilon))


def precision_table(
    spec: LindbladSpec, T: float, eps_grid: list[float]
) -> list[tuple[float, str, int, int, int, int]]:
    """Rows (epsilon, method, steps, K, rz_total, cnot_total) for both methods."""
    rows = []
    for eps in eps_grid:
        if not 0 < eps < 1:
            raise ValueError("epsilon values must be in (0, 1)")
        steps = _trotter_steps_for(spec, T, eps)
        per = count_step(spec, "trotter")
        rows.append((eps, "trotter", steps, 0, per.rz_per_step * steps, per.cnot_per_step * steps))
        try:
            p = plan(spec, T, eps, 0.05)
        except PlanInfeasible:
            continue
        steps2 = len(p.step_lengths())
        per2 = count_step(spec, "two-stage", p.K)
        rows.append(
            (eps, "two-stage", steps2, p.K, per2.rz_per_step * steps2, per2.cnot_per_step * steps2)
        )
    return rows
