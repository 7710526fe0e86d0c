"""Lindblad dynamics via coarse-grained Trotter steps with sampled
superoperator compensation."""

from .compensation import (
    DissipativeCoefficients,
    build_dissipative_coefficients,
    build_J_tilde,
    build_M,
    build_N,
    build_V1,
    build_W,
    dilation_operator,
)
from .engine import DensityState, dilated_D_step, exact_step, trotter_H_step
from .estimator import (
    EstimateReport,
    PlanInfeasible,
    SimPlan,
    plan,
    run_time_dependent,
    run_time_independent,
)
from .lcs import LcsFormula, PauliConjugateTerm, apply_term, from_chi, reuse_equivalence_check
from .oracle import OracleResult, exact_propagate, rk4_propagate
from .pauli import PauliString, PauliSum, multiply, norm, pauli_decompose
from .resources import ResourceReport, count_step, precision_table
from .superop import (
    ChiMap,
    LindbladSpec,
    chi_of_dissipator,
    chi_of_dissipator_parts,
    chi_of_hamiltonian,
    compose,
    to_dense_superop,
)

__version__ = "0.1.0"
