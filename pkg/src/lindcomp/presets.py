"""Shipped problem presets.

``tfi``: transverse-field Ising ring with ZZ couplings and X fields, one
amplitude-damping jump sqrt(gamma)|0><1| on qubit 0; initial state |10...0>
and the projector onto it as observable.

``amplitude-damping``: single qubit, no Hamiltonian, the same jump operator;
initial state |1> and the excited-population observable.

``driven-qubit``: sinusoidally driven X field plus amplitude damping, for the
time-dependent path.
"""

from __future__ import annotations

import math

import numpy as np

from .engine import DensityState
from .pauli import PauliSum
from .superop import LindbladSpec


def lowering_jump(n: int, qubit: int, gamma: float) -> PauliSum:
    """sqrt(gamma) |0><1| on one site: sqrt(gamma) (X + iY)/2."""
    root = math.sqrt(gamma)
    x_label = "I" * qubit + "X" + "I" * (n - qubit - 1)
    y_label = "I" * qubit + "Y" + "I" * (n - qubit - 1)
    return PauliSum.from_terms([(x_label, root / 2.0), (y_label, 1j * root / 2.0)])


def tfi_hamiltonian(n: int, coupling: float, field: float) -> PauliSum:
    terms = []
    for i in range(n):
        j = (i + 1) % n
        label = "".join("Z" if q in (i, j) else "I" for q in range(n))
        terms.append((label, coupling))
    for i in range(n):
        terms.append(("I" * i + "X" + "I" * (n - i - 1), field))
    return PauliSum.from_terms(terms)


def amplitude_damping_preset(gamma: float = 1.5):
    spec = LindbladSpec(1, PauliSum.zero(1), [lowering_jump(1, 0, gamma)])
    obs = PauliSum.from_terms([("I", 0.5), ("Z", -0.5)])  # |1><1|
    rho0 = DensityState.from_bitstring("1")
    return spec, obs, rho0


def tfi_preset(n: int = 5, coupling: float = -0.1, field: float = 0.2, gamma: float = 1.5):
    spec = LindbladSpec(n, tfi_hamiltonian(n, coupling, field), [lowering_jump(n, 0, gamma)])
    if n > 8:
        # resource estimation only; dense state and observable are not formed
        return spec, None, None
    bits = "1" + "0" * (n - 1)
    rho0 = DensityState.from_bitstring(bits)
    obs = np.zeros((1 << n, 1 << n), dtype=complex)
    idx = int(bits, 2)
    obs[idx, idx] = 1.0
    return spec, obs, rho0


def driven_qubit_preset(gamma: float = 1.5, h_base: float = 0.2, h_mod: float = 0.1):
    jump = lowering_jump(1, 0, gamma)

    def profile(t: float):
        h = PauliSum.from_terms([("X", h_base + h_mod * math.sin(t))], n=1)
        return h, [jump]

    spec = LindbladSpec(
        1,
        profile(0.0)[0],
        [jump],
        time_profile=profile,
        ldot_bound=2.0 * h_mod,  # |dL/dt|_diamond <= 2 ||dH/dt||_1
    )
    obs = PauliSum.from_terms([("I", 0.5), ("Z", -0.5)])
    rho0 = DensityState.from_bitstring("1")
    return spec, obs, rho0


PRESETS = {
    "amplitude-damping": amplitude_damping_preset,
    "tfi": tfi_preset,
    "driven-qubit": driven_qubit_preset,
}


def load_preset(name: str, **kwargs):
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return builder(**kwargs)
