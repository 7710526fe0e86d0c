"""n-qubit Pauli string algebra and sparse Pauli-sum operators.

Conventions used throughout the package:

* A Pauli string is encoded by two bitmasks ``(x, z)``; site ``i`` carries
  ``I(0,0) / X(1,0) / Y(1,1) / Z(0,1)`` where bit ``i`` of the masks refers to
  qubit ``i``.  The corresponding operator is ``i^(x.z) X^x Z^z``, so every
  label is Hermitian and multiplication is XOR plus an exact power-of-i phase.
* Qubit 0 is the leftmost character of a text label ("XIZ" puts X on qubit 0)
  and the most significant bit of a computational-basis index, i.e. dense
  matrices are built as ``kron(qubit0, kron(qubit1, ...))``.
* Operator norms ``norm(p)`` are vector norms of the Pauli coefficient
  vector; ``p = 0`` counts nonzero terms.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

_SYMBOLS = "IXZY"  # indexed by x + 2z
_XZ_OF_SYMBOL = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_I_POW = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)

PRUNE_THRESHOLD = 1e-14

_dense_cache: dict[tuple[int, int, int], np.ndarray] = {}
_perm_cache: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}


class PauliString:
    """One n-qubit Pauli label, immutable and hashable."""

    __slots__ = ("n", "x", "z", "_hash")

    def __init__(self, n: int, x: int = 0, z: int = 0):
        self.n = n
        self.x = x
        self.z = z
        self._hash = hash((n, x, z))

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        x = z = 0
        for i, s in enumerate(label):
            try:
                xb, zb = _XZ_OF_SYMBOL[s]
            except KeyError:
                raise ValueError(f"invalid Pauli symbol {s!r} in {label!r}")
            x |= xb << i
            z |= zb << i
        return cls(len(label), x, z)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0)

    def label(self) -> str:
        return "".join(
            _SYMBOLS[((self.x >> i) & 1) + 2 * ((self.z >> i) & 1)]
            for i in range(self.n)
        )

    def weight(self) -> int:
        return ((self.x | self.z)).bit_count()

    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def key(self) -> tuple[int, int]:
        """Deterministic sort key (used to order sampler tables)."""
        return (self.x, self.z)

    def __mul__(self, other: "PauliString") -> tuple[complex, "PauliString"]:
        """Return ``(phase, product)`` with P_self P_other = phase * product."""
        if self.n != other.n:
            raise ValueError(f"qubit counts differ: {self.n} vs {other.n}")
        # i exponent from P(x,z) = i^(x.z) X^x Z^z and Z^z X^x = (-1)^(z.x) X^x Z^z
        e = mul_phase_exp(self.x, self.z, other.x, other.z)
        return _I_POW[e], PauliString(self.n, self.x ^ other.x, self.z ^ other.z)

    def commutes(self, other: "PauliString") -> bool:
        s = (self.x & other.z).bit_count() + (self.z & other.x).bit_count()
        return s % 2 == 0

    def dense(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix (cached; treat as read-only)."""
        key = (self.n, self.x, self.z)
        mat = _dense_cache.get(key)
        if mat is None:
            mat = np.eye(1, dtype=complex)
            for s in self.label():
                mat = np.kron(mat, _PAULI_MATS[s])
            mat.setflags(write=False)
            _dense_cache[key] = mat
        return mat

    def perm_phase(self) -> tuple[np.ndarray, np.ndarray]:
        """Signed-permutation form: P|j> = phase[j] |perm[j]>  (cached).

        With qubit 0 as the most significant bit, mask bit i addresses basis
        bit n-1-i, so masks are bit-reversed before indexing.
        """
        key = (self.n, self.x, self.z)
        pp = _perm_cache.get(key)
        if pp is None:
            n = self.n
            xb = _bitrev(self.x, n)
            zb = _bitrev(self.z, n)
            dim = 1 << n
            j = np.arange(dim)
            perm = j ^ xb
            signs = 1 - 2 * (_popcount_array(j & zb) & 1)
            phase = (_I_POW[(self.x & self.z).bit_count() % 4] * signs).astype(
                complex
            )
            perm.setflags(write=False)
            phase.setflags(write=False)
            pp = (perm, phase)
            _perm_cache[key] = pp
        return pp

    def __eq__(self, other):
        return (
            isinstance(other, PauliString)
            and self.n == other.n
            and self.x == other.x
            and self.z == other.z
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"PauliString('{self.label()}')"


def mul_phase_exp(x1: int, z1: int, x2: int, z2: int) -> int:
    """Power of i picked up by P(x1,z1) P(x2,z2), mod 4."""
    return (
        (x1 & z1).bit_count()
        + (x2 & z2).bit_count()
        + 2 * (z1 & x2).bit_count()
        - ((x1 ^ x2) & (z1 ^ z2)).bit_count()
    ) % 4


def _bitrev(mask: int, n: int) -> int:
    out = 0
    for i in range(n):
        if (mask >> i) & 1:
            out |= 1 << (n - 1 - i)
    return out


def _popcount_array(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    while a.any():
        out += a & 1
        a = a >> 1
    return out


class PauliSum:
    """Sparse operator as a map PauliString -> complex coefficient.

    Term insertion order is preserved (python dict order); the first-order
    Trotter step uses it as the factor ordering, so it is part of the
    operator's identity for simulation purposes.
    """

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict[PauliString, complex] | None = None):
        self.n = n
        self.terms = {} if terms is None else terms

    @classmethod
    def zero(cls, n: int) -> "PauliSum":
        return cls(n)

    @classmethod
    def identity(cls, n: int, coeff: complex = 1.0) -> "PauliSum":
        return cls(n, {PauliString.identity(n): complex(coeff)})

    @classmethod
    def from_terms(cls, pairs, n: int | None = None) -> "PauliSum":
        """Build from an iterable of (label_or_PauliString, coeff)."""
        terms: dict[PauliString, complex] = {}
        for p, c in pairs:
            if isinstance(p, str):
                p = PauliString.from_label(p)
            if n is not None and p.n != n:
                raise ValueError("mixed qubit counts in term list")
            n = p.n
            terms[p] = terms.get(p, 0.0) + complex(c)
        if n is None:
            raise ValueError("empty term list needs an explicit qubit count")
        return cls(n, terms).prune()

    def copy(self) -> "PauliSum":
        return PauliSum(self.n, dict(self.terms))

    def prune(self, threshold: float = PRUNE_THRESHOLD) -> "PauliSum":
        self.terms = {p: c for p, c in self.terms.items() if abs(c) > threshold}
        return self

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if self.n != other.n:
            raise ValueError("qubit counts differ")
        out = dict(self.terms)
        for p, c in other.terms.items():
            out[p] = out.get(p, 0.0) + c
        return PauliSum(self.n, out).prune()

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (other * -1.0)

    def __mul__(self, scalar: complex) -> "PauliSum":
        return PauliSum(self.n, {p: c * scalar for p, c in self.terms.items()})

    __rmul__ = __mul__

    def __matmul__(self, other: "PauliSum") -> "PauliSum":
        """Operator product, collecting Pauli phases exactly."""
        if self.n != other.n:
            raise ValueError("qubit counts differ")
        out: dict[PauliString, complex] = {}
        for p1, c1 in self.terms.items():
            for p2, c2 in other.terms.items():
                ph, p3 = p1 * p2
                out[p3] = out.get(p3, 0.0) + c1 * c2 * ph
        return PauliSum(self.n, out).prune()

    def dagger(self) -> "PauliSum":
        return PauliSum(self.n, {p: c.conjugate() for p, c in self.terms.items()})

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return all(abs(c.imag) <= tol * max(1.0, abs(c)) for c in self.terms.values())

    def norm(self, p: int = 1) -> float:
        """Vector norm of the coefficient vector; p in {0, 1, 2}."""
        if p == 0:
            return float(len(self.terms))
        if p == 1:
            return float(sum(abs(c) for c in self.terms.values()))
        if p == 2:
            return math.sqrt(sum(abs(c) ** 2 for c in self.terms.values()))
        raise ValueError("norm order must be 0, 1 or 2")

    def dense(self) -> np.ndarray:
        dim = 1 << self.n
        out = np.zeros((dim, dim), dtype=complex)
        for p, c in self.terms.items():
            out += c * p.dense()
        return out

    def sorted_items(self):
        return sorted(self.terms.items(), key=lambda it: it[0].key())

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        inner = " + ".join(f"({c:.6g})*{p.label()}" for p, c in self.terms.items())
        return f"PauliSum[{inner or '0'}]"


def multiply(a: PauliString, b: PauliString) -> tuple[complex, PauliString]:
    """P_a P_b = phase * P_product, phase in {+1, -1, +i, -i}."""
    return a * b


def pauli_decompose(matrix: np.ndarray, dense_limit: int = 8) -> PauliSum:
    """Decompose a dense 2^n x 2^n matrix as sum_a c_a P_a, c_a = Tr(P_a A)/2^n."""
    dim = matrix.shape[0]
    if matrix.shape != (dim, dim) or dim & (dim - 1):
        raise ValueError("matrix must be square with power-of-two dimension")
    n = dim.bit_length() - 1
    if n > dense_limit:
        raise ValueError(f"n={n} exceeds dense limit {dense_limit}")
    terms: dict[PauliString, complex] = {}
    for x in range(1 << n):
        for z in range(1 << n):
            p = PauliString(n, x, z)
            perm, phase = p.perm_phase()
            # Tr(P A) via the signed permutation: sum_j phase[j] * A[j, perm[j]]
            c = complex(np.dot(phase, matrix[np.arange(dim), perm])) / dim
            if abs(c) > PRUNE_THRESHOLD:
                terms[p] = c
    return PauliSum(n, terms)


def norm(op: PauliSum, p: int = 1) -> float:
    return op.norm(p)


def parse_pauli_text(text: str, n: int | None = None) -> PauliSum:
    """Parse the one-term-per-line format ``<re> <im> <label>``."""
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ValueError(f"line {lineno}: expected '<re> <im> <label>', got {raw!r}")
        re_c, im_c, label = fields
        pairs.append((label, float(re_c) + 1j * float(im_c)))
    if not pairs:
        if n is None:
            raise ValueError("empty Pauli text and no qubit count given")
        return PauliSum.zero(n)
    return PauliSum.from_terms(pairs, n=n)


def format_pauli_text(op: PauliSum) -> str:
    lines = [f"{c.real:.17g} {c.imag:.17g} {p.label()}" for p, c in op.terms.items()]
    return "\n".join(lines)


def phase_angle(c: complex) -> float:
    """Full-quadrant argument of a coefficient (two-argument arctangent)."""
    return cmath.phase(c)
