"""
Exact Pauli-group algebra on N qubits.

A Pauli string is stored symplectically as two integer bitmasks (x bits and
z bits, bit q for qubit q) plus a phase exponent k giving the phase i**k.
The single-qubit factor on qubit q is I, X, Z or Y for (x, z) equal to
(0, 0), (1, 0), (0, 1) or (1, 1). The phase convention is Y = iXZ, so that
XZ = -iY.

Textual literals list qubit 0 first, e.g. "XIZ" is X on qubit 0 and Z on
qubit 2, with an optional leading "+", "-", "i", "+i" or "-i".

Usage:

.. code-block:: python

    from evcdr.pauli import PauliString

    p = PauliString.from_label("XZ")
    q = PauliString.from_label("ZZ")
    r = p * q
    print(r.to_label())   # "-iYI"
"""

# pylint: disable=C0103,R0913,C0301
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple
import threading
import numpy as np

THREAD_LOCK = threading.Lock()
_MATRIX_CACHE: Dict[str, np.ndarray] = {}

PHASE_LABELS = {0: "", 1: "i", 2: "-", 3: "-i"}
PHASE_VALUES = (1, 1j, -1, -1j)
SINGLE_QUBIT_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
BITS_TO_LABEL = {bits: label for label, bits in SINGLE_QUBIT_BITS.items()}


@dataclass(frozen=True)
class PauliString:
    """An N-qubit Pauli operator i**phase_exp times a tensor product of I, X, Y, Z."""

    n_qubits: int
    x_bits: int = 0
    z_bits: int = 0
    phase_exp: int = 0

    def __post_init__(self):
        if self.n_qubits < 0:
            raise ValueError(f"Number of qubits must be non-negative, got {self.n_qubits}.")
        limit = 1 << self.n_qubits
        if not 0 <= self.x_bits < limit or not 0 <= self.z_bits < limit:
            raise ValueError(
                f"Pauli bitmasks do not fit in {self.n_qubits} qubits."
            )
        object.__setattr__(self, "phase_exp", self.phase_exp % 4)

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        """Return the identity string on n_qubits."""
        return cls(n_qubits)

    @classmethod
    def single(cls, n_qubits: int, qubit: int, label: str) -> "PauliString":
        """Return the string with the single-qubit Pauli label on qubit and identity elsewhere."""
        if not 0 <= qubit < n_qubits:
            raise ValueError(f"Qubit {qubit} out of range for {n_qubits} qubits.")
        if label not in SINGLE_QUBIT_BITS:
            raise ValueError(f"Unknown single-qubit Pauli '{label}'.")
        x, z = SINGLE_QUBIT_BITS[label]
        return cls(n_qubits, x << qubit, z << qubit)

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        """
        Parse a Pauli literal such as "XIZY", "-ZZ" or "iXY".

        Args:
            label:  Pauli letters for qubits 0..n-1 with an optional sign or i prefix.
        Returns:
            The parsed PauliString.
        Raises:
            ValueError:  If the literal contains an unknown character.
        """
        text = label.strip()
        phase_exp = 0
        if text.startswith("+"):
            text = text[1:]
        elif text.startswith("-"):
            phase_exp = 2
            text = text[1:]
        if text.startswith("i"):
            phase_exp += 1
            text = text[1:]
        x_bits = 0
        z_bits = 0
        for qubit, letter in enumerate(text):
            if letter not in SINGLE_QUBIT_BITS:
                raise ValueError(f"Invalid Pauli literal '{label}'.")
            x, z = SINGLE_QUBIT_BITS[letter]
            x_bits |= x << qubit
            z_bits |= z << qubit
        return cls(len(text), x_bits, z_bits, phase_exp)

    @property
    def phase(self) -> complex:
        """The phase as one of 1, 1j, -1, -1j."""
        return PHASE_VALUES[self.phase_exp]

    def letters(self) -> str:
        """Pauli letters without phase, qubit 0 first."""
        return "".join(self.factor(q) for q in range(self.n_qubits))

    def to_label(self) -> str:
        """Emit the literal form including a phase prefix."""
        return PHASE_LABELS[self.phase_exp] + self.letters()

    def factor(self, qubit: int) -> str:
        """Return the single-qubit letter on qubit."""
        return BITS_TO_LABEL[((self.x_bits >> qubit) & 1, (self.z_bits >> qubit) & 1)]

    def weight(self) -> int:
        """Number of qubits with a non-identity factor."""
        return (self.x_bits | self.z_bits).bit_count()

    def support(self) -> Tuple[int, ...]:
        """Indices of qubits with a non-identity factor."""
        mask = self.x_bits | self.z_bits
        return tuple(q for q in range(self.n_qubits) if (mask >> q) & 1)

    def is_identity(self) -> bool:
        """True for the identity string with phase +1."""
        return self.x_bits == 0 and self.z_bits == 0 and self.phase_exp == 0

    def is_hermitian(self) -> bool:
        """True when the phase is real."""
        return self.phase_exp % 2 == 0

    def unsigned(self) -> "PauliString":
        """The same Pauli letters with phase +1."""
        return PauliString(self.n_qubits, self.x_bits, self.z_bits)

    def with_phase(self, phase_exp: int) -> "PauliString":
        """Return a copy carrying the phase i**phase_exp."""
        return PauliString(self.n_qubits, self.x_bits, self.z_bits, phase_exp)

    def adjoint(self) -> "PauliString":
        """Hermitian conjugate; the letters are Hermitian so only the phase conjugates."""
        return PauliString(self.n_qubits, self.x_bits, self.z_bits, -self.phase_exp)

    def embed(self, qubits: Iterable[int], n_total: int) -> "PauliString":
        """
        Place this string on the listed qubits of a larger register.

        Args:
            qubits:     Target qubit for each local qubit of this string.
            n_total:    Size of the larger register.
        Returns:
            A PauliString on n_total qubits with the same phase.
        """
        qubits = list(qubits)
        if len(qubits) != self.n_qubits:
            raise ValueError(
                f"Embedding needs {self.n_qubits} target qubits, got {len(qubits)}."
            )
        x_bits = 0
        z_bits = 0
        for local, target in enumerate(qubits):
            if not 0 <= target < n_total:
                raise ValueError(f"Qubit {target} out of range for {n_total} qubits.")
            x_bits |= ((self.x_bits >> local) & 1) << target
            z_bits |= ((self.z_bits >> local) & 1) << target
        return PauliString(n_total, x_bits, z_bits, self.phase_exp)

    def restrict(self, qubits: Iterable[int]) -> "PauliString":
        """Return the factors on the listed qubits as a smaller string (phase kept)."""
        qubits = list(qubits)
        x_bits = 0
        z_bits = 0
        for local, source in enumerate(qubits):
            x_bits |= ((self.x_bits >> source) & 1) << local
            z_bits |= ((self.z_bits >> source) & 1) << local
        return PauliString(len(qubits), x_bits, z_bits, self.phase_exp)

    def to_matrix(self) -> np.ndarray:
        """
        Dense 2**n x 2**n matrix of the operator in the little-endian basis.

        Only intended for small n (test oracles and exact channel analysis).
        """
        matrix = np.array([[1.0 + 0.0j]])
        for qubit in range(self.n_qubits):
            matrix = np.kron(_single_matrix(self.factor(qubit)), matrix)
        return self.phase * matrix

    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)

    def __repr__(self):
        return f"PauliString('{self.to_label()}')"


@dataclass(frozen=True)
class SystemAncillaSplit:
    """A Pauli on system plus one ancilla split into its system part and ancilla letter."""

    system_part: PauliString
    ancilla_part: str
    ancilla_index: int

    def recombine(self) -> PauliString:
        """Rebuild the (n+1)-qubit string this split came from."""
        n_total = self.system_part.n_qubits + 1
        system_qubits = [q for q in range(n_total) if q != self.ancilla_index]
        combined = self.system_part.embed(system_qubits, n_total)
        x, z = SINGLE_QUBIT_BITS[self.ancilla_part]
        return PauliString(
            n_total,
            combined.x_bits | (x << self.ancilla_index),
            combined.z_bits | (z << self.ancilla_index),
            combined.phase_exp,
        )


def _check_dimensions(p: PauliString, q: PauliString):
    if p.n_qubits != q.n_qubits:
        raise ValueError(
            f"Pauli dimension mismatch: {p.n_qubits} and {q.n_qubits} qubits."
        )


def product_phase(px: int, pz: int, qx: int, qz: int) -> int:
    """
    Exponent of i picked up when multiplying the letters (px, pz) by (qx, qz).

    Cyclic products X.Y, Y.Z, Z.X contribute +i and the reversed orders -i.
    """
    p_x = px & ~pz
    p_y = px & pz
    p_z = pz & ~px
    q_x = qx & ~qz
    q_y = qx & qz
    q_z = qz & ~qx
    plus = (p_x & q_y) | (p_y & q_z) | (p_z & q_x)
    minus = (p_y & q_x) | (p_z & q_y) | (p_x & q_z)
    return plus.bit_count() - minus.bit_count()


def multiply(p: PauliString, q: PauliString) -> PauliString:
    """
    Group product p.q with exact phase.

    Args:
        p:  Left factor.
        q:  Right factor.
    Returns:
        The PauliString equal to the operator product p q.
    Raises:
        ValueError:  If the qubit counts differ.

    Example:

    .. code-block:: python

        multiply(PauliString.from_label("X"), PauliString.from_label("Z")).to_label()  # "-iY"
    """
    _check_dimensions(p, q)
    phase_exp = p.phase_exp + q.phase_exp + product_phase(
        p.x_bits, p.z_bits, q.x_bits, q.z_bits
    )
    return PauliString(p.n_qubits, p.x_bits ^ q.x_bits, p.z_bits ^ q.z_bits, phase_exp)


def multiply_all(paulis: Iterable[PauliString], n_qubits: int) -> PauliString:
    """Ordered product of paulis (first element leftmost); identity for an empty sequence."""
    result = PauliString.identity(n_qubits)
    for pauli in paulis:
        result = multiply(result, pauli)
    return result


def symplectic_product(p: PauliString, q: PauliString) -> int:
    """Parity of anticommuting qubit positions (0 when p and q commute)."""
    return ((p.x_bits & q.z_bits) ^ (p.z_bits & q.x_bits)).bit_count() & 1


def commutes(p: PauliString, q: PauliString) -> bool:
    """
    True iff p and q commute.

    Raises:
        ValueError:  If the qubit counts differ.
    """
    _check_dimensions(p, q)
    return symplectic_product(p, q) == 0


def split(p: PauliString, ancilla_index: int) -> SystemAncillaSplit:
    """
    Split an (n+1)-qubit string into its n-qubit system part and ancilla letter.

    The phase stays with the system part.

    Raises:
        ValueError:  If ancilla_index is out of range.
    """
    if not 0 <= ancilla_index < p.n_qubits:
        raise ValueError(
            f"Ancilla index {ancilla_index} out of range for {p.n_qubits} qubits."
        )
    system_qubits = [q for q in range(p.n_qubits) if q != ancilla_index]
    return SystemAncillaSplit(
        p.restrict(system_qubits), p.factor(ancilla_index), ancilla_index
    )


def is_z_type(p_sys: PauliString) -> bool:
    """True iff every factor of p_sys is I or Z."""
    return p_sys.x_bits == 0


def all_paulis(n_qubits: int) -> List[PauliString]:
    """Every unsigned Pauli string on n_qubits (4**n of them), identity first."""
    size = 1 << n_qubits
    return [
        PauliString(n_qubits, x_bits, z_bits)
        for x_bits in range(size)
        for z_bits in range(size)
    ]


def _single_matrix(letter: str) -> np.ndarray:
    with THREAD_LOCK:
        if not _MATRIX_CACHE:
            _MATRIX_CACHE["I"] = np.eye(2, dtype=complex)
            _MATRIX_CACHE["X"] = np.array([[0, 1], [1, 0]], dtype=complex)
            _MATRIX_CACHE["Y"] = np.array([[0, -1j], [1j, 0]], dtype=complex)
            _MATRIX_CACHE["Z"] = np.array([[1, 0], [0, -1]], dtype=complex)
        return _MATRIX_CACHE[letter]
