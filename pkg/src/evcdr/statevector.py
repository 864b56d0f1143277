"""
Dense simulation backends.

  * Statevector: exact noiseless simulation.
  * DensityMatrix: exact Pauli-channel evolution (intended for <= 10 qubits).
  * Trajectory sampling: stochastic unraveling of Pauli noise into shot records,
    run in batches over a thread pool with one Philox stream per trajectory.

Qubit ordering is little-endian: qubit q is bit q of the amplitude index.

Usage:

.. code-block:: python

    from evcdr.circuit import Circuit, GateOp
    from evcdr.statevector import Statevector, NoiseModel, sample_shots

    circuit = Circuit(2, [GateOp("H", (0,)), GateOp("CNOT", (0, 1))])
    state = Statevector.zero(2).evolve(circuit)
    shots = sample_shots(circuit, NoiseModel(p1=0.01, p2=0.02), 1000, seed=7)
"""

# pylint: disable=C0103,R0913,R0914,R0902,C0301,R0912,R0915,R0917
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union
import concurrent.futures
import functools
import logging
import math
import os
import numpy as np

from evcdr.circuit import GATE_KINDS, TWO_QUBIT_KINDS, Circuit, GateOp
from evcdr.pauli import PauliString, all_paulis
from evcdr.streams import stream

logger = logging.getLogger(__name__)

NUM_THREADS = int(os.getenv("EVCDR_NUM_THREADS", str(os.cpu_count() or 1)))
MAX_DENSE_QUBITS = int(os.getenv("EVCDR_MAX_DENSE_QUBITS", "24"))
MAX_DENSITY_QUBITS = 10
MAX_BATCH_AMPLITUDES = 1 << 24
NORM_TOLERANCE = 1e-12
ANCILLA_BASES = ("X", "Y", "Z")


def _check_size(n_qubits: int, limit: int):
    if n_qubits > limit:
        raise ValueError(
            f"{n_qubits} qubits exceed the dense simulation limit of {limit} qubits."
        )


def _apply_matrix(batch: np.ndarray, matrix: np.ndarray, targets: Sequence[int], n_qubits: int) -> np.ndarray:
    """Apply a 2**k x 2**k matrix to targets of every row of a (B, 2**n) array."""
    k = len(targets)
    n_rows = batch.shape[0]
    tensor = batch.reshape((n_rows,) + (2,) * n_qubits)
    axes = [1 + (n_qubits - 1 - q) for q in targets]
    gate = matrix.reshape((2,) * (2 * k))
    moved = np.tensordot(gate, tensor, axes=(list(range(k, 2 * k)), axes))
    result = np.moveaxis(moved, list(range(k)), axes)
    return result.reshape(n_rows, 1 << n_qubits)


def _apply_multicontrolled(batch: np.ndarray, gate: GateOp, n_qubits: int) -> np.ndarray:
    """Apply a multi-controlled single-qubit Pauli by index selection."""
    indices = np.arange(1 << n_qubits)
    mask = np.ones(indices.shape, dtype=bool)
    for control, value in zip(gate.controls, gate.control_values):
        mask &= ((indices >> control) & 1) == value
    target = gate.targets[0]
    low = indices[mask & (((indices >> target) & 1) == 0)]
    high = low | (1 << target)
    matrix = gate.matrix()
    result = batch.copy()
    result[:, low] = matrix[0, 0] * batch[:, low] + matrix[0, 1] * batch[:, high]
    result[:, high] = matrix[1, 0] * batch[:, low] + matrix[1, 1] * batch[:, high]
    return result


def apply_gate_batch(batch: np.ndarray, gate: GateOp, n_qubits: int) -> np.ndarray:
    """Apply gate to every row of a (B, 2**n) amplitude array."""
    for qubit in gate.qubits:
        if not 0 <= qubit < n_qubits:
            raise ValueError(f"Gate {gate.kind} on qubit {qubit} out of range for {n_qubits} qubits.")
    if gate.kind == "MCPAULI":
        return _apply_multicontrolled(batch, gate, n_qubits)
    return _apply_matrix(batch, gate.matrix(), gate.targets, n_qubits)


def _bit_matrix(n_qubits: int) -> np.ndarray:
    """(2**n, n) matrix of the bits of every basis index."""
    indices = np.arange(1 << n_qubits)
    return ((indices[:, None] >> np.arange(n_qubits)[None, :]) & 1).astype(np.int64)


def _pauli_action(pauli: PauliString) -> Tuple[np.ndarray, np.ndarray]:
    """Return (destination index, coefficient) such that (P psi)[dest[b]] = coef[b] psi[b]."""
    n = pauli.n_qubits
    indices = np.arange(1 << n)
    parity = np.zeros(indices.shape, dtype=np.int64)
    for qubit in pauli.support():
        if (pauli.z_bits >> qubit) & 1:
            parity ^= (indices >> qubit) & 1
    y_count = (pauli.x_bits & pauli.z_bits).bit_count()
    base = pauli.phase * (1j ** y_count)
    coefficients = base * (1 - 2 * parity)
    return indices ^ pauli.x_bits, coefficients


def apply_pauli_batch(batch: np.ndarray, pauli: PauliString) -> np.ndarray:
    """Apply one Pauli string to every row of a (B, 2**n) array."""
    destination, coefficients = _pauli_action(pauli)
    result = np.empty_like(batch)
    result[:, destination] = batch * coefficients[None, :]
    return result


def apply_row_paulis(batch: np.ndarray, rows: np.ndarray, x_bits: np.ndarray, z_bits: np.ndarray, n_qubits: int, bits: np.ndarray) -> None:
    """
    Apply a different unsigned Pauli to each selected row, in place.

    Global phases are dropped, so only x and z bits are used.
    """
    if len(rows) == 0:
        return
    indices = np.arange(1 << n_qubits)
    z_matrix = ((z_bits[:, None] >> np.arange(n_qubits)[None, :]) & 1).astype(np.int64)
    signs = 1 - 2 * ((bits @ z_matrix.T) & 1).T
    destination = indices[None, :] ^ x_bits[:, None]
    updated = np.empty((len(rows), 1 << n_qubits), dtype=batch.dtype)
    np.put_along_axis(updated, destination, batch[rows] * signs, axis=1)
    batch[rows] = updated


class Statevector:
    """Pure state of n_qubits as a dense complex vector."""

    def __init__(self, amplitudes: np.ndarray, n_qubits: int = None):
        """Constructor"""
        amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if n_qubits is None:
            n_qubits = int(round(math.log2(len(amplitudes))))
        if len(amplitudes) != 1 << n_qubits:
            raise ValueError(
                f"Statevector of length {len(amplitudes)} does not match {n_qubits} qubits."
            )
        self.amplitudes = amplitudes
        self.n_qubits = n_qubits

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        """The all-zero computational basis state."""
        _check_size(n_qubits, MAX_DENSE_QUBITS)
        amplitudes = np.zeros(1 << n_qubits, dtype=complex)
        amplitudes[0] = 1.0
        return cls(amplitudes, n_qubits)

    def norm(self) -> float:
        """L2 norm of the amplitudes."""
        return float(np.linalg.norm(self.amplitudes))

    def evolve(self, circuit: Circuit) -> "Statevector":
        """Apply every gate of circuit and return the new state."""
        if circuit.n_qubits != self.n_qubits:
            raise ValueError(
                f"Circuit on {circuit.n_qubits} qubits cannot act on a {self.n_qubits}-qubit state."
            )
        batch = self.amplitudes[None, :]
        for gate in circuit.gates:
            batch = apply_gate_batch(batch, gate, self.n_qubits)
        return Statevector(batch[0], self.n_qubits)

    def probabilities(self) -> np.ndarray:
        """Born probabilities of every basis index."""
        return np.abs(self.amplitudes) ** 2

    def to_density_matrix(self) -> "DensityMatrix":
        """The projector onto this state."""
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.n_qubits)


def apply_gate(state: Statevector, gate: GateOp) -> Statevector:
    """
    Apply one gate to a statevector.

    Args:
        state:  Input state.
        gate:   Gate whose qubits lie inside the register.
    Returns:
        The new Statevector.
    Raises:
        ValueError:  If a gate qubit is out of range.

    Example:

    .. code-block:: python

        plus = apply_gate(Statevector.zero(1), GateOp("H", (0,)))
    """
    batch = apply_gate_batch(state.amplitudes[None, :], gate, state.n_qubits)
    return Statevector(batch[0], state.n_qubits)


def expectation(state: Statevector, p: PauliString) -> float:
    """
    Real expectation value <psi|P|psi> of a Hermitian Pauli string.

    Raises:
        ValueError:  If the qubit counts differ or P is not Hermitian.
    """
    if p.n_qubits != state.n_qubits:
        raise ValueError(
            f"Pauli on {p.n_qubits} qubits does not match a {state.n_qubits}-qubit state."
        )
    if not p.is_hermitian():
        raise ValueError(f"Pauli {p.to_label()} is not Hermitian.")
    destination, coefficients = _pauli_action(p)
    psi = state.amplitudes
    value = np.vdot(psi[destination], coefficients * psi)
    return float(np.clip(value.real, -1.0, 1.0))


class DensityMatrix:
    """Mixed state of n_qubits as a dense 2**n x 2**n matrix."""

    def __init__(self, entries: np.ndarray, n_qubits: int = None):
        """Constructor"""
        entries = np.asarray(entries, dtype=complex)
        if n_qubits is None:
            n_qubits = int(round(math.log2(entries.shape[0])))
        if entries.shape != (1 << n_qubits, 1 << n_qubits):
            raise ValueError(
                f"Density matrix of shape {entries.shape} does not match {n_qubits} qubits."
            )
        self.entries = entries
        self.n_qubits = n_qubits

    @classmethod
    def zero(cls, n_qubits: int) -> "DensityMatrix":
        """|0...0><0...0|"""
        _check_size(n_qubits, MAX_DENSITY_QUBITS)
        entries = np.zeros((1 << n_qubits, 1 << n_qubits), dtype=complex)
        entries[0, 0] = 1.0
        return cls(entries, n_qubits)

    def trace(self) -> float:
        """Real part of the trace."""
        return float(np.trace(self.entries).real)

    def apply_gate(self, gate: GateOp) -> "DensityMatrix":
        """Return G rho G^dagger."""
        left = apply_gate_batch(self.entries.T, gate, self.n_qubits).T
        both = apply_gate_batch(left.conj(), gate, self.n_qubits).conj()
        return DensityMatrix(both, self.n_qubits)

    def conjugate_pauli(self, pauli: PauliString) -> np.ndarray:
        """Return P rho P^dagger as a raw matrix."""
        left = apply_pauli_batch(self.entries.T, pauli).T
        return apply_pauli_batch(left.conj(), pauli).conj()

    def expectation(self, p: PauliString) -> float:
        """Real part of Tr(P rho)."""
        if p.n_qubits != self.n_qubits:
            raise ValueError(
                f"Pauli on {p.n_qubits} qubits does not match a {self.n_qubits}-qubit state."
            )
        destination, coefficients = _pauli_action(p)
        indices = np.arange(1 << self.n_qubits)
        value = np.sum(coefficients * self.entries[indices, destination])
        return float(value.real)

    def check(self, tolerance: float = 1e-10) -> bool:
        """True when the matrix is Hermitian, trace one and positive within tolerance."""
        hermitian = np.allclose(self.entries, self.entries.conj().T, atol=tolerance)
        eigenvalues = np.linalg.eigvalsh((self.entries + self.entries.conj().T) / 2)
        return bool(hermitian and abs(self.trace() - 1) < tolerance and eigenvalues.min() >= -tolerance)


@dataclass(frozen=True)
class PauliChannel:
    """
    Pauli channel on n_qubits: rho -> sum_i lambda_i P_i rho P_i + uniform * Tr(rho) I / d.

    The uniform part is the depolarizing component, equivalent to spreading
    the weight `uniform` evenly over all 4**n Pauli strings.
    """

    n_qubits: int
    errors: Tuple[Tuple[PauliString, float], ...]
    uniform: float = 0.0

    def __post_init__(self):
        total = self.uniform
        if not 0.0 <= self.uniform <= 1.0:
            raise ValueError(f"Depolarizing weight {self.uniform} is not a probability.")
        for pauli, rate in self.errors:
            if pauli.n_qubits != self.n_qubits:
                raise ValueError(
                    f"Channel error {pauli.to_label()} does not act on {self.n_qubits} qubits."
                )
            if not -1e-15 <= rate <= 1.0 + 1e-15:
                raise ValueError(f"Error rate {rate} of {pauli.to_label()} is not a probability.")
            total += rate
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"Channel rates sum to {total}, expected 1.")

    def probabilities(self) -> np.ndarray:
        """Selection probabilities of the listed errors followed by the uniform part."""
        return np.array([rate for _, rate in self.errors] + [self.uniform])

    def is_identity(self) -> bool:
        """True when the channel never applies a non-identity error."""
        return self.uniform == 0.0 and all(
            pauli.x_bits == 0 and pauli.z_bits == 0 for pauli, rate in self.errors if rate > 0
        )

    def expanded(self) -> List[Tuple[PauliString, float]]:
        """
        Explicit (Pauli, rate) list with the uniform part spread over all 4**n strings.

        Duplicates are merged, identity first. Only for small n.
        """
        rates: Dict[Tuple[int, int], float] = {}
        order: List[Tuple[int, int]] = []

        def add(pauli: PauliString, rate: float):
            key = (pauli.x_bits, pauli.z_bits)
            if key not in rates:
                rates[key] = 0.0
                order.append(key)
            rates[key] += rate

        add(PauliString.identity(self.n_qubits), 0.0)
        for pauli, rate in self.errors:
            add(pauli, rate)
        if self.uniform > 0:
            if self.n_qubits > 6:
                raise ValueError(
                    f"Cannot enumerate the depolarizing part on {self.n_qubits} qubits."
                )
            share = self.uniform / 4**self.n_qubits
            for pauli in all_paulis(self.n_qubits):
                add(pauli, share)
        return [(PauliString(self.n_qubits, x, z), rates[(x, z)]) for x, z in order]


def pauli_channel(rates: Mapping[Union[str, PauliString], float], n_qubits: int = None) -> PauliChannel:
    """
    Build a sparse Pauli channel; the identity takes the remaining weight.

    Args:
        rates:      Map of Pauli literal (or PauliString) to probability.
        n_qubits:   Register size (inferred from the literals when omitted).
    Returns:
        A PauliChannel whose first entry is the identity.
    Raises:
        ValueError:  If the rates are negative or sum above one.

    Example:

    .. code-block:: python

        channel = pauli_channel({"XII": 0.01, "ZZI": 0.02})
    """
    parsed = [
        (PauliString.from_label(key) if isinstance(key, str) else key, float(rate))
        for key, rate in rates.items()
    ]
    if n_qubits is None:
        if not parsed:
            raise ValueError("Cannot infer the qubit count of an empty channel.")
        n_qubits = parsed[0][0].n_qubits
    merged: Dict[Tuple[int, int], float] = {}
    for pauli, rate in parsed:
        if rate < 0:
            raise ValueError(f"Negative error rate {rate} for {pauli.to_label()}.")
        if pauli.n_qubits != n_qubits:
            raise ValueError(f"Pauli {pauli.to_label()} does not act on {n_qubits} qubits.")
        key = (pauli.x_bits, pauli.z_bits)
        merged[key] = merged.get(key, 0.0) + rate
    identity_rate = 1.0 - sum(rate for key, rate in merged.items() if key != (0, 0))
    if identity_rate < -1e-12:
        raise ValueError(f"Pauli error rates sum to {1 - identity_rate}, above one.")
    errors = [(PauliString.identity(n_qubits), max(identity_rate, 0.0))]
    errors += [
        (PauliString(n_qubits, x, z), rate) for (x, z), rate in merged.items() if (x, z) != (0, 0)
    ]
    return PauliChannel(n_qubits, tuple(errors))


def depolarizing_channel(n_qubits: int, delta: float) -> PauliChannel:
    """The channel (1 - delta) rho + delta I / d on n_qubits."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"Depolarization rate {delta} is not in [0, 1].")
    return PauliChannel(n_qubits, ((PauliString.identity(n_qubits), 1.0 - delta),), delta)


def evolve_channel_exact(rho: DensityMatrix, channel: PauliChannel, qubits: Sequence[int] = None) -> DensityMatrix:
    """
    Apply a Pauli channel exactly to a density matrix.

    Args:
        rho:        Input state.
        channel:    Channel acting on len(qubits) qubits.
        qubits:     Register qubits the channel acts on (default: all, in order).
    Returns:
        The output DensityMatrix (trace preserved).
    Raises:
        ValueError:  If the channel size does not match.

    Example:

    .. code-block:: python

        noisy = evolve_channel_exact(rho, depolarizing_channel(rho.n_qubits, 0.1))
    """
    qubits = list(range(rho.n_qubits)) if qubits is None else list(qubits)
    if channel.n_qubits != len(qubits):
        raise ValueError(
            f"Channel on {channel.n_qubits} qubits does not match the {len(qubits)} target qubits."
        )
    whole_register = sorted(qubits) == list(range(rho.n_qubits))
    if whole_register and channel.uniform > 0:
        terms = list(channel.errors)
        dimension = 1 << rho.n_qubits
        result = channel.uniform * rho.trace() * np.eye(dimension, dtype=complex) / dimension
    else:
        terms = channel.expanded()
        result = np.zeros_like(rho.entries)
    for pauli, rate in terms:
        if rate == 0.0:
            continue
        placed = pauli.unsigned().embed(qubits, rho.n_qubits)
        if placed.x_bits == 0 and placed.z_bits == 0:
            result = result + rate * rho.entries
        else:
            result = result + rate * rho.conjugate_pauli(placed)
    return DensityMatrix(result, rho.n_qubits)


@dataclass(frozen=True)
class NoiseLocation:
    """A channel applied after gate `position` (position == len(circuit) means before measurement)."""

    position: int
    qubits: Tuple[int, ...]
    channel: PauliChannel


@dataclass(frozen=True)
class NoiseModel:
    """
    Synthetic noise assignment for a circuit.

    Per-gate depolarizing noise attaches a depolarizing channel after every
    gate: p1 after single-qubit gates, p2 over all qubits of multi-qubit
    gates. gate_channels overrides that default for the listed gate kinds
    with an arbitrary Pauli channel on the gate's qubits. Idle qubits get no
    noise. Before measurement an optional readout channel acts on every
    qubit separately, then an optional global channel on the whole register.

    Example:

    .. code-block:: python

        noise = NoiseModel(
            p2=0.01,
            gate_channels=(("H", depolarizing_channel(1, 0.05)),),
            readout_channel=pauli_channel({"Z": 0.02}),
        )
    """

    p1: float = 0.0
    p2: float = 0.0
    global_channel: Optional[PauliChannel] = None
    gate_channels: Tuple[Tuple[str, PauliChannel], ...] = ()
    readout_channel: Optional[PauliChannel] = None

    def __post_init__(self):
        for name, value in (("p1", self.p1), ("p2", self.p2)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"Noise strength {name}={value} is not in [0, 1].")
        kinds = [kind for kind, _ in self.gate_channels]
        if len(set(kinds)) != len(kinds):
            raise ValueError(f"Gate kinds {kinds} listed more than once.")
        for kind, channel in self.gate_channels:
            if kind not in GATE_KINDS:
                raise ValueError(f"Unknown gate kind '{kind}' in the noise model.")
            expected = 2 if kind in TWO_QUBIT_KINDS else 1
            if kind != "MCPAULI" and channel.n_qubits != expected:
                raise ValueError(
                    f"Channel on {channel.n_qubits} qubits cannot follow a {expected}-qubit {kind} gate."
                )
        if self.readout_channel is not None and self.readout_channel.n_qubits != 1:
            raise ValueError("The readout channel must act on a single qubit.")

    def scaled(self, factor: float) -> "NoiseModel":
        """Copy with every local error rate multiplied by factor (clipped to [0, 1])."""
        return NoiseModel(
            min(max(self.p1 * factor, 0.0), 1.0),
            min(max(self.p2 * factor, 0.0), 1.0),
            self.global_channel,
            tuple((kind, scale_channel(channel, factor)) for kind, channel in self.gate_channels),
            None if self.readout_channel is None else scale_channel(self.readout_channel, factor),
        )

    def is_noiseless(self) -> bool:
        """True when no location carries a non-identity channel."""
        channels = [channel for _, channel in self.gate_channels]
        channels += [c for c in (self.global_channel, self.readout_channel) if c is not None]
        return self.p1 == 0 and self.p2 == 0 and all(channel.is_identity() for channel in channels)

    def gate_channel(self, gate: GateOp) -> Optional[PauliChannel]:
        """Channel applied after gate, or None when the gate is noiseless."""
        for kind, channel in self.gate_channels:
            if kind == gate.kind:
                if channel.n_qubits != len(gate.qubits):
                    raise ValueError(
                        f"Channel on {channel.n_qubits} qubits does not fit a {len(gate.qubits)}-qubit {kind} gate."
                    )
                return None if channel.is_identity() else channel
        strength = self.p1 if len(gate.qubits) == 1 else self.p2
        if strength <= 0.0:
            return None
        return _depolarizing_cached(len(gate.qubits), strength)

    def locations(self, circuit: Circuit) -> List[NoiseLocation]:
        """Every noisy location of circuit in execution order."""
        result = []
        for position, gate in enumerate(circuit.gates):
            channel = self.gate_channel(gate)
            if channel is not None:
                result.append(NoiseLocation(position, gate.qubits, channel))
        end = len(circuit.gates)
        if self.readout_channel is not None and not self.readout_channel.is_identity():
            result.extend(NoiseLocation(end, (q,), self.readout_channel) for q in range(circuit.n_qubits))
        if self.global_channel is not None and not self.global_channel.is_identity():
            if self.global_channel.n_qubits != circuit.n_qubits:
                raise ValueError(
                    f"Global channel on {self.global_channel.n_qubits} qubits does not match a {circuit.n_qubits}-qubit circuit."
                )
            result.append(NoiseLocation(end, tuple(range(circuit.n_qubits)), self.global_channel))
        return result


@functools.lru_cache(maxsize=64)
def _depolarizing_cached(n_qubits: int, strength: float) -> PauliChannel:
    return depolarizing_channel(n_qubits, strength)


def scale_channel(channel: PauliChannel, factor: float) -> PauliChannel:
    """Pauli channel with every non-identity rate (and the uniform part) multiplied by factor."""
    factor = max(factor, 0.0)
    uniform = channel.uniform * factor
    errors = [
        (pauli, rate if pauli.x_bits == 0 and pauli.z_bits == 0 else rate * factor)
        for pauli, rate in channel.errors
    ]
    total = uniform + sum(rate for pauli, rate in errors if pauli.x_bits or pauli.z_bits)
    if total > 1.0:
        uniform /= total
        errors = [(pauli, rate / total) for pauli, rate in errors]
        total = 1.0
    identity = PauliString.identity(channel.n_qubits)
    kept = [(pauli, rate) for pauli, rate in errors if pauli.x_bits or pauli.z_bits]
    return PauliChannel(channel.n_qubits, ((identity, max(1.0 - total, 0.0)),) + tuple(kept), uniform)


def run_density_matrix(circuit: Circuit, noise: NoiseModel = None) -> DensityMatrix:
    """Exact noisy evolution of |0...0> through circuit with every noise location applied."""
    _check_size(circuit.n_qubits, MAX_DENSITY_QUBITS)
    noise = noise or NoiseModel()
    by_position: Dict[int, List[NoiseLocation]] = {}
    for location in noise.locations(circuit):
        by_position.setdefault(location.position, []).append(location)
    rho = DensityMatrix.zero(circuit.n_qubits)
    for position, gate in enumerate(circuit.gates):
        rho = rho.apply_gate(gate)
        for location in by_position.get(position, []):
            rho = evolve_channel_exact(rho, location.channel, location.qubits)
    for location in by_position.get(len(circuit.gates), []):
        rho = evolve_channel_exact(rho, location.channel, location.qubits)
    return rho


def system_ancilla_indices(n_qubits: int, ancilla_qubits: Sequence[int], accepted: np.ndarray = None) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """
    Full basis indices arranged as (accepted system string, ancilla string).

    Args:
        n_qubits:       Register size.
        ancilla_qubits: Qubits forming the ancilla register (bit k of the ancilla string).
        accepted:       Boolean mask over system strings (default: only the zero string).
    Returns:
        (indices of shape (n_accepted, 2**m), system qubit order)
    """
    system_qubits = tuple(q for q in range(n_qubits) if q not in ancilla_qubits)
    n_system = len(system_qubits)
    if accepted is None:
        system_strings = np.array([0])
    else:
        system_strings = np.flatnonzero(accepted)
    ancilla_strings = np.arange(1 << len(ancilla_qubits))
    system_part = np.zeros(len(system_strings), dtype=np.int64)
    for j, qubit in enumerate(system_qubits[:n_system]):
        system_part |= ((system_strings >> j) & 1) << qubit
    ancilla_part = np.zeros(len(ancilla_strings), dtype=np.int64)
    for k, qubit in enumerate(ancilla_qubits):
        ancilla_part |= ((ancilla_strings >> k) & 1) << qubit
    return system_part[:, None] | ancilla_part[None, :], system_qubits


def postselected_block(state: Union[Statevector, DensityMatrix], ancilla_qubits: Sequence[int], accepted: np.ndarray = None) -> np.ndarray:
    """
    Unnormalized ancilla matrix after projecting the system onto accepted strings.

    Its trace is the postselection probability.
    """
    indices, _ = system_ancilla_indices(state.n_qubits, list(ancilla_qubits), accepted)
    if isinstance(state, Statevector):
        amplitudes = state.amplitudes[indices]
        return amplitudes.T @ amplitudes.conj()
    rows = indices[:, :, None]
    columns = indices[:, None, :]
    return state.entries[rows, columns].sum(axis=0)


@dataclass(frozen=True)
class ShotRecord:
    """One measured shot: system bits (system qubit order), ancilla outcome and basis."""

    system_bits: Tuple[int, ...]
    ancilla_outcome: int
    ancilla_basis: str


@dataclass
class ShotTable:
    """
    Column store of shots for one ancilla basis.

    system_bits has shape (n_shots, n_system); ancilla_outcomes holds +1/-1.
    system_labels names each system column (original lattice label).
    """

    system_bits: np.ndarray
    ancilla_outcomes: np.ndarray
    ancilla_basis: str
    system_labels: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        self.system_bits = np.asarray(self.system_bits, dtype=np.uint8)
        self.ancilla_outcomes = np.asarray(self.ancilla_outcomes, dtype=np.int8)
        if self.system_bits.ndim != 2:
            self.system_bits = self.system_bits.reshape(len(self.ancilla_outcomes), -1)
        if self.ancilla_basis not in ANCILLA_BASES:
            raise ValueError(f"Unknown ancilla basis '{self.ancilla_basis}'.")
        if not self.system_labels:
            self.system_labels = tuple(range(self.system_bits.shape[1]))
        if len(self.system_labels) != self.system_bits.shape[1]:
            raise ValueError("Each system column needs a label.")

    def __len__(self):
        return len(self.ancilla_outcomes)

    def records(self) -> Iterator[ShotRecord]:
        """Iterate the shots as ShotRecord values."""
        for bits, outcome in zip(self.system_bits, self.ancilla_outcomes):
            yield ShotRecord(tuple(int(b) for b in bits), int(outcome), self.ancilla_basis)

    def subset(self, mask: np.ndarray) -> "ShotTable":
        """Shots selected by a boolean mask."""
        return ShotTable(self.system_bits[mask], self.ancilla_outcomes[mask], self.ancilla_basis, self.system_labels)

    @classmethod
    def from_records(cls, records: Iterable[ShotRecord], system_labels: Sequence[int] = None) -> "ShotTable":
        """Build a table from ShotRecord values sharing one basis."""
        records = list(records)
        if not records:
            raise ValueError("No shot records supplied.")
        bases = {record.ancilla_basis for record in records}
        if len(bases) != 1:
            raise ValueError(f"Shot records mix ancilla bases {sorted(bases)}.")
        bits = np.array([record.system_bits for record in records], dtype=np.uint8)
        outcomes = np.array([record.ancilla_outcome for record in records], dtype=np.int8)
        labels = tuple(system_labels) if system_labels is not None else ()
        return cls(bits, outcomes, records[0].ancilla_basis, labels)

    @classmethod
    def concatenate(cls, tables: Sequence["ShotTable"]) -> "ShotTable":
        """Join tables of the same basis and labels in order."""
        if not tables:
            raise ValueError("No shot tables supplied.")
        return cls(
            np.concatenate([table.system_bits for table in tables]),
            np.concatenate([table.ancilla_outcomes for table in tables]),
            tables[0].ancilla_basis,
            tables[0].system_labels,
        )


def basis_rotation(ancilla_basis: str, ancilla_index: int) -> List[GateOp]:
    """Gates mapping the requested ancilla basis onto the computational basis."""
    if ancilla_basis == "Z":
        return []
    if ancilla_basis == "X":
        return [GateOp("H", (ancilla_index,))]
    if ancilla_basis == "Y":
        return [GateOp("SDG", (ancilla_index,)), GateOp("H", (ancilla_index,))]
    raise ValueError(f"Unknown ancilla basis '{ancilla_basis}'.")


def _split_outcomes(indices: np.ndarray, n_qubits: int, ancilla_index: int) -> Tuple[np.ndarray, np.ndarray]:
    system_qubits = [q for q in range(n_qubits) if q != ancilla_index]
    bits = ((indices[:, None] >> np.array(system_qubits, dtype=np.int64)[None, :]) & 1).astype(np.uint8)
    outcomes = (1 - 2 * ((indices >> ancilla_index) & 1)).astype(np.int8)
    return bits, outcomes


def _draw_indices(probabilities: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    cumulative = np.cumsum(probabilities)
    cumulative /= cumulative[-1]
    return np.minimum(np.searchsorted(cumulative, uniforms, side="right"), len(probabilities) - 1)


def measure_shots(state: Statevector, ancilla_basis: str, n_shots: int, seed: int, ancilla_index: int = None, system_labels: Sequence[int] = None) -> ShotTable:
    """
    Sample shots of a pure state, measuring the ancilla in the given basis.

    Args:
        state:          State before the basis rotation.
        ancilla_basis:  One of X, Y, Z.
        n_shots:        Number of shots (>= 1).
        seed:           Stream seed.
        ancilla_index:  Ancilla qubit (default: the last qubit).
        system_labels:  Labels of the remaining qubits.
    Returns:
        A ShotTable.
    Raises:
        ValueError:  If n_shots < 1 or the basis is unknown.
    """
    if n_shots < 1:
        raise ValueError(f"Number of shots must be at least 1, got {n_shots}.")
    ancilla_index = state.n_qubits - 1 if ancilla_index is None else ancilla_index
    rotated = state.evolve(Circuit(state.n_qubits, basis_rotation(ancilla_basis, ancilla_index)))
    generator = stream(seed, 0)
    indices = _draw_indices(rotated.probabilities(), generator.random(n_shots))
    bits, outcomes = _split_outcomes(indices, state.n_qubits, ancilla_index)
    labels = tuple(system_labels) if system_labels is not None else ()
    return ShotTable(bits, outcomes, ancilla_basis, labels)


def _draw_errors(generator: np.random.Generator, locations: Sequence[NoiseLocation], n_qubits: int) -> Tuple[np.ndarray, np.ndarray]:
    """Draw one error per location for a single trajectory as global (x, z) bitmasks."""
    x_bits = np.zeros(len(locations), dtype=np.int64)
    z_bits = np.zeros(len(locations), dtype=np.int64)
    for j, location in enumerate(locations):
        channel = location.channel
        choice = int(_draw_indices(channel.probabilities(), np.array([generator.random()]))[0])
        if choice == len(channel.errors):
            size = 1 << channel.n_qubits
            local = PauliString(channel.n_qubits, int(generator.integers(0, size)), int(generator.integers(0, size)))
        else:
            local = channel.errors[choice][0]
        placed = local.unsigned().embed(location.qubits, n_qubits)
        x_bits[j] = placed.x_bits
        z_bits[j] = placed.z_bits
    return x_bits, z_bits


def _run_trajectory_batch(circuit: Circuit, locations: Sequence[NoiseLocation], start_amplitudes: np.ndarray, first_position: int, trajectory_ids: Sequence[int], shots_per_trajectory: int, seed: int, rotation: Sequence[GateOp], ancilla_index: int) -> Tuple[np.ndarray, np.ndarray]:
    n = circuit.n_qubits
    generators = [stream(seed, 1, int(t)) for t in trajectory_ids]
    draws = [_draw_errors(generator, locations, n) for generator in generators]
    x_matrix = np.array([d[0] for d in draws]).reshape(len(trajectory_ids), len(locations))
    z_matrix = np.array([d[1] for d in draws]).reshape(len(trajectory_ids), len(locations))
    batch = np.repeat(start_amplitudes[None, :], len(trajectory_ids), axis=0)
    bits = _bit_matrix(n)
    by_position: Dict[int, List[int]] = {}
    for j, location in enumerate(locations):
        by_position.setdefault(location.position, []).append(j)

    def inject(position: int):
        for j in by_position.get(position, []):
            rows = np.flatnonzero((x_matrix[:, j] != 0) | (z_matrix[:, j] != 0))
            apply_row_paulis(batch, rows, x_matrix[rows, j], z_matrix[rows, j], n, bits)

    for position in range(first_position, len(circuit.gates)):
        batch = apply_gate_batch(batch, circuit.gates[position], n)
        inject(position)
    inject(len(circuit.gates))
    for gate in rotation:
        batch = apply_gate_batch(batch, gate, n)
    probabilities = np.abs(batch) ** 2
    indices = np.concatenate(
        [
            _draw_indices(probabilities[row], generator.random(shots_per_trajectory))
            for row, generator in enumerate(generators)
        ]
    )
    return _split_outcomes(indices, n, ancilla_index)


def sample_shots(circuit: Circuit, noise: NoiseModel, n_shots: int, seed: int, ancilla_basis: str = "Z", ancilla_index: int = None, shots_per_trajectory: int = 1, batch_size: int = 256, system_labels: Sequence[int] = None) -> ShotTable:
    """
    Sample noisy shots by Pauli-trajectory unraveling.

    Each trajectory draws one Pauli error per noisy location from its own
    Philox stream, evolves the statevector with the errors inserted and
    then samples shots_per_trajectory measurements. The gates before the
    first noisy location are simulated once and shared. Batches run on a
    thread pool and are merged by trajectory index, so the output depends
    only on the seed.

    Args:
        circuit:                Circuit including the ancilla.
        noise:                  Noise assignment.
        n_shots:                Number of shots to return.
        seed:                   Stream seed.
        ancilla_basis:          X, Y or Z.
        ancilla_index:          Ancilla qubit (default: the last qubit).
        shots_per_trajectory:   Measurements drawn from each trajectory state.
        batch_size:             Trajectories simulated together (capped so a batch holds at most 2**24 amplitudes).
        system_labels:          Labels of the non-ancilla qubits.
    Returns:
        A ShotTable of n_shots shots.
    Raises:
        ValueError:  If a count is not positive.
    """
    if n_shots < 1 or shots_per_trajectory < 1 or batch_size < 1:
        raise ValueError("Shot, trajectory and batch counts must be positive.")
    n = circuit.n_qubits
    _check_size(n, MAX_DENSE_QUBITS)
    ancilla_index = n - 1 if ancilla_index is None else ancilla_index
    rotation = basis_rotation(ancilla_basis, ancilla_index)
    locations = noise.locations(circuit)
    labels = tuple(system_labels) if system_labels is not None else ()
    if not locations:
        prepared = Statevector.zero(n).evolve(circuit)
        table = measure_shots(prepared, ancilla_basis, n_shots, seed, ancilla_index, labels or None)
        return table
    batch_size = max(1, min(batch_size, MAX_BATCH_AMPLITUDES >> n))
    first_position = min(location.position for location in locations)
    prefix = Circuit(n, circuit.gates[:first_position])
    start = Statevector.zero(n).evolve(prefix).amplitudes
    n_trajectories = -(-n_shots // shots_per_trajectory)
    chunks = [
        list(range(begin, min(begin + batch_size, n_trajectories)))
        for begin in range(0, n_trajectories, batch_size)
    ]
    logger.debug(
        "Sampling %d trajectories in %d batches on %d qubits", n_trajectories, len(chunks), n
    )
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(NUM_THREADS, 1)) as executor:
        futures = [
            executor.submit(
                _run_trajectory_batch,
                circuit,
                locations,
                start,
                first_position,
                chunk,
                shots_per_trajectory,
                seed,
                rotation,
                ancilla_index,
            )
            for chunk in chunks
        ]
        results = [future.result() for future in futures]
    bits = np.concatenate([r[0] for r in results])[:n_shots]
    outcomes = np.concatenate([r[1] for r in results])[:n_shots]
    return ShotTable(bits, outcomes, ancilla_basis, labels)


def sample_trajectory(circuit: Circuit, noise: NoiseModel, seed: int, ancilla_basis: str = "Z", ancilla_index: int = None) -> ShotRecord:
    """Run one noisy trajectory and return its single shot."""
    table = sample_shots(circuit, noise, 1, seed, ancilla_basis, ancilla_index)
    return next(table.records())
