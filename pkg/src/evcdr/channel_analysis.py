"""
Closed-form echo verification under a Pauli channel.

The channel acts on system plus ancilla right before measurement. An error
A (ancilla) x S (system) leaves, after postselecting the system on |0...0>,
the unnormalized ancilla vector A (c0, c1) with

    c0 = (delta_S + g) / 2,  c1 = (delta_S - g) / 2,
    delta_S = <0|S|0> (1 for Z-type S, else 0),  g = <0|S U^dagger V U|0>,

so that errors with a Z-type system part damp <Z> and <X> while the others
only feed an additive X term. Summing these contributions with the error
rates gives the damping factors Lambda_Z, Lambda_X and the offset Omega_X.

Two versions of the factors are provided. channel_factors uses the bare
error rates. conditioned_channel_factors reweights every error by its
postselection probability, lambda_i p_{0|i} / p0, which makes
predict_expectations agree exactly with density-matrix simulation.
"""

# pylint: disable=C0103,R0914,C0301
from dataclasses import dataclass
from typing import List, NamedTuple, Tuple
import logging
import numpy as np

from evcdr.circuit import Circuit
from evcdr.exceptions import PostselectionError
from evcdr.pauli import PauliString, is_z_type, split
from evcdr.statevector import DensityMatrix, PauliChannel, Statevector, apply_pauli_batch

logger = logging.getLogger(__name__)

# Sign picked up by <X>, <Y>, <Z> of the ancilla under conjugation by each letter.
ANCILLA_SIGNS = {
    "I": (1, 1, 1),
    "X": (1, -1, -1),
    "Y": (-1, 1, -1),
    "Z": (-1, -1, 1),
}


class ChannelFactors(NamedTuple):
    """Damping factors of the ancilla Z and X expectations and the additive X offset."""

    lambda_z: float
    lambda_x: float
    omega_x: float


@dataclass(frozen=True)
class ConditionalPostselection:
    """
    Per-error postselection data.

    rates, ancilla letters, gamma (Gamma_i = <0|U^dagger V U S_i|0>) and
    delta_z are aligned with the channel's listed errors. uniform and
    dimension describe the depolarizing part.
    """

    rates: np.ndarray
    ancilla_letters: Tuple[str, ...]
    gamma: np.ndarray
    delta_z: np.ndarray
    uniform: float
    dimension: int

    @property
    def p_conditional(self) -> np.ndarray:
        """p_{0|i} = (delta_i + |Gamma_i|^2) / 2."""
        return (self.delta_z.astype(float) + np.abs(self.gamma) ** 2) / 2

    @property
    def p0(self) -> float:
        """Overall postselection probability including the depolarizing part."""
        return float(np.dot(self.rates, self.p_conditional) + 2 * self.uniform / self.dimension)


def _ancilla_index(channel: PauliChannel, ancilla_index: int) -> int:
    return channel.n_qubits - 1 if ancilla_index is None else ancilla_index


def _signed_sums(letters, is_z, weights) -> ChannelFactors:
    lambda_z = 0.0
    lambda_x = 0.0
    omega_x = 0.0
    for letter, z_type, weight in zip(letters, is_z, weights):
        sign_x, _, sign_z = ANCILLA_SIGNS[letter]
        if z_type:
            lambda_z += sign_z * weight
            lambda_x += sign_x * weight
        else:
            omega_x += sign_x * weight
    return ChannelFactors(lambda_z, lambda_x, omega_x)


def channel_factors(channel: PauliChannel, ancilla_index: int = None) -> ChannelFactors:
    """
    Lambda_Z, Lambda_X and Omega_X from the bare error rates.

    Errors are grouped by their ancilla letter and by whether the system part
    is Z-type. The depolarizing part of the channel contributes zero to all
    three sums.

    Args:
        channel:        Pauli channel on system plus ancilla.
        ancilla_index:  Ancilla qubit (default: the last qubit).
    Returns:
        ChannelFactors; the identity channel gives (1, 1, 0).

    Example:

    .. code-block:: python

        channel_factors(depolarizing_channel(4, 0.2))   # (0.8, 0.8, 0.0)
    """
    ancilla_index = _ancilla_index(channel, ancilla_index)
    parts = [split(pauli.unsigned(), ancilla_index) for pauli, _ in channel.errors]
    return _signed_sums(
        [part.ancilla_part for part in parts],
        [is_z_type(part.system_part) for part in parts],
        [rate for _, rate in channel.errors],
    )


def _overlaps(channel: PauliChannel, u: Circuit, v: PauliString, ancilla_index: int) -> Tuple[List[str], np.ndarray, np.ndarray]:
    """Ancilla letter, Gamma_i and delta_i^Z for every listed error."""
    n = u.n_qubits
    if channel.n_qubits != n + 1:
        raise ValueError(
            f"Channel on {channel.n_qubits} qubits does not match {n} system qubits plus an ancilla."
        )
    if v.n_qubits != n:
        raise ValueError(f"Observable on {v.n_qubits} qubits does not match {n} system qubits.")
    prepared = Statevector.zero(n).evolve(u)
    observed = apply_pauli_batch(prepared.amplitudes[None, :], v)[0]
    letters = []
    gamma = np.zeros(len(channel.errors), dtype=complex)
    delta_z = np.zeros(len(channel.errors), dtype=bool)
    cache = {}
    for i, (pauli, _) in enumerate(channel.errors):
        part = split(pauli.unsigned(), ancilla_index)
        letters.append(part.ancilla_part)
        system = part.system_part.unsigned()
        delta_z[i] = is_z_type(system)
        key = (system.x_bits, system.z_bits)
        if key not in cache:
            displaced = apply_pauli_batch(Statevector.zero(n).amplitudes[None, :], system)[0]
            moved = Statevector(displaced, n).evolve(u).amplitudes
            cache[key] = complex(np.vdot(observed, moved))
        gamma[i] = cache[key]
    return letters, gamma, delta_z


def conditional_p0(channel: PauliChannel, u: Circuit, v: PauliString, ancilla_index: int = None) -> ConditionalPostselection:
    """
    Postselection probability conditioned on each listed error.

    Gamma_i = <0|U^dagger V U S_i|0> is computed from the noiseless
    statevector of U applied to the error-displaced zero state.
    """
    ancilla_index = _ancilla_index(channel, ancilla_index)
    letters, gamma, delta_z = _overlaps(channel, u, v, ancilla_index)
    return ConditionalPostselection(
        np.array([rate for _, rate in channel.errors]),
        tuple(letters),
        gamma,
        delta_z,
        channel.uniform,
        1 << channel.n_qubits,
    )


def conditioned_channel_factors(channel: PauliChannel, u: Circuit, v: PauliString, ancilla_index: int = None) -> ChannelFactors:
    """
    Factors built from the postselection-conditioned error distribution.

    Each error weight becomes lambda_i p_{0|i} / p0, which accounts for the
    errors that postselection filters out.

    Raises:
        PostselectionError:  If p0 is zero.
    """
    table = conditional_p0(channel, u, v, ancilla_index)
    p0 = table.p0
    if p0 <= 0:
        raise PostselectionError("Postselection probability is zero under this channel.")
    weights = table.rates * table.p_conditional / p0
    return _signed_sums(table.ancilla_letters, table.delta_z, weights)


def predicted_ancilla_state(channel: PauliChannel, u: Circuit, v: PauliString, ancilla_index: int = None) -> DensityMatrix:
    """
    Normalized 2x2 ancilla state after the channel and zero postselection.

    Sums lambda_i A_i rho_i A_i over the listed errors, with rho_i the
    unnormalized state left by the system part, and adds uniform / d times
    the identity for the depolarizing part.

    Raises:
        PostselectionError:  If the postselected weight vanishes.
    """
    ancilla_index = _ancilla_index(channel, ancilla_index)
    letters, gamma, delta_z = _overlaps(channel, u, v, ancilla_index)
    total = np.zeros((2, 2), dtype=complex)
    for (_, rate), letter, overlap, z_type in zip(channel.errors, letters, gamma, delta_z):
        if rate == 0:
            continue
        g = np.conj(overlap)
        vector = np.array([(float(z_type) + g) / 2, (float(z_type) - g) / 2])
        letter_matrix = PauliString.from_label(letter).to_matrix()
        vector = letter_matrix @ vector
        total += rate * np.outer(vector, vector.conj())
    total += channel.uniform / (1 << channel.n_qubits) * np.eye(2)
    weight = float(np.trace(total).real)
    if weight <= 1e-15:
        raise PostselectionError("Postselection annihilates the state under this channel.")
    return DensityMatrix(total / weight, 1)


def predict_expectations(factors: ChannelFactors, v_exact: float) -> Tuple[float, float, float]:
    """
    Ancilla (Tr X rho, Tr Y rho, Tr Z rho) predicted from channel factors.

    Tr Z rho = 2v/(1+v^2) Lambda_Z, Tr X rho = (1-v^2)/(1+v^2) Lambda_X - Omega_X
    and Tr Y rho = 0.

    Example:

    .. code-block:: python

        predict_expectations(ChannelFactors(1, 1, 0), 0.5)   # (0.6, 0.0, 0.8)
    """
    if not -1.0 <= v_exact <= 1.0:
        raise ValueError(f"Expectation value {v_exact} is not in [-1, 1].")
    denominator = 1 + v_exact**2
    tr_z = 2 * v_exact / denominator * factors.lambda_z
    tr_x = (1 - v_exact**2) / denominator * factors.lambda_x - factors.omega_x
    return tr_x, 0.0, tr_z
