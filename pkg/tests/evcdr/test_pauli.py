"""
Unit test for the pauli.py module
"""

# pylint: disable=C0301,C0103,W0632,W0702,W0101,C0302,W0105,E0401,C0413,R0903,W0613,R0912
import sys
import os
import itertools
import pytest
import numpy as np

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../../src")))

from evcdr.pauli import (
    PauliString,
    all_paulis,
    commutes,
    is_z_type,
    multiply,
    multiply_all,
    split,
)


def test_literals():
    """Test parsing and printing Pauli literals."""

    p = PauliString.from_label("XIZ")
    assert p.n_qubits == 3
    assert p.x_bits == 0b001
    assert p.z_bits == 0b100
    assert p.to_label() == "XIZ"
    assert PauliString.from_label("-ZZ").to_label() == "-ZZ"
    assert PauliString.from_label("iXY").phase == 1j
    assert PauliString.from_label("-iY").phase_exp == 3
    assert PauliString.from_label("+Y").to_label() == "Y"
    with pytest.raises(ValueError):
        PauliString.from_label("XQ")


def test_phase_convention():
    """Test Y = iXZ and the documented products."""

    x = PauliString.from_label("X")
    z = PauliString.from_label("Z")
    assert multiply(x, z).to_label() == "-iY"
    assert multiply(z, x).to_label() == "iY"
    r = PauliString.from_label("XZ") * PauliString.from_label("ZZ")
    assert r.to_label() == "-iYI"
    assert np.allclose(PauliString.from_label("Y").to_matrix(), 1j * x.to_matrix() @ z.to_matrix())


def test_product_matches_matrices():
    """Test the symplectic product against dense matrices on every 2-qubit pair."""

    for p, q in itertools.product(all_paulis(2), repeat=2):
        product = multiply(p, q)
        assert np.allclose(product.to_matrix(), p.to_matrix() @ q.to_matrix())


def test_commutation():
    """Test commutes against the matrix commutator."""

    for p, q in itertools.product(all_paulis(2), repeat=2):
        commutator = p.to_matrix() @ q.to_matrix() - q.to_matrix() @ p.to_matrix()
        assert commutes(p, q) == np.allclose(commutator, 0)
    with pytest.raises(ValueError):
        commutes(PauliString.from_label("X"), PauliString.from_label("XX"))


def test_helpers():
    """Test identity, single, weight, support and little-endian matrices."""

    assert PauliString.identity(3).is_identity()
    y = PauliString.single(3, 1, "Y")
    assert y.to_label() == "IYI"
    assert y.weight() == 1
    assert PauliString.from_label("XIZY").support() == (0, 2, 3)
    z0 = PauliString.from_label("ZI").to_matrix()
    assert np.allclose(np.diag(z0).real, [1, -1, 1, -1])
    assert multiply_all([], 2).is_identity()
    assert multiply_all([PauliString.from_label("XI"), PauliString.from_label("IX")], 2).to_label() == "XX"
    with pytest.raises(ValueError):
        PauliString.single(2, 2, "X")


def test_embed_and_restrict():
    """Test moving strings between registers."""

    p = PauliString.from_label("-XZ")
    embedded = p.embed([3, 1], 4)
    assert embedded.to_label() == "-IZIX"
    assert embedded.restrict([3, 1]).to_label() == "-XZ"
    with pytest.raises(ValueError):
        p.embed([0], 4)


def test_split_and_recombine():
    """Test splitting off the ancilla letter."""

    p = PauliString.from_label("-XZY")
    parts = split(p, 2)
    assert parts.ancilla_part == "Y"
    assert parts.system_part.to_label() == "-XZ"
    assert parts.recombine() == p
    middle = split(p, 1)
    assert middle.ancilla_part == "Z"
    assert middle.recombine() == p
    with pytest.raises(ValueError):
        split(p, 3)


def test_is_z_type():
    """Test the Z-type predicate."""

    assert is_z_type(PauliString.from_label("ZIZ"))
    assert is_z_type(PauliString.identity(2))
    assert not is_z_type(PauliString.from_label("ZY"))
    assert len(all_paulis(2)) == 16


def test_adjoint_and_hermitian():
    """Test phase handling of adjoint and hermiticity."""

    p = PauliString.from_label("iXZ")
    assert not p.is_hermitian()
    assert np.allclose(p.adjoint().to_matrix(), p.to_matrix().conj().T)
    assert p.unsigned().to_label() == "XZ"
    assert PauliString.from_label("-X").is_hermitian()


if __name__ == "__main__":
    pytest.main([__file__])
