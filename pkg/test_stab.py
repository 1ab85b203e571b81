import itertools

import numpy as np
import pytest

from nlqc.errors import CodeStructureError, PreconditionError, SupportError
from nlqc.holocode import steane_seed
from nlqc.stab import (
    PauliOp,
    StabilizerCode,
    Tableau,
    apply_circuit,
    apply_clifford,
    clean_logical,
    code_from_text,
    code_to_text,
    conjugate_pauli,
    erasure_correctable,
    measure,
    measure_pauli,
    mutual_information,
    pauli_expectation,
    recoverable,
    region_entropy,
    restrict_to,
    tableau_to_statevector,
)

H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j])


def _dense_gate(gate, qubits, n):
    if gate == "CNOT":
        c, t = qubits
        dim = 2 ** n
        out = np.zeros((dim, dim), dtype=complex)
        for i in range(dim):
            bits = [(i >> (n - 1 - k)) & 1 for k in range(n)]
            if bits[c]:
                bits[t] ^= 1
            out[int("".join(map(str, bits)), 2), i] = 1
        return out
    local = {"H": H, "S": S}[gate]
    (q,) = qubits
    return np.kron(np.kron(np.eye(2 ** q), local), np.eye(2 ** (n - q - 1)))


def test_pauli_product_matches_matrices():
    for a, b in itertools.product(["XY", "ZI", "YY", "XZ"], repeat=2):
        pa, pb = PauliOp.from_label(a), PauliOp.from_label(b)
        assert np.allclose((pa * pb).to_matrix(), pa.to_matrix() @ pb.to_matrix())


def test_from_label_y_is_hermitian():
    y = PauliOp.from_label("Y")
    assert y.is_hermitian()
    assert np.allclose(y.to_matrix(), [[0, -1j], [1j, 0]])


def test_random_circuit_matches_dense_simulation():
    n = 5
    rng = np.random.default_rng(7)
    circuit = []
    for _ in range(20):
        kind = ["H", "S", "CNOT"][int(rng.integers(3))]
        if kind == "CNOT":
            c, t = rng.choice(n, size=2, replace=False)
            circuit.append(("CNOT", (int(c), int(t))))
        else:
            circuit.append((kind, (int(rng.integers(n)),)))
    tab = apply_circuit(Tableau.zero_state(n), circuit)
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = 1
    for gate, qubits in circuit:
        psi = _dense_gate(gate, qubits, n) @ psi
    for letters in itertools.product("IXYZ", repeat=n):
        op = PauliOp.from_label("".join(letters))
        dense = np.real(np.vdot(psi, op.to_matrix() @ psi))
        assert pauli_expectation(tab, op) == pytest.approx(dense, abs=1e-9)


def test_conjugation_by_hadamard_swaps_x_and_z():
    assert conjugate_pauli(PauliOp.from_label("X"), [("H", (0,))]) == PauliOp.from_label("Z")
    assert conjugate_pauli(PauliOp.from_label("XI"), [("CNOT", (0, 1))]) == PauliOp.from_label("XX")


def test_bell_state_vector():
    tab = apply_circuit(Tableau.zero_state(2), [("H", (0,)), ("CNOT", (0, 1))])
    assert np.allclose(tableau_to_statevector(tab), np.array([1, 0, 0, 1]) / np.sqrt(2))


def test_ghz_mutual_information_is_one_bit():
    tab = apply_circuit(Tableau.zero_state(3), [("H", (0,)), ("CNOT", (0, 1)), ("CNOT", (0, 2))])
    assert region_entropy(tab, [0]) == 1
    assert mutual_information(tab, [0], [1]) == 1


def test_forced_impossible_outcome_is_rejected():
    tab = Tableau.zero_state(1)
    _, bit = measure(tab, 0, forced=0)
    assert bit == 0
    with pytest.raises(PreconditionError):
        measure(tab, 0, forced=1)


def test_steane_logical_cleans_onto_five_qubits():
    code = steane_seed()
    for region in itertools.combinations(range(7), 5):
        rep = clean_logical(code, code.logical("X", 0), region)
        assert rep is not None
        assert set(rep.support) <= set(region)
        assert recoverable(code, region, 0)


def test_steane_logical_does_not_fit_on_two_qubits():
    code = steane_seed()
    assert clean_logical(code, code.logical("Z", 0), [0, 1]) is None
    assert not recoverable(code, [0, 1], 0)


def test_encoded_zero_has_positive_logical_z():
    code = steane_seed()
    assert pauli_expectation(code.encoded_zero(), code.logical("Z", 0)) == 1
    assert pauli_expectation(code.encoded_zero(), code.logical("X", 0)) == 0


def test_anticommuting_stabilizers_are_rejected():
    with pytest.raises(CodeStructureError):
        StabilizerCode(2, (PauliOp.from_label("XI"), PauliOp.from_label("ZI")), (), ())


def test_apply_clifford_returns_a_new_tableau():
    zero = Tableau.zero_state(1)
    plus = apply_clifford(zero, "H", 0)
    assert plus.stabilizers()[0] == PauliOp.from_label("X")
    assert zero.stabilizers()[0] == PauliOp.from_label("Z")
    with pytest.raises(PreconditionError):
        apply_clifford(Tableau.zero_state(2), "CNOT", 0)


def test_code_text_format():
    code = steane_seed()
    text = code_to_text(code)
    assert text.startswith("# steane [[7,1]]")
    assert "LX +XXXXXXX" in text
    parsed = code_from_text(text, "steane")
    assert list(parsed.stabilizers) == list(code.stabilizers)
    assert parsed.logical_z[0] == code.logical_z[0]
    with pytest.raises(PreconditionError):
        code_from_text("# nothing here\n")


def _bell_and_zero():
    return apply_circuit(Tableau.zero_state(3), [("H", (0,)), ("CNOT", (0, 1))])


def test_measure_pauli_on_bell_pair():
    tab = _bell_and_zero()
    _, bit = measure_pauli(tab, PauliOp.from_label("XXI"))
    assert bit == 0
    after, bit = measure_pauli(tab, PauliOp.from_label("ZII"), forced=1)
    assert bit == 1
    assert pauli_expectation(after, PauliOp.from_label("ZII")) == -1
    assert pauli_expectation(after, PauliOp.from_label("ZZI")) == 1
    with pytest.raises(PreconditionError):
        measure_pauli(tab, PauliOp.from_label("+iXII"))


def test_restrict_to_disentangled_qubits():
    tab = _bell_and_zero()
    assert restrict_to(tab, [2]).stabilizers() == [PauliOp.from_label("Z")]
    assert region_entropy(restrict_to(tab, [0, 1]), [0]) == 1
    with pytest.raises(SupportError):
        restrict_to(tab, [0])


def test_erasure_correctable_on_steane():
    code = steane_seed()
    assert erasure_correctable(code, [])
    assert erasure_correctable(code, [0, 3])
    assert not erasure_correctable(code, range(7))
