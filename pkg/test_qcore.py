import numpy as np
import pytest

from nlqc.errors import DimensionMismatchError, NonPositiveError, SingularOperatorError
from nlqc.qcore import (
    Channel,
    channel_distance_bounds,
    DenseOperator,
    StateVector,
    choi_distance,
    embed,
    entropy,
    isometry_channel_distance,
    maximally_entangled,
    partial_trace,
    pauli_matrices,
    polar_unitary,
    random_density,
    schatten_norm,
    swap_matrix,
    twirl,
    von_neumann_entropy,
)

P = pauli_matrices()


def test_support_is_sorted_with_entries_permuted():
    op = DenseOperator((1, 0), (2, 2), np.kron(P["X"], P["Z"]))
    assert op.support == (0, 1)
    assert np.allclose(op.entries, np.kron(P["Z"], P["X"]))


def test_dense_operator_rejects_wrong_size():
    with pytest.raises(DimensionMismatchError):
        DenseOperator((0, 1), (2, 2), np.eye(3))


def test_product_of_disjoint_operators_is_tensor_product():
    a = DenseOperator((0,), (2,), P["X"])
    b = DenseOperator((2,), (2,), P["Z"])
    ab = a @ b
    assert ab.support == (0, 2)
    assert np.allclose(ab.entries, np.kron(P["X"], P["Z"]))


def test_embed_places_identity_on_other_factors():
    op = DenseOperator((1,), (2,), P["Y"])
    full = embed(op, (2, 2, 2))
    assert np.allclose(full.entries, np.kron(np.kron(np.eye(2), P["Y"]), np.eye(2)))


def test_partial_trace_of_product():
    rng = np.random.default_rng(1)
    a = random_density(2, rng)
    b = random_density(3, rng)
    op = DenseOperator((0, 1), (2, 3), np.kron(a, b))
    assert np.allclose(partial_trace(op, [1]).entries, a)
    assert np.allclose(partial_trace(op, [0]).entries, b)


def test_twirl_removes_traceless_part():
    op = DenseOperator((0, 1), (2, 2), np.kron(P["Z"], P["Z"]) + np.eye(4))
    assert np.allclose(twirl(op, [1]).entries, np.eye(4))


def test_polar_unitary_rejects_singular_input():
    with pytest.raises(SingularOperatorError):
        polar_unitary(np.diag([1.0, 0.0]))


def test_channel_must_preserve_trace():
    with pytest.raises(NonPositiveError):
        Channel((2,), (2,), (2 * np.eye(2),))


def test_identity_choi_is_maximally_entangled():
    phi = maximally_entangled(2)
    assert np.allclose(Channel.identity((2,)).choi(), np.outer(phi, phi.conj()))


def test_choi_distance_of_orthogonal_unitaries():
    ident = Channel.identity((2,)).choi()
    flip = Channel.from_unitary(P["X"], (2,)).choi()
    assert choi_distance(ident, flip) == pytest.approx(2.0)
    assert choi_distance(ident, ident) == 0.0


def test_global_phase_has_zero_channel_distance():
    u = swap_matrix(2)
    dist = isometry_channel_distance(u, np.exp(0.3j) * u)
    assert dist.exact == pytest.approx(0.0, abs=1e-12)
    assert dist.bound == pytest.approx(2 * abs(1 - np.exp(0.3j)))


def test_entropy_of_bell_pair_half_is_one_bit():
    state = StateVector((2, 2), maximally_entangled(2))
    assert entropy(state, [0]) == pytest.approx(1.0)
    assert von_neumann_entropy(np.eye(4) / 4) == pytest.approx(2.0)


def test_state_vector_requires_unit_norm():
    with pytest.raises(NonPositiveError):
        StateVector((2,), np.array([1.0, 1.0]))


def test_schatten_norms_of_diagonal_matrix():
    op = np.diag([3.0, -4.0])
    assert schatten_norm(op) == pytest.approx(4.0)
    assert schatten_norm(op, 1) == pytest.approx(7.0)
    assert schatten_norm(op, 2) == pytest.approx(5.0)
    assert schatten_norm(DenseOperator((0,), (2,), op), 1) == pytest.approx(7.0)
    with pytest.raises(ValueError):
        schatten_norm(op, 3)


def test_channel_distance_bounds_sandwich():
    lower, upper = channel_distance_bounds(Channel.identity((2,)), Channel.from_unitary(P["X"], (2,)))
    assert lower == pytest.approx(2.0)
    assert upper == pytest.approx(4.0)
    with pytest.raises(DimensionMismatchError):
        channel_distance_bounds(Channel.identity((2,)), Channel.identity((2, 2)))
