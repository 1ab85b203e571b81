import numpy as np
import pytest

from nlqc.errors import PreconditionError, SupportError
from nlqc.lattice import (
    BrickworkCircuit,
    Gate,
    HamiltonianTerm,
    LocalHamiltonian,
    Region,
    Ring,
    apply_model,
    coarse_grain,
    evolve_model,
    hamiltonian_matrix,
    heisenberg_model,
    quarter_regions,
    model_gate_sites,
    random_brickwork,
    region_distance,
    single_site_ops,
    tfim_model,
)
from nlqc.qcore import pauli_matrices, random_state

P = pauli_matrices()


def test_ring_rejects_odd_or_small_sizes():
    with pytest.raises(PreconditionError):
        Ring(5)
    with pytest.raises(PreconditionError):
        Ring(2)


def test_halves_on_six_sites():
    west, east, north, south = quarter_regions(Ring(6))
    assert west.sites == (3, 4, 5)
    assert east.sites == (0, 1, 2)
    assert north.sites == (0, 1, 5)
    assert south.sites == (2, 3, 4)


def test_region_merges_wrapping_arc():
    region = Region.from_sites(6, [5, 0, 1])
    assert region.arcs == ((5, 8),)
    assert 5 in region and 2 not in region
    assert region.complement().sites == (2, 3, 4)


def test_hops_are_ring_distances():
    ring = Ring(8)
    assert ring.hops(0, 7) == 1
    assert ring.hops(1, 5) == 4
    assert ring.distance(0, 2) == pytest.approx(np.pi / 2)


def test_wraparound_bond_matches_direct_kron():
    ring = Ring(6)
    spec = LocalHamiltonian((HamiltonianTerm((5, 0), np.kron(P["Z"], P["Z"])),))
    expected = np.kron(np.kron(P["Z"], np.eye(16)), P["Z"])
    assert np.allclose(hamiltonian_matrix(spec, ring), expected)


def test_brickwork_evolution_is_unitary():
    ring = Ring(6)
    u = evolve_model(random_brickwork(ring, 2, seed=3), ring)
    assert u.is_unitary()


def test_apply_model_agrees_with_dense_evolution():
    ring = Ring(6)
    spec = tfim_model(ring, time=0.4)
    psi = random_state(ring.dim, np.random.default_rng(0))
    assert np.allclose(apply_model(spec, ring, psi), evolve_model(spec, ring).entries @ psi, atol=1e-10)


def test_non_neighbour_gate_is_rejected():
    ring = Ring(6)
    spec = BrickworkCircuit(((Gate((0, 2), np.eye(4)),),))
    with pytest.raises(SupportError):
        evolve_model(spec, ring)


def test_coarse_grain_averages_over_block():
    op = coarse_grain(P["Z"], 1, 2, Ring(8))
    assert op.support == (2, 3)
    assert np.allclose(op.entries, (np.kron(P["Z"], np.eye(2)) + np.kron(np.eye(2), P["Z"])) / 2)


def test_region_distance_on_eight_sites():
    ring = Ring(8)
    west, east, _, _ = quarter_regions(ring)
    assert region_distance(ring, west, east) == pytest.approx(ring.spacing)
    first = Region.from_sites(8, [0])
    opposite = Region.from_sites(8, [4])
    assert region_distance(ring, first, opposite) == pytest.approx(np.pi)
    with pytest.raises(SupportError):
        region_distance(ring, first, Region.from_sites(8, []))


def test_single_site_ops_exclude_identity():
    assert [name for name, _ in single_site_ops(2)] == ["X", "Y", "Z"]
    qutrit = single_site_ops(3)
    assert len(qutrit) == 8
    for _, op in qutrit:
        assert np.allclose(op @ op.conj().T, np.eye(3))
        assert abs(np.trace(op)) < 1e-12


def test_model_gate_sites_follow_the_brick_pattern():
    circuit = random_brickwork(Ring(6), 2, seed=0)
    assert model_gate_sites(circuit) == [(0, 1), (2, 3), (4, 5), (1, 2), (3, 4), (5, 0)]


def test_heisenberg_dynamics_conserve_magnetization():
    ring = Ring(4)
    u = evolve_model(heisenberg_model(ring, time=0.7), ring).entries
    total_z = sum(
        np.kron(np.kron(np.eye(2 ** k), P["Z"]), np.eye(2 ** (3 - k))) for k in range(4)
    )
    assert np.allclose(u @ total_z, total_z @ u, atol=1e-10)
    with pytest.raises(PreconditionError):
        heisenberg_model(Ring(4, 3))
