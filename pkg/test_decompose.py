import math

import numpy as np
import pytest

from config import QUARTER_ANGLE
from nlqc.decompose import (
    PIECE_ORDER,
    assemble,
    certify_residual,
    decompose_circuit,
    decompose_swap,
    k_groups,
    operator_residual,
    verify_decomposition,
)
from nlqc.errors import SpreadPreconditionError, UnassignableGateError
from nlqc.lattice import BrickworkCircuit, Ring, evolve_model, random_brickwork, tfim_model
from nlqc.spread import LightConeFit, lr_profile


def test_empty_circuit_gives_identity_pieces():
    ring = Ring(8)
    dec = decompose_circuit(BrickworkCircuit(), ring)
    assert dec.measured_residual == 0.0
    for piece in dec.pieces:
        assert np.allclose(piece.operator.entries, np.eye(piece.operator.dim))


def test_depth_one_circuit_regroups_exactly():
    ring = Ring(8)
    spec = random_brickwork(ring, 1, seed=11)
    dec = decompose_circuit(spec, ring)
    assert tuple(p.label for p in dec.pieces) == PIECE_ORDER
    assert not dec.uses_aux_copy
    assert dec.measured_residual <= 1e-10
    u = evolve_model(spec, ring)
    assert np.allclose(assemble(dec).entries, u.entries, atol=1e-10)
    assert verify_decomposition(dec, u, ring, trials=5, seed=0) <= 1e-9


def test_deep_circuit_is_unassignable():
    ring = Ring(8)
    with pytest.raises(UnassignableGateError):
        decompose_circuit(random_brickwork(ring, 3, seed=0), ring)


def test_k_groups_partition_the_ring():
    ring = Ring(8)
    groups = k_groups(ring)
    members = sorted(s for sites in groups.values() for s in sites)
    assert members == list(range(8))


def test_swap_method_is_exact_for_depth_one_on_eight_sites():
    ring = Ring(8)
    spec = random_brickwork(ring, 1, seed=5)
    dec = decompose_swap(spec, ring, truncate=False)
    assert dec.uses_aux_copy
    assert dec.residual_bound == 0.0
    residual = verify_decomposition(dec, evolve_model(spec, ring), ring, trials=20, seed=1)
    assert residual <= 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_circuit_and_swap_methods_agree(seed):
    ring = Ring(8)
    spec = random_brickwork(ring, 1, seed=seed)
    u = evolve_model(spec, ring)
    by_gates = decompose_circuit(spec, ring)
    by_swap = decompose_swap(spec, ring, truncate=False)
    assert verify_decomposition(by_gates, u, ring, trials=5, seed=seed) <= 1e-8
    assert verify_decomposition(by_swap, u, ring, trials=5, seed=seed) <= 1e-8


def test_swap_method_refuses_wide_spread_without_truncation():
    ring = Ring(6)
    with pytest.raises(SpreadPreconditionError):
        decompose_swap(random_brickwork(ring, 1, seed=0), ring, truncate=False)


def test_certificate_is_vacuous_past_the_quarter():
    fit = LightConeFit(1.0, 1.0, 1.0, 0.0)
    assert certify_residual(fit, QUARTER_ANGLE, Ring(6)) == math.inf
    assert certify_residual(fit, 0.0, Ring(6)) == pytest.approx(4 * math.exp(-QUARTER_ANGLE))


def test_truncated_tfim_residual_grows_and_stays_certified():
    ring = Ring(6)
    fit = lr_profile(tfim_model(ring), ring, [0.1, 0.2, 0.3, 0.4], [1, 2, 3])
    residuals = []
    for fraction in (0.3, 0.5):
        spec = tfim_model(ring, time=fraction * QUARTER_ANGLE)
        dec = decompose_swap(spec, ring, truncate=True, fit=fit)
        u = evolve_model(spec, ring)
        residual = operator_residual(dec, u, ring)
        assert residual <= dec.residual_bound
        assert verify_decomposition(dec, u, ring, trials=5, seed=2) <= residual + 1e-12
        residuals.append(residual)
    assert residuals[0] < residuals[1]


def test_manifest_lists_parties_in_piece_order():
    ring = Ring(8)
    dec = decompose_circuit(random_brickwork(ring, 1, seed=2), ring)
    manifest = dec.to_manifest()
    assert [p["label"] for p in manifest["pieces"]] == list(PIECE_ORDER)
    assert [p["party"] for p in manifest["pieces"]] == ["Bob-pre", "Alice-pre", "Bob-post", "Alice-post"]
