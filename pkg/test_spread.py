import numpy as np
import pytest

from config import QUARTER_ANGLE
from nlqc.errors import PreconditionError, UnsupportedModelError
from nlqc.lattice import Region, Ring, evolve_model, field_model, random_brickwork, tfim_model
from nlqc.qcore import DenseOperator, pauli_matrices
from nlqc.spread import (
    CandidateModel,
    DictionaryEntry,
    ModelOracle,
    approximate_spread,
    check_simulation_conditions,
    commutator_grid,
    exact_spread,
    lr_profile,
    nontrivial_sites,
)

P = pauli_matrices()


def _dictionary(ring, declared=None):
    entries = {}
    for site in (0, ring.n_sites // 2):
        for name in ("X", "Z"):
            label = f"{name}{site}"
            where = declared.get(label, [site]) if declared else [site]
            entries[label] = DictionaryEntry(
                DenseOperator((site,), (2,), P[name]), label, Region.from_sites(ring.n_sites, where)
            )
    return entries


def test_depth_one_brickwork_spreads_one_hop():
    ring = Ring(8)
    u = evolve_model(random_brickwork(ring, 1, seed=0), ring)
    assert exact_spread(u, ring) == pytest.approx(QUARTER_ANGLE)


def test_depth_two_brickwork_spreads_two_hops():
    ring = Ring(8)
    u = evolve_model(random_brickwork(ring, 2, seed=0), ring)
    assert exact_spread(u, ring, jobs=2) == pytest.approx(2 * ring.spacing)


def test_single_site_dynamics_do_not_spread():
    ring = Ring(6)
    u = evolve_model(field_model(ring, [0.1 * k for k in range(6)], time=0.7), ring)
    assert exact_spread(u, ring) == 0.0


def test_approximate_spread_with_loose_threshold_is_zero():
    ring = Ring(6)
    u = evolve_model(tfim_model(ring, time=0.3), ring)
    assert approximate_spread(u, ring, eps=2.5) == 0.0
    assert approximate_spread(u, ring, eps=1e-12) >= approximate_spread(u, ring, eps=1e-2)


def test_nontrivial_sites_ignores_identity_factors():
    op = DenseOperator((0, 1, 2), (2, 2, 2), np.kron(np.kron(P["X"], np.eye(2)), P["Z"]))
    assert nontrivial_sites(op) == [0, 2]


def test_lr_profile_requires_hamiltonian():
    ring = Ring(6)
    with pytest.raises(UnsupportedModelError):
        lr_profile(random_brickwork(ring, 1, seed=0), ring, [0.1], [1, 2, 3])


def test_lr_fit_dominates_every_sample():
    ring = Ring(6)
    fit = lr_profile(tfim_model(ring), ring, [0.1, 0.2, 0.3], [1, 2, 3])
    assert fit.b > 0 and fit.v > 0
    for row in fit.samples.itertuples():
        assert row.ratio <= fit.bound(row.t, row.d) * (1 + 1e-9)


def test_identical_models_pass_simulation_check():
    ring = Ring(6)
    spec = tfim_model(ring, field_strength=0.7)
    dictionary = _dictionary(ring)
    candidate = CandidateModel(spec, ring, dictionary)
    reference = ModelOracle(spec, ring, {label: e.operator for label, e in dictionary.items()})
    report = check_simulation_conditions(candidate, reference, 1e-6, 1.0, [0.0, 0.2], 2)
    assert report.passed
    assert report.delta_measured < 1e-10
    assert report.n_correlators == 4 * 2 + 16 * 4


def test_misdeclared_support_is_flagged():
    ring = Ring(6)
    spec = tfim_model(ring)
    dictionary = _dictionary(ring, declared={"X0": [1]})
    candidate = CandidateModel(spec, ring, dictionary)
    reference = ModelOracle(spec, ring, {label: e.operator for label, e in dictionary.items()})
    report = check_simulation_conditions(candidate, reference, 1e-6, 1.0, [0.0], 1)
    assert report.support_failures == ("X0",)
    assert not report.passed


def test_different_field_is_detected():
    ring = Ring(6)
    dictionary = _dictionary(ring)
    candidate = CandidateModel(tfim_model(ring, field_strength=1.0), ring, dictionary)
    reference = ModelOracle(tfim_model(ring, field_strength=0.5), ring, {l: e.operator for l, e in dictionary.items()})
    report = check_simulation_conditions(candidate, reference, 1e-6, 1.0, [0.0, 0.5], 1)
    assert report.delta_measured > 1e-3


def test_times_beyond_horizon_are_rejected():
    ring = Ring(6)
    candidate = CandidateModel(tfim_model(ring), ring, _dictionary(ring))
    with pytest.raises(PreconditionError):
        check_simulation_conditions(candidate, lambda labels, times: 0.0, 1e-2, 0.5, [0.5], 1)


def test_commutator_grid_starts_at_zero_and_is_job_independent():
    ring = Ring(6)
    model = tfim_model(ring)
    grid = commutator_grid(model, ring, [0.0, 0.2], [1, 2])
    assert len(grid) == 2 * 2 * 9
    assert grid[grid["t"] == 0.0]["ratio"].max() <= 1e-12
    assert grid[(grid["t"] == 0.2) & (grid["hops"] == 1)]["ratio"].max() > 0
    threaded = commutator_grid(model, ring, [0.0, 0.2], [1, 2], jobs=2)
    assert list(threaded["probe"]) == list(grid["probe"])
    assert np.allclose(threaded["ratio"], grid["ratio"])
