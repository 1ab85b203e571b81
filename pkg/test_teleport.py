import math
from collections import Counter

import numpy as np
import pytest

from nlqc.errors import CapExceededError, ClassicalRecordError, DimensionMismatchError, PreconditionError
from nlqc.qcore import random_state
from nlqc.teleport import (
    PortResource,
    bell_basis,
    one_time_pad_check,
    pad_record,
    pauli_labels,
    pbt_average_fidelity,
    pbt_povm,
    pbt_trajectory_fidelity,
    record_joint,
    resolve_chain,
    run_cascade,
    run_pbt,
    teleport_normal,
)


def test_normal_teleportation_outcomes_are_uniform():
    rng = np.random.default_rng(0)
    psi = random_state(2, rng)
    counts = Counter()
    for _ in range(10000):
        out = teleport_normal(psi, rng)
        counts[out.outcome] += 1
        assert out.fidelity == pytest.approx(1.0, abs=1e-10)
    assert set(counts) == set(pauli_labels(1))
    for label in pauli_labels(1):
        assert abs(counts[label] / 10000 - 0.25) <= 0.02


def test_normal_teleportation_keeps_entanglement_with_reference():
    rng = np.random.default_rng(1)
    bell = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    for label in pauli_labels(1):
        out = teleport_normal(bell, rng, forced=label)
        assert out.probability == pytest.approx(0.25)
        assert out.fidelity == pytest.approx(1.0, abs=1e-10)


def test_normal_teleportation_rejects_unnormalized_input():
    with pytest.raises(PreconditionError):
        teleport_normal(np.array([1.0, 1.0]), np.random.default_rng(0))
    with pytest.raises(DimensionMismatchError):
        teleport_normal(np.ones(3) / np.sqrt(3), np.random.default_rng(0))


@pytest.mark.parametrize("n_ports", [1, 2, 4])
def test_pbt_povm_is_complete(n_ports):
    measurement = pbt_povm(n_ports)
    assert len(measurement.elements) == n_ports
    assert measurement.completeness_defect <= 1e-10


def test_pbt_fidelity_grows_with_ports():
    fidelities = [pbt_average_fidelity(n) for n in (1, 2, 4)]
    assert fidelities[0] == pytest.approx(0.5, abs=1e-10)
    assert fidelities[0] < fidelities[1] < fidelities[2] < 1.0


@pytest.mark.parametrize("n_ports", [1, 2, 4])
def test_pbt_trajectories_agree_with_choi(n_ports):
    assert abs(pbt_trajectory_fidelity(n_ports) - pbt_average_fidelity(n_ports)) <= 1e-6


def test_pbt_sampled_trajectories_approach_the_average():
    exact = pbt_average_fidelity(2)
    sampled = pbt_trajectory_fidelity(2, trials=4000, seed=3)
    assert abs(sampled - exact) <= 0.05


def test_run_pbt_single_outcome():
    rng = np.random.default_rng(2)
    resource = PortResource(2)
    out = run_pbt(random_state(2, rng), resource, rng)
    assert out.outcome in (0, 1)
    assert 0.0 <= out.fidelity <= 1.0
    assert np.trace(out.state).real == pytest.approx(1.0)
    with pytest.raises(DimensionMismatchError):
        run_pbt(random_state(2, rng), resource, rng, measurement=pbt_povm(1))


def test_port_resource_limits():
    with pytest.raises(PreconditionError):
        PortResource(0)
    with pytest.raises(CapExceededError):
        PortResource(10)


def test_cascade_single_port_fidelity():
    rng = np.random.default_rng(4)
    report = run_cascade(random_state(2, rng), random_state(2, rng), n_ports=1, seed=4)
    assert report.chain == (0, 0, 0)
    assert report.fidelity == pytest.approx(0.25, abs=1e-9)
    assert report.oracle_fidelity == pytest.approx(0.25, abs=1e-9)
    assert math.prod(report.stage_fidelities.values()) == pytest.approx(report.fidelity, abs=1e-9)


@pytest.mark.parametrize("n_ports", [1, 2])
def test_cascade_resource_has_no_alice_bob_entanglement(n_ports):
    rng = np.random.default_rng(n_ports)
    report = run_cascade(random_state(2, rng), random_state(2, rng), n_ports=n_ports, seed=n_ports)
    assert report.mutual_information_v0_v1 == 0
    assert report.otp_check["x0_x1_correlation_distance"] <= 1e-9
    assert report.otp_check["x0_marginal_distance"] <= 1e-9
    assert 0.0 <= report.fidelity <= 1.0
    assert all(0 <= x < n_ports for x in report.chain)


def test_cascade_without_pad_leaks_the_record():
    rng = np.random.default_rng(6)
    report = run_cascade(random_state(2, rng), random_state(2, rng), n_ports=2, otp=False, seed=6)
    assert report.otp_check["x0_x1_correlation_distance"] > 0.1


def test_one_time_pad_check_values():
    probs = np.array([0.7, 0.3])
    padded = one_time_pad_check(record_joint(probs, np.array([0.5, 0.5])))
    bare = one_time_pad_check(record_joint(probs, np.array([1.0, 0.0])))
    assert padded["x0_marginal_distance"] == pytest.approx(0.0)
    assert padded["x0_x1_correlation_distance"] == pytest.approx(0.0)
    assert bare["x0_x1_correlation_distance"] == pytest.approx(0.5)
    assert bare["x0_marginal_distance"] == pytest.approx(0.2)


def test_deterministic_record_without_pad_fails_the_check():
    check = one_time_pad_check(record_joint(np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])))
    assert check["x0_marginal_distance"] == pytest.approx(2 / 3)
    assert check["x0_x1_correlation_distance"] == pytest.approx(2 / 3)


def test_padded_records_carry_the_shifted_port():
    rng = np.random.default_rng(12)
    psi_a, psi_b = random_state(2, rng), random_state(2, rng)
    keys = []
    for seed in range(10):
        padded = run_cascade(psi_a, psi_b, n_ports=2, otp=True, seed=seed)
        bare = run_cascade(psi_a, psi_b, n_ports=2, otp=False, seed=seed)
        assert padded.chain == bare.chain
        assert padded.fidelity == pytest.approx(bare.fidelity)
        key = padded.records["v0"]["key"]
        keys.append(key)
        assert padded.records["x_regions"]["x1"] == bare.records["x_regions"]["x1"]
        assert padded.records["x_regions"]["x0"] == pad_record(bare.records["x_regions"]["x0"], key, 2)
        assert "v0" not in bare.records
    assert set(keys) == {0, 1}


def test_cascade_rejects_bad_inputs():
    plus = np.ones(2) / np.sqrt(2)
    with pytest.raises(CapExceededError):
        run_cascade(plus, plus, n_ports=4)
    with pytest.raises(DimensionMismatchError):
        run_cascade(np.ones(4) / 2, plus, n_ports=1)


def test_resolve_chain():
    records = {
        "alice": {"ports": [1, 0]},
        "charlie": {"to_alice": 0, "to_bob": [[0, 1], [1, 0]]},
    }
    assert resolve_chain(records, 2) == (0, 1, 1)


@pytest.mark.parametrize(
    "records",
    [
        {"alice": {"ports": [0, 0]}, "charlie": {"to_alice": 0}},
        {"alice": {"ports": [0]}, "charlie": {"to_alice": 0, "to_bob": [[0, 0], [0, 0]]}},
        {"alice": {"ports": [0, 2]}, "charlie": {"to_alice": 0, "to_bob": [[0, 0], [0, 0]]}},
        {"alice": {"ports": [0, 0]}, "charlie": {"to_alice": -1, "to_bob": [[0, 0], [0, 0]]}},
    ],
)
def test_resolve_chain_rejects_bad_records(records):
    with pytest.raises(ClassicalRecordError):
        resolve_chain(records, 2)


@pytest.mark.parametrize("n_a", [1, 2])
def test_bell_basis_is_orthonormal(n_a):
    basis = bell_basis(n_a)
    assert len(basis) == 4 ** n_a
    vectors = np.stack([v for _, v in basis], axis=1)
    assert np.allclose(vectors.conj().T @ vectors, np.eye(4 ** n_a), atol=1e-12)
    assert basis[0][0] == "I" * n_a
