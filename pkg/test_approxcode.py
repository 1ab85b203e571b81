import math

import numpy as np
import pytest

from nlqc.approxcode import (
    CorrelationOracle,
    ExcitationModel,
    build_isometry,
    codespace_commutator,
    compose_certificate,
    dynamical_duality_defect,
    end_to_end_certificate,
    eta_sweep,
    intertwiner_defect,
    isometry_channel_bound,
    oracle_from_model,
    polish_isometry,
    reconstruct_unitary,
    steane_model,
    trivial_model,
)
from nlqc.errors import (
    CertificateInputError,
    IsometryDefectError,
    MissingCorrelatorError,
    OracleSanityError,
    PreconditionError,
)
from nlqc.qcore import DenseOperator, generalized_paulis, haar_unitary, operator_norm


def test_steane_code_without_leak_is_exact():
    model = steane_model(0.0)
    iso = build_isometry(model)
    x_l, _ = generalized_paulis(2)
    assert iso.matrix.shape == (128, 2)
    assert iso.defect <= 1e-10
    assert intertwiner_defect(iso, model.excitation, x_l) <= 1e-10


def test_leak_sets_defect_and_intertwiner():
    eta = 1e-3
    model = steane_model(eta, seed=3)
    iso = build_isometry(model)
    x_l, _ = generalized_paulis(2)
    assert iso.defect == pytest.approx(eta, rel=1e-6)
    inter = intertwiner_defect(iso, model.excitation, x_l)
    # rank one: sqrt(eta) (l - X_P l) on both logical columns
    assert inter <= 2 * math.sqrt(2 * eta) + 1e-12
    assert inter > 0


def test_eta_sweep_slopes():
    sweep = eta_sweep([1e-2, 1e-3, 1e-4], [0, 1, 2])
    assert len(sweep.table) == 9
    assert 0.9 <= sweep.slopes["defect"] <= 1.1
    assert 0.35 <= sweep.slopes["intertwiner"] <= 0.65
    assert 0.9 <= sweep.slopes["polish_vs_defect"] <= 1.1
    record = sweep.to_record()
    assert len(record["samples"]) == 9


def test_polish_isometry_restores_orthonormality():
    iso = build_isometry(steane_model(1e-2, seed=1))
    polished = polish_isometry(iso)
    assert polished.defect <= 1e-12
    assert operator_norm(polished.matrix - iso.matrix) <= 2 * iso.defect + 1e-12


def test_dependent_images_are_rejected():
    ref = np.array([1.0, 0.0, 0.0])
    model = ExcitationModel(np.eye(3), ref, 2)
    with pytest.raises(IsometryDefectError):
        build_isometry(model)


def test_oracle_path_matches_the_trivial_code():
    oracle = oracle_from_model(trivial_model(3))
    iso = build_isometry(oracle, logical_dim=3)
    assert iso.source == "oracle"
    assert np.allclose(iso.matrix, np.eye(3), atol=1e-12)


def test_noisy_oracle_defect_tracks_eta():
    eta = 1e-3
    oracle = oracle_from_model(trivial_model(3), eta=eta, seed=5)
    iso = build_isometry(oracle, logical_dim=3)
    assert iso.defect <= 3 * eta + 1e-12


def test_oracle_path_needs_logical_dim():
    with pytest.raises(PreconditionError):
        build_isometry(oracle_from_model(trivial_model(2)))


def test_oracle_rejects_bad_requests():
    oracle = oracle_from_model(trivial_model(2), max_length=2)
    with pytest.raises(PreconditionError):
        oracle(["X0"], [0.0, 1.0])
    with pytest.raises(PreconditionError):
        oracle(["X0", "X1", "X1"], [0.0, 0.0, 0.0])
    with pytest.raises(MissingCorrelatorError):
        oracle(["Y7"], [0.0])


def test_oracle_sanity_ceiling():
    oracle = CorrelationOracle(lambda labels, times: 5.0, eta=0.0, max_length=2)
    with pytest.raises(OracleSanityError):
        oracle(["X0"], [0.0])
    with pytest.raises(PreconditionError):
        CorrelationOracle(lambda labels, times: 0.0, eta=-1.0, max_length=2)


def test_reconstruct_unitary_returns_polar_factor():
    rng = np.random.default_rng(7)
    u = haar_unitary(4, rng)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    p = g @ g.conj().T + np.eye(4)
    assert np.allclose(reconstruct_unitary(u @ p), u, atol=1e-10)


def test_reconstruct_unitary_on_singular_dense_operator():
    entries = np.zeros((4, 4), dtype=complex)
    entries[0, 0] = 2.0
    out = reconstruct_unitary(DenseOperator((0, 1), (2, 2), entries))
    assert isinstance(out, DenseOperator)
    assert out.support == (0, 1)
    assert np.allclose(out.entries.conj().T @ out.entries, np.eye(4), atol=1e-10)
    assert out.entries[0, 0] == pytest.approx(1.0)


def test_compose_certificate_sums_terms():
    cert = compose_certificate(1e-3, 2e-3, 3e-3, 4e-3)
    assert cert.total == pytest.approx(1e-2)
    assert cert.parametric is None


def test_compose_certificate_parametric_form():
    cert = compose_certificate(0, 0, 0, 0, g_n=0.04, delta=0.01, a=2.0, b=1.0, delta_tau=0.0, c_sim=2.0)
    assert cert.parametric == pytest.approx(0.2 + 0.2 + 2.0)
    assert cert.params["g_n"] == 0.04
    assert cert.constants["c_sim"] == 2.0


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(eps_enc=-1e-3, eps_rec=0, eps_dyn=0, eps_spread=0),
        dict(eps_enc=0, eps_rec=float("nan"), eps_dyn=0, eps_spread=0),
        dict(eps_enc=0, eps_rec=0, eps_dyn=0, eps_spread=0, g_n=0.1),
        dict(eps_enc=0, eps_rec=0, eps_dyn=0, eps_spread=0, g_n=0.1, delta=0.1, a=1, b=1, delta_tau=-1),
    ],
)
def test_compose_certificate_rejects_bad_inputs(kwargs):
    with pytest.raises(CertificateInputError):
        compose_certificate(**kwargs)


@pytest.mark.parametrize("seed", range(5))
def test_end_to_end_certificate_dominates(seed):
    report = end_to_end_certificate(seed)
    assert report.dominated
    assert report.measured > 0
    record = report.to_record()
    assert record["dominated"] is True
    assert record["certificate"]["total"] >= record["measured_choi_distance"]


def test_codespace_commutator_of_steane_logicals():
    model = steane_model(0.0)
    iso = build_isometry(model)
    assert codespace_commutator(iso, [model.excitation, model.phase_op]) <= 1e-10
    single_x = np.kron(np.array([[0, 1], [1, 0]]), np.eye(64))
    assert codespace_commutator(iso, [single_x]) > 0.5


def test_isometry_channel_bound_is_twice_the_operator_distance():
    rng = np.random.default_rng(9)
    u = haar_unitary(4, rng)
    assert isometry_channel_bound(u, u) == pytest.approx(0.0, abs=1e-12)
    v = u @ np.diag([1, 1, 1, -1])
    assert isometry_channel_bound(u, v) == pytest.approx(4.0)


def test_dynamical_duality_defect():
    rng = np.random.default_rng(10)
    u = haar_unitary(4, rng)
    v0 = np.eye(4)[:, :2]
    gamma = haar_unitary(2, rng)
    v_tau = u @ v0 @ gamma.conj().T
    assert dynamical_duality_defect(u, v0, v_tau, gamma) <= 1e-12
    assert dynamical_duality_defect(u, v0, v0, np.eye(2)) > 0
