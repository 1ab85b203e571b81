import math

import numpy as np
import pytest

from config import QUARTER_ANGLE
from nlqc.decompose import decompose_circuit, decompose_swap
from nlqc.errors import LocalityViolationError, SupportError, UnsupportedModelError
from nlqc.lattice import Ring, evolve_model, random_brickwork, tfim_model
from nlqc.protocol import (
    FAULTS,
    implemented_choi,
    pseudo_bulk_choi,
    pseudo_bulk_dynamics,
    run_nlqc,
    swap_spec,
    time_rewind_encoder,
    trace_replace_decoder,
    trace_distance,
)
from nlqc.qcore import choi_distance, random_density, random_state, reduced_density
from nlqc.spread import lr_profile

ENCODERS = (5, 2)
DECODERS = (7, 3)


@pytest.fixture(scope="module")
def brickwork_setup():
    ring = Ring(8)
    model = random_brickwork(ring, 1, seed=4)
    spec = swap_spec(ring, model, ENCODERS, DECODERS)
    return ring, model, spec


def test_pseudo_bulk_matches_brute_force(brickwork_setup):
    ring, model, spec = brickwork_setup
    psi = random_state(4, np.random.default_rng(3))
    tensor = np.zeros(ring.dims, dtype=complex)
    for a in range(2):
        for b in range(2):
            index = [0] * ring.n_sites
            index[ENCODERS[0]], index[ENCODERS[1]] = a, b
            tensor[tuple(index)] = psi[2 * a + b]
    evolved = evolve_model(model, ring).entries @ tensor.reshape(-1)
    expected = reduced_density(evolved, ring.dims, list(DECODERS))
    got = pseudo_bulk_dynamics(spec, np.outer(psi, psi.conj()))
    assert np.allclose(got, expected, atol=1e-10)


def test_circuit_decomposition_run_matches_pseudo_bulk(brickwork_setup):
    ring, model, spec = brickwork_setup
    dec = decompose_circuit(model, ring)
    rng = np.random.default_rng(8)
    for _ in range(10):
        rho = random_density(4, rng)
        run = run_nlqc(spec, dec, rho)
        assert run.audit == []
        assert trace_distance(run.output, pseudo_bulk_dynamics(spec, rho)) <= 1e-9


def test_swap_decomposition_run_matches_pseudo_bulk(brickwork_setup):
    ring, model, spec = brickwork_setup
    dec = decompose_swap(model, ring, truncate=False)
    rho = random_density(4, np.random.default_rng(9))
    run = run_nlqc(spec, dec, rho)
    assert trace_distance(run.output, pseudo_bulk_dynamics(spec, rho)) <= 1e-9


def test_implemented_channel_equals_pseudo_bulk_channel(brickwork_setup):
    ring, model, spec = brickwork_setup
    dec = decompose_circuit(model, ring)
    assert choi_distance(implemented_choi(spec, dec), pseudo_bulk_choi(spec)) <= 1e-9


def test_transcript_has_a_single_exchange(brickwork_setup):
    ring, model, spec = brickwork_setup
    run = run_nlqc(spec, decompose_circuit(model, ring), np.eye(4) / 4)
    records = run.transcript.to_records()
    assert sum(r["operation"] == "exchange" for r in records) == 1
    exchange = next(r for r in records if r["operation"] == "exchange")
    assert not set(exchange["messages"]["Alice"]) & set(exchange["messages"]["Bob"])
    phases = [r["phase"] for r in records]
    assert phases.index("exchange") < len(phases) - 1


@pytest.mark.parametrize("fault", FAULTS)
def test_every_fault_is_detected(brickwork_setup, fault):
    ring, model, spec = brickwork_setup
    dec = decompose_circuit(model, ring)
    with pytest.raises(LocalityViolationError) as info:
        run_nlqc(spec, dec, np.eye(4) / 4, fault=fault)
    assert info.value.event is not None


def test_encoder_outside_its_half_is_rejected():
    ring = Ring(8)
    with pytest.raises(SupportError):
        swap_spec(ring, random_brickwork(ring, 1, seed=0), (1, 2), DECODERS)


def test_rewind_at_zero_time_is_the_plain_swap():
    ring = Ring(8)
    rewound = time_rewind_encoder(tfim_model(ring), ring, 0.0, 5)
    assert rewound.support == (4, 5, 6)
    assert rewound.defect <= 1e-10
    assert rewound.defect_bound == 0.0
    assert rewound.local_map.inputs == ("s4", "s5", "s6", "A")


def test_rewind_defect_is_certified():
    ring = Ring(8)
    model = tfim_model(ring)
    fit = lr_profile(model, ring, [0.05, 0.1, 0.15], [1, 2, 3, 4])
    t = 0.05 * QUARTER_ANGLE
    rewound = time_rewind_encoder(model, ring, t, 5, fit=fit)
    assert rewound.defect <= rewound.defect_bound
    assert math.isfinite(rewound.defect_bound)


def test_rewind_without_fit_is_vacuous_after_zero():
    ring = Ring(8)
    rewound = time_rewind_encoder(tfim_model(ring), ring, 0.05, 5)
    assert rewound.defect_bound == math.inf


def test_rewind_needs_a_hamiltonian():
    ring = Ring(8)
    with pytest.raises(UnsupportedModelError):
        time_rewind_encoder(random_brickwork(ring, 1, seed=0), ring, 0.1, 5)


def test_trace_replace_decoder_outputs_fresh_zero():
    decoder = trace_replace_decoder(3)
    assert decoder.inputs == ("s3",)
    assert decoder.outputs == ("A~",)
    assert decoder.sites == frozenset({3})
    rho = random_density(2, np.random.default_rng(8))
    assert np.allclose(decoder.channel.apply(rho), np.diag([1.0, 0.0]))
