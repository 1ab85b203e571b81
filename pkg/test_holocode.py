import numpy as np
import pytest

from config import QUARTER_ANGLE
from nlqc.errors import AlignmentError, LocalityViolationError, LogicalOperatorError, PreconditionError
from nlqc.holocode import (
    BlockConfig,
    HoloCode,
    build_stack,
    default_stack_config,
    entropy_profile,
    grow_code,
    random_clifford_word,
    run_toy_protocol,
    steane_seed,
    translate_circuit,
    transversal_logical,
)
from nlqc.protocol import FAULTS, Party
from nlqc.stab import PauliOp, conjugate_pauli, gf2_rank, recoverable, validate_code


def test_steane_generators_commute_with_full_rank():
    code = steane_seed()
    for i, s in enumerate(code.stabilizers):
        for t in code.stabilizers[i + 1:]:
            assert s.commutes(t)
    assert gf2_rank(code.stabilizer_matrix()) == 6


def test_transversal_hadamard_swaps_logicals():
    code = steane_seed()
    circuit = [("H", (q,)) for q in range(7)]
    assert conjugate_pauli(code.logical_x[0], circuit) == code.logical_z[0]
    assert conjugate_pauli(code.logical_z[0], circuit) == code.logical_x[0]


def test_transversal_phase_dagger_is_logical_phase():
    code = steane_seed()
    lx, lz = code.logical_x[0], code.logical_z[0]
    y_bar = PauliOp(lx.x, lz.z, 1)
    assert conjugate_pauli(lx, [("SDG", (q,)) for q in range(7)]) == y_bar


def test_transversal_cnot_copies_logical_x():
    code = steane_seed()
    first = code.logical_x[0].embedded(14, range(7))
    second = code.logical_x[0].embedded(14, range(7, 14))
    circuit = [("CNOT", (q, 7 + q)) for q in range(7)]
    assert conjugate_pauli(first, circuit) == first * second


def test_single_block_is_recoverable_on_five_legs():
    holo = HoloCode.build(1)
    assert holo.recoverable_on(range(5))
    assert not holo.recoverable_on(range(2))


def test_two_layer_code_has_one_logical_per_bulk_leg():
    code = grow_code(2)
    assert (code.n, code.k) == (42, 8)
    validate_code(code)
    # logical 0 is the central leg; logical 1 + g hangs off the child whose free legs are 6g..6g+5
    for g in range(7):
        assert recoverable(code, range(6 * g, 6 * g + 6), 1 + g)
    half = range(21)
    assert all(recoverable(code, half, 1 + g) for g in range(3))
    assert not recoverable(code, half, 7)
    assert recoverable(code, range(30), 0)


def test_growth_depth_is_bounded():
    with pytest.raises(PreconditionError):
        grow_code(0)
    with pytest.raises(PreconditionError):
        grow_code(4)


def test_stacked_blocks_are_single_layer():
    with pytest.raises(PreconditionError):
        BlockConfig("left", Party.ALICE, layers=2)


def test_stack_places_blocks_on_their_halves():
    stack = build_stack(default_stack_config(2))
    assert stack.code.k == 2
    assert stack.config.n_qubits == 2 * 64 + 6


def test_translations_stay_below_the_quarter():
    stack = build_stack(default_stack_config(2))
    for block in range(2):
        for direction in ("center-horizontal", "north", "south"):
            _, spread = translate_circuit(stack, block, direction)
            assert spread < QUARTER_ANGLE


def test_entropy_grows_two_bits_per_block():
    profile = entropy_profile(3)
    assert list(profile["blocks"]) == [1, 2, 3]
    assert list(profile["increment"]) == [2, 2, 2]


def test_cnot_on_product_inputs():
    config = default_stack_config(2)
    for inputs in (["0", "0"], ["0", "+"], ["+", "0"], ["+", "+"]):
        run = run_toy_protocol(config, [("CNOT", (0, 1))], inputs=inputs)
        assert run.verdict.passed, run.verdict.failures


@pytest.mark.parametrize("k", [2, 3, 4])
def test_random_clifford_targets_are_reproduced(k):
    config = default_stack_config(k)
    rng = np.random.default_rng(k)
    for _ in range(10):
        word = random_clifford_word(k, 6, rng)
        run = run_toy_protocol(config, word)
        assert run.verdict.passed, run.verdict.failures
        assert run.verdict.checked == 2 * k
        assert run.spread < 2 * QUARTER_ANGLE


def test_transcript_is_json_ready():
    run = run_toy_protocol(default_stack_config(2), [("H", (0,)), ("CNOT", (1, 0))])
    record = run.to_record()
    assert record["verdict"]["passed"]
    assert sum(e["operation"] == "exchange" for e in record["transcript"]) == 1


@pytest.mark.parametrize("fault", FAULTS)
def test_toy_protocol_faults_are_detected(fault):
    with pytest.raises(LocalityViolationError):
        run_toy_protocol(default_stack_config(2), [("CNOT", (0, 1))], fault=fault)


def test_word_on_missing_block_is_rejected():
    with pytest.raises(LogicalOperatorError):
        run_toy_protocol(default_stack_config(2), [("H", (2,))])


def test_unknown_input_label_is_rejected():
    with pytest.raises(PreconditionError):
        run_toy_protocol(default_stack_config(2), [("H", (0,))], inputs=["0", "q"])


def test_transversal_logical_circuits():
    config = default_stack_config(2)
    stack = build_stack(config)
    legs = tuple(config.center_legs)
    phase = transversal_logical(stack, [("S", (0,))])
    assert phase == [("SDG", (config.qubit(0, p),)) for p in legs]
    cnot = transversal_logical(stack, [("CNOT", (0, 1))])
    assert cnot == [("CNOT", (config.qubit(0, p), config.qubit(1, p))) for p in legs]
    with pytest.raises(PreconditionError):
        transversal_logical(stack, [("T", (0,))])
    with pytest.raises(LogicalOperatorError):
        transversal_logical(stack, [("H", (2,))])
    with pytest.raises(AlignmentError):
        transversal_logical(stack, [("H", (0,))], layout=[legs, legs[::-1]])
