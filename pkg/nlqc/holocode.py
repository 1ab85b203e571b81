"""Stacked Steane-seeded codes on a ring, their translations and the Clifford protocol.

Every block is a copy of the ring: qubit ``block * n_positions + position``.
Per-party registers (input, reference, output) follow the blocks.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import DEFAULT_JOBS, QUARTER_ANGLE
from nlqc.decompose import assign_stages
from nlqc.errors import (
    AlignmentError,
    GeometryError,
    InsufficientAncillaError,
    LogicalOperatorError,
    PreconditionError,
    VerificationFailure,
)
from nlqc.lattice import Ring, named_regions
from nlqc.protocol import FAULTS, POST_HALF, PRE_HALF, LocalityHarness, Party, RegisterLayout, Transcript, audit_transcript, site_register
from nlqc.stab import (
    Gate,
    PauliOp,
    StabilizerCode,
    Tableau,
    apply_circuit,
    clean_logical,
    code_from_state,
    conjugate_pauli,
    contract,
    from_stabilizers,
    pauli_expectations,
    recoverable,
    region_entropy,
)

logger = logging.getLogger(__name__)

STEANE_SUPPORTS = ((0, 3, 5, 6), (1, 3, 4, 6), (2, 4, 5, 6))
MAX_LAYERS = 3
DEFAULT_CENTER_LEGS = (0, 15, 16, 31, 32, 47, 63)
DEFAULT_TRANSLATIONS = {
    "west": ((0, 62), (31, 33)),
    "east": ((63, 1),),
    "north": ((16, 14), (47, 49)),
    "south": ((15, 17),),
}
DEFAULT_ANCILLAS = (62, 33, 1, 14, 49, 17)
OFFSET_TRANSLATION = {"left": "west", "right": "east"}
OUTPUT_TRANSLATION = {Party.ALICE: "north", Party.BOB: "south"}
DIRECTIONS = ("center-horizontal", "north", "south")
PRODUCT_LABELS = {"0": "+Z", "1": "-Z", "+": "+X", "-": "-X", "+i": "+Y", "-i": "-Y"}
PREPARE_LABEL = {
    "0": (),
    "1": ("X",),
    "+": ("H",),
    "-": ("X", "H"),
    "+i": ("H", "S"),
    "-i": ("H", "SDG"),
}
LOGICAL_GATES = {"H": 1, "S": 1, "SDG": 1, "X": 1, "Y": 1, "Z": 1, "CNOT": 2, "CX": 2, "CZ": 2}


# ---------------------------------------------------------------- codes

def steane_seed() -> StabilizerCode:
    stabs = []
    for letter in "XZ":
        for support in STEANE_SUPPORTS:
            stabs.append(PauliOp.on(7, {q: letter for q in support}))
    lx = PauliOp.on(7, {q: "X" for q in range(7)})
    lz = PauliOp.on(7, {q: "Z" for q in range(7)})
    return StabilizerCode(7, tuple(stabs), (lx,), (lz,), "steane")


def steane_choi_state() -> Tableau:
    """Eight-leg tensor: leg 0 is the bulk input, legs 1..7 the physical qubits."""
    code = steane_seed()
    legs = list(range(1, 8))
    gens = [s.embedded(8, legs) for s in code.stabilizers]
    gens.append(PauliOp.single(8, 0, "X") * code.logical_x[0].embedded(8, legs))
    gens.append(PauliOp.single(8, 0, "Z") * code.logical_z[0].embedded(8, legs))
    return from_stabilizers(gens)


def grow_code(layers: int) -> StabilizerCode:
    """Each boundary leg of the previous layer feeds one physical leg of a fresh Steane tensor."""
    if layers < 1 or layers > MAX_LAYERS:
        raise PreconditionError(f"layers must be in [1, {MAX_LAYERS}], got {layers}")
    if layers == 1:
        return steane_seed()
    state = steane_choi_state()
    labels: List[str] = ["bulk"] + ["boundary"] * 7
    seed = steane_choi_state()
    for _ in range(layers - 1):
        frontier = [i for i, lab in enumerate(labels) if lab == "boundary"]
        # contract from the highest index so earlier indices stay valid
        for leg in reversed(frontier):
            state = contract(state, seed, leg, 1)
            labels = labels[:leg] + labels[leg + 1:] + ["bulk"] + ["new"] * 6
        labels = ["boundary" if lab == "new" else lab for lab in labels]
    bulk = [i for i, lab in enumerate(labels) if lab == "bulk"]
    code = code_from_state(state, bulk, name=f"holographic-{layers}")
    logger.info(f"Grew a {layers}-layer code [[{code.n},{code.k}]]")
    return code


@dataclass(frozen=True)
class HoloCode:
    layers: int
    boundary: Tuple[int, ...]
    code: StabilizerCode = field(repr=False)
    marked: int = 0

    def __post_init__(self):
        if len(self.boundary) != self.code.n:
            raise GeometryError(-1, "-", f"{len(self.boundary)} boundary sites for a code on {self.code.n} qubits")
        if list(self.boundary) != sorted(self.boundary):
            raise GeometryError(-1, "-", f"Boundary sites {self.boundary} are not in angular order")
        if not 0 <= self.marked < self.code.k:
            raise LogicalOperatorError(f"Marked logical {self.marked} out of range for k={self.code.k}")

    @classmethod
    def build(cls, layers: int, boundary: Optional[Sequence[int]] = None) -> "HoloCode":
        code = grow_code(layers)
        boundary = tuple(boundary) if boundary is not None else tuple(range(code.n))
        return cls(layers, boundary, code, 0)

    def recoverable_on(self, sites: Sequence[int]) -> bool:
        legs = [i for i, s in enumerate(self.boundary) if s in set(sites)]
        return recoverable(self.code, legs, self.marked)


# ---------------------------------------------------------------- stack geometry

@dataclass(frozen=True)
class BlockConfig:
    offset: str
    party: Party
    layers: int = 1

    def __post_init__(self):
        if self.offset not in OFFSET_TRANSLATION:
            raise PreconditionError(f"Block offset must be 'left' or 'right', got {self.offset!r}")
        # the ring layout has one position per leg of a single Steane tensor
        if self.layers != 1:
            raise PreconditionError(f"Stacked blocks are single-layer codes, got layers={self.layers}")


@dataclass(frozen=True)
class StackConfig:
    blocks: Tuple[BlockConfig, ...]
    n_positions: int = 64
    center_legs: Tuple[int, ...] = DEFAULT_CENTER_LEGS
    translations: Dict[str, Tuple[Tuple[int, int], ...]] = field(default_factory=lambda: dict(DEFAULT_TRANSLATIONS))
    ancillas: Tuple[int, ...] = DEFAULT_ANCILLAS

    def __post_init__(self):
        if not self.blocks:
            raise PreconditionError("A stack needs at least one block")
        if self.n_positions % 4:
            raise GeometryError(-1, "-", f"{self.n_positions} positions is not divisible by 4")

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def n_qubits(self) -> int:
        return self.k * self.n_positions + 3 * self.k

    def qubit(self, block: int, position: int) -> int:
        return block * self.n_positions + position

    def register(self, kind: str, block: int) -> int:
        return self.k * self.n_positions + 3 * block + ("in", "ref", "out").index(kind)


def default_stack_config(n_blocks: int, n_positions: int = 64) -> StackConfig:
    """Even blocks belong to Alice and start left; odd blocks to Bob and start right."""
    blocks = tuple(
        BlockConfig("left", Party.ALICE) if b % 2 == 0 else BlockConfig("right", Party.BOB) for b in range(n_blocks)
    )
    return StackConfig(blocks, n_positions)


def apply_layout(positions: Sequence[int], pairs: Sequence[Tuple[int, int]]) -> Tuple[int, ...]:
    """Move legs through a list of position swaps."""
    swap = {}
    for a, b in pairs:
        swap[a], swap[b] = b, a
    return tuple(swap.get(p, p) for p in positions)


def _ring(config: StackConfig) -> Ring:
    return Ring(config.n_positions)


def _translation(config: StackConfig, name: str) -> Tuple[Tuple[int, int], ...]:
    pairs = config.translations.get(name)
    if pairs is None:
        raise InsufficientAncillaError(f"No {name} translation configured")
    for leg, target in pairs:
        if leg not in config.center_legs:
            raise GeometryError(-1, name, f"Translation pair ({leg}, {target}) does not start on a center leg")
        if target not in config.ancillas:
            raise InsufficientAncillaError(f"{name} translation needs ancilla position {target}, budget {config.ancillas}")
    return pairs


def _ring_spread(config: StackConfig, pairs: Sequence[Tuple[int, int]]) -> float:
    ring = _ring(config)
    return max((ring.distance(a, b) for a, b in pairs), default=0.0)


@dataclass
class Stack:
    config: StackConfig
    tableau: Tableau
    code: StabilizerCode = field(repr=False)
    block_codes: Tuple[HoloCode, ...] = ()
    positions: List[Tuple[int, ...]] = field(default_factory=list)

    def legs(self, block: int, positions: Optional[Sequence[int]] = None) -> List[int]:
        positions = self.positions[block] if positions is None else positions
        return [self.config.qubit(block, p) for p in positions]


def _half_sites(config: StackConfig, half: str) -> Tuple[int, ...]:
    return named_regions(_ring(config))[half].sites


def _check_geometry(stack: Stack, block: int, positions: Sequence[int], own: str, opposite: str) -> None:
    holo = stack.block_codes[block]
    placed = HoloCode(holo.layers, tuple(sorted(positions)), _reorder(holo.code, positions), holo.marked)
    if not placed.recoverable_on(_half_sites(stack.config, own)):
        raise GeometryError(block, own, f"Block {block} is not recoverable on {own} at positions {tuple(positions)}")
    if placed.recoverable_on(_half_sites(stack.config, opposite)):
        raise GeometryError(block, opposite, f"Block {block} is also recoverable on {opposite}")


def _reorder(code: StabilizerCode, positions: Sequence[int]) -> StabilizerCode:
    """Relabel legs so they follow angular order of their positions."""
    order = sorted(range(len(positions)), key=lambda i: positions[i])
    rank = [0] * len(positions)
    for new, old in enumerate(order):
        rank[old] = new
    return code.relabeled(rank, code.n)


OPPOSITE = {"W": "E", "E": "W", "N": "S", "S": "N"}


def build_stack(config: StackConfig) -> Stack:
    """Encoded |0> blocks at their offset positions, everything else in |0>."""
    block_codes = []
    tableaus = []
    positions = []
    for b, block in enumerate(config.blocks):
        holo = HoloCode.build(block.layers, tuple(range(len(config.center_legs))))
        if holo.code.n != len(config.center_legs):
            raise GeometryError(b, "-", f"{holo.code.n}-leg block does not fit {len(config.center_legs)} center legs")
        start = apply_layout(config.center_legs, _translation(config, OFFSET_TRANSLATION[block.offset]))
        legs = list(start)
        gens = [s.embedded(config.n_positions, legs) for s in holo.code.stabilizers]
        gens += [l.embedded(config.n_positions, legs) for l in holo.code.logical_z]
        gens += [PauliOp.single(config.n_positions, p, "Z") for p in range(config.n_positions) if p not in set(legs)]
        tableaus.append(from_stabilizers(gens))
        block_codes.append(holo)
        positions.append(start)
    tableaus.append(Tableau.zero_state(3 * config.k))
    tableau = Tableau.direct_sum(tableaus)

    n = config.n_qubits
    stabs, lx, lz = [], [], []
    for b, holo in enumerate(block_codes):
        legs = [config.qubit(b, p) for p in positions[b]]
        stabs += [s.embedded(n, legs) for s in holo.code.stabilizers]
        lx.append(holo.code.logical_x[holo.marked].embedded(n, legs))
        lz.append(holo.code.logical_z[holo.marked].embedded(n, legs))
        occupied = set(legs)
        stabs += [PauliOp.single(n, q, "Z") for q in range(b * config.n_positions, (b + 1) * config.n_positions) if q not in occupied]
    stabs += [PauliOp.single(n, q, "Z") for q in range(config.k * config.n_positions, n)]
    code = StabilizerCode(n, tuple(stabs), tuple(lx), tuple(lz), "stack")

    stack = Stack(config, tableau, code, tuple(block_codes), positions)
    for b, block in enumerate(config.blocks):
        half = PRE_HALF[block.party]
        _check_geometry(stack, b, positions[b], half, OPPOSITE[half])
    logger.info(f"Built a stack of {config.k} blocks on {n} qubits")
    return stack


def translate_circuit(stack: Stack, block: int, direction: str) -> Tuple[List[Gate], float]:
    """SWAP network for one block; the same network undoes itself."""
    if direction not in DIRECTIONS:
        raise PreconditionError(f"Unknown direction {direction!r}; expected one of {DIRECTIONS}")
    if not 0 <= block < stack.config.k:
        raise GeometryError(block, "-", f"No block {block}")
    if direction == "center-horizontal":
        name = OFFSET_TRANSLATION[stack.config.blocks[block].offset]
    else:
        name = direction
    pairs = _translation(stack.config, name)
    circuit = [("SWAP", (stack.config.qubit(block, a), stack.config.qubit(block, b))) for a, b in pairs]
    spread = _ring_spread(stack.config, pairs)
    if spread >= QUARTER_ANGLE:
        raise GeometryError(block, name, f"Translation spreads {spread:.4f} >= 2pi/8")
    return circuit, spread


def circuit_spread(circuit: Sequence[Gate], n_positions: int) -> float:
    """Largest angular distance any qubit's information travels through the circuit."""
    ring = Ring(n_positions)
    influence: Dict[int, set] = {}
    for _, qubits in circuit:
        merged = set()
        for q in qubits:
            merged |= influence.get(q, {q})
        for q in qubits:
            influence[q] = set(merged)
    worst = 0.0
    for q, sources in influence.items():
        for s in sources:
            worst = max(worst, ring.distance(q % n_positions, s % n_positions))
    return worst


def transversal_logical(stack: Stack, word: Sequence[Gate], layout: Optional[Sequence[Sequence[int]]] = None) -> List[Gate]:
    """Physical transversal circuit for a Clifford word on the blocks' marked logicals."""
    config = stack.config
    layout = [tuple(config.center_legs)] * config.k if layout is None else [tuple(p) for p in layout]
    if any(p != layout[0] for p in layout):
        raise AlignmentError(f"Blocks are not aligned: {layout}")
    circuit: List[Gate] = []
    for gate, blocks in word:
        blocks = tuple(blocks)
        if gate not in LOGICAL_GATES or LOGICAL_GATES[gate] != len(blocks):
            raise PreconditionError(f"Unsupported logical gate {gate}{blocks}")
        if any(b < 0 or b >= config.k for b in blocks):
            raise LogicalOperatorError(f"Logical gate {gate}{blocks} addresses a missing block")
        if len(blocks) == 1:
            # (S^dag)^{x7} is logical S on the Steane block
            physical = {"S": "SDG", "SDG": "S"}.get(gate, gate)
            circuit += [(physical, (config.qubit(blocks[0], p),)) for p in layout[blocks[0]]]
        else:
            a, b = blocks
            physical = "CNOT" if gate in ("CNOT", "CX") else "CZ"
            circuit += [(physical, (config.qubit(a, p), config.qubit(b, p))) for p in layout[a]]
    return circuit


# ---------------------------------------------------------------- logical swaps

def controlled_pauli(control: int, op: PauliOp, qubits: Sequence[int]) -> List[Gate]:
    """Controlled-P with P given on ``qubits`` (its local indices map onto them)."""
    if not op.is_hermitian():
        raise LogicalOperatorError(f"Cannot control non-hermitian {op.label()}")
    gates: List[Gate] = []
    for local in op.support:
        letter = op.letters()[local]
        gates.append(({"X": "CNOT", "Z": "CZ", "Y": "CY"}[letter], (control, qubits[local])))
    if op.sign == -1:
        gates.append(("Z", (control,)))
    return gates


def logical_swap(register: int, x_rep: PauliOp, z_rep: PauliOp, qubits: Sequence[int]) -> List[Gate]:
    """SWAP between a register qubit and a logical given by cleaned representatives."""
    cx = controlled_pauli(register, x_rep, qubits)
    cz = controlled_pauli(register, z_rep, qubits)
    return cx + [("H", (register,))] + cz + [("H", (register,))] + cx


def _cleaned(stack: Stack, block: int, positions: Sequence[int], half: str) -> Tuple[PauliOp, PauliOp]:
    holo = stack.block_codes[block]
    region = [i for i, p in enumerate(positions) if p in set(_half_sites(stack.config, half))]
    x_rep = clean_logical(holo.code, holo.code.logical_x[holo.marked], region)
    z_rep = clean_logical(holo.code, holo.code.logical_z[holo.marked], region)
    if x_rep is None or z_rep is None:
        raise GeometryError(block, half, f"Block {block} logical has no representative on {half}")
    return x_rep, z_rep


def encode_logical(stack: Stack, block: int, half: Optional[str] = None) -> List[Gate]:
    """Swap the block's input register into its marked logical using legs in ``half``."""
    half = half or PRE_HALF[stack.config.blocks[block].party]
    positions = stack.positions[block]
    x_rep, z_rep = _cleaned(stack, block, positions, half)
    return logical_swap(stack.config.register("in", block), x_rep, z_rep, stack.legs(block, positions))


def decode_logical(stack: Stack, block: int, positions: Sequence[int], half: Optional[str] = None) -> List[Gate]:
    half = half or POST_HALF[stack.config.blocks[block].party]
    x_rep, z_rep = _cleaned(stack, block, positions, half)
    return logical_swap(stack.config.register("out", block), x_rep, z_rep, stack.legs(block, positions))


def entropy_profile(k_max: int, n_positions: int = 64) -> pd.DataFrame:
    """Entropy across the W|E cut of k = 1..k_max stacked resource blocks."""
    rows = []
    previous = 0
    for k in range(1, k_max + 1):
        config = default_stack_config(k, n_positions)
        stack = build_stack(config)
        west = _half_sites(config, "W")
        region = [config.qubit(b, p) for b in range(k) for p in west]
        value = region_entropy(stack.tableau, region)
        rows.append({"blocks": k, "entropy_bits": value, "increment": value - previous})
        previous = value
    return pd.DataFrame(rows)


# ---------------------------------------------------------------- protocol run

@dataclass
class ToyVerdict:
    passed: bool
    checked: int
    failures: List[str] = field(default_factory=list)

    def to_record(self) -> Dict:
        return {"passed": self.passed, "checked": self.checked, "failures": list(self.failures)}


@dataclass
class ToyRun:
    transcript: Transcript
    verdict: ToyVerdict
    stage_counts: Dict[str, int]
    spread: float
    final_positions: List[Tuple[int, ...]]

    def to_record(self) -> Dict:
        return {
            "verdict": self.verdict.to_record(),
            "stage_counts": dict(self.stage_counts),
            "spread": self.spread,
            "final_positions": [list(p) for p in self.final_positions],
            "transcript": self.transcript.to_records(),
        }


def _register_name(config: StackConfig, qubit: int) -> str:
    if qubit < config.k * config.n_positions:
        return site_register(qubit % config.n_positions)
    offset = qubit - config.k * config.n_positions
    return f"{('in', 'ref', 'out')[offset % 3]}{offset // 3}"


def _names(config: StackConfig, circuit: Sequence[Gate]) -> List[str]:
    return sorted({_register_name(config, q) for _, qubits in circuit for q in qubits})


def _check_word(word: Sequence[Gate], k: int) -> None:
    for gate, blocks in word:
        if gate not in LOGICAL_GATES or LOGICAL_GATES[gate] != len(tuple(blocks)):
            raise PreconditionError(f"Unsupported logical gate {gate}{tuple(blocks)}")
        if any(b < 0 or b >= k for b in blocks):
            raise LogicalOperatorError(f"Logical gate {gate}{tuple(blocks)} addresses a missing block")


def _on_outputs(config: StackConfig, word: Sequence[Gate]) -> List[Gate]:
    return [(gate, tuple(config.register("out", b) for b in blocks)) for gate, blocks in word]


def _expected_generators(config: StackConfig, word: Sequence[Gate], inputs: Optional[Sequence[str]]) -> List[PauliOp]:
    n = config.n_qubits
    out = _on_outputs(config, word)
    gens = []
    for b in range(config.k):
        o = config.register("out", b)
        if inputs is None:
            r = config.register("ref", b)
            gens.append(PauliOp.on(n, {o: "X", r: "X"}))
            gens.append(PauliOp.on(n, {o: "Z", r: "Z"}))
        else:
            sign, letter = PRODUCT_LABELS[inputs[b]]
            gens.append(PauliOp.on(n, {o: letter}, sign=1 if sign == "+" else -1))
    return [conjugate_pauli(g, out) for g in gens]


def run_toy_protocol(
    config: StackConfig,
    target: Sequence[Gate],
    inputs: Optional[Sequence[str]] = None,
    fault: Optional[str] = None,
    jobs: int = DEFAULT_JOBS,
) -> ToyRun:
    """Non-local execution of a logical Clifford on the stacked blocks.

    With ``inputs=None`` every input is half of a Bell pair with an untouched
    reference qubit, so one run checks the whole logical channel. Otherwise
    ``inputs`` lists one product-state label per block.
    """
    if fault is not None and fault not in FAULTS:
        raise PreconditionError(f"Unknown fault {fault!r}; expected one of {FAULTS}")
    target = [(g, tuple(b)) for g, b in target]
    _check_word(target, config.k)
    if inputs is not None:
        if len(inputs) != config.k or any(label not in PRODUCT_LABELS for label in inputs):
            raise PreconditionError(f"Need one label from {sorted(PRODUCT_LABELS)} per block, got {inputs}")
    stack = build_stack(config)
    tab = stack.tableau
    ring = _ring(config)
    regions = {label: region.sites for label, region in named_regions(ring).items()}

    private = {Party.ALICE: set(), Party.BOB: set()}
    for b, block in enumerate(config.blocks):
        private[block.party] |= {f"in{b}", f"out{b}"}
    harness = LocalityHarness(RegisterLayout(ring, aux=False), private)

    prep: List[Gate] = []
    for b in range(config.k):
        a = config.register("in", b)
        if inputs is None:
            prep += [("H", (a,)), ("CNOT", (a, config.register("ref", b)))]
        else:
            prep += [(g, (a,)) for g in PREPARE_LABEL[inputs[b]]]
    harness.prepare("prepare resource stack", sorted({site_register(p) for p in ring.sites()}))
    harness.prepare("prepare inputs", _names(config, prep) or [f"in{b}" for b in range(config.k)])
    tab = apply_circuit(tab, prep)
    harness.start()

    def act(party: Party, operation: str, circuit: Sequence[Gate]) -> None:
        nonlocal tab
        if not circuit:
            return
        harness.act(party, operation, _names(config, circuit))
        tab = apply_circuit(tab, circuit)

    for b, block in enumerate(config.blocks):
        if fault == "cross_half_encoder" and block.party == Party.ALICE:
            holo = stack.block_codes[b]
            circuit = logical_swap(
                config.register("in", b), holo.code.logical_x[0], holo.code.logical_z[0], stack.legs(b)
            )
        else:
            circuit = encode_logical(stack, b)
        act(block.party, f"encode block {b}", circuit)

    center = [tuple(config.center_legs)] * config.k
    circuit: List[Gate] = []
    for b in range(config.k):
        circuit += translate_circuit(stack, b, "center-horizontal")[0]
    circuit += transversal_logical(stack, target, center)
    final_positions = []
    for b, block in enumerate(config.blocks):
        direction = OUTPUT_TRANSLATION[block.party]
        circuit += translate_circuit(stack, b, direction)[0]
        final_positions.append(apply_layout(config.center_legs, _translation(config, direction)))
    spread = circuit_spread(circuit, config.n_positions)
    if spread >= 2 * QUARTER_ANGLE:
        raise GeometryError(-1, "-", f"Protocol circuit spreads {spread:.4f} >= 2pi/4")

    stages = assign_stages(
        [qubits for _, qubits in circuit], regions, position=lambda q: q % config.n_positions, gates=circuit
    )
    staged = {label: [g for g, s in zip(circuit, stages) if s == label] for label in ("W", "E", "N", "S")}
    counts = {label: len(gates) for label, gates in staged.items()}
    logger.info(f"Toy protocol stages: {counts}, spread {spread:.4f}")

    act(Party.ALICE, "U_W", staged["W"])
    act(Party.BOB, "U_E", staged["E"])
    if fault == "early_post":
        # U_N is often empty here; decoding is always a post-exchange action
        first = next(b for b, block in enumerate(config.blocks) if block.party == Party.ALICE)
        act(Party.ALICE, f"decode block {first}", decode_logical(stack, first, final_positions[first]))

    layout = RegisterLayout(ring, aux=False)
    alice_sends = layout.half_registers("W") & layout.half_registers("S")
    bob_sends = layout.half_registers("E") & layout.half_registers("N")
    if fault == "overlapping_message":
        bob_sends = bob_sends | {min(alice_sends)}
    harness.exchange(alice_sends, bob_sends)

    act(Party.BOB, "U_S", staged["S"])
    act(Party.ALICE, "U_N", staged["N"])
    for b, block in enumerate(config.blocks):
        half = POST_HALF[block.party]
        _check_geometry(stack, b, final_positions[b], half, OPPOSITE[half])
        act(block.party, f"decode block {b}", decode_logical(stack, b, final_positions[b]))
    harness.transcript.outputs = {f"block{b}": f"out{b}" for b in range(config.k)}

    problems = audit_transcript(harness.transcript, aux=False)
    if problems:
        raise VerificationFailure("; ".join(problems), {"audit": problems})

    expected = _expected_generators(config, target, inputs)
    values = pauli_expectations(tab, expected, jobs)
    failures = [f"{g.label()} has expectation {v}" for g, v in zip(expected, values) if v != 1]
    verdict = ToyVerdict(not failures, len(expected), failures)
    logger.info(f"Toy protocol verdict: passed={verdict.passed} over {verdict.checked} generators")
    return ToyRun(harness.transcript, verdict, counts, spread, final_positions)


def random_clifford_word(k: int, length: int, rng: np.random.Generator) -> List[Gate]:
    word: List[Gate] = []
    for _ in range(length):
        choice = rng.integers(3) if k > 1 else rng.integers(2)
        b = int(rng.integers(k))
        if choice == 0:
            word.append(("H", (b,)))
        elif choice == 1:
            word.append(("S", (b,)))
        else:
            c = int(rng.integers(k - 1))
            c = c if c < b else c + 1
            word.append(("CNOT", (b, c)))
    return word
