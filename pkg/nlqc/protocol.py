"""Two-party non-local execution of a ring dynamics and its direct evaluation.

States are kept pure: inputs are purified against a referee register ``R`` and
every channel is applied through its Stinespring dilation, so environments
show up as extra registers owned by whoever applied the channel.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from config import DENSE_DIM_CAP, INPUT_TOL, OUTPUT_TOL, QUARTER_ANGLE, STATEVECTOR_DIM_CAP
from nlqc.decompose import QuarterDecomposition, check_piece_supports
from nlqc.errors import (
    CapExceededError,
    DimensionMismatchError,
    LocalityViolationError,
    NonPositiveError,
    PreconditionError,
    SpreadPreconditionError,
    SupportError,
    UnsupportedModelError,
)
from nlqc.lattice import LocalHamiltonian, ModelSpec, Ring, evolve_model, named_regions, site_depth
from nlqc.qcore import (
    Channel,
    DenseOperator,
    apply_local,
    embed_on,
    operator_norm,
    polar_unitary,
    reduced_density,
    restrict,
    swap_matrix,
)
from nlqc.spread import LightConeFit
from state import EventRecord

logger = logging.getLogger(__name__)

INPUT_A, INPUT_B = "A", "B"
OUTPUT_A, OUTPUT_B = "A~", "B~"
REFERENCE = "R"
FAULTS = ("early_post", "cross_half_encoder", "overlapping_message")
REWIND_BOUND_FACTOR = 9.0


def site_register(site: int) -> str:
    return f"s{site}"


def aux_register(site: int) -> str:
    return f"s'{site}"


def register_site(name: str) -> Optional[int]:
    """Ring site a register sits on (its own site for auxiliary copies)."""
    if name.startswith("s'"):
        return int(name[2:])
    if name.startswith("s") and name[1:].isdigit():
        return int(name[1:])
    return None


# ---------------------------------------------------------------- labeled states and maps

@dataclass
class LabeledState:
    """Pure state whose tensor axes are named registers."""

    registers: List[str]
    tensor: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(set(self.registers)) != len(self.registers):
            raise PreconditionError(f"Duplicate register names in {self.registers}")
        if self.tensor.ndim != len(self.registers):
            raise DimensionMismatchError(f"Tensor rank {self.tensor.ndim} for {len(self.registers)} registers")

    @classmethod
    def from_parts(cls, parts: Sequence[Tuple[Sequence[str], np.ndarray, Sequence[int]]]) -> "LabeledState":
        """Tensor product of (registers, amplitudes, dims) blocks."""
        registers: List[str] = []
        dims: List[int] = []
        amps = np.ones(1, dtype=complex)
        for names, vector, block_dims in parts:
            registers += list(names)
            dims += list(block_dims)
            amps = np.kron(amps, np.asarray(vector, dtype=complex).reshape(-1))
        if amps.size > STATEVECTOR_DIM_CAP:
            raise CapExceededError(f"Labeled state of dimension {amps.size} exceeds the state-vector cap")
        return cls(registers, amps.reshape(dims))

    def dim(self, register: str) -> int:
        return self.tensor.shape[self.axis(register)]

    def axis(self, register: str) -> int:
        try:
            return self.registers.index(register)
        except ValueError:
            raise SupportError(f"No register {register!r}; have {self.registers}") from None

    def apply_unitary(self, matrix: np.ndarray, registers: Sequence[str]) -> "LabeledState":
        axes = [self.axis(r) for r in registers]
        return LabeledState(list(self.registers), apply_local(self.tensor, matrix, axes))

    def apply_map(self, local_map: "LocalMap", env: Optional[str] = None) -> "LabeledState":
        axes = [self.axis(r) for r in local_map.inputs]
        in_dims = tuple(self.tensor.shape[a] for a in axes)
        if in_dims != local_map.channel.input_dims:
            raise DimensionMismatchError(f"{local_map.name} expects {local_map.channel.input_dims}, registers have {in_dims}")
        rest = [i for i in range(len(self.registers)) if i not in axes]
        rest_names = [self.registers[i] for i in rest]
        clash = set(local_map.outputs) & set(rest_names)
        if clash:
            raise PreconditionError(f"{local_map.name} would overwrite registers {sorted(clash)}")
        rest_dims = [self.tensor.shape[i] for i in rest]
        flat = np.moveaxis(self.tensor, axes, list(range(len(axes)))).reshape(local_map.channel.d_in, -1)
        branches = np.stack([k @ flat for k in local_map.channel.kraus_ops])
        out_dims = list(local_map.channel.output_dims)
        if branches.shape[0] == 1:
            return LabeledState(list(local_map.outputs) + rest_names, branches[0].reshape(out_dims + rest_dims))
        if env is None:
            raise PreconditionError(f"{local_map.name} has {branches.shape[0]} Kraus operators and needs an environment register")
        return LabeledState(
            [env] + list(local_map.outputs) + rest_names,
            branches.reshape([branches.shape[0]] + out_dims + rest_dims),
        )

    def reduced(self, keep: Sequence[str]) -> np.ndarray:
        axes = [self.axis(r) for r in keep]
        return reduced_density(self.tensor.reshape(-1), self.tensor.shape, axes)

    def norm(self) -> float:
        return float(np.linalg.norm(self.tensor.reshape(-1)))


@dataclass(frozen=True)
class LocalMap:
    name: str
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    channel: Channel

    def __post_init__(self):
        if len(self.inputs) != len(self.channel.input_dims) or len(self.outputs) != len(self.channel.output_dims):
            raise DimensionMismatchError(f"{self.name}: register lists do not match the channel's factor dims")

    @property
    def registers(self) -> Tuple[str, ...]:
        return tuple(dict.fromkeys(self.inputs + self.outputs))

    @property
    def sites(self) -> FrozenSet[int]:
        return frozenset(s for s in (register_site(r) for r in self.registers) if s is not None)


def swap_in_encoder(site: int, input_register: str = INPUT_A, d: int = 2) -> LocalMap:
    """Move the input into ``site``; the site's previous content goes to the environment."""
    kraus = []
    for m in range(d):
        k = np.zeros((d, d * d), dtype=complex)
        for a in range(d):
            k[a, a * d + m] = 1.0
        kraus.append(k)
    reg = site_register(site)
    return LocalMap(f"swap-in {input_register}->{reg}", (input_register, reg), (reg,), Channel((d, d), (d,), tuple(kraus)))


def swap_out_decoder(site: int, output_register: str = OUTPUT_A, d: int = 2) -> LocalMap:
    reg = site_register(site)
    return LocalMap(f"swap-out {reg}->{output_register}", (reg,), (output_register,), Channel.identity((d,)))


def trace_replace_decoder(site: int, output_register: str = OUTPUT_A, d: int = 2) -> LocalMap:
    kraus = []
    for i in range(d):
        k = np.zeros((d, d), dtype=complex)
        k[0, i] = 1.0
        kraus.append(k)
    reg = site_register(site)
    return LocalMap(f"trace-replace {reg}->{output_register}", (reg,), (output_register,), Channel((d,), (d,), tuple(kraus)))


# ---------------------------------------------------------------- pseudo-bulk setup

@dataclass(frozen=True)
class PseudoBulkSpec:
    ring: Ring
    model: Union[ModelSpec, DenseOperator]
    encoder_a: LocalMap
    encoder_b: LocalMap
    decoder_a: LocalMap
    decoder_b: LocalMap
    input_dims: Tuple[int, int] = (2, 2)
    resource: Optional[np.ndarray] = field(default=None, repr=False)
    time: Optional[float] = None

    def __post_init__(self):
        regions = named_regions(self.ring)
        expected = (
            (self.encoder_a, "W", INPUT_A, None),
            (self.encoder_b, "E", INPUT_B, None),
            (self.decoder_a, "N", None, OUTPUT_A),
            (self.decoder_b, "S", None, OUTPUT_B),
        )
        for local_map, half, private_in, private_out in expected:
            outside = [s for s in local_map.sites if s not in regions[half]]
            if outside:
                raise SupportError(f"{local_map.name} touches sites {outside} outside {half}")
            if private_in is not None and private_in not in local_map.inputs:
                raise PreconditionError(f"{local_map.name} does not consume {private_in}")
            if private_out is not None and local_map.outputs != (private_out,):
                raise PreconditionError(f"{local_map.name} must output {private_out}")
        if self.resource is not None and np.asarray(self.resource).size != self.ring.dim:
            raise DimensionMismatchError(f"Resource state of size {np.asarray(self.resource).size}, ring dim {self.ring.dim}")

    def resource_state(self) -> np.ndarray:
        if self.resource is not None:
            return np.asarray(self.resource, dtype=complex).reshape(-1)
        zero = np.zeros(self.ring.dim, dtype=complex)
        zero[0] = 1.0
        return zero

    def unitary(self) -> DenseOperator:
        if isinstance(self.model, DenseOperator):
            if self.model.support != tuple(self.ring.sites()):
                raise SupportError(f"Model operator must act on the whole ring, got support {self.model.support}")
            return self.model
        model = self.model
        if self.time is not None and isinstance(model, LocalHamiltonian):
            model = model.at_time(self.time)
        return evolve_model(model, self.ring)


def swap_spec(
    ring: Ring,
    model: Union[ModelSpec, DenseOperator],
    encoder_sites: Tuple[int, int],
    decoder_sites: Tuple[int, int],
    time: Optional[float] = None,
) -> PseudoBulkSpec:
    """Swap-in encoders and swap-out decoders at the given sites."""
    d = ring.local_dim
    return PseudoBulkSpec(
        ring,
        model,
        swap_in_encoder(encoder_sites[0], INPUT_A, d),
        swap_in_encoder(encoder_sites[1], INPUT_B, d),
        swap_out_decoder(decoder_sites[0], OUTPUT_A, d),
        swap_out_decoder(decoder_sites[1], OUTPUT_B, d),
        (d, d),
        time=time,
    )


def purified_input(rho: np.ndarray, input_dims: Tuple[int, int]) -> Tuple[np.ndarray, int]:
    """Amplitudes on (A, B, R) purifying rho_AB, and the dimension of R."""
    d = input_dims[0] * input_dims[1]
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d, d):
        raise DimensionMismatchError(f"Input density of shape {rho.shape}, expected {(d, d)}")
    if np.linalg.norm(rho - rho.conj().T) > INPUT_TOL:
        raise NonPositiveError("Input density is not Hermitian")
    if abs(np.trace(rho) - 1.0) > INPUT_TOL:
        raise NonPositiveError(f"Input density has trace {np.trace(rho).real:.12f}")
    evals, evecs = np.linalg.eigh((rho + rho.conj().T) / 2)
    if evals.min() < -INPUT_TOL:
        raise NonPositiveError(f"Input density has negative eigenvalue {evals.min():.3e}")
    weights = np.sqrt(np.clip(evals, 0.0, None))
    return (evecs * weights).reshape(-1), d


def choi_input(input_dims: Tuple[int, int]) -> Tuple[np.ndarray, int]:
    d = input_dims[0] * input_dims[1]
    return np.eye(d, dtype=complex).reshape(-1) / math.sqrt(d), d


def _initial_state(spec: PseudoBulkSpec, inputs: Tuple[np.ndarray, int], aux: bool) -> LabeledState:
    amps, d_ref = inputs
    ring = spec.ring
    parts = [((INPUT_A, INPUT_B, REFERENCE), amps, (spec.input_dims[0], spec.input_dims[1], d_ref))]
    parts.append(([site_register(s) for s in ring.sites()], spec.resource_state(), ring.dims))
    if aux:
        zero = np.zeros(ring.dim, dtype=complex)
        zero[0] = 1.0
        parts.append(([aux_register(s) for s in ring.sites()], zero, ring.dims))
    return LabeledState.from_parts(parts)


def _evolve_direct(spec: PseudoBulkSpec, state: LabeledState) -> LabeledState:
    state = state.apply_map(spec.encoder_a, env="Alice.env0")
    state = state.apply_map(spec.encoder_b, env="Bob.env0")
    sites = [site_register(s) for s in spec.ring.sites()]
    state = state.apply_unitary(spec.unitary().entries, sites)
    state = state.apply_map(spec.decoder_a, env="Alice.env1")
    return state.apply_map(spec.decoder_b, env="Bob.env1")


def _check_output(rho: np.ndarray) -> np.ndarray:
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > OUTPUT_TOL * max(1, rho.shape[0]):
        raise NonPositiveError(f"Output trace {tr:.12f} differs from 1")
    return rho


def pseudo_bulk_dynamics(spec: PseudoBulkSpec, rho: np.ndarray) -> np.ndarray:
    """D_N (x) D_S [U (N_A (x) N_B (rho (x) psi)) U^dag] evaluated globally."""
    state = _evolve_direct(spec, _initial_state(spec, purified_input(rho, spec.input_dims), aux=False))
    return _check_output(state.reduced((OUTPUT_A, OUTPUT_B)))


def channel_choi(evaluate: Callable[[LabeledState], LabeledState], spec: PseudoBulkSpec, aux: bool = False) -> np.ndarray:
    """Normalized Choi state on (A~, B~, R) of a map acting on the purified inputs."""
    state = evaluate(_initial_state(spec, choi_input(spec.input_dims), aux=aux))
    return _check_output(state.reduced((OUTPUT_A, OUTPUT_B, REFERENCE)))


def pseudo_bulk_choi(spec: PseudoBulkSpec) -> np.ndarray:
    return channel_choi(lambda s: _evolve_direct(spec, s), spec)


# ---------------------------------------------------------------- locality harness

class Party(str, Enum):
    REFEREE = "referee"
    ALICE = "Alice"
    BOB = "Bob"


class Phase(str, Enum):
    SETUP = "setup"
    PRE = "pre"
    EXCHANGE = "exchange"
    POST = "post"


PRE_HALF = {Party.ALICE: "W", Party.BOB: "E"}
POST_HALF = {Party.ALICE: "N", Party.BOB: "S"}
PRIVATE_INPUT = {Party.ALICE: INPUT_A, Party.BOB: INPUT_B}


@dataclass(frozen=True)
class Event:
    index: int
    party: Party
    phase: Phase
    operation: str
    registers: Tuple[str, ...]
    created: Tuple[str, ...] = ()
    messages: Optional[Dict[str, Tuple[str, ...]]] = None

    def to_record(self) -> EventRecord:
        record: EventRecord = {
            "index": self.index,
            "party": self.party.value,
            "phase": self.phase.value,
            "operation": self.operation,
            "registers": list(self.registers),
            "created": list(self.created),
        }
        if self.messages is not None:
            record["messages"] = {k: list(v) for k, v in self.messages.items()}
        return record


@dataclass
class Transcript:
    n_sites: int
    events: List[Event] = field(default_factory=list)
    outputs: Dict[str, str] = field(default_factory=dict)
    initial_private: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    def to_records(self) -> List[EventRecord]:
        return [e.to_record() for e in self.events]


@dataclass(frozen=True)
class RegisterLayout:
    ring: Ring
    aux: bool

    def half_registers(self, half: str) -> Set[str]:
        sites = named_regions(self.ring)[half].sites
        regs = {site_register(s) for s in sites}
        if self.aux:
            regs |= {aux_register(s) for s in sites}
        return regs


class LocalityHarness:
    """Tracks which party holds which register and rejects illegal access."""

    def __init__(self, layout: RegisterLayout, private: Optional[Dict[Party, Iterable[str]]] = None):
        self.layout = layout
        self.phase = Phase.SETUP
        if private is None:
            private = {p: (PRIVATE_INPUT[p],) for p in (Party.ALICE, Party.BOB)}
        self.private: Dict[Party, Set[str]] = {p: set(private[p]) for p in (Party.ALICE, Party.BOB)}
        self.transcript = Transcript(
            layout.ring.n_sites, initial_private={p.value: tuple(sorted(r)) for p, r in self.private.items()}
        )
        self.held: Dict[Party, Set[str]] = {}
        self.discarded: Set[str] = set()

    def _event(self, party, operation, registers, created=(), messages=None) -> Event:
        return Event(len(self.transcript.events), party, self.phase, operation, tuple(registers), tuple(created), messages)

    def _reject(self, event: Event, message: str) -> None:
        logger.warning(f"Locality violation at event {event.index} ({event.operation}): {message}")
        raise LocalityViolationError(event, message)

    def prepare(self, operation: str, registers: Iterable[str]) -> None:
        event = self._event(Party.REFEREE, operation, registers)
        if self.phase != Phase.SETUP:
            self._reject(event, "referee preparation after the protocol started")
        self.transcript.events.append(event)

    def start(self) -> None:
        for party in (Party.ALICE, Party.BOB):
            self.held[party] = set(self.private[party]) | self.layout.half_registers(PRE_HALF[party])
        self.phase = Phase.PRE

    def _allowed(self, party: Party) -> Set[str]:
        held = self.held[party] - self.discarded
        if self.phase == Phase.POST:
            held &= self.private[party] | self.layout.half_registers(POST_HALF[party])
        return held

    def act(self, party: Party, operation: str, registers: Iterable[str], created: Iterable[str] = ()) -> Event:
        registers, created = tuple(registers), tuple(created)
        event = self._event(party, operation, registers, created)
        if party == Party.REFEREE or self.phase not in (Phase.PRE, Phase.POST):
            self._reject(event, f"{party.value} cannot act during {self.phase.value}")
        fresh = set(created) - set(registers)
        illegal = sorted(set(registers) - fresh - self._allowed(party))
        if illegal:
            self._reject(event, f"{party.value} touched {illegal} during {self.phase.value}")
        self.private[party] |= set(created)
        self.held[party] |= set(created)
        self.transcript.events.append(event)
        return event

    def discard(self, party: Party, registers: Iterable[str]) -> None:
        registers = tuple(registers)
        self.act(party, "discard", registers)
        self.discarded |= set(registers)

    def exchange(self, alice_sends: Iterable[str], bob_sends: Iterable[str]) -> None:
        alice_sends, bob_sends = set(alice_sends), set(bob_sends)
        messages = {Party.ALICE.value: tuple(sorted(alice_sends)), Party.BOB.value: tuple(sorted(bob_sends))}
        self.phase = Phase.EXCHANGE
        event = self._event(Party.REFEREE, "exchange", sorted(alice_sends | bob_sends), messages=messages)
        if any(e.operation == "exchange" for e in self.transcript.events):
            self._reject(event, "a second exchange round")
        if alice_sends & bob_sends:
            self._reject(event, f"messages overlap on {sorted(alice_sends & bob_sends)}")
        for party, sends in ((Party.ALICE, alice_sends), (Party.BOB, bob_sends)):
            if not sends <= self.held[party]:
                self._reject(event, f"{party.value} sends registers it does not hold: {sorted(sends - self.held[party])}")
        self.held[Party.ALICE] = (self.held[Party.ALICE] - alice_sends) | bob_sends
        self.held[Party.BOB] = (self.held[Party.BOB] - bob_sends) | alice_sends
        for party in (Party.ALICE, Party.BOB):
            missing = self.layout.half_registers(POST_HALF[party]) - self.held[party]
            if missing:
                self._reject(event, f"{party.value} lacks {sorted(missing)} after the exchange")
        self.transcript.events.append(event)
        self.phase = Phase.POST


def audit_transcript(transcript: Transcript, aux: bool) -> List[str]:
    """Re-walk the event list from scratch; returns the problems found."""
    ring = Ring(transcript.n_sites)
    regions = named_regions(ring)

    def half(label: str) -> Set[str]:
        names = {f"s{s}" for s in regions[label].sites}
        return names | ({f"s'{s}" for s in regions[label].sites} if aux else set())

    order = [Phase.SETUP, Phase.PRE, Phase.EXCHANGE, Phase.POST]
    problems = []
    exchanges = [e for e in transcript.events if e.operation == "exchange"]
    if len(exchanges) != 1:
        problems.append(f"expected one exchange, found {len(exchanges)}")
    private = {p: set(transcript.initial_private.get(p.value, ())) for p in (Party.ALICE, Party.BOB)}
    last = 0
    for e in transcript.events:
        position = order.index(e.phase)
        if position < last:
            problems.append(f"event {e.index} in phase {e.phase.value} after a later phase")
        last = position
        if e.party == Party.REFEREE:
            if e.phase not in (Phase.SETUP, Phase.EXCHANGE):
                problems.append(f"referee acts at event {e.index} during {e.phase.value}")
            continue
        if e.phase == Phase.PRE:
            allowed = private[e.party] | half(PRE_HALF[e.party])
        elif e.phase == Phase.POST:
            allowed = private[e.party] | half(POST_HALF[e.party])
        else:
            problems.append(f"{e.party.value} acts at event {e.index} during {e.phase.value}")
            continue
        outside = set(e.registers) - set(e.created) - allowed
        if outside:
            problems.append(f"event {e.index} ({e.operation}) by {e.party.value} touches {sorted(outside)}")
        private[e.party] |= set(e.created)
    return problems


# ---------------------------------------------------------------- non-local run

@dataclass
class NLQCRun:
    transcript: Transcript
    output: np.ndarray = field(repr=False)
    audit: List[str] = field(default_factory=list)


def _piece_registers(support: Sequence[int], n_sites: int) -> List[str]:
    return [site_register(f) if f < n_sites else aux_register(f - n_sites) for f in support]


def _run_protocol(
    spec: PseudoBulkSpec,
    dec: QuarterDecomposition,
    state: LabeledState,
    fault: Optional[str] = None,
) -> Tuple[Transcript, LabeledState]:
    ring = spec.ring
    if fault is not None and fault not in FAULTS:
        raise PreconditionError(f"Unknown fault {fault!r}; expected one of {FAULTS}")
    if dec.n_sites != ring.n_sites or dec.local_dim != ring.local_dim:
        raise DimensionMismatchError(f"Decomposition for {dec.n_sites} sites, ring has {ring.n_sites}")
    pieces = {label: dec.piece(label) for label in ("E", "W", "S", "N")}
    check_piece_supports(dec)

    layout = RegisterLayout(ring, dec.uses_aux_copy)
    harness = LocalityHarness(layout)
    harness.prepare("prepare inputs", (INPUT_A, INPUT_B, REFERENCE))
    harness.prepare("prepare resource", [r for r in state.registers if register_site(r) is not None])
    harness.start()
    counters = {Party.ALICE: 0, Party.BOB: 0}

    def run_map(party: Party, local_map: LocalMap) -> None:
        nonlocal state
        env = f"{party.value}.env{counters[party]}"
        fresh = tuple(r for r in local_map.outputs if r not in local_map.inputs)
        created = fresh + ((env,) if len(local_map.channel.kraus_ops) > 1 else ())
        harness.act(party, local_map.name, local_map.registers, created)
        counters[party] += 1
        state = state.apply_map(local_map, env=env)

    def run_piece(party: Party, label: str) -> None:
        nonlocal state
        op = pieces[label].operator
        regs = _piece_registers(op.support, ring.n_sites)
        harness.act(party, f"U_{label}", regs)
        state = state.apply_unitary(op.entries, regs)

    encoder_a = spec.encoder_a
    if fault == "cross_half_encoder":
        foreign = min(s for s in named_regions(ring)["E"].sites if s not in spec.encoder_b.sites)
        encoder_a = swap_in_encoder(foreign, INPUT_A, ring.local_dim)
    run_map(Party.ALICE, encoder_a)
    run_map(Party.BOB, spec.encoder_b)
    run_piece(Party.BOB, "E")
    if fault == "early_post":
        run_piece(Party.ALICE, "N")
    run_piece(Party.ALICE, "W")

    alice_sends = layout.half_registers("W") & layout.half_registers("S")
    bob_sends = layout.half_registers("E") & layout.half_registers("N")
    if fault == "overlapping_message":
        bob_sends = bob_sends | {min(alice_sends)}
    harness.exchange(alice_sends, bob_sends)

    run_piece(Party.BOB, "S")
    run_piece(Party.ALICE, "N")
    if dec.uses_aux_copy:
        harness.discard(Party.ALICE, sorted(r for r in layout.half_registers("N") if r.startswith("s'")))
        harness.discard(Party.BOB, sorted(r for r in layout.half_registers("S") if r.startswith("s'")))
    run_map(Party.ALICE, spec.decoder_a)
    run_map(Party.BOB, spec.decoder_b)
    harness.transcript.outputs = {Party.ALICE.value: OUTPUT_A, Party.BOB.value: OUTPUT_B}
    return harness.transcript, state


def run_nlqc(
    spec: PseudoBulkSpec,
    dec: QuarterDecomposition,
    rho: np.ndarray,
    fault: Optional[str] = None,
) -> NLQCRun:
    state = _initial_state(spec, purified_input(rho, spec.input_dims), aux=dec.uses_aux_copy)
    transcript, state = _run_protocol(spec, dec, state, fault)
    problems = audit_transcript(transcript, dec.uses_aux_copy)
    if problems:
        raise LocalityViolationError(transcript.events[-1], "; ".join(problems))
    output = _check_output(state.reduced((OUTPUT_A, OUTPUT_B)))
    logger.info(f"Non-local run finished with {len(transcript.events)} events")
    return NLQCRun(transcript, output, problems)


def implemented_choi(spec: PseudoBulkSpec, dec: QuarterDecomposition) -> np.ndarray:
    return channel_choi(lambda s: _run_protocol(spec, dec, s)[1], spec, aux=dec.uses_aux_copy)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = rho - sigma
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2))))


# ---------------------------------------------------------------- time-rewind encoder

@dataclass(frozen=True)
class RewoundEncoder:
    local_map: LocalMap
    unitary: DenseOperator = field(repr=False)
    support: Tuple[int, ...]
    defect: float
    defect_bound: float


def time_rewind_encoder(
    model: LocalHamiltonian,
    ring: Ring,
    rewind_time: float,
    site: int,
    fit: Optional[LightConeFit] = None,
    input_register: str = INPUT_A,
) -> RewoundEncoder:
    """U(t') SWAP U(t')^dag cut down to a neighbourhood of ``site`` inside its half.

    The neighbourhood reaches one site past the light-cone radius v t'. The
    reported bound sums the light-cone estimate over the dropped sites.
    """
    if not isinstance(model, LocalHamiltonian):
        raise UnsupportedModelError("Time rewinding needs a Hamiltonian model")
    if rewind_time < 0:
        raise PreconditionError(f"Rewind time must be non-negative, got {rewind_time}")
    regions = named_regions(ring)
    half = "W" if site in regions["W"] else "E"
    reach = fit.v * rewind_time if fit is not None else 0.0
    radius_hops = 1 + int(math.floor(reach / ring.spacing + 1e-12))
    if radius_hops * ring.spacing >= 2 * QUARTER_ANGLE:
        raise SpreadPreconditionError(
            f"Light-cone radius {reach:.4f} plus one site reaches {radius_hops * ring.spacing:.4f} >= 2pi/4"
        )
    support = tuple(j for j in ring.sites() if ring.hops(site, j) <= radius_hops)
    if site_depth(ring, site, regions[half]) <= radius_hops * ring.spacing - 1e-12 or any(
        j not in regions[half] for j in support
    ):
        raise SpreadPreconditionError(f"Neighbourhood {support} of site {site} leaves the {half} half")
    n, d = ring.n_sites, ring.local_dim
    if d ** (n + 1) > DENSE_DIM_CAP:
        raise CapExceededError(f"Rewound swap on {n + 1} factors exceeds the dense cap")

    dims = ring.dims + (d,)
    everything = tuple(range(n + 1))
    u = embed_on(evolve_model(model.at_time(rewind_time), ring), everything, dims)
    swap = embed_on(DenseOperator((site, n), (d, d), swap_matrix(d)), everything, dims)
    full = u @ swap @ u.dagger()
    tail = [j for j in ring.sites() if j not in support]
    kept = restrict(full, tail)
    if tail:
        kept = polar_unitary(kept)
    defect = operator_norm(embed_on(kept, everything, dims).entries - full.entries)

    if fit is not None:
        bound = REWIND_BOUND_FACTOR * sum(fit.bound(rewind_time, ring.distance(site, j)) for j in tail)
    else:
        bound = 0.0 if rewind_time == 0 else math.inf

    # kept acts on (support..., A); trace A out after the unitary
    dim_r = d ** len(support)
    mat = kept.entries.reshape(dim_r, d, dim_r * d)
    kraus = tuple(mat[:, m, :] for m in range(d))
    inputs = tuple(site_register(j) for j in support) + (input_register,)
    outputs = tuple(site_register(j) for j in support)
    local_map = LocalMap(
        f"rewind({rewind_time:g}) {input_register}->{site_register(site)}",
        inputs,
        outputs,
        Channel((d,) * len(inputs), (d,) * len(outputs), kraus),
    )
    logger.info(f"Rewound encoder at site {site}: support {support}, defect {defect:.3e}, bound {bound:.3e}")
    return RewoundEncoder(local_map, kept, support, defect, bound)
