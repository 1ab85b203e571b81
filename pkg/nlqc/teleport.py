"""Normal and port-based teleportation, and the three-party teleportation cascade."""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import CASCADE_MAX_PORTS, EIGEN_FLOOR, EXACT_TOL, PBT_DIM_CAP
from nlqc.errors import (
    CapExceededError,
    ClassicalRecordError,
    DimensionMismatchError,
    POVMCompletenessError,
    PreconditionError,
)
from nlqc.qcore import DenseOperator, embed_on, fidelity, partial_trace, pauli_string_matrix
from nlqc.stab import Tableau, apply_circuit, mutual_information

logger = logging.getLogger(__name__)

POVM_TOL = 1e-9


def pauli_labels(n_a: int) -> List[str]:
    return ["".join(p) for p in itertools.product("IXYZ", repeat=n_a)]


def bell_basis(n_a: int = 1) -> List[Tuple[str, np.ndarray]]:
    """(label P, |Phi_P>) on (A, A'), with |Phi_P> = (1 x P^*)|Phi+>.

    With this labelling outcome P leaves the receiver holding P|psi>.
    """
    d = 2 ** n_a
    basis = []
    for label in pauli_labels(n_a):
        p = pauli_string_matrix(label)
        basis.append((label, (p.conj().T / math.sqrt(d)).reshape(-1)))
    return basis


@dataclass(frozen=True)
class TeleportOutcome:
    outcome: Union[int, str]
    state: np.ndarray = field(repr=False)
    fidelity: float
    probability: float
    received: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if not -EXACT_TOL <= self.fidelity <= 1 + EXACT_TOL:
            raise PreconditionError(f"Fidelity {self.fidelity} outside [0, 1]")
        object.__setattr__(self, "fidelity", min(1.0, max(0.0, float(self.fidelity))))


def _as_matrix(state: np.ndarray, d: int) -> np.ndarray:
    state = np.asarray(state, dtype=complex).reshape(-1)
    if state.size % d:
        raise DimensionMismatchError(f"State of size {state.size} does not factor as ({d}, reference)")
    norm = np.linalg.norm(state)
    if abs(norm - 1) > 1e-9:
        raise PreconditionError(f"Input state has norm {norm:.6f}")
    return state.reshape(d, -1)


def teleport_normal(
    state: np.ndarray,
    rng: np.random.Generator,
    n_a: int = 1,
    forced: Optional[str] = None,
) -> TeleportOutcome:
    """Bell measurement on (A, A') against a fresh Bell pair (A', B).

    ``state`` lives on (A, R) with A first. The outcome state is on (B, R)
    after the correction P^dag; ``received`` holds P|psi> before it.
    """
    d = 2 ** n_a
    psi = _as_matrix(state, d)
    branches = []
    for label, phi in bell_basis(n_a):
        # <Phi_P|_{AA'} (psi_{AR} x Phi+_{A'B}) = (P psi) / d on (B, R)
        phi_m = phi.reshape(d, d)
        out = np.einsum("ax,ar->xr", phi_m.conj(), psi) / math.sqrt(d)
        branches.append((label, out))
    probs = np.array([float(np.vdot(b, b).real) for _, b in branches])
    if forced is not None:
        index = [label for label, _ in branches].index(forced)
    else:
        index = int(rng.choice(len(branches), p=probs / probs.sum()))
    label, out = branches[index]
    received = out / math.sqrt(probs[index])
    corrected = pauli_string_matrix(label).conj().T @ received
    score = float(abs(np.vdot(psi.reshape(-1), corrected.reshape(-1))) ** 2)
    logger.debug(f"Normal teleportation outcome {label} (p={probs[index]:.4f}), fidelity {score:.12f}")
    return TeleportOutcome(label, corrected.reshape(-1), score, float(probs[index]), received.reshape(-1))


# ---------------------------------------------------------------- port-based teleportation

@dataclass(frozen=True)
class PortResource:
    """N maximally entangled n_a-qubit pairs, sender halves (A'_1..A'_N) first."""

    n_ports: int
    n_a: int = 1

    def __post_init__(self):
        if self.n_ports < 1 or self.n_a < 1:
            raise PreconditionError(f"Need at least one port and one qubit, got N={self.n_ports}, n_a={self.n_a}")
        if 2 ** (2 * self.n_ports * self.n_a + self.n_a) > PBT_DIM_CAP:
            raise CapExceededError(
                f"{2 * self.n_ports * self.n_a + self.n_a} qubits exceed the port-teleportation cap"
            )

    @property
    def d(self) -> int:
        return 2 ** self.n_a

    def vector(self) -> np.ndarray:
        dim = self.d ** self.n_ports
        return np.eye(dim, dtype=complex).reshape(-1) / math.sqrt(dim)


@dataclass(frozen=True)
class PBTMeasurement:
    n_ports: int
    n_a: int
    elements: Tuple[np.ndarray, ...] = field(repr=False)
    signals: Tuple[np.ndarray, ...] = field(repr=False)

    @property
    def completeness_defect(self) -> float:
        total = sum(self.elements)
        return float(np.linalg.norm(total - np.eye(total.shape[0]), 2))


def pbt_povm(n_ports: int, n_a: int = 1) -> PBTMeasurement:
    """Pretty-good measurement on (A, A'_1..A'_N) for the signals Phi+_{A A'_x} x 1/d^(N-1)."""
    resource = PortResource(n_ports, n_a)
    d = resource.d
    n_factors = n_ports + 1
    dims = [d] * n_factors
    phi = np.eye(d, dtype=complex).reshape(-1) / math.sqrt(d)
    projector = np.outer(phi, phi.conj())
    signals = []
    for x in range(n_ports):
        local = DenseOperator((0, x + 1), (d, d), projector)
        signals.append(embed_on(local, range(n_factors), dims).entries / d ** (n_ports - 1))
    rho = sum(signals)
    evals, evecs = np.linalg.eigh(rho)
    cutoff = EIGEN_FLOOR * max(1.0, float(evals.max()))
    inv_root = np.where(evals > cutoff, 1.0 / np.sqrt(np.clip(evals, cutoff, None)), 0.0)
    r = (evecs * inv_root) @ evecs.conj().T
    kernel = (evecs * (evals <= cutoff)) @ evecs.conj().T
    elements = tuple(r @ s @ r + kernel / n_ports for s in signals)
    measurement = PBTMeasurement(n_ports, n_a, elements, tuple(signals))

    defect = measurement.completeness_defect
    if defect > POVM_TOL:
        raise POVMCompletenessError(f"PBT elements sum to identity only up to {defect:.3e}")
    lowest = min(float(np.linalg.eigvalsh((e + e.conj().T) / 2).min()) for e in elements)
    if lowest < -POVM_TOL:
        raise POVMCompletenessError(f"PBT element has negative eigenvalue {lowest:.3e}")
    logger.debug(f"PGM for N={n_ports}, n_a={n_a}: completeness defect {defect:.2e}")
    return measurement


def _port_states(measurement: PBTMeasurement, psi: np.ndarray) -> List[np.ndarray]:
    """Unnormalized (B_x, R) states, one per outcome x, for input psi on (A, R)."""
    n, d = measurement.n_ports, 2 ** measurement.n_a
    d_r = psi.shape[1]
    # rows (A, A'_1..A'_N), columns (R, B_1..B_N)
    m = np.kron(psi, np.eye(d ** n, dtype=complex)) / math.sqrt(d ** n)
    # R is labelled N so that sorting puts the ports first
    support = (n,) + tuple(range(n))
    dims = (d_r,) + (d,) * n
    states = []
    for x, element in enumerate(measurement.elements):
        joint = DenseOperator(support, dims, (m.conj().T @ element @ m).T)
        states.append(partial_trace(joint, [y for y in range(n) if y != x]).entries)
    return states


def run_pbt(
    state: np.ndarray,
    resource: PortResource,
    rng: np.random.Generator,
    measurement: Optional[PBTMeasurement] = None,
) -> TeleportOutcome:
    """Port-teleport A; returns x*, the (B_x*, R) density and its fidelity with the input."""
    measurement = measurement or pbt_povm(resource.n_ports, resource.n_a)
    if (measurement.n_ports, measurement.n_a) != (resource.n_ports, resource.n_a):
        raise DimensionMismatchError("Measurement built for a different port resource")
    psi = _as_matrix(state, resource.d)
    states = _port_states(measurement, psi)
    probs = np.array([float(np.trace(s).real) for s in states])
    x = int(rng.choice(len(states), p=probs / probs.sum()))
    rho = states[x] / probs[x]
    target = psi.reshape(-1)
    score = float(np.vdot(target, rho @ target).real)
    return TeleportOutcome(x, rho, score, float(probs[x]))


def _average_from_entanglement(f_e: float, d: int) -> float:
    return (d * f_e + 1) / (d + 1)


def pbt_entanglement_fidelity(n_ports: int, n_a: int = 1) -> float:
    """(1/d^2) sum_x tr(Pi_x sigma_x)."""
    measurement = pbt_povm(n_ports, n_a)
    d = 2 ** n_a
    total = sum(np.trace(p @ s).real for p, s in zip(measurement.elements, measurement.signals))
    return float(total) / d ** 2


def pbt_average_fidelity(n_ports: int, n_a: int = 1) -> float:
    return _average_from_entanglement(pbt_entanglement_fidelity(n_ports, n_a), 2 ** n_a)


def pbt_trajectory_fidelity(n_ports: int, n_a: int = 1, trials: Optional[int] = None, seed: int = 0) -> float:
    """Average fidelity from running the protocol on a maximally entangled input.

    With ``trials=None`` every outcome is weighted by its probability;
    otherwise outcomes are sampled.
    """
    d = 2 ** n_a
    measurement = pbt_povm(n_ports, n_a)
    psi = np.eye(d, dtype=complex) / math.sqrt(d)
    target = psi.reshape(-1)
    states = _port_states(measurement, psi)
    weights = np.array([float(np.trace(s).real) for s in states])
    overlaps = np.array([float(np.vdot(target, s @ target).real) for s in states])
    if trials is None:
        f_e = float(overlaps.sum())
    else:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(states), size=trials, p=weights / weights.sum())
        f_e = float(np.mean(overlaps[picks] / weights[picks]))
    return _average_from_entanglement(f_e, d)


# ---------------------------------------------------------------- three-party cascade

CASCADE_STAGES = ("charlie_to_alice", "alice_to_charlie", "charlie_to_bob")


def _apply_outcome_map(choi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Lambda_x(rho) = d tr_R[(rho^T x 1) C_x] for a (B, R)-ordered Choi state."""
    d = rho.shape[0]
    c = choi.reshape(d, d, d, d)
    return d * np.einsum("sr,bscr->bc", rho, c)


def pbt_outcome_chois(n_ports: int, n_a: int) -> List[np.ndarray]:
    d = 2 ** n_a
    return _port_states(pbt_povm(n_ports, n_a), np.eye(d, dtype=complex) / math.sqrt(d))


def pbt_channel(rho: np.ndarray, chois: Sequence[np.ndarray]) -> np.ndarray:
    """Outcome-averaged port-teleportation channel."""
    return sum(_apply_outcome_map(c, rho) for c in chois)


def _sample(chois: Sequence[np.ndarray], rho: np.ndarray, rng: np.random.Generator) -> Tuple[int, np.ndarray, float]:
    outs = [_apply_outcome_map(c, rho) for c in chois]
    probs = np.array([max(0.0, float(np.trace(o).real)) for o in outs])
    x = int(rng.choice(len(outs), p=probs / probs.sum()))
    return x, outs[x] / probs[x], float(probs[x])


def resolve_chain(records: Dict[str, Dict], n_ports: int) -> Tuple[int, int, int]:
    """(i, j, k): Alice's port, Charlie's port within it, Bob's port within that."""
    try:
        i = records["charlie"]["to_alice"]
        alice_ports = records["alice"]["ports"]
        to_bob = records["charlie"]["to_bob"]
    except (KeyError, TypeError) as e:
        raise ClassicalRecordError(f"Missing classical record: {e}") from e
    if len(alice_ports) != n_ports or len(to_bob) != n_ports or any(len(row) != n_ports for row in to_bob):
        raise ClassicalRecordError(f"Records do not match N={n_ports} ports")
    values = [i] + list(alice_ports) + [x for row in to_bob for x in row]
    if any(not isinstance(v, (int, np.integer)) or not 0 <= v < n_ports for v in values):
        raise ClassicalRecordError(f"Port record outside [0, {n_ports}): {values}")
    j = alice_ports[i]
    return int(i), int(j), int(to_bob[i][j])


def cascade_resource(n_ports: int) -> Tuple[Tableau, Dict[str, List[int]]]:
    """Bell pairs shared before anyone acts: Alice-Charlie and Bob-Charlie only."""
    pairs: List[Tuple[str, str]] = [("alice", "charlie"), ("bob", "charlie")]
    pairs += [("charlie", "alice")] * (2 * n_ports)
    pairs += [("alice", "charlie")] * (2 * n_ports ** 2)
    pairs += [("charlie", "bob")] * (2 * n_ports ** 3)
    owners: Dict[str, List[int]] = {"alice": [], "bob": [], "charlie": []}
    circuit = []
    for k, (first, second) in enumerate(pairs):
        a, b = 2 * k, 2 * k + 1
        owners[first].append(a)
        owners[second].append(b)
        circuit += [("H", (a,)), ("CNOT", (a, b))]
    tab = apply_circuit(Tableau.zero_state(2 * len(pairs)), circuit)
    return tab, owners


def pad_record(record: int, key: int, n_ports: int) -> int:
    return (record + key) % n_ports


def record_joint(record_probs: np.ndarray, key_probs: np.ndarray) -> np.ndarray:
    """Distribution of (X'_0, X'_1) with X'_1 = x and X'_0 = pad_record(x, key), key summed out."""
    n = record_probs.size
    joint = np.zeros((n, n))
    for key, p_key in enumerate(key_probs):
        for x, p_x in enumerate(record_probs):
            joint[pad_record(x, key, n), x] += p_key * p_x
    return joint


def one_time_pad_check(joint: np.ndarray) -> Dict[str, float]:
    """Trace distances of the X'_0 record from a maximally mixed register once V'_0 is traced.

    ``joint[x0, x1]`` is the record distribution the cascade produced.
    """
    n = joint.shape[0]
    uniform = np.full(n, 1.0 / n)
    p_x0 = joint.sum(axis=1)
    p_x1 = joint.sum(axis=0)
    marginal = 0.5 * float(np.abs(p_x0 - uniform).sum())
    correlation = 0.5 * float(np.abs(joint - np.outer(uniform, p_x1)).sum())
    return {"x0_marginal_distance": marginal, "x0_x1_correlation_distance": correlation}


@dataclass
class CascadeReport:
    n_ports: int
    otp: bool
    seed: int
    fidelity: float
    oracle_fidelity: float
    stage_fidelities: Dict[str, float]
    chain: Tuple[int, int, int]
    records: Dict[str, Dict]
    mutual_information_v0_v1: int
    otp_check: Dict[str, float]

    def to_record(self) -> Dict:
        return {
            "n_ports": self.n_ports,
            "otp": self.otp,
            "seed": self.seed,
            "fidelity": self.fidelity,
            "oracle_fidelity": self.oracle_fidelity,
            "stage_fidelities": dict(self.stage_fidelities),
            "chain": list(self.chain),
            "records": self.records,
            "mutual_information_v0_v1": self.mutual_information_v0_v1,
            "otp_check": dict(self.otp_check),
        }


def run_cascade(
    state_a: np.ndarray,
    state_b: np.ndarray,
    n_ports: int,
    otp: bool = True,
    seed: int = 0,
) -> CascadeReport:
    """Teleportation cascade Alice/Bob -> Charlie -> Alice -> Charlie -> Bob.

    Only the chain of ports selected by the classical records is simulated;
    every other port is represented by its sampled outcome.
    """
    if n_ports < 1 or n_ports > CASCADE_MAX_PORTS:
        raise CapExceededError(f"Cascade supports 1..{CASCADE_MAX_PORTS} ports, got {n_ports}")
    psi_a = np.asarray(state_a, dtype=complex).reshape(-1)
    psi_b = np.asarray(state_b, dtype=complex).reshape(-1)
    if psi_a.size != 2 or psi_b.size != 2:
        raise DimensionMismatchError("Cascade inputs are single qubits")
    rng = np.random.default_rng(seed)
    chois = pbt_outcome_chois(n_ports, 2)
    mixed = np.eye(4, dtype=complex) / 4

    tel_a = teleport_normal(psi_a, rng)
    tel_b = teleport_normal(psi_b, rng)
    encrypted = np.kron(tel_a.received, tel_b.received)
    rho = np.outer(encrypted, encrypted.conj())
    charlie_probs = np.array([float(np.trace(_apply_outcome_map(c, rho)).real) for c in chois])

    # each stage is scored against its own input, so at one port the stage scores multiply to the final fidelity
    stage_fidelities = {"teleport_a": tel_a.fidelity, "teleport_b": tel_b.fidelity}
    i, out, _ = _sample(chois, rho, rng)
    stage_fidelities[CASCADE_STAGES[0]] = fidelity(out, rho)
    fix_a = np.kron(pauli_string_matrix(tel_a.outcome).conj().T, np.eye(2))
    rho = fix_a @ out @ fix_a.conj().T

    alice_ports = []
    for port in range(n_ports):
        if port == i:
            j, out, _ = _sample(chois, rho, rng)
            stage_fidelities[CASCADE_STAGES[1]] = fidelity(out, rho)
            rho = out
            alice_ports.append(j)
        else:
            alice_ports.append(_sample(chois, mixed, rng)[0])

    to_bob = []
    for port in range(n_ports):
        row = []
        for sub in range(n_ports):
            if (port, sub) == (i, alice_ports[i]):
                k, out, _ = _sample(chois, rho, rng)
                stage_fidelities[CASCADE_STAGES[2]] = fidelity(out, rho)
                rho = out
                row.append(k)
            else:
                row.append(_sample(chois, mixed, rng)[0])
        to_bob.append(row)
    fix_b = np.kron(np.eye(2), pauli_string_matrix(tel_b.outcome).conj().T)
    rho = fix_b @ rho @ fix_b.conj().T

    # X'_1 keeps Charlie's record; X'_0 gets it shifted by a key that only V'_0 holds
    key = int(rng.integers(n_ports)) if otp else 0
    key_probs = np.full(n_ports, 1.0 / n_ports) if otp else np.eye(n_ports)[0]
    records = {
        "alice": {"pauli": tel_a.outcome, "ports": alice_ports},
        "bob": {"pauli": tel_b.outcome},
        "charlie": {"to_alice": i, "to_bob": to_bob},
        "x_regions": {"x0": pad_record(i, key, n_ports), "x1": i},
    }
    if otp:
        records["v0"] = {"key": key}
    chain = resolve_chain(records, n_ports)

    target = np.kron(psi_a, psi_b)
    final_fidelity = float(np.vdot(target, rho @ target).real)

    oracle = np.outer(target, target.conj())
    for _ in CASCADE_STAGES:
        oracle = pbt_channel(oracle, chois)
    oracle_fidelity = float(np.vdot(target, oracle @ target).real)

    tab, owners = cascade_resource(n_ports)
    mi = mutual_information(tab, owners["alice"], owners["bob"])
    check = one_time_pad_check(record_joint(charlie_probs, key_probs))
    logger.info(
        f"Cascade N={n_ports}: chain {chain}, fidelity {final_fidelity:.6f} (oracle {oracle_fidelity:.6f}), I(V0:V1)={mi}"
    )
    return CascadeReport(
        n_ports,
        otp,
        seed,
        final_fidelity,
        oracle_fidelity,
        stage_fidelities,
        chain,
        records,
        mi,
        check,
    )
