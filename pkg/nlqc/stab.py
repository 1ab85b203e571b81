"""Stabilizer engine on GF(2) symplectic vectors.

A Pauli is stored as i^p X^x Z^z with the X factor to the left of the Z factor
on every qubit, so Y = i X Z carries one unit of phase.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import DEFAULT_JOBS
from nlqc.errors import (
    CodeStructureError,
    LogicalOperatorError,
    PreconditionError,
    SupportError,
)

logger = logging.getLogger(__name__)

SIGN_PREFIX = {0: "+", 1: "+i", 2: "-", 3: "-i"}
PREFIX_PHASE = {"+": 0, "+i": 1, "-": 2, "-i": 3, "": 0, "i": 1}


# ---------------------------------------------------------------- GF(2) helpers

def gf2_rref(matrix: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    """Row-reduced echelon form over GF(2); pivots chosen left to right."""
    m = (np.asarray(matrix, dtype=np.uint8) & 1).copy()
    rows, cols = m.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        hits = np.nonzero(m[r:, c])[0]
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            m[[r, p]] = m[[p, r]]
        others = np.nonzero(m[:, c])[0]
        others = others[others != r]
        m[others] ^= m[r]
        pivots.append(c)
        r += 1
    return m, pivots


def gf2_rank(matrix: np.ndarray) -> int:
    if matrix.size == 0:
        return 0
    return len(gf2_rref(matrix)[1])


def gf2_solve(a: np.ndarray, b: np.ndarray) -> Optional[np.ndarray]:
    """One solution of a x = b over GF(2) (free variables set to 0), or None."""
    a = np.asarray(a, dtype=np.uint8) & 1
    b = np.asarray(b, dtype=np.uint8).reshape(-1, 1) & 1
    rows, cols = a.shape
    if cols == 0:
        return np.zeros(0, dtype=np.uint8) if not b.any() else None
    reduced, pivots = gf2_rref(np.hstack([a, b]))
    if cols in pivots:
        return None
    x = np.zeros(cols, dtype=np.uint8)
    for row, c in enumerate(pivots):
        x[c] = reduced[row, cols]
    return x


def gf2_nullspace(matrix: np.ndarray) -> np.ndarray:
    """Basis (as rows) of {x : matrix x = 0} over GF(2)."""
    m = np.asarray(matrix, dtype=np.uint8) & 1
    rows, cols = m.shape
    reduced, pivots = gf2_rref(m)
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        x = np.zeros(cols, dtype=np.uint8)
        x[f] = 1
        for row, c in enumerate(pivots):
            x[c] = reduced[row, f]
        basis.append(x)
    return np.array(basis, dtype=np.uint8).reshape(len(basis), cols)


# ---------------------------------------------------------------- Pauli operators

@dataclass(frozen=True, eq=False)
class PauliOp:
    x: np.ndarray
    z: np.ndarray
    phase: int = 0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.uint8) & 1
        z = np.asarray(self.z, dtype=np.uint8) & 1
        if x.shape != z.shape or x.ndim != 1:
            raise PreconditionError(f"Pauli x/z vectors differ in shape: {x.shape} vs {z.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "phase", int(self.phase) % 4)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @classmethod
    def identity(cls, n: int) -> "PauliOp":
        return cls(np.zeros(n, np.uint8), np.zeros(n, np.uint8), 0)

    @classmethod
    def from_label(cls, label: str) -> "PauliOp":
        label = label.strip()
        body = label.lstrip("+-i")
        prefix = label[: len(label) - len(body)]
        if prefix not in PREFIX_PHASE:
            raise PreconditionError(f"Unknown Pauli sign prefix {prefix!r}")
        x = np.array([c in "XY" for c in body], dtype=np.uint8)
        z = np.array([c in "ZY" for c in body], dtype=np.uint8)
        if any(c not in "IXYZ" for c in body):
            raise PreconditionError(f"Invalid Pauli string {label!r}")
        n_y = sum(c == "Y" for c in body)
        return cls(x, z, PREFIX_PHASE[prefix] + n_y)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> "PauliOp":
        return cls.on(n, {qubit: letter})

    @classmethod
    def on(cls, n: int, letters: Dict[int, str], sign: int = 1) -> "PauliOp":
        x = np.zeros(n, np.uint8)
        z = np.zeros(n, np.uint8)
        n_y = 0
        for q, letter in letters.items():
            if q < 0 or q >= n:
                raise SupportError(f"Qubit {q} out of range for {n} qubits")
            x[q] = letter in "XY"
            z[q] = letter in "ZY"
            n_y += letter == "Y"
        return cls(x, z, n_y + (0 if sign > 0 else 2))

    @property
    def n_y(self) -> int:
        return int(np.sum(self.x & self.z))

    def is_hermitian(self) -> bool:
        return (self.phase - self.n_y) % 2 == 0

    @property
    def sign(self) -> complex:
        return 1j ** ((self.phase - self.n_y) % 4)

    def letters(self) -> str:
        return "".join("IXZY"[int(a) + 2 * int(b)] for a, b in zip(self.x, self.z))

    def label(self) -> str:
        return SIGN_PREFIX[(self.phase - self.n_y) % 4] + self.letters()

    def __repr__(self) -> str:
        return f"PauliOp({self.label()})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PauliOp)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.z, other.z)
            and self.phase == other.phase
        )

    def __hash__(self):
        return hash((self.x.tobytes(), self.z.tobytes(), self.phase))

    def __mul__(self, other: "PauliOp") -> "PauliOp":
        cross = int(np.sum(self.z & other.x))
        return PauliOp(self.x ^ other.x, self.z ^ other.z, self.phase + other.phase + 2 * cross)

    def commutes(self, other: "PauliOp") -> bool:
        return symplectic_product(self.x, self.z, other.x, other.z) == 0

    def negated(self) -> "PauliOp":
        return PauliOp(self.x, self.z, self.phase + 2)

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(int(q) for q in np.nonzero(self.x | self.z)[0])

    @property
    def weight(self) -> int:
        return len(self.support)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.z])

    def embedded(self, n: int, qubits: Sequence[int]) -> "PauliOp":
        """Place this Pauli on ``qubits`` of an n-qubit register."""
        x = np.zeros(n, np.uint8)
        z = np.zeros(n, np.uint8)
        idx = np.asarray(qubits, dtype=int)
        x[idx] = self.x
        z[idx] = self.z
        return PauliOp(x, z, self.phase)

    def restricted(self, qubits: Sequence[int]) -> "PauliOp":
        idx = np.asarray(qubits, dtype=int)
        x, z = self.x[idx], self.z[idx]
        return PauliOp(x, z, self.phase - self.n_y + int(np.sum(x & z)))

    def to_matrix(self) -> np.ndarray:
        xm = np.array([[0, 1], [1, 0]], dtype=complex)
        zm = np.diag([1.0, -1.0]).astype(complex)
        out = np.ones((1, 1), dtype=complex)
        for a, b in zip(self.x, self.z):
            local = np.eye(2, dtype=complex)
            if a:
                local = local @ xm
            if b:
                local = local @ zm
            out = np.kron(out, local)
        return (1j ** self.phase) * out


def symplectic_product(x1, z1, x2, z2) -> int:
    return int((np.sum(x1 & z2) + np.sum(z1 & x2)) % 2)


# ---------------------------------------------------------------- tableaus

@dataclass(frozen=True, eq=False)
class Tableau:
    """Rows 0..n-1 are destabilizers, rows n..2n-1 stabilizers."""

    x: np.ndarray
    z: np.ndarray
    phase: np.ndarray

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @classmethod
    def zero_state(cls, n: int) -> "Tableau":
        x = np.zeros((2 * n, n), dtype=np.uint8)
        z = np.zeros((2 * n, n), dtype=np.uint8)
        x[np.arange(n), np.arange(n)] = 1
        z[n + np.arange(n), np.arange(n)] = 1
        return cls(x, z, np.zeros(2 * n, dtype=np.int64))

    def copy(self) -> "Tableau":
        return Tableau(self.x.copy(), self.z.copy(), self.phase.copy())

    def row(self, index: int) -> PauliOp:
        return PauliOp(self.x[index], self.z[index], int(self.phase[index]))

    def stabilizers(self) -> List[PauliOp]:
        return [self.row(self.n + i) for i in range(self.n)]

    def destabilizers(self) -> List[PauliOp]:
        return [self.row(i) for i in range(self.n)]

    def stabilizer_matrix(self) -> np.ndarray:
        n = self.n
        return np.hstack([self.x[n:], self.z[n:]])

    def _set_row(self, index: int, op: PauliOp) -> None:
        self.x[index] = op.x
        self.z[index] = op.z
        self.phase[index] = op.phase

    @classmethod
    def direct_sum(cls, parts: Sequence["Tableau"]) -> "Tableau":
        n = sum(p.n for p in parts)
        x = np.zeros((2 * n, n), dtype=np.uint8)
        z = np.zeros((2 * n, n), dtype=np.uint8)
        phase = np.zeros(2 * n, dtype=np.int64)
        offset = 0
        for p in parts:
            k = p.n
            cols = slice(offset, offset + k)
            for block, base in ((slice(0, k), offset), (slice(k, 2 * k), n + offset)):
                rows = slice(base, base + k)
                x[rows, cols] = p.x[block]
                z[rows, cols] = p.z[block]
                phase[rows] = p.phase[block]
            offset += k
        return cls(x, z, phase)


def _check_qubits(tab: Tableau, qubits: Sequence[int]) -> None:
    for q in qubits:
        if q < 0 or q >= tab.n:
            raise SupportError(f"Qubit {q} out of range for a {tab.n}-qubit tableau")
    if len(set(qubits)) != len(qubits):
        raise SupportError(f"Gate qubits must be distinct: {tuple(qubits)}")


def _apply_inplace(tab: Tableau, gate: str, qubits: Sequence[int]) -> None:
    x, z, p = tab.x, tab.z, tab.phase
    if gate == "H":
        (q,) = qubits
        p += 2 * (x[:, q] & z[:, q])
        x[:, q], z[:, q] = z[:, q].copy(), x[:, q].copy()
    elif gate == "S":
        (q,) = qubits
        p += x[:, q]
        z[:, q] ^= x[:, q]
    elif gate in ("SDG", "S_DAG", "Sdg"):
        (q,) = qubits
        p += 3 * x[:, q]
        z[:, q] ^= x[:, q]
    elif gate in ("CNOT", "CX"):
        c, t = qubits
        x[:, t] ^= x[:, c]
        z[:, c] ^= z[:, t]
    elif gate == "CZ":
        c, t = qubits
        for g, qs in (("H", (t,)), ("CNOT", (c, t)), ("H", (t,))):
            _apply_inplace(tab, g, qs)
    elif gate == "CY":
        c, t = qubits
        for g, qs in (("SDG", (t,)), ("CNOT", (c, t)), ("S", (t,))):
            _apply_inplace(tab, g, qs)
    elif gate == "SWAP":
        a, b = qubits
        x[:, [a, b]] = x[:, [b, a]]
        z[:, [a, b]] = z[:, [b, a]]
    elif gate == "X":
        (q,) = qubits
        p += 2 * z[:, q]
    elif gate == "Z":
        (q,) = qubits
        p += 2 * x[:, q]
    elif gate == "Y":
        (q,) = qubits
        p += 2 * (x[:, q] ^ z[:, q])
    elif gate == "I":
        pass
    else:
        raise PreconditionError(f"Unknown Clifford gate {gate!r}")
    p %= 4


GATE_ARITY = {"H": 1, "S": 1, "SDG": 1, "X": 1, "Y": 1, "Z": 1, "I": 1, "CNOT": 2, "CX": 2, "CZ": 2, "CY": 2, "SWAP": 2}

Gate = Tuple[str, Tuple[int, ...]]


def apply_clifford(tab: Tableau, gate: str, qubits: Union[int, Sequence[int]]) -> Tableau:
    qubits = (qubits,) if isinstance(qubits, (int, np.integer)) else tuple(int(q) for q in qubits)
    _check_qubits(tab, qubits)
    if GATE_ARITY.get(gate) not in (None, len(qubits)):
        raise PreconditionError(f"Gate {gate} takes {GATE_ARITY[gate]} qubits, got {len(qubits)}")
    out = tab.copy()
    _apply_inplace(out, gate, qubits)
    return out


def apply_circuit(tab: Tableau, circuit: Iterable[Gate]) -> Tableau:
    out = tab.copy()
    for gate, qubits in circuit:
        qubits = tuple(qubits)
        _check_qubits(out, qubits)
        _apply_inplace(out, gate, qubits)
    return out


def conjugate_pauli(op: PauliOp, circuit: Iterable[Gate]) -> PauliOp:
    """G P G^dag for the circuit G (gates applied in order)."""
    holder = Tableau(op.x[None, :].copy(), op.z[None, :].copy(), np.array([op.phase], dtype=np.int64))
    for gate, qubits in circuit:
        _apply_inplace(holder, gate, tuple(qubits))
    return holder.row(0)


def _anticommuting_rows(tab: Tableau, op: PauliOp) -> np.ndarray:
    sp = (tab.x @ op.z.astype(np.int64) + tab.z @ op.x.astype(np.int64)) % 2
    return sp.astype(bool)


def _row_product_inplace(tab: Tableau, target: int, source: int) -> None:
    """row[target] <- row[source] * row[target]."""
    cross = int(np.sum(tab.z[source] & tab.x[target]))
    tab.phase[target] = (tab.phase[source] + tab.phase[target] + 2 * cross) % 4
    tab.x[target] ^= tab.x[source]
    tab.z[target] ^= tab.z[source]


def pauli_expectation(tab: Tableau, op: PauliOp) -> int:
    """Expectation (+1, -1 or 0) of a hermitian Pauli on a stabilizer state."""
    if op.n != tab.n:
        raise SupportError(f"Pauli on {op.n} qubits, tableau on {tab.n}")
    anti = _anticommuting_rows(tab, op)
    n = tab.n
    if anti[n:].any():
        return 0
    acc = PauliOp.identity(n)
    for i in np.nonzero(anti[:n])[0]:
        acc = acc * tab.row(n + int(i))
    if not (np.array_equal(acc.x, op.x) and np.array_equal(acc.z, op.z)):
        raise LogicalOperatorError("Pauli commutes with the state but is not in its stabilizer group")
    ratio = (op.phase - acc.phase) % 4
    if ratio % 2:
        raise PreconditionError(f"Pauli {op.label()} is not hermitian")
    return 1 if ratio == 0 else -1


def pauli_expectations(tab: Tableau, ops: Sequence[PauliOp], jobs: int = DEFAULT_JOBS) -> List[int]:
    if jobs <= 1:
        return [pauli_expectation(tab, op) for op in ops]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda op: pauli_expectation(tab, op), ops))


def measure_pauli(
    tab: Tableau,
    op: PauliOp,
    rng: Optional[np.random.Generator] = None,
    forced: Optional[int] = None,
) -> Tuple[Tableau, int]:
    """Measure a hermitian Pauli; outcome bit 0 means eigenvalue +1.

    ``forced`` post-selects a random outcome. Forcing a deterministic outcome
    to the impossible value raises.
    """
    if not op.is_hermitian():
        raise PreconditionError(f"Cannot measure non-hermitian {op.label()}")
    n = tab.n
    anti = _anticommuting_rows(tab, op)
    stab_hits = np.nonzero(anti[n:])[0]
    if stab_hits.size == 0:
        value = pauli_expectation(tab, op)
        bit = 0 if value == 1 else 1
        if forced is not None and forced != bit:
            raise PreconditionError(f"Outcome of {op.label()} is deterministically {value:+d}")
        return tab.copy(), bit
    out = tab.copy()
    pivot = n + int(stab_hits[0])
    for row in np.nonzero(anti)[0]:
        row = int(row)
        if row != pivot:
            _row_product_inplace(out, row, pivot)
    out._set_row(pivot - n, out.row(pivot))
    if forced is None:
        if rng is None:
            raise PreconditionError("A random outcome needs an rng")
        bit = int(rng.integers(2))
    else:
        bit = int(forced)
    out._set_row(pivot, op if bit == 0 else op.negated())
    return out, bit


def measure(tab: Tableau, qubit: int, rng: Optional[np.random.Generator] = None,
            forced: Optional[int] = None) -> Tuple[Tableau, int]:
    _check_qubits(tab, (qubit,))
    return measure_pauli(tab, PauliOp.single(tab.n, qubit, "Z"), rng, forced)


def from_stabilizers(generators: Sequence[PauliOp]) -> Tableau:
    """Stabilizer state fixed by n independent commuting hermitian generators."""
    if not generators:
        raise PreconditionError("Need at least one generator")
    n = generators[0].n
    if len(generators) != n:
        raise PreconditionError(f"A pure state on {n} qubits needs {n} generators, got {len(generators)}")
    for g in generators:
        if not g.is_hermitian():
            raise PreconditionError(f"Generator {g.label()} is not hermitian")
    matrix = np.array([g.vector() for g in generators], dtype=np.uint8)
    if gf2_rank(matrix) != n:
        raise PreconditionError("Generators are not independent")
    for i, g in enumerate(generators):
        for h in generators[i + 1:]:
            if not g.commutes(h):
                raise PreconditionError(f"Generators {g.label()} and {h.label()} anticommute")

    tab = Tableau.zero_state(n)
    for g in generators:
        anti = _anticommuting_rows(tab, g)
        if anti[n:].any():
            tab, _ = measure_pauli(tab, g, forced=0)

    wrong = [i for i, g in enumerate(generators) if pauli_expectation(tab, g) != 1]
    if wrong:
        logger.debug("Fixing %d generator signs with Pauli flips", len(wrong))
        # flip each wrong sign with a Pauli anticommuting with exactly that generator
        system = np.hstack([matrix[:, n:], matrix[:, :n]])
        for i in wrong:
            target = np.zeros(n, dtype=np.uint8)
            target[i] = 1
            solution = gf2_solve(system, target)
            flip = PauliOp(solution[:n], solution[n:], 0)
            anti = _anticommuting_rows(tab, flip)
            tab.phase[anti] = (tab.phase[anti] + 2) % 4
    return tab


def tableau_to_statevector(tab: Tableau) -> np.ndarray:
    """Dense state vector (qubit 0 most significant) of a small stabilizer state."""
    n = tab.n
    if n > 10:
        raise PreconditionError(f"Dense conversion limited to 10 qubits, got {n}")
    dim = 2 ** n
    projector = np.eye(dim, dtype=complex)
    for g in tab.stabilizers():
        projector = projector @ (np.eye(dim) + g.to_matrix()) / 2
    # pick the column with largest weight as representative
    col = int(np.argmax(np.linalg.norm(projector, axis=0)))
    psi = projector[:, col]
    psi = psi / np.linalg.norm(psi)
    nonzero = np.flatnonzero(np.abs(psi) > 1e-12)
    if nonzero.size:
        psi = psi * np.exp(-1j * np.angle(psi[nonzero[0]]))
    return psi


def _restricted_matrix(gens: np.ndarray, n: int, qubits: Sequence[int]) -> np.ndarray:
    idx = np.asarray(list(qubits), dtype=int)
    return np.hstack([gens[:, idx], gens[:, n + idx]])


def region_entropy(tab: Tableau, region: Iterable[int]) -> int:
    """Entropy in bits of the reduced state: rank(G restricted to R) - |R|."""
    region = sorted(set(int(q) for q in region))
    _check_qubits(tab, region)
    if not region:
        return 0
    gens = tab.stabilizer_matrix()
    return gf2_rank(_restricted_matrix(gens, tab.n, region)) - len(region)


def mutual_information(tab: Tableau, first: Iterable[int], second: Iterable[int]) -> int:
    a = set(int(q) for q in first)
    b = set(int(q) for q in second)
    if a & b:
        raise SupportError(f"Regions overlap on {sorted(a & b)}")
    return region_entropy(tab, a) + region_entropy(tab, b) - region_entropy(tab, a | b)


def _subgroup_on(generators: Sequence[PauliOp], keep: Sequence[int]) -> List[PauliOp]:
    """Generators of the subgroup supported inside ``keep``."""
    n = generators[0].n
    dropped = [q for q in range(n) if q not in set(keep)]
    gens = np.array([g.vector() for g in generators], dtype=np.uint8)
    if not dropped:
        return list(generators)
    outside = _restricted_matrix(gens, n, dropped)
    combos = gf2_nullspace(outside.T)
    elements = []
    for combo in combos:
        acc = PauliOp.identity(n)
        for i in np.nonzero(combo)[0]:
            acc = acc * generators[int(i)]
        elements.append(acc)
    return elements


def restrict_to(tab: Tableau, keep: Sequence[int]) -> Tableau:
    """Trace out the complement of ``keep`` when it is disentangled from ``keep``."""
    keep = list(keep)
    _check_qubits(tab, keep)
    elements = _subgroup_on(tab.stabilizers(), keep)
    local = [e.restricted(keep) for e in elements]
    matrix = np.array([e.vector() for e in local], dtype=np.uint8).reshape(len(local), 2 * len(keep))
    reduced, pivots = gf2_rref(matrix.T)
    if len(pivots) != len(keep):
        raise SupportError(f"Qubits {keep} are entangled with the rest (rank {len(pivots)} < {len(keep)})")
    chosen = [local[c] for c in pivots]
    return from_stabilizers(chosen)


def bell_project(tab: Tableau, first: int, second: int) -> Tableau:
    """Post-select (first, second) onto |Phi+> and drop both qubits."""
    n = tab.n
    xx = PauliOp.on(n, {first: "X", second: "X"})
    zz = PauliOp.on(n, {first: "Z", second: "Z"})
    tab, _ = measure_pauli(tab, xx, forced=0)
    tab, _ = measure_pauli(tab, zz, forced=0)
    keep = [q for q in range(n) if q not in (first, second)]
    return restrict_to(tab, keep)


def contract(left: Tableau, right: Tableau, left_leg: int, right_leg: int) -> Tableau:
    """Glue two stabilizer tensors along one leg each.

    The result lists the remaining legs of ``left`` followed by those of ``right``.
    """
    joined = Tableau.direct_sum([left, right])
    return bell_project(joined, left_leg, left.n + right_leg)


# ---------------------------------------------------------------- codes

@dataclass(frozen=True, eq=False)
class StabilizerCode:
    n: int
    stabilizers: Tuple[PauliOp, ...]
    logical_x: Tuple[PauliOp, ...]
    logical_z: Tuple[PauliOp, ...]
    name: str = "code"

    def __post_init__(self):
        object.__setattr__(self, "stabilizers", tuple(self.stabilizers))
        object.__setattr__(self, "logical_x", tuple(self.logical_x))
        object.__setattr__(self, "logical_z", tuple(self.logical_z))
        validate_code(self)

    @property
    def k(self) -> int:
        return len(self.logical_x)

    def stabilizer_matrix(self) -> np.ndarray:
        return np.array([s.vector() for s in self.stabilizers], dtype=np.uint8).reshape(len(self.stabilizers), 2 * self.n)

    def logical(self, kind: str, index: int) -> PauliOp:
        if index < 0 or index >= self.k:
            raise LogicalOperatorError(f"Logical index {index} out of range for k={self.k}")
        return (self.logical_x if kind == "X" else self.logical_z)[index]

    def encoded_zero(self) -> Tableau:
        return from_stabilizers(list(self.stabilizers) + list(self.logical_z))

    def relabeled(self, new_position: Sequence[int], n_total: int) -> "StabilizerCode":
        def move(op: PauliOp) -> PauliOp:
            return op.embedded(n_total, new_position)

        return StabilizerCode(
            n_total,
            tuple(move(s) for s in self.stabilizers),
            tuple(move(l) for l in self.logical_x),
            tuple(move(l) for l in self.logical_z),
            self.name,
        )


def validate_code(code: StabilizerCode) -> None:
    ops = list(code.stabilizers) + list(code.logical_x) + list(code.logical_z)
    for op in ops:
        if op.n != code.n:
            raise CodeStructureError(f"Operator {op.label()} has {op.n} qubits, code has {code.n}")
        if not op.is_hermitian():
            raise CodeStructureError(f"Operator {op.label()} is not hermitian")
    stabs = code.stabilizers
    for i, s in enumerate(stabs):
        for t in stabs[i + 1:]:
            if not s.commutes(t):
                raise CodeStructureError(f"Stabilizers {s.label()} and {t.label()} anticommute")
    if len(code.logical_x) != len(code.logical_z):
        raise CodeStructureError("Logical X and Z lists differ in length")
    k = len(code.logical_x)
    if stabs and gf2_rank(np.array([s.vector() for s in stabs])) != code.n - k:
        raise CodeStructureError(f"Stabilizer rank differs from n - k = {code.n - k}")
    for j in range(k):
        for s in stabs:
            if not (code.logical_x[j].commutes(s) and code.logical_z[j].commutes(s)):
                raise CodeStructureError(f"Logical {j} does not commute with stabilizer {s.label()}")
        for i in range(k):
            anti = not code.logical_x[i].commutes(code.logical_z[j])
            if anti != (i == j):
                raise CodeStructureError(f"Logical X{i} and Z{j} have the wrong commutation")
            if i < j and not (
                code.logical_x[i].commutes(code.logical_x[j]) and code.logical_z[i].commutes(code.logical_z[j])
            ):
                raise CodeStructureError(f"Logicals {i} and {j} of the same type anticommute")


def clean_logical(code: StabilizerCode, logical_op: PauliOp, region: Iterable[int]) -> Optional[PauliOp]:
    """Representative of ``logical_op`` times stabilizers supported inside ``region``, or None."""
    if logical_op.n != code.n:
        raise LogicalOperatorError(f"Logical on {logical_op.n} qubits, code has {code.n}")
    for s in code.stabilizers:
        if not logical_op.commutes(s):
            raise LogicalOperatorError(f"{logical_op.label()} does not commute with stabilizer {s.label()}")
    region = set(int(q) for q in region)
    outside = [q for q in range(code.n) if q not in region]
    if not outside:
        return logical_op
    if not code.stabilizers:
        return logical_op if not any(logical_op.x[outside] | logical_op.z[outside]) else None
    gens = code.stabilizer_matrix()
    a = _restricted_matrix(gens, code.n, outside).T
    b = np.concatenate([logical_op.x[outside], logical_op.z[outside]])
    combo = gf2_solve(a, b)
    if combo is None:
        return None
    rep = logical_op
    for i in np.nonzero(combo)[0]:
        rep = code.stabilizers[int(i)] * rep
    return rep


def _logicals_supported_on(code: StabilizerCode, region: Sequence[int]) -> List[PauliOp]:
    """Basis of normalizer elements (stabilizers and logicals) supported inside ``region``."""
    generators = list(code.stabilizers) + list(code.logical_x) + list(code.logical_z)
    return _subgroup_on(generators, region)


def erasure_correctable(code: StabilizerCode, erased: Iterable[int], logical_index: Optional[int] = None) -> bool:
    """No logical operator supported on ``erased`` acts on the chosen logical (or on any)."""
    erased = sorted(set(int(q) for q in erased))
    if not erased:
        return True
    indices = range(code.k) if logical_index is None else [logical_index]
    for element in _logicals_supported_on(code, erased):
        for j in indices:
            if not (element.commutes(code.logical_x[j]) and element.commutes(code.logical_z[j])):
                return False
    return True


def recoverable(code: StabilizerCode, region: Iterable[int], logical_index: int) -> bool:
    region = set(int(q) for q in region)
    x_rep = clean_logical(code, code.logical("X", logical_index), region)
    z_rep = clean_logical(code, code.logical("Z", logical_index), region)
    by_cleaning = x_rep is not None and z_rep is not None
    complement = [q for q in range(code.n) if q not in region]
    by_erasure = erasure_correctable(code, complement, logical_index)
    if by_cleaning != by_erasure:
        raise LogicalOperatorError(
            f"Cleaning ({by_cleaning}) and erasure correctability ({by_erasure}) disagree for region {sorted(region)}"
        )
    return by_cleaning


def code_to_text(code: StabilizerCode) -> str:
    lines = [f"# {code.name} [[{code.n},{code.k}]]"]
    lines += [s.label() for s in code.stabilizers]
    lines += [f"LX {l.label()}" for l in code.logical_x]
    lines += [f"LZ {l.label()}" for l in code.logical_z]
    return "\n".join(lines) + "\n"


def code_from_text(text: str, name: str = "code") -> StabilizerCode:
    stabs, lx, lz = [], [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("LX "):
            lx.append(PauliOp.from_label(line[3:]))
        elif line.startswith("LZ "):
            lz.append(PauliOp.from_label(line[3:]))
        else:
            stabs.append(PauliOp.from_label(line))
    ops = stabs + lx + lz
    if not ops:
        raise PreconditionError("Code text holds no generators")
    return StabilizerCode(ops[0].n, tuple(stabs), tuple(lx), tuple(lz), name)


def code_from_state(state: Tableau, bulk: Sequence[int], name: str = "code") -> StabilizerCode:
    """Read a code off a Choi state: ``bulk`` legs are logical inputs, the rest physical."""
    n = state.n
    bulk = list(bulk)
    boundary = [q for q in range(n) if q not in set(bulk)]
    gens = state.stabilizers()
    stabs = [e.restricted(boundary) for e in _subgroup_on(gens, boundary)]
    if stabs:
        matrix = np.array([s.vector() for s in stabs], dtype=np.uint8)
        reduced, pivots = gf2_rref(matrix.T)
        stabs = [stabs[c] for c in pivots]
    if len(stabs) != len(boundary) - len(bulk):
        raise CodeStructureError(
            f"Bulk legs {bulk} do not map isometrically: {len(stabs)} boundary stabilizers for {len(boundary)} legs"
        )
    # logical X_j: group element acting as X on bulk leg j and trivially on the other bulk legs
    matrix = np.array([g.vector() for g in gens], dtype=np.uint8)
    logical_x, logical_z = [], []
    for leg in bulk:
        found = []
        for letter in "XZ":
            target = PauliOp.on(n, {leg: letter}).vector()
            a = np.hstack([matrix[:, bulk], matrix[:, [n + q for q in bulk]]]).T
            b = np.concatenate([target[bulk], target[[n + q for q in bulk]]])
            combo = gf2_solve(a, b)
            if combo is None:
                raise CodeStructureError(f"Bulk leg {leg} carries no logical {letter}")
            acc = PauliOp.identity(n)
            for i in np.nonzero(combo)[0]:
                acc = acc * gens[int(i)]
            # acc = sign * (letter on leg) (x) Q, and the sign travels with Q
            found.append(acc.restricted(boundary))
        logical_x.append(found[0])
        logical_z.append(found[1])
    return StabilizerCode(len(boundary), tuple(stabs), tuple(logical_x), tuple(logical_z), name)
