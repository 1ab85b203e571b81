import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import expm_multiply

from config import DENSE_DIM_CAP, EXACT_TOL, OUTPUT_TOL, STATEVECTOR_DIM_CAP
from nlqc.errors import (
    CapExceededError,
    DimensionMismatchError,
    NonUnitaryError,
    PreconditionError,
    SupportError,
)
from nlqc.qcore import DenseOperator, apply_local, haar_unitary, pauli_matrices, single_site_basis

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Ring:
    n_sites: int
    local_dim: int = 2

    def __post_init__(self):
        if self.n_sites < 4 or self.n_sites % 2:
            raise PreconditionError(f"Ring needs an even number of sites >= 4, got {self.n_sites}")
        if self.local_dim < 2:
            raise PreconditionError(f"Local dimension must be >= 2, got {self.local_dim}")

    @property
    def spacing(self) -> float:
        return 2 * math.pi / self.n_sites

    @property
    def dims(self) -> Tuple[int, ...]:
        return (self.local_dim,) * self.n_sites

    @property
    def dim(self) -> int:
        return self.local_dim ** self.n_sites

    def angle(self, site: int) -> float:
        return self.spacing * (site % self.n_sites)

    def hops(self, i: int, j: int) -> int:
        k = abs(i - j) % self.n_sites
        return min(k, self.n_sites - k)

    def distance(self, i: int, j: int) -> float:
        return self.hops(i, j) * self.spacing

    def sites(self) -> range:
        return range(self.n_sites)


@dataclass(frozen=True)
class Region:
    """Site set on a ring, canonically stored as sorted maximal arcs [start, stop) mod n."""

    n_sites: int
    arcs: Tuple[Tuple[int, int], ...]

    @classmethod
    def from_sites(cls, n_sites: int, sites: Iterable[int]) -> "Region":
        members = sorted({int(s) % n_sites for s in sites})
        if not members:
            return cls(n_sites, ())
        if len(members) == n_sites:
            return cls(n_sites, ((0, n_sites),))
        arcs: List[List[int]] = []
        for s in members:
            if arcs and arcs[-1][1] == s:
                arcs[-1][1] = s + 1
            else:
                arcs.append([s, s + 1])
        # merge the arc that wraps through site 0
        if len(arcs) > 1 and arcs[0][0] == 0 and arcs[-1][1] == n_sites:
            last = arcs.pop()
            arcs[0] = [last[0], arcs[0][1] + n_sites]
            arcs.sort()
        return cls(n_sites, tuple((a, b) for a, b in arcs))

    @classmethod
    def arc(cls, n_sites: int, start: int, stop: int) -> "Region":
        """Sites start, start+1, ..., stop-1 taken mod n (stop may exceed n)."""
        return cls.from_sites(n_sites, range(start, stop))

    @property
    def sites(self) -> Tuple[int, ...]:
        members = set()
        for a, b in self.arcs:
            members.update(k % self.n_sites for k in range(a, b))
        return tuple(sorted(members))

    @property
    def site_set(self) -> FrozenSet[int]:
        return frozenset(self.sites)

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, site: int) -> bool:
        return site % self.n_sites in self.site_set

    def complement(self) -> "Region":
        return Region.from_sites(self.n_sites, set(range(self.n_sites)) - self.site_set)


def quarter_regions(ring: Ring) -> Tuple[Region, Region, Region, Region]:
    """W, E, N, S halves of the ring.

    Angles are taken mod 2 pi: W = [-pi, 0), E = [0, pi), N = [-pi/2, pi/2), S = [pi/2, 3pi/2).
    """
    n = ring.n_sites
    west = Region.from_sites(n, (k for k in range(n) if 2 * k >= n))
    east = Region.from_sites(n, (k for k in range(n) if 2 * k < n))
    north = Region.from_sites(n, (k for k in range(n) if 4 * k < n or 4 * k >= 3 * n))
    south = Region.from_sites(n, (k for k in range(n) if n <= 4 * k < 3 * n))
    return west, east, north, south


def named_regions(ring: Ring) -> Dict[str, Region]:
    return dict(zip("WENS", quarter_regions(ring)))


def region_distance(ring: Ring, first: Region, second: Region) -> float:
    if not len(first) or not len(second):
        raise SupportError("region_distance needs two non-empty regions")
    return min(ring.distance(i, j) for i in first for j in second)


def site_depth(ring: Ring, site: int, region: Region) -> float:
    """Distance from ``site`` to the complement of ``region``."""
    outside = region.complement()
    if not len(outside):
        return math.pi
    return min(ring.distance(site, j) for j in outside)


@dataclass(frozen=True)
class Gate:
    sites: Tuple[int, ...]
    matrix: np.ndarray = field(repr=False, compare=False)
    label: str = "U"


@dataclass(frozen=True)
class BrickworkCircuit:
    layers: Tuple[Tuple[Gate, ...], ...] = ()

    @property
    def depth(self) -> int:
        return len(self.layers)

    def gates(self) -> List[Gate]:
        return [g for layer in self.layers for g in layer]


@dataclass(frozen=True)
class HamiltonianTerm:
    sites: Tuple[int, ...]
    matrix: np.ndarray = field(repr=False, compare=False)
    label: str = "h"


@dataclass(frozen=True)
class LocalHamiltonian:
    terms: Tuple[HamiltonianTerm, ...]
    time: float = 0.0
    name: str = "custom"

    def at_time(self, time: float) -> "LocalHamiltonian":
        return LocalHamiltonian(self.terms, float(time), self.name)


ModelSpec = Union[BrickworkCircuit, LocalHamiltonian]


def validate_model(spec: ModelSpec, ring: Ring) -> None:
    d = ring.local_dim
    if isinstance(spec, BrickworkCircuit):
        for depth, layer in enumerate(spec.layers):
            used = set()
            for gate in layer:
                if len(gate.sites) != 2 or ring.hops(*gate.sites) != 1:
                    raise SupportError(f"Layer {depth}: gate on {gate.sites} is not nearest-neighbour")
                if used & set(gate.sites):
                    raise SupportError(f"Layer {depth}: gates overlap on {sorted(used & set(gate.sites))}")
                used.update(gate.sites)
                m = np.asarray(gate.matrix)
                if m.shape != (d * d, d * d):
                    raise DimensionMismatchError(f"Gate on {gate.sites} has shape {m.shape}")
                if np.linalg.norm(m.conj().T @ m - np.eye(d * d), 2) > OUTPUT_TOL:
                    raise NonUnitaryError(f"Gate on {gate.sites} is not unitary")
    elif isinstance(spec, LocalHamiltonian):
        for term in spec.terms:
            if len(term.sites) > 2 or (len(term.sites) == 2 and ring.hops(*term.sites) != 1):
                raise SupportError(f"Hamiltonian term on {term.sites} has diameter above two sites")
            m = np.asarray(term.matrix)
            size = d ** len(term.sites)
            if m.shape != (size, size):
                raise DimensionMismatchError(f"Term on {term.sites} has shape {m.shape}")
            if np.linalg.norm(m - m.conj().T) > EXACT_TOL:
                raise PreconditionError(f"Term on {term.sites} is not hermitian")
    else:
        raise PreconditionError(f"Unknown model type {type(spec).__name__}")


def model_gate_sites(spec: BrickworkCircuit) -> List[Tuple[int, ...]]:
    return [g.sites for g in spec.gates()]


def _term_sparse(term: HamiltonianTerm, ring: Ring) -> sparse.csr_matrix:
    d = ring.local_dim
    n = ring.n_sites
    op = DenseOperator(term.sites, (d,) * len(term.sites), term.matrix)
    first = op.support[0]
    if len(op.support) == 1 or op.support[1] == first + 1:
        left = sparse.identity(d ** first, format="csr")
        right = sparse.identity(d ** (n - first - len(op.support)), format="csr")
        return sparse.kron(sparse.kron(left, sparse.csr_matrix(op.entries)), right, format="csr")
    # wrap-around bond (0, n-1): operator-Schmidt split across the middle sites
    tensor = op.entries.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    u, s, vh = linalg.svd(tensor)
    middle = sparse.identity(d ** (n - 2), format="csr")
    total = sparse.csr_matrix((ring.dim, ring.dim), dtype=complex)
    for k in range(len(s)):
        if s[k] <= EXACT_TOL:
            continue
        a = sparse.csr_matrix((s[k] * u[:, k]).reshape(d, d))
        b = sparse.csr_matrix(vh[k, :].reshape(d, d))
        total = total + sparse.kron(sparse.kron(a, middle), b, format="csr")
    return total


def hamiltonian_matrix(spec: LocalHamiltonian, ring: Ring, as_sparse: bool = False):
    total = sparse.csr_matrix((ring.dim, ring.dim), dtype=complex)
    for term in spec.terms:
        total = total + _term_sparse(term, ring)
    return total if as_sparse else total.toarray()


def evolve_model(spec: ModelSpec, ring: Ring) -> DenseOperator:
    validate_model(spec, ring)
    if ring.dim > DENSE_DIM_CAP:
        raise CapExceededError(f"Dense evolution needs dimension {ring.dim} > cap {DENSE_DIM_CAP}; use apply_model")
    if isinstance(spec, BrickworkCircuit):
        tensor = np.eye(ring.dim, dtype=complex).reshape(ring.dims + (ring.dim,))
        for gate in spec.gates():
            tensor = apply_local(tensor, np.asarray(gate.matrix, dtype=complex), gate.sites)
        unitary = tensor.reshape(ring.dim, ring.dim)
    else:
        h = hamiltonian_matrix(spec, ring)
        unitary = linalg.expm(-1j * spec.time * h)
    return DenseOperator(tuple(ring.sites()), ring.dims, unitary)


def apply_model(spec: ModelSpec, ring: Ring, state: np.ndarray, time: Optional[float] = None) -> np.ndarray:
    """Apply U to a state vector (or a batch with trailing axis) without forming U."""
    validate_model(spec, ring)
    if ring.dim > STATEVECTOR_DIM_CAP:
        raise CapExceededError(f"State dimension {ring.dim} exceeds cap {STATEVECTOR_DIM_CAP}")
    state = np.asarray(state, dtype=complex)
    batch = state.shape[1:] if state.ndim > 1 else ()
    if isinstance(spec, BrickworkCircuit):
        tensor = state.reshape(ring.dims + batch)
        for gate in spec.gates():
            tensor = apply_local(tensor, np.asarray(gate.matrix, dtype=complex), gate.sites)
        return tensor.reshape(state.shape)
    t = spec.time if time is None else time
    if t == 0:
        return state.copy()
    h = hamiltonian_matrix(spec, ring, as_sparse=True)
    return expm_multiply(-1j * t * h, state)


def random_brickwork(ring: Ring, depth: int, seed: int) -> BrickworkCircuit:
    rng = np.random.default_rng(seed)
    d = ring.local_dim
    layers = []
    for layer in range(depth):
        offset = layer % 2
        gates = []
        for k in range(ring.n_sites // 2):
            i = (2 * k + offset) % ring.n_sites
            j = (i + 1) % ring.n_sites
            gates.append(Gate((i, j), haar_unitary(d * d, rng), f"haar[{layer}]"))
        layers.append(tuple(gates))
    return BrickworkCircuit(tuple(layers))


def tfim_model(ring: Ring, coupling: float = 1.0, field_strength: float = 1.0, time: float = 0.0) -> LocalHamiltonian:
    """Transverse-field Ising ring: -J sum Z_i Z_{i+1} - h sum X_i."""
    if ring.local_dim != 2:
        raise DimensionMismatchError("tfim_model needs qubit sites")
    p = pauli_matrices()
    terms = []
    for i in ring.sites():
        terms.append(HamiltonianTerm((i, (i + 1) % ring.n_sites), -coupling * np.kron(p["Z"], p["Z"]), "ZZ"))
    for i in ring.sites():
        if field_strength:
            terms.append(HamiltonianTerm((i,), -field_strength * p["X"], "X"))
    return LocalHamiltonian(tuple(terms), float(time), "tfim")


def heisenberg_model(ring: Ring, coupling: float = 1.0, time: float = 0.0) -> LocalHamiltonian:
    if ring.local_dim != 2:
        raise DimensionMismatchError("heisenberg_model needs qubit sites")
    p = pauli_matrices()
    bond = coupling * sum(np.kron(p[a], p[a]) for a in "XYZ")
    terms = tuple(HamiltonianTerm((i, (i + 1) % ring.n_sites), bond, "XXZ") for i in ring.sites())
    return LocalHamiltonian(terms, float(time), "heisenberg")


def field_model(ring: Ring, strengths: Sequence[float], time: float = 0.0) -> LocalHamiltonian:
    """Uncoupled single-site Z fields."""
    z = pauli_matrices()["Z"]
    terms = tuple(HamiltonianTerm((i,), s * z, "Z") for i, s in zip(ring.sites(), strengths))
    return LocalHamiltonian(terms, float(time), "field")


def single_site_ops(d: int) -> List[Tuple[str, np.ndarray]]:
    return single_site_basis(d)


def coarse_grain(op: np.ndarray, coarse_site: int, block: int, fine_ring: Ring) -> DenseOperator:
    """Block average (1/b) sum_j O_{b*c + j} of a single-site observable on the fine ring."""
    if fine_ring.n_sites % block:
        raise DimensionMismatchError(f"Block size {block} does not divide {fine_ring.n_sites} sites")
    d = fine_ring.local_dim
    sites = tuple(block * coarse_site + j for j in range(block))
    total = np.zeros((d ** block, d ** block), dtype=complex)
    for j in range(block):
        left = np.eye(d ** j)
        right = np.eye(d ** (block - j - 1))
        total += np.kron(np.kron(left, op), right)
    return DenseOperator(sites, (d,) * block, total / block)
