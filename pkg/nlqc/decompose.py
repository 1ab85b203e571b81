"""Four-piece quarter decompositions U ~ U_N U_S U_W U_E.

Two constructions are provided: regrouping the gates of a shallow circuit, and
the auxiliary-copy method where a doubled ring S S' carries the commuting
operators K_G = U_{S'} Sigma_G U_{S'}^dag.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import DEFAULT_JOBS, DENSE_DIM_CAP, INPUT_TOL, QUARTER_ANGLE, STATEVECTOR_DIM_CAP
from nlqc.errors import (
    CapExceededError,
    IncompleteDecompositionError,
    SpreadPreconditionError,
    SupportViolationError,
    UnassignableGateError,
)
from nlqc.lattice import BrickworkCircuit, ModelSpec, Region, Ring, evolve_model, named_regions, site_depth
from nlqc.qcore import (
    DenseOperator,
    apply_local,
    embed_on,
    generalized_paulis,
    operator_norm,
    pauli_matrices,
    polar_unitary,
    random_state,
    restrict,
    swap_matrix,
)
from nlqc.spread import LightConeFit, exact_spread

logger = logging.getLogger(__name__)

PIECE_ORDER = ("E", "W", "S", "N")
TIE_ORDER = ("W", "E", "N", "S")


class PartyTag(str, Enum):
    ALICE_PRE = "Alice-pre"
    BOB_PRE = "Bob-pre"
    ALICE_POST = "Alice-post"
    BOB_POST = "Bob-post"


PARTY_OF_QUARTER = {
    "W": PartyTag.ALICE_PRE,
    "E": PartyTag.BOB_PRE,
    "N": PartyTag.ALICE_POST,
    "S": PartyTag.BOB_POST,
}


@dataclass(frozen=True)
class QuarterPiece:
    label: str
    operator: DenseOperator
    region: Region
    party: PartyTag

    def declared_factors(self, n_sites: int, uses_aux_copy: bool) -> Tuple[int, ...]:
        factors = list(self.region.sites)
        if uses_aux_copy:
            factors += [n_sites + s for s in self.region.sites]
        return tuple(sorted(factors))


@dataclass(frozen=True)
class QuarterDecomposition:
    pieces: Tuple[QuarterPiece, ...]
    uses_aux_copy: bool
    residual_bound: float
    n_sites: int
    local_dim: int = 2
    measured_residual: Optional[float] = None

    def piece(self, label: str) -> QuarterPiece:
        for p in self.pieces:
            if p.label == label:
                return p
        raise IncompleteDecompositionError(f"Decomposition has no {label} piece")

    @property
    def factor_dims(self) -> Tuple[int, ...]:
        count = 2 * self.n_sites if self.uses_aux_copy else self.n_sites
        return (self.local_dim,) * count

    def with_measured(self, residual: float) -> "QuarterDecomposition":
        return QuarterDecomposition(
            self.pieces, self.uses_aux_copy, self.residual_bound, self.n_sites, self.local_dim, float(residual)
        )

    def to_manifest(self) -> Dict:
        return {
            "uses_aux_copy": self.uses_aux_copy,
            "n_sites": self.n_sites,
            "residual_bound": self.residual_bound,
            "measured_residual": self.measured_residual,
            "pieces": [
                {
                    "order": position,
                    "label": p.label,
                    "party": p.party.value,
                    "region": list(p.region.sites),
                    "support": list(p.operator.support),
                }
                for position, p in enumerate(self.pieces)
            ],
        }


def _check_complete(pieces: Sequence[QuarterPiece]) -> None:
    labels = [p.label for p in pieces]
    if tuple(labels) != PIECE_ORDER:
        raise IncompleteDecompositionError(f"Pieces must be ordered {PIECE_ORDER}, got {tuple(labels)}")


def assign_stages(
    gate_sites: Sequence[Sequence[int]],
    regions: Dict[str, Iterable[int]],
    position: Callable[[int], int] = lambda q: q,
    gates: Optional[Sequence] = None,
) -> List[str]:
    """Assign each gate (in time order) to one of W, E, N, S.

    A gate goes to W or E when it fits inside that half and none of its sites
    was touched by an earlier N/S gate; otherwise it must fit inside N or S.
    """
    halves = {name: set(sites) for name, sites in regions.items()}
    touched = set()
    stages = []
    for index, sites in enumerate(gate_sites):
        positions = {position(q) for q in sites}
        stage = None
        if not touched.intersection(sites):
            stage = next((h for h in ("W", "E") if positions <= halves[h]), None)
        if stage is None:
            stage = next((h for h in ("N", "S") if positions <= halves[h]), None)
            if stage is None:
                gate = gates[index] if gates is not None else tuple(sites)
                raise UnassignableGateError(gate, f"Gate {index} on {tuple(sites)} fits in no quarter")
            touched.update(sites)
        stages.append(stage)
    return stages


def _piece_from_gates(gates, region: Region, ring: Ring) -> DenseOperator:
    sites = region.sites
    index = {s: i for i, s in enumerate(sites)}
    d = ring.local_dim
    dim = d ** len(sites)
    tensor = np.eye(dim, dtype=complex).reshape((d,) * len(sites) + (dim,))
    for gate in gates:
        tensor = apply_local(tensor, np.asarray(gate.matrix, dtype=complex), [index[s] for s in gate.sites])
    return DenseOperator(sites, (d,) * len(sites), tensor.reshape(dim, dim))


def decompose_circuit(spec: BrickworkCircuit, ring: Ring) -> QuarterDecomposition:
    gates = spec.gates()
    if spec.depth * ring.spacing > 2 * QUARTER_ANGLE + 1e-12:
        offender = spec.layers[-1][0] if spec.layers and spec.layers[-1] else None
        raise UnassignableGateError(
            offender, f"Circuit of depth {spec.depth} spreads {spec.depth * ring.spacing:.4f} > 2pi/4"
        )
    regions = named_regions(ring)
    stages = assign_stages([g.sites for g in gates], {k: r.sites for k, r in regions.items()}, gates=gates)
    pieces = []
    for label in PIECE_ORDER:
        members = [g for g, s in zip(gates, stages) if s == label]
        op = _piece_from_gates(members, regions[label], ring)
        pieces.append(QuarterPiece(label, op, regions[label], PARTY_OF_QUARTER[label]))
    dec = QuarterDecomposition(tuple(pieces), False, 0.0, ring.n_sites, ring.local_dim)
    if ring.dim <= DENSE_DIM_CAP:
        u = evolve_model(spec, ring)
        dec = dec.with_measured(operator_norm(assemble(dec).entries - u.entries))
    logger.info(
        f"Circuit decomposition: {sum(s in 'WE' for s in stages)} pre gates, "
        f"{sum(s in 'NS' for s in stages)} post gates, measured residual {dec.measured_residual}"
    )
    return dec


def k_groups(ring: Ring) -> Dict[str, Tuple[int, ...]]:
    """Each site joins the half in which it lies deepest; ties resolved W, E, N, S."""
    regions = named_regions(ring)
    groups = {label: [] for label in TIE_ORDER}
    for site in ring.sites():
        best, best_depth = None, -1.0
        for label in TIE_ORDER:
            if site not in regions[label]:
                continue
            depth = site_depth(ring, site, regions[label])
            if depth > best_depth + 1e-12:
                best, best_depth = label, depth
        groups[best].append(site)
    return {label: tuple(sites) for label, sites in groups.items()}


def _group_operator(u: np.ndarray, ring: Ring, group: Sequence[int]) -> DenseOperator:
    """K_G = U_{S'} Sigma_G U_{S'}^dag on G (x) S'."""
    n, d = ring.n_sites, ring.local_dim
    aux = tuple(n + s for s in ring.sites())
    support = tuple(group) + aux
    dims = (d,) * len(support)
    u_aux = embed_on(DenseOperator(aux, ring.dims, u), support, dims)
    swaps = DenseOperator.identity(support, dims)
    for s in group:
        swaps = embed_on(DenseOperator((s, n + s), (d, d), swap_matrix(d)), support, dims) @ swaps
    return u_aux @ swaps @ u_aux.dagger()


def decompose_swap(
    model: Union[DenseOperator, ModelSpec],
    ring: Ring,
    truncate: bool,
    fit: Optional[LightConeFit] = None,
    time: Optional[float] = None,
    jobs: int = DEFAULT_JOBS,
) -> QuarterDecomposition:
    u_op = model if isinstance(model, DenseOperator) else evolve_model(model, ring)
    if time is None and not isinstance(model, DenseOperator) and hasattr(model, "time"):
        time = model.time
    if ring.local_dim ** (2 * ring.n_sites) > STATEVECTOR_DIM_CAP:
        raise CapExceededError(f"Doubled ring of {2 * ring.n_sites} sites exceeds the state-vector cap")
    u = u_op.entries
    n = ring.n_sites
    if not truncate:
        spread = exact_spread(u_op, ring, jobs=jobs)
        if spread > QUARTER_ANGLE + 1e-12:
            raise SpreadPreconditionError(f"Exact spread {spread:.4f} exceeds 2pi/8; use truncate=True")

    regions = named_regions(ring)
    groups = k_groups(ring)

    def build(label: str) -> DenseOperator:
        group = groups[label]
        if not group:
            return DenseOperator.identity(
                tuple(n + s for s in regions[label].sites), (ring.local_dim,) * len(regions[label])
            )
        k = _group_operator(u, ring, group)
        far_aux = [n + s for s in ring.sites() if s not in regions[label]]
        kept = restrict(k, far_aux)
        if truncate:
            return polar_unitary(kept)
        defect = operator_norm(embed_on(kept, k.support, list(k.factor_dims)).entries - k.entries)
        if defect > INPUT_TOL:
            raise SpreadPreconditionError(f"K_{label} reaches outside its half: tail norm {defect:.3e}")
        return kept

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            k_ops = dict(zip(PIECE_ORDER, pool.map(build, PIECE_ORDER)))
    else:
        k_ops = {label: build(label) for label in PIECE_ORDER}

    pieces = []
    for label in PIECE_ORDER:
        region = regions[label]
        op = k_ops[label]
        if label in ("N", "S"):
            factors = tuple(sorted(list(region.sites) + [n + s for s in region.sites]))
            dims = [ring.local_dim] * len(factors)
            sigma = DenseOperator.identity(factors, dims)
            for s in region.sites:
                sigma = embed_on(
                    DenseOperator((s, n + s), (ring.local_dim,) * 2, swap_matrix(ring.local_dim)), factors, dims
                ) @ sigma
            op = sigma @ embed_on(op, factors, dims)
        pieces.append(QuarterPiece(label, op, region, PARTY_OF_QUARTER[label]))

    bound = 0.0
    if truncate:
        bound = certify_residual(fit, time, ring) if fit is not None and time is not None else math.inf
    dec = QuarterDecomposition(tuple(pieces), True, bound, n, ring.local_dim)
    logger.info(f"Swap decomposition assembled (truncate={truncate}), groups {groups}, residual bound {bound:.3e}")
    return dec


def certify_residual(fit: LightConeFit, time: float, ring: Ring) -> float:
    """epsilon_spread = 4 a exp(-b (2pi/8 - v t)); +inf once v t reaches 2pi/8."""
    reach = fit.v * time
    if reach >= QUARTER_ANGLE:
        logger.warning(f"Light-cone reach {reach:.4f} >= 2pi/8 on the {ring.n_sites}-site ring; certificate is vacuous")
        return math.inf
    return 4.0 * fit.a * math.exp(-fit.b * (QUARTER_ANGLE - reach))


def apply_pieces(dec: QuarterDecomposition, tensor: np.ndarray, pieces: Optional[Sequence[QuarterPiece]] = None) -> np.ndarray:
    for piece in pieces if pieces is not None else dec.pieces:
        tensor = apply_local(tensor, piece.operator.entries, piece.operator.support)
    return tensor


def assemble(dec: QuarterDecomposition) -> DenseOperator:
    _check_complete(dec.pieces)
    dims = dec.factor_dims
    dim = int(np.prod(dims))
    if dim > DENSE_DIM_CAP:
        raise CapExceededError(f"Assembled dimension {dim} exceeds the dense cap {DENSE_DIM_CAP}")
    tensor = np.eye(dim, dtype=complex).reshape(dims + (dim,))
    tensor = apply_pieces(dec, tensor)
    return DenseOperator(tuple(range(len(dims))), dims, tensor.reshape(dim, dim))


def _expected(u: np.ndarray, dec: QuarterDecomposition, tensor: np.ndarray) -> np.ndarray:
    n = dec.n_sites
    out = apply_local(tensor, u, list(range(n)))
    if dec.uses_aux_copy:
        out = apply_local(out, u.conj().T, list(range(n, 2 * n)))
    return out


def check_piece_supports(dec: QuarterDecomposition, tol: float = INPUT_TOL) -> None:
    paulis = pauli_matrices() if dec.local_dim == 2 else None
    for piece in dec.pieces:
        declared = set(piece.declared_factors(dec.n_sites, dec.uses_aux_copy))
        op = piece.operator
        for factor in op.support:
            if factor in declared:
                continue
            witnesses = (
                [(p, paulis[p]) for p in "XYZ"]
                if paulis
                else [(f"G{i}", m) for i, m in enumerate(_qudit_witnesses(dec.local_dim))]
            )
            for name, local in witnesses:
                w = embed_on(DenseOperator((factor,), (dec.local_dim,), local), op.support, list(op.factor_dims))
                norm = operator_norm(op.entries @ w.entries - w.entries @ op.entries)
                if norm > tol:
                    raise SupportViolationError(piece.label, f"{name}{factor}", norm)


def _qudit_witnesses(d: int) -> List[np.ndarray]:
    x, z = generalized_paulis(d)
    return [x, z]


def verify_decomposition(
    dec: QuarterDecomposition,
    unitary: DenseOperator,
    ring: Ring,
    trials: int,
    seed: int,
) -> float:
    """Max over seeded random product inputs |psi>|0> of the deviation from (U (x) U^dag)|psi>|0>."""
    _check_complete(dec.pieces)
    check_piece_supports(dec)
    rng = np.random.default_rng(seed)
    n, d = ring.n_sites, ring.local_dim
    dims = dec.factor_dims
    u = unitary.entries
    worst = 0.0
    for _ in range(trials):
        locals_ = [random_state(d, rng) for _ in range(n)]
        if dec.uses_aux_copy:
            zero = np.zeros(d, dtype=complex)
            zero[0] = 1.0
            locals_ += [zero] * n
        psi = locals_[0]
        for v in locals_[1:]:
            psi = np.kron(psi, v)
        tensor = psi.reshape(dims)
        got = apply_pieces(dec, tensor)
        want = _expected(u, dec, tensor)
        worst = max(worst, float(np.linalg.norm((got - want).reshape(-1))))
    logger.info(f"Verified decomposition over {trials} trials: residual {worst:.3e}")
    return worst


def operator_residual(dec: QuarterDecomposition, unitary: DenseOperator, ring: Ring) -> float:
    """Exact sup residual over inputs with S' = |0...0> (whole space when no auxiliary copy)."""
    _check_complete(dec.pieces)
    n, d = ring.n_sites, ring.local_dim
    dim_s = d ** n
    if dim_s > DENSE_DIM_CAP:
        raise CapExceededError(f"Operator residual needs {dim_s} basis inputs > cap {DENSE_DIM_CAP}")
    if dec.uses_aux_copy and dim_s ** 3 > STATEVECTOR_DIM_CAP:
        raise CapExceededError(f"Operator residual on {2 * n} doubled sites exceeds the state-vector cap")
    basis = np.eye(dim_s, dtype=complex)
    if dec.uses_aux_copy:
        zero = np.zeros(dim_s, dtype=complex)
        zero[0] = 1.0
        columns = np.einsum("ik,j->ijk", basis, zero).reshape(dim_s * dim_s, dim_s)
    else:
        columns = basis
    tensor = columns.reshape(dec.factor_dims + (dim_s,))
    got = apply_pieces(dec, tensor).reshape(-1, dim_s)
    want = _expected(unitary.entries, dec, tensor).reshape(-1, dim_s)
    return operator_norm(got - want)
