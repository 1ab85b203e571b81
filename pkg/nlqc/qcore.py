"""Dense linear-algebra substrate.

Operators and states live on labelled tensor factors. The single ordering
convention is ascending factor index, row-major: factor 0 is the most
significant digit of a basis index.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.stats import unitary_group

from config import EIGEN_FLOOR, INPUT_TOL, OUTPUT_TOL, SINGULAR_CUTOFF
from nlqc.errors import (
    DimensionMismatchError,
    NonIsometricError,
    NonPositiveError,
    SingularOperatorError,
    SupportError,
)

logger = logging.getLogger(__name__)


def _prod(dims: Iterable[int]) -> int:
    return int(np.prod(list(dims), dtype=np.int64)) if dims else 1


def permute_factors(matrix: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors of a square matrix.

    ``order[k]`` is the current position of the factor that ends up at position k.
    """
    k = len(dims)
    tensor = matrix.reshape(tuple(dims) + tuple(dims))
    axes = list(order) + [k + o for o in order]
    new_dims = [dims[o] for o in order]
    d = _prod(new_dims)
    return tensor.transpose(axes).reshape(d, d)


def apply_local(tensor: np.ndarray, matrix: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply ``matrix`` to the listed axes of ``tensor`` (state or batch of states)."""
    axes = list(axes)
    local_dims = [tensor.shape[a] for a in axes]
    d = _prod(local_dims)
    if matrix.shape[1] != d:
        raise DimensionMismatchError(f"Matrix of shape {matrix.shape} cannot act on axes with dims {local_dims}")
    out_dim = matrix.shape[0]
    if out_dim != d:
        raise DimensionMismatchError("apply_local expects a square matrix; use a Channel for dimension changes")
    op = matrix.reshape(tuple(local_dims) + tuple(local_dims))
    k = len(axes)
    result = np.tensordot(op, tensor, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(result, list(range(k)), axes)


@dataclass(frozen=True)
class DenseOperator:
    support: Tuple[int, ...]
    factor_dims: Tuple[int, ...]
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        support = tuple(int(s) for s in self.support)
        dims = tuple(int(d) for d in self.factor_dims)
        entries = np.asarray(self.entries, dtype=complex)
        if len(support) != len(dims):
            raise DimensionMismatchError(f"Support {support} and dims {dims} differ in length")
        if len(set(support)) != len(support):
            raise SupportError(f"Support indices must be distinct: {support}")
        if any(d < 1 for d in dims):
            raise DimensionMismatchError(f"Factor dimensions must be positive: {dims}")
        d = _prod(dims)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DimensionMismatchError(f"Operator matrix must be square, got {entries.shape}")
        if entries.shape[0] != d:
            raise DimensionMismatchError(f"Matrix size {entries.shape[0]} does not match product of dims {d}")
        order = sorted(range(len(support)), key=lambda i: support[i])
        if order != list(range(len(support))):
            entries = permute_factors(entries, dims, order)
            support = tuple(support[i] for i in order)
            dims = tuple(dims[i] for i in order)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "factor_dims", dims)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def dims_by_factor(self) -> Dict[int, int]:
        return dict(zip(self.support, self.factor_dims))

    @classmethod
    def identity(cls, support: Sequence[int], factor_dims: Sequence[int]) -> "DenseOperator":
        return cls(tuple(support), tuple(factor_dims), np.eye(_prod(factor_dims), dtype=complex))

    def dagger(self) -> "DenseOperator":
        return DenseOperator(self.support, self.factor_dims, self.entries.conj().T)

    def __matmul__(self, other: "DenseOperator") -> "DenseOperator":
        if self.support == other.support and self.factor_dims == other.factor_dims:
            return DenseOperator(self.support, self.factor_dims, self.entries @ other.entries)
        dims = dict(self.dims_by_factor)
        for f, d in other.dims_by_factor.items():
            if dims.setdefault(f, d) != d:
                raise DimensionMismatchError(f"Factor {f} has dims {dims[f]} and {d}")
        support = tuple(sorted(dims))
        full_dims = [dims[f] for f in support]
        a = embed_on(self, support, full_dims)
        b = embed_on(other, support, full_dims)
        return DenseOperator(support, tuple(full_dims), a.entries @ b.entries)

    def scaled(self, factor: complex) -> "DenseOperator":
        return DenseOperator(self.support, self.factor_dims, factor * self.entries)

    def unitarity_defect(self) -> float:
        return float(np.linalg.norm(self.entries.conj().T @ self.entries - np.eye(self.dim), 2))

    def is_unitary(self, tol: float = INPUT_TOL) -> bool:
        return self.unitarity_defect() <= tol


@dataclass(frozen=True)
class StateVector:
    factor_dims: Tuple[int, ...]
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != _prod(dims):
            raise DimensionMismatchError(f"State of length {amps.shape[0]} does not match dims {dims}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > OUTPUT_TOL:
            raise NonPositiveError(f"State vector norm {norm:.12f} differs from 1")
        object.__setattr__(self, "factor_dims", dims)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, factor_dims: Sequence[int], index: int = 0) -> "StateVector":
        amps = np.zeros(_prod(factor_dims), dtype=complex)
        amps[index] = 1.0
        return cls(tuple(factor_dims), amps)

    @classmethod
    def product(cls, local_states: Sequence[np.ndarray]) -> "StateVector":
        amps = np.ones(1, dtype=complex)
        for s in local_states:
            s = np.asarray(s, dtype=complex)
            amps = np.kron(amps, s / np.linalg.norm(s))
        return cls(tuple(len(s) for s in local_states), amps)

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.factor_dims)

    def apply(self, op: DenseOperator) -> "StateVector":
        for f, d in op.dims_by_factor.items():
            if f >= len(self.factor_dims) or self.factor_dims[f] != d:
                raise DimensionMismatchError(f"Operator factor {f} (dim {d}) does not fit state dims {self.factor_dims}")
        out = apply_local(self.tensor, op.entries, op.support)
        return StateVector(self.factor_dims, out.reshape(-1))

    def reduced_density(self, keep: Sequence[int]) -> np.ndarray:
        return reduced_density(self.amplitudes, self.factor_dims, keep)


@dataclass(frozen=True)
class Channel:
    input_dims: Tuple[int, ...]
    output_dims: Tuple[int, ...]
    kraus_ops: Tuple[np.ndarray, ...] = field(repr=False)
    subnormalized: bool = False

    def __post_init__(self):
        in_dims = tuple(int(d) for d in self.input_dims)
        out_dims = tuple(int(d) for d in self.output_dims)
        d_in, d_out = _prod(in_dims), _prod(out_dims)
        ops = tuple(np.asarray(k, dtype=complex) for k in self.kraus_ops)
        if not ops:
            raise DimensionMismatchError("A channel needs at least one Kraus operator")
        for k in ops:
            if k.shape != (d_out, d_in):
                raise DimensionMismatchError(f"Kraus operator of shape {k.shape}, expected {(d_out, d_in)}")
        gram = sum(k.conj().T @ k for k in ops)
        if self.subnormalized:
            if np.max(np.linalg.eigvalsh(gram - np.eye(d_in))) > INPUT_TOL:
                raise NonPositiveError("Sub-normalized channel has sum K^dag K exceeding identity")
        elif np.linalg.norm(gram - np.eye(d_in), 2) > INPUT_TOL:
            raise NonPositiveError("Kraus operators are not trace preserving")
        object.__setattr__(self, "input_dims", in_dims)
        object.__setattr__(self, "output_dims", out_dims)
        object.__setattr__(self, "kraus_ops", ops)

    @property
    def d_in(self) -> int:
        return _prod(self.input_dims)

    @property
    def d_out(self) -> int:
        return _prod(self.output_dims)

    @classmethod
    def from_unitary(cls, unitary: np.ndarray, dims: Sequence[int]) -> "Channel":
        return cls(tuple(dims), tuple(dims), (np.asarray(unitary, dtype=complex),))

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "Channel":
        return cls(tuple(dims), tuple(dims), (np.eye(_prod(dims), dtype=complex),))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus_ops)

    def then(self, other: "Channel") -> "Channel":
        """Sequential composition: ``other`` after ``self``."""
        if other.input_dims != self.output_dims:
            raise DimensionMismatchError(f"Cannot compose {self.output_dims} into {other.input_dims}")
        ops = tuple(b @ a for a in self.kraus_ops for b in other.kraus_ops)
        return Channel(self.input_dims, other.output_dims, ops, self.subnormalized or other.subnormalized)

    def choi(self) -> np.ndarray:
        """Normalized Choi state, input factor first."""
        d = self.d_in
        vecs = [k.T.reshape(-1) for k in self.kraus_ops]
        # vec over (input, output) of K^T gives sum_i |i> (x) K|i>
        return sum(np.outer(v, v.conj()) for v in vecs) / d


def embed_on(op: DenseOperator, support: Sequence[int], full_dims: Sequence[int]) -> DenseOperator:
    support = list(support)
    position = {f: i for i, f in enumerate(support)}
    for f, d in op.dims_by_factor.items():
        if f not in position:
            raise SupportError(f"Factor {f} is outside the target support {support}")
        if full_dims[position[f]] != d:
            raise DimensionMismatchError(f"Factor {f} has dim {d}, target has {full_dims[position[f]]}")
    rest = [f for f in support if f not in op.dims_by_factor]
    rest_dim = _prod([full_dims[position[f]] for f in rest])
    big = np.kron(op.entries, np.eye(rest_dim, dtype=complex))
    current = list(op.support) + rest
    current_dims = list(op.factor_dims) + [full_dims[position[f]] for f in rest]
    order = [current.index(f) for f in support]
    big = permute_factors(big, current_dims, order)
    return DenseOperator(tuple(support), tuple(full_dims), big)


def embed(op: DenseOperator, full_factor_dims: Sequence[int]) -> DenseOperator:
    """Tensor ``op`` with identity on every other factor of ``full_factor_dims``."""
    n = len(full_factor_dims)
    if any(f < 0 or f >= n for f in op.support):
        raise SupportError(f"Support {op.support} out of range for {n} factors")
    return embed_on(op, range(n), list(full_factor_dims))


def partial_trace(op: DenseOperator, traced_factors: Iterable[int]) -> DenseOperator:
    traced = sorted(set(int(f) for f in traced_factors))
    missing = [f for f in traced if f not in op.support]
    if missing:
        raise SupportError(f"Traced factors {missing} are not in the support {op.support}")
    k = len(op.support)
    tensor = op.entries.reshape(op.factor_dims + op.factor_dims)
    keep = [i for i, f in enumerate(op.support) if f not in traced]
    trace_pos = [i for i, f in enumerate(op.support) if f in traced]
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * k > len(letters):
        raise DimensionMismatchError("Too many factors for partial_trace")
    row = [letters[i] for i in range(k)]
    col = [letters[k + i] for i in range(k)]
    for i in trace_pos:
        col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, tensor)
    dims = tuple(op.factor_dims[i] for i in keep)
    d = _prod(dims)
    return DenseOperator(tuple(op.support[i] for i in keep), dims, reduced.reshape(d, d))


def twirl(op: DenseOperator, region_factors: Iterable[int]) -> DenseOperator:
    """Haar average over unitaries on ``region_factors``: (tr_R op / d_R) (x) 1_R."""
    region = sorted(set(int(f) for f in region_factors))
    if not region:
        return op
    reduced = partial_trace(op, region)
    d_r = _prod([op.dims_by_factor[f] for f in region])
    averaged = reduced.scaled(1.0 / d_r)
    return embed_on(averaged, op.support, list(op.factor_dims))


def restrict(op: DenseOperator, region_factors: Iterable[int]) -> DenseOperator:
    """Twirl away ``region_factors`` and drop them from the support."""
    region = sorted(set(int(f) for f in region_factors))
    if not region:
        return op
    d_r = _prod([op.dims_by_factor[f] for f in region])
    return partial_trace(op, region).scaled(1.0 / d_r)


def polar_unitary(op: Union[DenseOperator, np.ndarray]) -> Union[DenseOperator, np.ndarray]:
    matrix = op.entries if isinstance(op, DenseOperator) else np.asarray(op, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatchError(f"polar_unitary needs a square matrix, got {matrix.shape}")
    w, s, vh = linalg.svd(matrix)
    if s[-1] <= SINGULAR_CUTOFF:
        raise SingularOperatorError(float(s[-1]))
    unitary = w @ vh
    if isinstance(op, DenseOperator):
        return DenseOperator(op.support, op.factor_dims, unitary)
    return unitary


def schatten_norm(op: Union[DenseOperator, np.ndarray], p: Union[int, float, str] = "inf") -> float:
    matrix = op.entries if isinstance(op, DenseOperator) else np.asarray(op)
    s = linalg.svdvals(matrix)
    if p in ("inf", np.inf, float("inf")):
        return float(s[0]) if s.size else 0.0
    if p == 1:
        return float(np.sum(s))
    if p == 2:
        return float(np.sqrt(np.sum(s ** 2)))
    raise ValueError(f"Unsupported Schatten index {p}")


def operator_norm(matrix: np.ndarray) -> float:
    return schatten_norm(matrix, "inf")


def reduced_density(amplitudes: np.ndarray, factor_dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    keep = list(keep)
    n = len(factor_dims)
    psi = np.asarray(amplitudes).reshape(tuple(factor_dims))
    traced = [i for i in range(n) if i not in keep]
    psi = np.moveaxis(psi, keep + traced, list(range(n)))
    dk = _prod([factor_dims[i] for i in keep])
    mat = psi.reshape(dk, -1)
    return mat @ mat.conj().T


def von_neumann_entropy(rho: np.ndarray) -> float:
    rho = np.asarray(rho, dtype=complex)
    herm = (rho + rho.conj().T) / 2
    evals = np.linalg.eigvalsh(herm)
    if evals.min() < -INPUT_TOL:
        raise NonPositiveError(f"Density matrix has negative eigenvalue {evals.min():.3e}")
    evals = evals[evals > EIGEN_FLOOR]
    return float(-np.sum(evals * np.log2(evals)))


def entropy(state_or_density: Union[StateVector, DenseOperator], region_factors: Iterable[int]) -> float:
    """Von Neumann entropy in bits of the reduced state on ``region_factors``."""
    region = sorted(set(int(f) for f in region_factors))
    if isinstance(state_or_density, StateVector):
        rho = state_or_density.reduced_density(region)
        return von_neumann_entropy(rho)
    density = state_or_density
    tr = np.trace(density.entries)
    if abs(tr - 1.0) > INPUT_TOL:
        raise NonPositiveError(f"Density matrix trace {tr} differs from 1")
    if np.linalg.norm(density.entries - density.entries.conj().T) > INPUT_TOL:
        raise NonPositiveError("Density matrix is not Hermitian")
    traced = [f for f in density.support if f not in region]
    reduced = partial_trace(density, traced)
    return von_neumann_entropy(reduced.entries)


def channel_distance_bounds(phi1: Channel, phi2: Channel) -> Tuple[float, float]:
    """Choi sandwich on the (unnormalized) diamond distance.

    lower = ||J1 - J2||_1 of normalized Choi states, upper = d_in * lower.
    """
    if phi1.input_dims != phi2.input_dims or phi1.output_dims != phi2.output_dims:
        raise DimensionMismatchError(
            f"Channels differ in dims: {phi1.input_dims}->{phi1.output_dims} vs {phi2.input_dims}->{phi2.output_dims}"
        )
    lower = choi_distance(phi1.choi(), phi2.choi())
    return lower, phi1.d_in * lower


def choi_distance(j1: np.ndarray, j2: np.ndarray) -> float:
    diff = j1 - j2
    diff = (diff + diff.conj().T) / 2
    value = float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
    return 0.0 if value < OUTPUT_TOL else value


@dataclass(frozen=True)
class IsometryDistance:
    bound: float
    exact: Optional[float]


def isometry_defect(matrix: np.ndarray) -> float:
    matrix = np.asarray(matrix, dtype=complex)
    return float(np.linalg.norm(matrix.conj().T @ matrix - np.eye(matrix.shape[1]), 2))


def _require_isometry(matrix: np.ndarray, name: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.ndim != 2 or matrix.shape[0] < matrix.shape[1]:
        raise NonIsometricError(f"{name} of shape {matrix.shape} cannot be an isometry")
    defect = isometry_defect(matrix)
    if defect > INPUT_TOL:
        raise NonIsometricError(f"{name} is not isometric: ||V^dag V - 1|| = {defect:.3e}")
    return matrix


def hull_distance_from_origin(eigenvalues: np.ndarray) -> float:
    """Distance from 0 to the convex hull of unit-modulus eigenvalues."""
    phases = np.sort(np.mod(np.angle(eigenvalues), 2 * np.pi))
    gaps = np.diff(np.concatenate([phases, [phases[0] + 2 * np.pi]]))
    largest_gap = float(np.max(gaps))
    if largest_gap <= np.pi:
        return 0.0
    # hull's nearest point to 0 is the chord across the occupied arc
    return float(np.cos((2 * np.pi - largest_gap) / 2))


def isometry_channel_distance(v: np.ndarray, w: np.ndarray) -> IsometryDistance:
    v = _require_isometry(v, "V")
    w = _require_isometry(w, "W")
    if v.shape != w.shape:
        raise DimensionMismatchError(f"Isometries differ in shape: {v.shape} vs {w.shape}")
    bound = 2.0 * operator_norm(v - w)
    exact = None
    if v.shape[0] == v.shape[1]:
        eig = np.linalg.eigvals(v.conj().T @ w)
        r = min(1.0, hull_distance_from_origin(eig))
        exact = 2.0 * float(np.sqrt(max(0.0, 1.0 - r * r)))
    return IsometryDistance(bound=bound, exact=exact)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    return np.asarray(unitary_group.rvs(d, random_state=rng), dtype=complex)


def random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_density(d: int, rng: np.random.Generator, rank: Optional[int] = None) -> np.ndarray:
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def pauli_matrices() -> Dict[str, np.ndarray]:
    return {
        "I": np.eye(2, dtype=complex),
        "X": np.array([[0, 1], [1, 0]], dtype=complex),
        "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
        "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    }


def pauli_string_matrix(label: str) -> np.ndarray:
    paulis = pauli_matrices()
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(out, paulis[ch])
    return out


def generalized_paulis(d: int) -> Tuple[np.ndarray, np.ndarray]:
    """Shift X|j> = |j+1> and clock Z|j> = exp(2 pi i j / d)|j>."""
    x = np.roll(np.eye(d, dtype=complex), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return x, z


def single_site_basis(d: int) -> List[Tuple[str, np.ndarray]]:
    """Non-identity unitary operator basis on one site (normalized Paulis for d = 2)."""
    if d == 2:
        paulis = pauli_matrices()
        return [(p, paulis[p]) for p in ("X", "Y", "Z")]
    x, z = generalized_paulis(d)
    basis = []
    for a in range(d):
        for b in range(d):
            if a == 0 and b == 0:
                continue
            basis.append((f"X^{a}Z^{b}", np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b)))
    return basis


def swap_matrix(d1: int, d2: Optional[int] = None) -> np.ndarray:
    d2 = d2 or d1
    s = np.zeros((d1 * d2, d1 * d2), dtype=complex)
    for i in range(d1):
        for j in range(d2):
            s[j * d1 + i, i * d2 + j] = 1.0
    return s


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    rho = (rho + rho.conj().T) / 2
    evals, evecs = np.linalg.eigh(rho)
    sqrt_rho = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.conj().T
    inner = sqrt_rho @ sigma @ sqrt_rho
    roots = np.sqrt(np.clip(np.linalg.eigvalsh((inner + inner.conj().T) / 2), 0.0, None))
    return min(1.0, max(0.0, float(roots.sum() ** 2)))


def maximally_entangled(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
