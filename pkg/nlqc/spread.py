import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.sparse.linalg import eigsh

from config import (
    DEFAULT_JOBS,
    LR_A_FLOOR,
    LR_B_FLOOR,
    LR_INFLATION,
    LR_V_FLOOR,
    LR_ZERO_RATIO,
    OUTPUT_TOL,
    INPUT_TOL,
)
from nlqc.errors import FitError, MissingCorrelatorError, NonUnitaryError, PreconditionError, UnsupportedModelError
from nlqc.lattice import LocalHamiltonian, ModelSpec, Region, Ring, apply_model, evolve_model
from nlqc.qcore import DenseOperator, apply_local, embed, operator_norm, single_site_basis

logger = logging.getLogger(__name__)

EIGSH_MIN_DIM = 2 ** 11


def _map_ordered(fn: Callable, items: Sequence, jobs: int) -> List:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _site_tensor(matrix: np.ndarray, n: int, d: int) -> np.ndarray:
    return matrix.reshape((d,) * (2 * n))


def _nontrivial_weight(tensor: np.ndarray, site: int, n: int, d: int) -> float:
    """||B - (tr_j B / d) (x) 1_j|| in operator norm for a full-ring operator given as a tensor."""
    reduced = np.trace(tensor, axis1=site, axis2=n + site) / d
    averaged = np.multiply.outer(reduced, np.eye(d))
    # outer product appends (row_j, col_j) last; move them back into place
    k = 2 * n - 2
    averaged = np.moveaxis(averaged, [k, k + 1], [site, n + site])
    dim = d ** n
    return operator_norm((tensor - averaged).reshape(dim, dim))


def nontrivial_sites(op: DenseOperator, tol: float = OUTPUT_TOL) -> List[int]:
    """Factors of ``op.support`` on which ``op`` does not act as identity."""
    n = len(op.support)
    dims = set(op.factor_dims)
    if len(dims) != 1:
        raise PreconditionError("nontrivial_sites expects equal factor dimensions")
    d = dims.pop()
    tensor = _site_tensor(op.entries, n, d)
    return [op.support[i] for i in range(n) if _nontrivial_weight(tensor, i, n, d) > tol]


def _conjugated_probes(unitary: np.ndarray, ring: Ring, site: int) -> List[Tuple[str, np.ndarray]]:
    out = []
    for label, local in single_site_basis(ring.local_dim):
        probe = embed(DenseOperator((site,), (ring.local_dim,), local), ring.dims).entries
        out.append((label, unitary @ probe @ unitary.conj().T))
    return out


def _require_full_unitary(u: DenseOperator, ring: Ring) -> np.ndarray:
    if u.support != tuple(ring.sites()) or u.factor_dims != ring.dims:
        raise PreconditionError(f"Operator support {u.support} is not the full ring of {ring.n_sites} sites")
    if not u.is_unitary(INPUT_TOL):
        raise NonUnitaryError(f"Input is not unitary: defect {u.unitarity_defect():.3e}")
    return u.entries


def exact_spread(unitary: DenseOperator, ring: Ring, tol: float = OUTPUT_TOL, jobs: int = DEFAULT_JOBS) -> float:
    """Largest distance from a site phi to any site where U A_phi U^dag acts nontrivially."""
    u = _require_full_unitary(unitary, ring)
    n, d = ring.n_sites, ring.local_dim

    def reach(site: int) -> int:
        worst = 0
        for _, conjugated in _conjugated_probes(u, ring, site):
            tensor = _site_tensor(conjugated, n, d)
            for j in ring.sites():
                if ring.hops(site, j) > worst and _nontrivial_weight(tensor, j, n, d) > tol:
                    worst = ring.hops(site, j)
        return worst

    hops = max(_map_ordered(reach, list(ring.sites()), jobs))
    return hops * ring.spacing


def approximate_spread(unitary: DenseOperator, ring: Ring, eps: float, jobs: int = DEFAULT_JOBS) -> float:
    """Smallest s with ||[U A_phi U^dag, O']|| <= eps for every probe pair at distance above s."""
    u = _require_full_unitary(unitary, ring)
    probes = {j: [embed(DenseOperator((j,), (ring.local_dim,), m), ring.dims).entries
                  for _, m in single_site_basis(ring.local_dim)] for j in ring.sites()}

    def reach(site: int) -> int:
        worst = 0
        for _, conjugated in _conjugated_probes(u, ring, site):
            for j in ring.sites():
                if ring.hops(site, j) <= worst:
                    continue
                if any(operator_norm(conjugated @ p - p @ conjugated) > eps for p in probes[j]):
                    worst = ring.hops(site, j)
        return worst

    return max(_map_ordered(reach, list(ring.sites()), jobs)) * ring.spacing


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    """Operator norm of [a, b] for hermitian a and b (i[a, b] is hermitian)."""
    c = 1j * (a @ b - b @ a)
    c = (c + c.conj().T) / 2
    if c.shape[0] >= EIGSH_MIN_DIM:
        vals = eigsh(c, k=1, which="LM", return_eigenvectors=False)
        return float(np.max(np.abs(vals)))
    return float(np.max(np.abs(np.linalg.eigvalsh(c))))


@dataclass(frozen=True)
class LightConeFit:
    a: float
    b: float
    v: float
    residual: float
    samples: Optional[pd.DataFrame] = field(default=None, repr=False, compare=False)

    def bound(self, t: float, d: float) -> float:
        return self.a * math.exp(-self.b * (d - self.v * t))

    def to_record(self) -> Dict[str, float]:
        return {"a": self.a, "b": self.b, "v": self.v, "residual": self.residual}


def commutator_grid(
    spec: LocalHamiltonian,
    ring: Ring,
    times: Sequence[float],
    distances: Sequence[int],
    jobs: int = DEFAULT_JOBS,
) -> pd.DataFrame:
    """Sampled ratios ||[O(t), O']|| / (||O|| ||O'||) for Pauli probes at site 0 and site d."""
    basis = single_site_basis(ring.local_dim)
    local = {label: embed(DenseOperator((0,), (ring.local_dim,), m), ring.dims).entries for label, m in basis}
    far = {
        (k, label): embed(DenseOperator((k % ring.n_sites,), (ring.local_dim,), m), ring.dims).entries
        for k in distances
        for label, m in basis
    }
    unitaries = {t: evolve_model(spec.at_time(t), ring).entries for t in times}

    tasks = [(t, k, la, lb) for t in times for k in distances for la, _ in basis for lb, _ in basis]

    def evaluate(task):
        t, k, la, lb = task
        u = unitaries[t]
        heisenberg = u.conj().T @ local[la] @ u
        o_far = far[(k, lb)]
        ratio = commutator_norm(heisenberg, o_far) / (operator_norm(local[la]) * operator_norm(o_far))
        return {
            "t": float(t),
            "hops": int(k),
            "d": ring.hops(0, k) * ring.spacing,
            "probe": f"{la}0|{lb}{k}",
            "ratio": ratio,
        }

    rows = _map_ordered(evaluate, tasks, jobs)
    return pd.DataFrame(rows, columns=["t", "hops", "d", "probe", "ratio"])


def fit_light_cone(samples: pd.DataFrame) -> LightConeFit:
    if samples["d"].nunique() < 3:
        raise FitError(f"Need at least 3 distinct distances to fit a light cone, got {samples['d'].nunique()}")
    live = samples[samples["ratio"] > LR_ZERO_RATIO]
    if live.empty:
        logger.info("All sampled commutators vanish; light-cone prefactor set to its floor")
        return LightConeFit(LR_A_FLOOR, LR_B_FLOOR, LR_V_FLOOR, 0.0, samples)

    design = np.column_stack([np.ones(len(live)), -live["d"].to_numpy(), live["t"].to_numpy()])
    target = np.log(live["ratio"].to_numpy())
    (log_a, b, bv), *_ = np.linalg.lstsq(design, target, rcond=None)

    if b < LR_B_FLOOR:
        logger.warning(f"Fitted decay rate {b:.3e} clamped to floor {LR_B_FLOOR}")
        b = LR_B_FLOOR
    v = bv / b
    if v < LR_V_FLOOR:
        logger.warning(f"Fitted velocity {v:.3e} clamped to floor {LR_V_FLOOR}")
        v = LR_V_FLOOR

    d = samples["d"].to_numpy()
    t = samples["t"].to_numpy()
    r = samples["ratio"].to_numpy()
    envelope = np.exp(-b * (d - v * t))
    a = max(math.exp(log_a), float(np.max(r / envelope)), LR_A_FLOOR) * LR_INFLATION
    residual = float(np.max(r / (a * envelope)) - 1.0)
    fit = LightConeFit(float(a), float(b), float(v), residual, samples)
    logger.info(f"Light-cone fit: a={fit.a:.4g}, b={fit.b:.4g}, v={fit.v:.4g}, residual={fit.residual:.3e}")
    return fit


def lr_profile(
    spec: ModelSpec,
    ring: Ring,
    times: Sequence[float],
    distances: Sequence[int],
    jobs: int = DEFAULT_JOBS,
) -> LightConeFit:
    if not isinstance(spec, LocalHamiltonian):
        raise UnsupportedModelError("lr_profile needs a Hamiltonian model")
    if len({ring.hops(0, k) for k in distances}) < 3:
        raise FitError("Need at least 3 distinct distances to fit a light cone")
    samples = commutator_grid(spec, ring, times, distances, jobs)
    return fit_light_cone(samples)


@dataclass(frozen=True)
class DictionaryEntry:
    operator: DenseOperator
    reference_label: str
    declared_support: Region


@dataclass
class CandidateModel:
    spec: LocalHamiltonian
    ring: Ring
    dictionary: Dict[str, DictionaryEntry]
    state: Optional[np.ndarray] = None

    def initial_state(self) -> np.ndarray:
        if self.state is not None:
            return np.asarray(self.state, dtype=complex)
        psi = np.zeros(self.ring.dim, dtype=complex)
        psi[0] = 1.0
        return psi


def _apply_dense(op: DenseOperator, ring: Ring, psi: np.ndarray) -> np.ndarray:
    tensor = psi.reshape(ring.dims)
    return apply_local(tensor, op.entries, op.support).reshape(-1)


def correlator(
    spec: LocalHamiltonian,
    ring: Ring,
    state: np.ndarray,
    operators: Sequence[DenseOperator],
    times: Sequence[float],
) -> complex:
    """<psi| O_1(t_1) ... O_m(t_m) |psi> with O(t) = U(t)^dag O U(t)."""
    phi = np.asarray(state, dtype=complex)
    for op, t in zip(reversed(list(operators)), reversed(list(times))):
        phi = apply_model(spec, ring, phi, time=t)
        phi = _apply_dense(op, ring, phi)
        phi = apply_model(spec, ring, phi, time=-t)
    return complex(np.vdot(state, phi))


class ModelOracle:
    """Reference correlators evaluated on a (usually finer) lattice model."""

    def __init__(self, spec: LocalHamiltonian, ring: Ring, operators: Dict[str, DenseOperator], state=None):
        self.spec = spec
        self.ring = ring
        self.operators = dict(operators)
        if state is None:
            state = np.zeros(ring.dim, dtype=complex)
            state[0] = 1.0
        self.state = np.asarray(state, dtype=complex)
        self._cache: Dict[Tuple, complex] = {}

    def __call__(self, labels: Sequence[str], times: Sequence[float]) -> complex:
        key = (tuple(labels), tuple(float(t) for t in times))
        if key in self._cache:
            return self._cache[key]
        missing = [label for label in labels if label not in self.operators]
        if missing:
            raise MissingCorrelatorError(key)
        value = correlator(self.spec, self.ring, self.state, [self.operators[l] for l in labels], times)
        self._cache[key] = value
        return value


@dataclass(frozen=True)
class SimulationCheckReport:
    delta_measured: float
    support_ok: bool
    lightcone: Optional[LightConeFit]
    times_checked: Tuple[float, ...]
    delta: float
    n_correlators: int
    support_failures: Tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        lightcone_ok = self.lightcone is None or self.lightcone.residual <= OUTPUT_TOL
        return self.support_ok and self.delta_measured <= self.delta and lightcone_ok

    def to_record(self) -> Dict:
        return {
            "delta_measured": self.delta_measured,
            "delta": self.delta,
            "support_ok": self.support_ok,
            "support_failures": list(self.support_failures),
            "lightcone": self.lightcone.to_record() if self.lightcone else None,
            "times_checked": list(self.times_checked),
            "n_correlators": self.n_correlators,
            "passed": self.passed,
        }


def check_simulation_conditions(
    candidate: CandidateModel,
    reference: Callable[[Sequence[str], Sequence[float]], complex],
    delta: float,
    horizon: float,
    times: Sequence[float],
    max_length: int,
    lr_times: Optional[Sequence[float]] = None,
    lr_distances: Optional[Sequence[int]] = None,
    jobs: int = DEFAULT_JOBS,
) -> SimulationCheckReport:
    if any(t >= horizon for t in times):
        raise PreconditionError(f"All checked times must lie below the horizon T={horizon}")
    if max_length < 1:
        raise PreconditionError("Product length m must be at least 1")

    failures = []
    for label, entry in candidate.dictionary.items():
        acting = nontrivial_sites(entry.operator)
        if not set(acting) <= entry.declared_support.site_set:
            failures.append(label)
            logger.warning(f"Operator {label} acts on {acting}, outside declared {entry.declared_support.sites}")

    labels = sorted(candidate.dictionary)
    psi = candidate.initial_state()
    norms = {label: operator_norm(candidate.dictionary[label].operator.entries) for label in labels}
    tasks = [
        (word, stamps)
        for m in range(1, max_length + 1)
        for word in itertools.product(labels, repeat=m)
        for stamps in itertools.product(times, repeat=m)
    ]

    def relative_error(task):
        word, stamps = task
        ops = [candidate.dictionary[label].operator for label in word]
        mine = correlator(candidate.spec, candidate.ring, psi, ops, stamps)
        ref = reference([candidate.dictionary[label].reference_label for label in word], stamps)
        scale = float(np.prod([norms[label] for label in word]))
        return abs(mine - ref) / scale

    errors = _map_ordered(relative_error, tasks, jobs)
    delta_measured = float(max(errors)) if errors else 0.0

    lightcone = None
    if lr_times is not None and lr_distances is not None:
        lightcone = lr_profile(candidate.spec, candidate.ring, lr_times, lr_distances, jobs)

    report = SimulationCheckReport(
        delta_measured=delta_measured,
        support_ok=not failures,
        lightcone=lightcone,
        times_checked=tuple(float(t) for t in times),
        delta=float(delta),
        n_correlators=len(tasks),
        support_failures=tuple(failures),
    )
    logger.info(f"Simulation check: delta={delta_measured:.3e} (limit {delta}), support_ok={report.support_ok}, passed={report.passed}")
    return report
