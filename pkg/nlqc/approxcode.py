"""Code isometries from excitation operators or correlation oracles, and error certificates."""
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import linalg
from tqdm import tqdm

from config import (
    DEFAULT_C_CFT,
    DEFAULT_C_SIM,
    DEFAULT_C_SPREAD,
    DEFAULT_JOBS,
    EIGEN_FLOOR,
    MAX_ISOMETRY_DEFECT,
    QUARTER_ANGLE,
)
from nlqc.decompose import decompose_swap, operator_residual
from nlqc.errors import (
    CertificateInputError,
    DimensionMismatchError,
    IsometryDefectError,
    MissingCorrelatorError,
    OracleSanityError,
    PreconditionError,
)
from nlqc.lattice import Ring, evolve_model, tfim_model
from nlqc.protocol import (
    INPUT_A,
    INPUT_B,
    OUTPUT_A,
    OUTPUT_B,
    LocalMap,
    PseudoBulkSpec,
    implemented_choi,
    pseudo_bulk_choi,
    swap_in_encoder,
    swap_out_decoder,
    swap_spec,
)
from nlqc.qcore import (
    Channel,
    DenseOperator,
    choi_distance,
    embed_on,
    generalized_paulis,
    isometry_channel_distance,
    isometry_defect,
    operator_norm,
    pauli_string_matrix,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------- excitation models and oracles

@dataclass(frozen=True)
class ExcitationModel:
    """Physical excitation X_P acting cyclically on a reference state.

    With ``leak`` > 0 every basis image picks up a fixed component outside the
    span of the ideal images, which spoils orthonormality at O(leak) and the
    intertwining at O(sqrt(leak)).
    """

    excitation: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)
    logical_dim: int
    leak: float = 0.0
    leak_vector: Optional[np.ndarray] = field(default=None, repr=False)
    hamiltonian: Optional[np.ndarray] = field(default=None, repr=False)
    time: float = 0.0
    phase_op: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.excitation, dtype=complex)
        ref = np.asarray(self.reference, dtype=complex).reshape(-1)
        if x.shape != (ref.size, ref.size):
            raise DimensionMismatchError(f"Excitation of shape {x.shape} for a reference of size {ref.size}")
        if not 0.0 <= self.leak < 1.0:
            raise PreconditionError(f"Leak must lie in [0, 1), got {self.leak}")
        object.__setattr__(self, "excitation", x)
        object.__setattr__(self, "reference", ref / np.linalg.norm(ref))

    @property
    def physical_dim(self) -> int:
        return self.reference.size

    def ideal_images(self) -> np.ndarray:
        cols = [self.reference]
        for _ in range(self.logical_dim - 1):
            cols.append(self.excitation @ cols[-1])
        return np.stack(cols, axis=1)

    def images(self) -> np.ndarray:
        cols = self.ideal_images()
        if self.leak > 0:
            if self.leak_vector is None:
                raise PreconditionError("A leaking model needs a leak vector")
            cols = math.sqrt(1 - self.leak) * cols + math.sqrt(self.leak) * self.leak_vector[:, None]
        return cols

    def evolution(self) -> np.ndarray:
        if self.hamiltonian is None or self.time == 0:
            return np.eye(self.physical_dim, dtype=complex)
        return linalg.expm(-1j * self.time * np.asarray(self.hamiltonian, dtype=complex))

    def operators(self) -> Dict[str, np.ndarray]:
        """Named physical operators the correlation oracle can be queried with."""
        ops = {}
        power = np.eye(self.physical_dim, dtype=complex)
        for i in range(self.logical_dim):
            ops[f"X{i}"] = power
            ops[f"X{i}^dag"] = power.conj().T
            power = self.excitation @ power
        return ops


def orthogonal_leak(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random unit vector orthogonal to the columns of ``images``."""
    dim = images.shape[0]
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    q, _ = np.linalg.qr(images)
    v = v - q @ (q.conj().T @ v)
    return v / np.linalg.norm(v)


def trivial_model(d: int) -> ExcitationModel:
    shift, clock = generalized_paulis(d)
    ref = np.zeros(d, dtype=complex)
    ref[0] = 1.0
    return ExcitationModel(shift, ref, d, phase_op=clock)


def steane_model(leak: float = 0.0, seed: int = 0) -> ExcitationModel:
    """Steane code space with X_P = X^{x7}; the reference is the encoded |0>."""
    from nlqc.holocode import steane_seed
    from nlqc.stab import tableau_to_statevector

    zero = tableau_to_statevector(steane_seed().encoded_zero())
    x_bar = pauli_string_matrix("X" * 7)
    z_bar = pauli_string_matrix("Z" * 7)
    leak_vector = None
    if leak > 0:
        images = np.stack([zero, x_bar @ zero], axis=1)
        leak_vector = orthogonal_leak(images, np.random.default_rng(seed))
    return ExcitationModel(x_bar, zero, 2, leak, leak_vector, phase_op=z_bar)


@dataclass
class CorrelationOracle:
    evaluator: Callable[[Sequence[str], Sequence[float]], complex]
    eta: float
    max_length: int
    norms: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.eta < 0:
            raise PreconditionError(f"Oracle error must be non-negative, got {self.eta}")

    def __call__(self, labels: Sequence[str], times: Sequence[float]) -> complex:
        labels, times = tuple(labels), tuple(float(t) for t in times)
        if len(labels) != len(times):
            raise PreconditionError("Each operator needs a time stamp")
        if len(labels) > self.max_length:
            raise PreconditionError(f"Product of length {len(labels)} exceeds the declared {self.max_length}")
        value = complex(self.evaluator(labels, times))
        ceiling = float(np.prod([self.norms.get(l, 1.0) for l in labels])) + self.max_length * self.eta
        if abs(value) > ceiling + 1e-12:
            raise OracleSanityError(f"|{value:.4g}| exceeds the sanity bound {ceiling:.4g} for {labels}")
        return value


def oracle_from_model(model: ExcitationModel, eta: float = 0.0, seed: int = 0, max_length: int = 2) -> CorrelationOracle:
    """Exact correlators of the model plus seeded complex noise of scale eta/3, clipped at eta."""
    ops = model.operators()
    rng = np.random.default_rng(seed)
    cache: Dict[Tuple, complex] = {}
    ket = model.reference
    h = None if model.hamiltonian is None else np.asarray(model.hamiltonian, dtype=complex)

    def heisenberg(op: np.ndarray, t: float) -> np.ndarray:
        if h is None or t == 0:
            return op
        u = linalg.expm(-1j * t * h)
        return u.conj().T @ op @ u

    def evaluate(labels, times):
        key = (labels, times)
        if key not in cache:
            vec = ket
            for label, t in reversed(list(zip(labels, times))):
                if label not in ops:
                    raise MissingCorrelatorError(key)
                vec = heisenberg(ops[label], t) @ vec
            exact = complex(np.vdot(ket, vec))
            noise = 0j
            if eta > 0:
                noise = complex(rng.normal(), rng.normal()) * eta / 3
                if abs(noise) > eta:
                    noise *= eta / abs(noise)
            cache[key] = exact + noise
        return cache[key]

    norms = {label: operator_norm(m) for label, m in ops.items()}
    return CorrelationOracle(evaluate, eta, max_length, norms)


# ---------------------------------------------------------------- isometries

@dataclass(frozen=True)
class CodeIsometry:
    matrix: np.ndarray = field(repr=False)
    defect: float
    labels: Tuple[str, ...] = ()
    source: str = "dense"

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, labels: Sequence[str] = (), source: str = "dense") -> "CodeIsometry":
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] < matrix.shape[1]:
            raise DimensionMismatchError(f"An isometry needs shape (physical >= logical), got {matrix.shape}")
        return cls(matrix, isometry_defect(matrix), tuple(labels), source)

    @property
    def logical_dim(self) -> int:
        return self.matrix.shape[1]


def build_isometry(source: Union[ExcitationModel, CorrelationOracle], logical_dim: Optional[int] = None) -> CodeIsometry:
    """V = U_t sum_i X_P^i |0><i_L|, or its Gram-matrix square root when only an oracle is available."""
    if isinstance(source, ExcitationModel):
        v = source.evolution() @ source.images()
        labels = tuple(f"X{i}" for i in range(source.logical_dim))
        iso = CodeIsometry.from_matrix(v, labels, "dense")
    else:
        if logical_dim is None:
            raise PreconditionError("The oracle path needs the logical dimension")
        gram = np.empty((logical_dim, logical_dim), dtype=complex)
        for i in range(logical_dim):
            for j in range(logical_dim):
                gram[i, j] = source([f"X{i}^dag", f"X{j}"], [0.0, 0.0])
        gram = (gram + gram.conj().T) / 2
        evals, evecs = np.linalg.eigh(gram)
        root = (evecs * np.sqrt(np.clip(evals, 0.0, None))) @ evecs.conj().T
        iso = CodeIsometry.from_matrix(root, tuple(f"X{i}" for i in range(logical_dim)), "oracle")
    if iso.defect > MAX_ISOMETRY_DEFECT:
        raise IsometryDefectError(f"Excitation images are nearly dependent: defect {iso.defect:.3e}")
    logger.debug(f"Built {iso.source} isometry {iso.matrix.shape} with defect {iso.defect:.3e}")
    return iso


def polish_isometry(iso: CodeIsometry) -> CodeIsometry:
    """V (V^dag V)^{-1/2}."""
    if iso.defect >= MAX_ISOMETRY_DEFECT:
        raise IsometryDefectError(f"Defect {iso.defect:.3e} too large to polish")
    gram = iso.matrix.conj().T @ iso.matrix
    evals, evecs = np.linalg.eigh((gram + gram.conj().T) / 2)
    inv_root = (evecs / np.sqrt(np.clip(evals, EIGEN_FLOOR, None))) @ evecs.conj().T
    polished = CodeIsometry.from_matrix(iso.matrix @ inv_root, iso.labels, iso.source)
    moved = operator_norm(polished.matrix - iso.matrix)
    if moved > 2 * iso.defect + 1e-12:
        logger.warning(f"Polishing moved V by {moved:.3e} > 2 x defect {iso.defect:.3e}")
    return polished


def reconstruct_unitary(op: Union[DenseOperator, np.ndarray]) -> Union[DenseOperator, np.ndarray]:
    """Unitary sharing the singular vectors of ``op``; zero singular values map to 1."""
    matrix = op.entries if isinstance(op, DenseOperator) else np.asarray(op, dtype=complex)
    w, _, vh = linalg.svd(matrix, full_matrices=False)
    # singular values are non-negative, so each phase is 1 and a zero value maps to 1 as well
    unitary = w @ vh
    if isinstance(op, DenseOperator):
        return DenseOperator(op.support, op.factor_dims, unitary)
    return unitary


def isometry_channel_bound(v: np.ndarray, w: np.ndarray) -> float:
    return isometry_channel_distance(v, w).bound


def intertwiner_defect(iso: CodeIsometry, physical_op: np.ndarray, logical_op: np.ndarray) -> float:
    """||V X_L - X_P V||."""
    v = iso.matrix
    return operator_norm(v @ logical_op - physical_op @ v)


def codespace_commutator(iso: CodeIsometry, ops: Sequence[np.ndarray]) -> float:
    projector = iso.matrix @ iso.matrix.conj().T
    return max((operator_norm(projector @ o - o @ projector) for o in ops), default=0.0)


def dynamical_duality_defect(u: np.ndarray, v0: np.ndarray, v_tau: np.ndarray, gamma: np.ndarray) -> float:
    """||U V_0 - V_tau Gamma||."""
    return operator_norm(u @ v0 - v_tau @ gamma)


# ---------------------------------------------------------------- certificates

@dataclass(frozen=True)
class ErrorCertificate:
    eps_enc: float
    eps_rec: float
    eps_dyn: float
    eps_spread: float
    total: float
    parametric: Optional[float] = None
    params: Dict[str, float] = field(default_factory=dict)
    constants: Dict[str, float] = field(default_factory=dict)

    def to_record(self) -> Dict:
        return {
            "eps_enc": self.eps_enc,
            "eps_rec": self.eps_rec,
            "eps_dyn": self.eps_dyn,
            "eps_spread": self.eps_spread,
            "total": self.total,
            "parametric": self.parametric,
            "params": dict(self.params),
            "constants": dict(self.constants),
        }


def compose_certificate(
    eps_enc: float,
    eps_rec: float,
    eps_dyn: float,
    eps_spread: float,
    g_n: Optional[float] = None,
    delta: Optional[float] = None,
    a: Optional[float] = None,
    b: Optional[float] = None,
    delta_tau: Optional[float] = None,
    c_cft: float = DEFAULT_C_CFT,
    c_sim: float = DEFAULT_C_SIM,
    c_spread: float = DEFAULT_C_SPREAD,
) -> ErrorCertificate:
    terms = {"eps_enc": eps_enc, "eps_rec": eps_rec, "eps_dyn": eps_dyn, "eps_spread": eps_spread}
    for name, value in terms.items():
        if value is None or not value >= 0:
            raise CertificateInputError(f"{name} must be non-negative, got {value}")
    physical = {"g_n": g_n, "delta": delta, "a": a, "b": b, "delta_tau": delta_tau}
    given = {k: v for k, v in physical.items() if v is not None}
    for name, value in list(given.items()) + [("c_cft", c_cft), ("c_sim", c_sim), ("c_spread", c_spread)]:
        if value < 0:
            raise CertificateInputError(f"{name} must be non-negative, got {value}")
    parametric = None
    if given:
        if len(given) != len(physical):
            missing = sorted(set(physical) - set(given))
            raise CertificateInputError(f"Parametric form needs all physical parameters; missing {missing}")
        parametric = c_cft * math.sqrt(g_n) + c_sim * math.sqrt(delta) + c_spread * a * math.exp(-b * delta_tau)
    total = eps_enc + eps_rec + eps_dyn + eps_spread
    return ErrorCertificate(
        eps_enc,
        eps_rec,
        eps_dyn,
        eps_spread,
        total,
        parametric,
        {k: float(v) for k, v in given.items()},
        {"c_cft": c_cft, "c_sim": c_sim, "c_spread": c_spread},
    )


# ---------------------------------------------------------------- sweeps

@dataclass
class EtaSweep:
    table: pd.DataFrame
    slopes: Dict[str, float]

    def to_record(self) -> Dict:
        return {"slopes": dict(self.slopes), "samples": self.table.to_dict(orient="records")}


def _loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def eta_sweep(
    etas: Sequence[float],
    seeds: Sequence[int],
    model_factory: Callable[[float, int], ExcitationModel] = steane_model,
    jobs: int = DEFAULT_JOBS,
) -> EtaSweep:
    """Defect, polishing distance and intertwiner defect of leaking models over eta and seeds."""
    tasks = [(eta, seed) for eta in etas for seed in seeds]

    def measure(task):
        eta, seed = task
        model = model_factory(eta, seed)
        iso = build_isometry(model)
        polished = polish_isometry(iso)
        x_l, _ = generalized_paulis(model.logical_dim)
        return {
            "eta": eta,
            "seed": seed,
            "defect": iso.defect,
            "polish_distance": operator_norm(polished.matrix - iso.matrix),
            "intertwiner": intertwiner_defect(iso, model.excitation, x_l),
        }

    progress = dict(total=len(tasks), desc="eta sweep", disable=not sys.stderr.isatty())
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(tqdm(pool.map(measure, tasks), **progress))
    else:
        rows = [measure(t) for t in tqdm(tasks, **progress)]
    table = pd.DataFrame(rows)
    means = table.groupby("eta").mean(numeric_only=True).reset_index()
    slopes = {
        "defect": _loglog_slope(means["eta"].to_numpy(), means["defect"].to_numpy()),
        "intertwiner": _loglog_slope(means["eta"].to_numpy(), means["intertwiner"].to_numpy()),
        "polish_vs_defect": _loglog_slope(means["defect"].to_numpy(), means["polish_distance"].to_numpy()),
    }
    logger.info(f"eta sweep slopes: {slopes}")
    return EtaSweep(table, slopes)


# ---------------------------------------------------------------- end-to-end certificate

@dataclass
class EndToEndReport:
    certificate: ErrorCertificate
    measured: float
    seed: int
    time: float
    perturbation: float

    @property
    def dominated(self) -> bool:
        return self.measured <= self.certificate.total + 1e-12

    def to_record(self) -> Dict:
        return {
            "certificate": self.certificate.to_record(),
            "measured_choi_distance": self.measured,
            "dominated": self.dominated,
            "seed": self.seed,
            "time": self.time,
            "perturbation": self.perturbation,
        }


def _random_generator(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    g = (g + g.conj().T) / 2
    return g / operator_norm(g)


def _perturbed_encoder(site: int, register: str, rotation: np.ndarray) -> LocalMap:
    base = swap_in_encoder(site, register, rotation.shape[0])
    kraus = tuple(rotation @ k for k in base.channel.kraus_ops)
    channel = Channel(base.channel.input_dims, base.channel.output_dims, kraus)
    return LocalMap(f"{base.name} (perturbed)", base.inputs, base.outputs, channel)


def _perturbed_decoder(site: int, register: str, rotation: np.ndarray) -> LocalMap:
    d = rotation.shape[0]
    base = swap_out_decoder(site, register, d)
    return LocalMap(f"{base.name} (perturbed)", base.inputs, base.outputs, Channel((d,), (d,), (rotation,)))


def _encoding_isometry(ring: Ring, sites: Tuple[int, int], rotations: Sequence[np.ndarray]) -> np.ndarray:
    """|a, b> -> rotated a at sites[0], b at sites[1], |0> elsewhere."""
    d = ring.local_dim
    cols = []
    for a in range(d):
        for b in range(d):
            locals_ = []
            for s in ring.sites():
                v = np.zeros(d, dtype=complex)
                if s == sites[0]:
                    v[a] = 1.0
                    v = rotations[0] @ v
                elif s == sites[1]:
                    v[b] = 1.0
                    v = rotations[1] @ v
                else:
                    v[0] = 1.0
                locals_.append(v)
            psi = locals_[0]
            for v in locals_[1:]:
                psi = np.kron(psi, v)
            cols.append(psi)
    return np.stack(cols, axis=1)


def end_to_end_certificate(
    seed: int,
    n_sites: int = 6,
    time: float = 0.3 * QUARTER_ANGLE,
    perturbation: float = 1e-2,
    encoder_sites: Tuple[int, int] = (4, 1),
    decoder_sites: Tuple[int, int] = (0, 3),
    jobs: int = DEFAULT_JOBS,
) -> EndToEndReport:
    """Truncated TFIM protocol with perturbed encoders, decoders and dynamics.

    The target is the pseudo-bulk channel of the unperturbed ingredients; the
    certificate adds the four error sources in diamond-norm units.
    """
    ring = Ring(n_sites)
    d = ring.local_dim
    rng = np.random.default_rng(seed)
    rot = {name: linalg.expm(-1j * perturbation * _random_generator(d, rng)) for name in ("ea", "eb", "da", "db", "dyn")}

    model = tfim_model(ring, time=time)
    u = evolve_model(model, ring)
    dyn_site = encoder_sites[0]
    kick = embed_on(DenseOperator((dyn_site,), (d,), rot["dyn"]), tuple(ring.sites()), ring.dims)
    u_prime = DenseOperator(tuple(ring.sites()), ring.dims, u.entries @ kick.entries)

    ideal = swap_spec(ring, u, encoder_sites, decoder_sites)
    implemented = PseudoBulkSpec(
        ring,
        u_prime,
        _perturbed_encoder(encoder_sites[0], INPUT_A, rot["ea"]),
        _perturbed_encoder(encoder_sites[1], INPUT_B, rot["eb"]),
        _perturbed_decoder(decoder_sites[0], OUTPUT_A, rot["da"]),
        _perturbed_decoder(decoder_sites[1], OUTPUT_B, rot["db"]),
        (d, d),
    )
    dec = decompose_swap(u_prime, ring, truncate=True, jobs=jobs)

    identity = np.eye(d)
    eps_enc = 2 * operator_norm(rot["ea"] - identity) + 2 * operator_norm(rot["eb"] - identity)
    eps_rec = 2 * operator_norm(rot["da"] - identity) + 2 * operator_norm(rot["db"] - identity)
    v0 = _encoding_isometry(ring, encoder_sites, (rot["ea"], rot["eb"]))
    eps_dyn = 2 * dynamical_duality_defect(u_prime.entries, v0, u.entries @ v0, np.eye(v0.shape[1]))
    eps_spread = 2 * operator_residual(dec, u_prime, ring)
    certificate = compose_certificate(eps_enc, eps_rec, eps_dyn, eps_spread)

    measured = choi_distance(implemented_choi(implemented, dec), pseudo_bulk_choi(ideal))
    logger.info(f"End-to-end seed {seed}: measured {measured:.3e}, certificate {certificate.total:.3e}")
    return EndToEndReport(certificate, measured, seed, time, perturbation)
