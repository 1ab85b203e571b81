"""Run configuration: pydantic models, the published JSON schema and the loader."""
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from jsonschema import Draft202012Validator
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config import DEFAULT_JOBS, DEFAULT_SEED, DEFAULT_TRIALS, QUARTER_ANGLE
from nlqc.errors import ConfigError, ReportSchemaError
from nlqc.lattice import ModelSpec, Ring, field_model, heisenberg_model, random_brickwork, tfim_model

logger = logging.getLogger(__name__)

FAULT_NAMES = Literal["early_post", "cross_half_encoder", "overlapping_message"]
SUBCOMMAND_NAMES = Literal["spread", "decompose", "protocol", "holocode", "teleport", "certify", "check-sim"]
REPORT_STATUSES = Literal["ok", "verification_failed", "locality_violation", "support_violation"]


class ModelDescriptor(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["brickwork", "tfim", "heisenberg", "field"] = Field(
        description="Model family: Haar brickwork circuit or a nearest-neighbour Hamiltonian"
    )
    n_sites: int = Field(default=6, ge=4, le=16, description="Even number of ring sites")
    local_dim: int = Field(default=2, ge=2, le=4, description="Site dimension (Hamiltonians need qubits)")
    depth: int = Field(default=1, ge=1, le=8, description="Brickwork depth")
    gate_seed: Optional[int] = Field(default=None, ge=0, description="Seed of the brickwork gates; run seed if absent")
    coupling: float = Field(default=1.0, description="Bond coupling J")
    field_strength: float = Field(default=1.0, description="Transverse field h")
    strengths: Optional[List[float]] = Field(default=None, description="Per-site fields for kind=field")
    time: float = Field(default=0.0, ge=0.0, description="Evolution time of a Hamiltonian model")

    @model_validator(mode="after")
    def _check(self):
        if self.n_sites % 2:
            raise ValueError(f"n_sites must be even, got {self.n_sites}")
        if self.kind != "brickwork" and self.local_dim != 2:
            raise ValueError("Hamiltonian models are defined on qubits")
        if self.kind == "field" and (self.strengths is None or len(self.strengths) != self.n_sites):
            raise ValueError("kind=field needs one strength per site")
        return self

    def ring(self) -> Ring:
        return Ring(self.n_sites, self.local_dim)

    def build(self, seed: int) -> Tuple[Ring, ModelSpec]:
        ring = self.ring()
        if self.kind == "brickwork":
            return ring, random_brickwork(ring, self.depth, self.gate_seed if self.gate_seed is not None else seed)
        if self.kind == "tfim":
            return ring, tfim_model(ring, self.coupling, self.field_strength, self.time)
        if self.kind == "heisenberg":
            return ring, heisenberg_model(ring, self.coupling, self.time)
        return ring, field_model(ring, self.strengths, self.time)


class SpreadConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelDescriptor
    eps: Optional[float] = Field(default=None, gt=0.0, description="Threshold for the approximate spread")
    times: Optional[List[float]] = Field(default=None, description="Light-cone fit times (Hamiltonians only)")
    distances: Optional[List[int]] = Field(default=None, description="Light-cone fit distances in hops")


class DecomposeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelDescriptor
    method: Literal["circuit", "swap"] = Field(default="swap", description="Gate regrouping or swap conjugation")
    truncate: bool = Field(default=False, description="Twirl-truncate and unitarize the swap pieces")
    trials: int = Field(default=DEFAULT_TRIALS, ge=1, le=1000, description="Random product inputs checked")
    tolerance: float = Field(default=1e-9, gt=0.0, description="Residual allowed on the exact path")
    fit_times: Optional[List[float]] = Field(default=None, description="Times for the truncation certificate fit")
    fit_distances: Optional[List[int]] = Field(default=None, description="Distances for the certificate fit")


class ProtocolConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelDescriptor
    encoder_sites: Tuple[int, int] = Field(description="Alice's (W) and Bob's (E) encoder sites")
    decoder_sites: Tuple[int, int] = Field(description="Alice's (N) and Bob's (S) decoder sites")
    truncate: bool = Field(default=False, description="Use the truncated swap decomposition")
    fault: Optional[FAULT_NAMES] = Field(default=None, description="Injected locality fault")
    trials: int = Field(default=3, ge=1, le=100, description="Random input states compared")
    tolerance: float = Field(default=1e-8, gt=0.0, description="Trace distance allowed on exact runs")


class HolocodeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_blocks: int = Field(default=2, ge=1, le=8, description="Stacked single-layer Steane blocks")
    n_targets: int = Field(default=10, ge=1, le=100, description="Random Clifford targets")
    word_length: int = Field(default=6, ge=1, le=50, description="Gates per random target")
    fault: Optional[FAULT_NAMES] = Field(default=None, description="Injected locality fault")
    entropy_k_max: Optional[int] = Field(default=None, ge=1, le=6, description="Blocks in the entropy profile")


class TeleportConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["normal", "pbt", "cascade"] = Field(description="Primitive to run")
    ports: List[int] = Field(default=[1, 2, 4], description="Port counts for the fidelity table")
    n_a: int = Field(default=1, ge=1, le=3, description="Qubits per port")
    trials: int = Field(default=1000, ge=1, le=100000, description="Sampled trajectories or teleportations")
    cascade_ports: int = Field(default=2, ge=1, le=3, description="Ports per port-teleportation in the cascade")
    otp: bool = Field(default=True, description="One-time pad on the X'_0 record")


class CertifyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["eta_sweep", "end_to_end", "compose"] = Field(description="Certificate workflow")
    etas: List[float] = Field(default=[1e-2, 1e-3, 1e-4], description="Leak strengths of the sweep")
    seeds: List[int] = Field(default=[0, 1, 2, 3, 4], description="Seeds per sweep point or end-to-end run")
    n_sites: int = Field(default=6, ge=4, le=6, description="Ring size of the end-to-end run")
    time: float = Field(default=0.3 * QUARTER_ANGLE, ge=0.0, description="Evolution time of the end-to-end run")
    perturbation: float = Field(default=1e-2, ge=0.0, le=0.5, description="Strength of the injected imperfections")
    eps_enc: float = Field(default=0.0, ge=0.0)
    eps_rec: float = Field(default=0.0, ge=0.0)
    eps_dyn: float = Field(default=0.0, ge=0.0)
    eps_spread: float = Field(default=0.0, ge=0.0)
    physical: Optional[Dict[str, float]] = Field(
        default=None, description="g_n, delta, a, b, delta_tau for the parametric form"
    )


class CheckSimConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model: ModelDescriptor
    block: int = Field(default=1, ge=1, le=3, description="Fine sites per candidate site in the reference model")
    delta: float = Field(default=1e-2, gt=0.0, description="Allowed relative correlator error")
    horizon: float = Field(default=1.0, gt=0.0, description="Time horizon T")
    times: List[float] = Field(default=[0.0, 0.2], description="Checked times, all below the horizon")
    max_length: int = Field(default=2, ge=1, le=3, description="Longest operator product m")
    lr_times: Optional[List[float]] = None
    lr_distances: Optional[List[int]] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    subcommand: SUBCOMMAND_NAMES
    seed: int = Field(default=DEFAULT_SEED, ge=0, le=2 ** 64 - 1, description="Master seed")
    jobs: int = Field(default=DEFAULT_JOBS, ge=1, le=64, description="Worker threads")
    output: Optional[str] = Field(default=None, description="Report path; NLQC_OUTPUT_DIR is used when absent")
    spread: Optional[SpreadConfig] = None
    decompose: Optional[DecomposeConfig] = None
    protocol: Optional[ProtocolConfig] = None
    holocode: Optional[HolocodeConfig] = None
    teleport: Optional[TeleportConfig] = None
    certify: Optional[CertifyConfig] = None
    check_sim: Optional[CheckSimConfig] = Field(default=None, alias="check-sim")

    @model_validator(mode="after")
    def _section_present(self):
        if self.section() is None:
            raise ValueError(f"Subcommand {self.subcommand!r} needs a '{self.subcommand}' section")
        return self

    def section(self) -> Optional[BaseModel]:
        return getattr(self, self.subcommand.replace("-", "_"))

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True, exclude_none=True)


def run_config_schema() -> Dict[str, Any]:
    schema = RunConfig.model_json_schema(by_alias=True)
    schema["$schema"] = "https://json-schema.org/draft/2020-12/schema"
    schema["title"] = "nlqc-lab run configuration"
    return schema


class RunReportModel(BaseModel):
    """Published shape of a run report (the on-disk form of state.RunReport)."""

    model_config = ConfigDict(extra="forbid")

    tool: str
    version: str
    subcommand: SUBCOMMAND_NAMES
    config: Dict[str, Any] = Field(description="Echo of the validated configuration")
    config_hash: str = Field(pattern=r"^[0-9a-f]{16}$", description="sha256 prefix of the config echo")
    seed: int = Field(ge=0)
    jobs: int = Field(ge=1)
    wall_time_s: float = Field(ge=0, description="The only field allowed to differ between identical runs")
    status: REPORT_STATUSES
    exit_code: Literal[0, 2]
    failure: Optional[str]
    result: Dict[str, Any]


def report_schema() -> Dict[str, Any]:
    schema = RunReportModel.model_json_schema()
    schema["$schema"] = "https://json-schema.org/draft/2020-12/schema"
    schema["title"] = "nlqc-lab run report"
    return schema


def validate_report(document: Dict[str, Any]) -> None:
    """Check a serialised report against the published report schema."""
    validator = Draft202012Validator(report_schema())
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        raise ReportSchemaError(first.message, path=_format_path(first.absolute_path))


def _format_path(path) -> str:
    return ".".join(str(p) for p in path) or "<root>"


def parse_run_config(document: Any, source: str = "<config>") -> RunConfig:
    if not isinstance(document, dict):
        raise ConfigError(f"{source}: configuration must be a mapping, got {type(document).__name__}", path="<root>")
    validator = Draft202012Validator(run_config_schema())
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = _format_path(first.absolute_path)
        raise ConfigError(f"{source}: {where}: {first.message}", path=where)
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        issue = e.errors()[0]
        where = _format_path(issue.get("loc", ()))
        raise ConfigError(f"{source}: {where}: {issue.get('msg')}", path=where) from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}", path=str(path)) from e
    try:
        document = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML/JSON: {e}", path="<root>") from e
    config = parse_run_config(document, str(path))
    logger.info(f"Loaded {config.subcommand} config from {path}")
    return config
