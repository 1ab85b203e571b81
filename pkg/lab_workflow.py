import logging
import math
import sys
import time
from typing import Any, Callable, Dict

import numpy as np
import pandas as pd
from pydantic import BaseModel
from tqdm import tqdm

from config import EXIT_OK, EXIT_VERIFICATION, QUARTER_ANGLE, TOOL_NAME, TOOL_VERSION
from run_config import (
    CertifyConfig,
    CheckSimConfig,
    DecomposeConfig,
    HolocodeConfig,
    ProtocolConfig,
    RunConfig,
    SpreadConfig,
    TeleportConfig,
)
from state import RunReport
from utils import config_hash, make_rng
from nlqc.approxcode import compose_certificate, end_to_end_certificate, eta_sweep
from nlqc.decompose import decompose_circuit, decompose_swap, verify_decomposition
from nlqc.errors import ConfigError, LocalityViolationError, SupportViolationError, VerificationFailure
from nlqc.holocode import default_stack_config, entropy_profile, random_clifford_word, run_toy_protocol
from nlqc.lattice import BrickworkCircuit, LocalHamiltonian, Region, coarse_grain, evolve_model
from nlqc.protocol import pseudo_bulk_dynamics, run_nlqc, swap_spec, trace_distance
from nlqc.qcore import DenseOperator, pauli_matrices, random_density, random_state
from nlqc.spread import (
    CandidateModel,
    DictionaryEntry,
    ModelOracle,
    approximate_spread,
    check_simulation_conditions,
    exact_spread,
    lr_profile,
)
from nlqc.teleport import (
    pbt_average_fidelity,
    pbt_trajectory_fidelity,
    run_cascade,
    teleport_normal,
)

logger = logging.getLogger(__name__)

PBT_AGREEMENT_TOL = 1e-6
SLOPE_WINDOWS = {"defect": (0.9, 1.1), "intertwiner": (0.35, 0.65)}


def _progress(iterable, **kwargs):
    return tqdm(iterable, disable=not sys.stderr.isatty(), **kwargs)


class LabWorkflow:
    """Dispatches a validated run configuration to the domain package and builds the report."""

    def __init__(self):
        self.handlers: Dict[str, Callable[[BaseModel, int, int], Dict[str, Any]]] = {
            "spread": self._spread,
            "decompose": self._decompose,
            "protocol": self._protocol,
            "holocode": self._holocode,
            "teleport": self._teleport,
            "certify": self._certify,
            "check-sim": self._check_sim,
        }

    def execute(self, config: RunConfig) -> RunReport:
        handler = self.handlers.get(config.subcommand)
        if handler is None:
            raise ConfigError(f"Unknown subcommand {config.subcommand!r}", path="subcommand")
        echo = config.echo()
        logger.info(f"Running {config.subcommand} with seed {config.seed} on {config.jobs} worker(s)")
        start = time.perf_counter()
        status, exit_code, failure = "ok", EXIT_OK, None
        try:
            result = handler(config.section(), config.seed, config.jobs)
        except VerificationFailure as e:
            logger.error(f"Verification failed: {e}")
            result = dict(e.result or {})
            status, exit_code, failure = "verification_failed", EXIT_VERIFICATION, str(e)
        except LocalityViolationError as e:
            logger.error(f"Locality violation: {e}")
            event = e.event.to_record() if hasattr(e.event, "to_record") else str(e.event)
            result = {"witness": event}
            status, exit_code, failure = "locality_violation", EXIT_VERIFICATION, str(e)
        except SupportViolationError as e:
            logger.error(f"Support violation: {e}")
            result = {"witness": {"piece": e.piece, "operator": e.witness, "norm": e.norm}}
            status, exit_code, failure = "support_violation", EXIT_VERIFICATION, str(e)
        wall = time.perf_counter() - start
        return RunReport(
            tool=TOOL_NAME,
            version=TOOL_VERSION,
            subcommand=config.subcommand,
            config=echo,
            config_hash=config_hash(echo),
            seed=config.seed,
            jobs=config.jobs,
            wall_time_s=wall,
            status=status,
            exit_code=exit_code,
            failure=failure,
            result=result,
        )

    # ------------------------------------------------------------ handlers

    def _spread(self, section: SpreadConfig, seed: int, jobs: int) -> Dict[str, Any]:
        ring, model = section.model.build(seed)
        unitary = evolve_model(model, ring)
        spread = exact_spread(unitary, ring, jobs=jobs)
        result: Dict[str, Any] = {
            "n_sites": ring.n_sites,
            "exact_spread": spread,
            "spread_hops": int(round(spread / ring.spacing)),
            "within_quarter": spread <= QUARTER_ANGLE + 1e-12,
        }
        if section.eps is not None:
            result["approximate_spread"] = approximate_spread(unitary, ring, section.eps, jobs=jobs)
        if section.times and section.distances:
            fit = lr_profile(model, ring, section.times, section.distances, jobs=jobs)
            result["lightcone"] = fit.to_record()
            result["samples"] = fit.samples.to_dict(orient="records")
        return result

    def _decompose(self, section: DecomposeConfig, seed: int, jobs: int) -> Dict[str, Any]:
        ring, model = section.model.build(seed)
        unitary = evolve_model(model, ring)
        if section.method == "circuit":
            if not isinstance(model, BrickworkCircuit):
                raise ConfigError("method=circuit needs a brickwork model", path="decompose.method")
            dec = decompose_circuit(model, ring)
        else:
            fit = None
            if section.truncate and section.fit_times and section.fit_distances:
                fit = lr_profile(model, ring, section.fit_times, section.fit_distances, jobs=jobs)
            time_ = model.time if isinstance(model, LocalHamiltonian) else None
            dec = decompose_swap(model, ring, truncate=section.truncate, fit=fit, time=time_, jobs=jobs)
        residual = verify_decomposition(dec, unitary, ring, section.trials, seed)
        dec = dec.with_measured(residual)
        result = dec.to_manifest()
        result["measured_residual"] = residual
        limit = dec.residual_bound if section.truncate else section.tolerance
        if residual > limit:
            raise VerificationFailure(f"Residual {residual:.3e} exceeds {limit:.3e}", result)
        return result

    def _protocol(self, section: ProtocolConfig, seed: int, jobs: int) -> Dict[str, Any]:
        ring, model = section.model.build(seed)
        spec = swap_spec(ring, model, section.encoder_sites, section.decoder_sites)
        dec = decompose_swap(model, ring, truncate=section.truncate, jobs=jobs)
        rng = make_rng(seed)
        d = ring.local_dim
        distances = []
        transcript = None
        for _ in range(section.trials):
            rho = random_density(d * d, rng)
            run = run_nlqc(spec, dec, rho, fault=section.fault)
            transcript = transcript or run.transcript.to_records()
            distances.append(trace_distance(run.output, pseudo_bulk_dynamics(spec, rho)))
        result = {
            "trace_distances": distances,
            "max_trace_distance": max(distances),
            "decomposition": dec.to_manifest(),
            "transcript": transcript,
        }
        if not section.truncate and max(distances) > section.tolerance:
            raise VerificationFailure(f"Non-local run deviates by {max(distances):.3e}", result)
        return result

    def _holocode(self, section: HolocodeConfig, seed: int, jobs: int) -> Dict[str, Any]:
        config = default_stack_config(section.n_blocks)
        rng = make_rng(seed)
        runs = []
        for index in _progress(range(section.n_targets), desc="clifford targets"):
            word = random_clifford_word(config.k, section.word_length, rng)
            run = run_toy_protocol(config, word, fault=section.fault, jobs=jobs)
            record = run.to_record()
            record.pop("transcript")
            record["target"] = [[g, list(q)] for g, q in word]
            runs.append(record)
            if not run.verdict.passed:
                raise VerificationFailure(f"Target {index} not reproduced: {run.verdict.failures}", {"runs": runs})
        result: Dict[str, Any] = {"n_blocks": section.n_blocks, "runs": runs}
        if section.entropy_k_max:
            result["entropy_profile"] = entropy_profile(section.entropy_k_max).to_dict(orient="records")
        return result

    def _teleport(self, section: TeleportConfig, seed: int, jobs: int) -> Dict[str, Any]:
        rng = make_rng(seed)
        if section.mode == "normal":
            d = 2 ** section.n_a
            outcomes, worst = {}, 1.0
            for _ in _progress(range(section.trials), desc="teleportations"):
                out = teleport_normal(random_state(d, rng), rng, section.n_a)
                outcomes[out.outcome] = outcomes.get(out.outcome, 0) + 1
                worst = min(worst, out.fidelity)
            result = {"outcome_counts": dict(sorted(outcomes.items())), "min_fidelity": worst}
            if worst < 1 - 1e-10:
                raise VerificationFailure(f"Normal teleportation fidelity {worst}", result)
            return result

        if section.mode == "pbt":
            rows = []
            for n_ports in sorted(section.ports):
                rows.append({
                    "ports": n_ports,
                    "choi": pbt_average_fidelity(n_ports, section.n_a),
                    "trajectory": pbt_trajectory_fidelity(n_ports, section.n_a),
                    "sampled": pbt_trajectory_fidelity(n_ports, section.n_a, section.trials, seed),
                })
            table = pd.DataFrame(rows)
            result = {"fidelities": table.to_dict(orient="records")}
            gap = float(np.max(np.abs(table["choi"] - table["trajectory"])))
            if gap > PBT_AGREEMENT_TOL:
                raise VerificationFailure(f"Choi and trajectory fidelities differ by {gap:.3e}", result)
            if not np.all(np.diff(table["choi"].to_numpy()) > 0):
                raise VerificationFailure("Port-teleportation fidelity does not increase with N", result)
            return result

        report = run_cascade(random_state(2, rng), random_state(2, rng), section.cascade_ports, section.otp, seed)
        result = report.to_record()
        if report.mutual_information_v0_v1 != 0:
            raise VerificationFailure(f"I(V0:V1) = {report.mutual_information_v0_v1}", result)
        # with one port every stage is deterministic, so the sampled chain must match the stage oracle
        if section.cascade_ports == 1:
            product = math.prod(report.stage_fidelities.values())
            if max(abs(report.fidelity - report.oracle_fidelity), abs(report.fidelity - product)) > 1e-9:
                raise VerificationFailure("Cascade fidelity disagrees with the stage oracle", result)
        if section.otp and max(report.otp_check.values()) > 1e-9:
            raise VerificationFailure("Padded X'_0 record is not maximally mixed", result)
        return result

    def _certify(self, section: CertifyConfig, seed: int, jobs: int) -> Dict[str, Any]:
        if section.mode == "compose":
            physical = section.physical or {}
            return compose_certificate(
                section.eps_enc, section.eps_rec, section.eps_dyn, section.eps_spread, **physical
            ).to_record()

        if section.mode == "eta_sweep":
            sweep = eta_sweep(section.etas, section.seeds, jobs=jobs)
            result = sweep.to_record()
            for name, (low, high) in SLOPE_WINDOWS.items():
                if not low <= sweep.slopes[name] <= high:
                    raise VerificationFailure(f"{name} slope {sweep.slopes[name]:.3f} outside [{low}, {high}]", result)
            return result

        runs = [
            end_to_end_certificate(s, section.n_sites, section.time, section.perturbation, jobs=jobs)
            for s in _progress(section.seeds, desc="end-to-end")
        ]
        result = {"runs": [r.to_record() for r in runs]}
        broken = [r.seed for r in runs if not r.dominated]
        if broken:
            raise VerificationFailure(f"Measured distance exceeds the certificate for seeds {broken}", result)
        return result

    def _check_sim(self, section: CheckSimConfig, seed: int, jobs: int) -> Dict[str, Any]:
        ring, model = section.model.build(seed)
        if not isinstance(model, LocalHamiltonian):
            raise ConfigError("check-sim needs a Hamiltonian model", path="check-sim.model.kind")
        paulis = pauli_matrices()
        probes = [(f"{p}{s}", p, s) for s in (0, ring.n_sites // 2) for p in ("X", "Z")]
        dictionary = {
            label: DictionaryEntry(DenseOperator((s,), (2,), paulis[p]), label, Region.from_sites(ring.n_sites, [s]))
            for label, p, s in probes
        }
        candidate = CandidateModel(model, ring, dictionary)

        if section.block == 1:
            reference = ModelOracle(model, ring, {label: e.operator for label, e in dictionary.items()})
        else:
            if section.model.kind == "field":
                raise ConfigError("Coarse-graining needs a translation-invariant model", path="check-sim.block")
            fine_descriptor = section.model.model_copy(update={"n_sites": ring.n_sites * section.block})
            fine_ring, fine_model = fine_descriptor.build(seed)
            operators = {
                label: coarse_grain(paulis[p], s, section.block, fine_ring) for label, p, s in probes
            }
            reference = ModelOracle(fine_model, fine_ring, operators)

        report = check_simulation_conditions(
            candidate,
            reference,
            section.delta,
            section.horizon,
            section.times,
            section.max_length,
            section.lr_times,
            section.lr_distances,
            jobs=jobs,
        )
        result = report.to_record()
        if not report.passed:
            raise VerificationFailure(f"Simulation conditions fail: delta {report.delta_measured:.3e}", result)
        return result
