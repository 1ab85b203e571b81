from .errors import NLQCError, PreconditionError, VerificationFailure
from .lattice import Ring, Region, random_brickwork, tfim_model, heisenberg_model
from .spread import exact_spread, approximate_spread, lr_profile, LightConeFit, check_simulation_conditions
from .decompose import (
    QuarterDecomposition, decompose_circuit, decompose_swap,
    verify_decomposition, operator_residual
)
from .stab import PauliOp, Tableau, StabilizerCode, clean_logical, recoverable
from .holocode import build_stack, default_stack_config, run_toy_protocol, entropy_profile
from .protocol import PseudoBulkSpec, swap_spec, run_nlqc, pseudo_bulk_dynamics, time_rewind_encoder
from .approxcode import build_isometry, polish_isometry, reconstruct_unitary, compose_certificate
from .teleport import teleport_normal, run_pbt, pbt_povm, run_cascade

__all__ = [
    'NLQCError',
    'PreconditionError',
    'VerificationFailure',
    'Ring',
    'Region',
    'random_brickwork',
    'tfim_model',
    'heisenberg_model',
    'exact_spread',
    'approximate_spread',
    'lr_profile',
    'LightConeFit',
    'check_simulation_conditions',
    'QuarterDecomposition',
    'decompose_circuit',
    'decompose_swap',
    'verify_decomposition',
    'operator_residual',
    'PauliOp',
    'Tableau',
    'StabilizerCode',
    'clean_logical',
    'recoverable',
    'build_stack',
    'default_stack_config',
    'run_toy_protocol',
    'entropy_profile',
    'PseudoBulkSpec',
    'swap_spec',
    'run_nlqc',
    'pseudo_bulk_dynamics',
    'time_rewind_encoder',
    'build_isometry',
    'polish_isometry',
    'reconstruct_unitary',
    'compose_certificate',
    'teleport_normal',
    'run_pbt',
    'pbt_povm',
    'run_cascade',
]

__version__ = "1.0.0"
__author__ = "NLQC lab maintainers"
__description__ = "Numerical laboratory for non-local quantum computation extracted from lattice dynamics"
