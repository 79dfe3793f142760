"""Joint AP-UE pairing and precoding for max-min-fair distributed MIMO downlink."""

from .baselines import BaselineKind, baseline_scheme
from .channel import Drop, DropConfig, dense_config, generate_drop, sparse_config
from .conic import ConicProgram, SolverTolerances, SolveVerdict, Status, solve_socp
from .greedy import greedy_pairing
from .harness import ExperimentConfig, Scheme, load_config, run_experiment
from .misocp import MisocpConfig, NodeSelection, opt_scheme
from .network import (
    ChannelMatrix,
    ConstraintVariant,
    InvalidInputError,
    PairingConfig,
    PairingMatrix,
    PowerBudget,
    PrecoderMatrix,
    compute_sinr,
    shannon_rate,
    sinr_report,
)
from .precoding import BisectionParams, PrecodingSolution, max_common_sinr

__version__ = "0.1.0"

__all__ = [
    "BaselineKind", "BisectionParams", "ChannelMatrix", "ConicProgram", "ConstraintVariant",
    "Drop", "DropConfig", "ExperimentConfig", "InvalidInputError", "MisocpConfig", "NodeSelection",
    "PairingConfig", "PairingMatrix", "PowerBudget", "PrecoderMatrix", "PrecodingSolution",
    "Scheme", "SolveVerdict", "SolverTolerances", "Status", "baseline_scheme", "compute_sinr",
    "dense_config", "generate_drop", "greedy_pairing", "load_config", "max_common_sinr",
    "opt_scheme", "run_experiment", "shannon_rate", "sinr_report", "solve_socp", "sparse_config",
]
