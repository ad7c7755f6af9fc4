"""Activated random walk on Z^d: exact stabilization, Markov chains and
the statistics used to study its critical density."""

__version__ = "0.1.0"

from .lattice import (ASLEEP, KILL, Configuration, DomainError, Kind, SiteState,
                      Topology, density, read_pgm, write_pgm)
from .stabilizer import (SLEEP, BudgetExceeded, InfeasibleError, Instruction,
                         InstructionSource, Move, StabilizationOutcome,
                         apply_instruction, draw_instruction, stabilize,
                         stabilize_collapsed)
from .chains import (ChainBudgetExceeded, ChainState, ThresholdDetector, coupling_run,
                     free_run, free_sample, point_source, region_source,
                     poisson_stabilize, wake_step, wired_drive_uniform,
                     wired_exact_sample, wired_step)
from .harness import ExperimentConfig, RunManifest, derive_seed, run_experiment

__all__ = [
    "apply_instruction",
    "ASLEEP",
    "BudgetExceeded",
    "ChainBudgetExceeded",
    "ChainState",
    "Configuration",
    "coupling_run",
    "density",
    "derive_seed",
    "DomainError",
    "draw_instruction",
    "ExperimentConfig",
    "free_run",
    "free_sample",
    "InfeasibleError",
    "Instruction",
    "InstructionSource",
    "KILL",
    "Kind",
    "Move",
    "point_source",
    "poisson_stabilize",
    "read_pgm",
    "region_source",
    "run_experiment",
    "RunManifest",
    "SiteState",
    "SLEEP",
    "StabilizationOutcome",
    "stabilize",
    "stabilize_collapsed",
    "ThresholdDetector",
    "Topology",
    "wake_step",
    "wired_drive_uniform",
    "wired_exact_sample",
    "wired_step",
    "write_pgm",
]
