"""Variational circuit states embedded in a self-consistent cluster mean field for the J1-J2 Heisenberg model."""
from .circuit import CircuitSpec, build_circuit
from .ed_oracle import ScfConfig, hmft_best, hmft_reference, hmft_sweep, self_consistent_hmft
from .hamiltonian import ModelParams
from .lattice import ClusterGeometry, build_cluster
from .objective import Objective, OrderParameters
from .optimizer import OptimizerConfig, minimize, multi_start
from .sweep import SweepConfig, detect_transitions, run_sweep, variance_study

__all__ = [
    "CircuitSpec",
    "ClusterGeometry",
    "ModelParams",
    "Objective",
    "OptimizerConfig",
    "OrderParameters",
    "ScfConfig",
    "SweepConfig",
    "build_circuit",
    "build_cluster",
    "detect_transitions",
    "hmft_best",
    "hmft_reference",
    "hmft_sweep",
    "minimize",
    "multi_start",
    "run_sweep",
    "self_consistent_hmft",
    "variance_study",
]
