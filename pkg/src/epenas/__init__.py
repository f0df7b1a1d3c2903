"""Training-free performance estimation for NAS-Bench-201 cells."""

__version__ = "0.1.0"

from .archspace import CellSpec, decode, encode, enumerate_all, random_sample
from .network import NetworkConfig, build_network, profile_config
from .scorer import ScoreReport, ScoringError, epe_score, single_matrix_score

__all__ = [
    "CellSpec",
    "NetworkConfig",
    "ScoreReport",
    "ScoringError",
    "build_network",
    "decode",
    "encode",
    "enumerate_all",
    "epe_score",
    "profile_config",
    "random_sample",
    "single_matrix_score",
]
