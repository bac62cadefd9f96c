"""Desk-scale quantum federated learning simulator.

Statevector simulation of small variational quantum classifiers,
Monte-Carlo gate/readout noise, parameter-shift training, and a
federated round loop with sporadic noise-weighted and proximally
personalized local updates, plus closed-form evaluators for the
associated shot-noise and convergence bounds.
"""

from .client import ClientState, LocalReport, TrainConfig
from .config import ExperimentConfig, parse_config
from .data import Dataset, PartitionSpec
from .federation import RoundReport, ServerState, run_training
from .noise import NoiseModel, load_calibration
from .qnn import EXACT, Prediction, QnnSpec
from .rng import SeedTree
from .statevector import Circuit, Gate, StateVector
from .theory import BoundParams

__all__ = [
    "ClientState",
    "LocalReport",
    "TrainConfig",
    "ExperimentConfig",
    "parse_config",
    "Dataset",
    "PartitionSpec",
    "RoundReport",
    "ServerState",
    "run_training",
    "NoiseModel",
    "load_calibration",
    "EXACT",
    "Prediction",
    "QnnSpec",
    "SeedTree",
    "Circuit",
    "Gate",
    "StateVector",
    "BoundParams",
]

__version__ = "0.1.0"
