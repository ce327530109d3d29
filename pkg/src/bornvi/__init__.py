"""Variational inference over discrete Bayesian networks with Born machines.

A Born machine is a parameterized quantum circuit whose measurement
statistics define ``q(z|x)``. This package simulates such circuits exactly,
trains them against a posterior with an adversarial KL objective or a
kernelized Stein discrepancy, and benchmarks the results.
"""
from ._backend import BACKEND
from .advkl import AdvConfig, EpochLog, train
from .bayesnet import BayesNet, EvidenceModel, HmmModel, exact_posterior, load_bundled, load_network
from .bornmachine import ANGLE_ENCODING, HADAMARD_PREP, AnsatzSpec, BornMachine, exact_distribution, init_machine
from .ksd import KsdConfig, ksd_estimate, train_ksd
from .metrics import tvd

__version__ = "0.1.0"

__all__ = [
    "ANGLE_ENCODING",
    "BACKEND",
    "HADAMARD_PREP",
    "AdvConfig",
    "AnsatzSpec",
    "BayesNet",
    "BornMachine",
    "EpochLog",
    "EvidenceModel",
    "HmmModel",
    "KsdConfig",
    "exact_distribution",
    "exact_posterior",
    "init_machine",
    "ksd_estimate",
    "load_bundled",
    "load_network",
    "train",
    "train_ksd",
    "tvd",
]
