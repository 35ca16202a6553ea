"""Frequency estimation beyond a single coherent interrogation.

Modules
-------
spin
    Two-level dynamics: closed-form propagators and an ODE reference.
phase
    Phase estimation from a two-pulse fringe and its error terms.
fisher
    Fisher information, quantum Fisher information and variance bounds.
experiment
    Configurations, ground-truth probabilities and simulated records.
estimation
    FFT and least-squares frequency estimators, error budgets, sweeps.
protocols
    Inverse-QFT readout and the two-qubit NOON comparison.
cli
    Command-line front end.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .experiment import ExperimentConfig, MeasurementDataset, config_from_dict, simulate_timetrace
from .estimation import fit_dataset, error_budget
from .fisher import dataset_variance_bound
from .spin import prob_excited_seq, prob_excited_numeric

__all__ = [
    "__version__", "ExperimentConfig", "MeasurementDataset", "config_from_dict", "simulate_timetrace",
    "fit_dataset", "error_budget", "dataset_variance_bound", "prob_excited_seq", "prob_excited_numeric",
]
