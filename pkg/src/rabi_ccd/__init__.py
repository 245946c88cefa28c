"""Noisy trapped-ion simulation of Rabi and Dirac models under concatenated continuous decoupling."""
__version__ = "0.1.0"

from .noise import OUParams, generate_realization, analytic_coherence, diffusion_from_T2, periodogram
from .fock import OperatorSet, build_operator_set, displacement_matrix, product_state
from .hamiltonian import (LaserConfig, LayerConfig, RabiParams, DiracParams, NoiseModel,
                          params_from_targets, build_layer_hamiltonian)
from .propagate import IntegrationPlan, evolve, evolve_layer_ensemble
from .observables import fidelity, expectation, rabi_ground_state, scaling_point, ancilla_position_readout
from .experiments import ExperimentSpec, EnsembleResult, NoiseBlock, build_experiment, run_ensemble

__all__ = [
    "OUParams", "generate_realization", "analytic_coherence", "diffusion_from_T2", "periodogram",
    "OperatorSet", "build_operator_set", "displacement_matrix", "product_state",
    "LaserConfig", "LayerConfig", "RabiParams", "DiracParams", "NoiseModel",
    "params_from_targets", "build_layer_hamiltonian",
    "IntegrationPlan", "evolve", "evolve_layer_ensemble",
    "fidelity", "expectation", "rabi_ground_state", "scaling_point", "ancilla_position_readout",
    "ExperimentSpec", "EnsembleResult", "NoiseBlock", "build_experiment", "run_ensemble",
]
