"""Numerical comparison of processes with independent increments and Lévy-driven diffusions.

Submodules: :mod:`specs` (process descriptions and validation), :mod:`generator`
(cumulants and generators), :mod:`orders` (test families and sufficient
conditions), :mod:`montecarlo` (seeded simulation), :mod:`spectral` (1-D
Fourier oracle), :mod:`verify` (dominance, order checks and residuals) and
:mod:`cli`.
"""

__version__ = "0.1.0"

from .generator import (TestFunction, apply_generator, char_function_pii, cumulant,
                        generator_difference)
from .montecarlo import EstimateCI, PathSet, estimate_expectation, simulate, simulate_pii, simulate_sde
from .orders import levy_order, make_test_family, psd_order, sufficient_conditions
from .specs import (DiffusionCoefficient, LevyMeasure, ProcessSpec, TimeGrid, TripletSchedule,
                    validate_spec)
from .spectral import GridFunction, density_pii, fourier_multiplier_transition, sobolev_norm
from .verify import check_generator_dominance, verify_order_mc, verify_order_spectral

__all__ = [
    "DiffusionCoefficient", "EstimateCI", "GridFunction", "LevyMeasure", "PathSet", "ProcessSpec",
    "TestFunction", "TimeGrid", "TripletSchedule", "apply_generator", "char_function_pii",
    "check_generator_dominance", "cumulant", "density_pii", "estimate_expectation",
    "fourier_multiplier_transition", "generator_difference", "levy_order", "make_test_family",
    "psd_order", "simulate", "simulate_pii", "simulate_sde", "sobolev_norm", "sufficient_conditions",
    "validate_spec", "verify_order_mc", "verify_order_spectral",
]
