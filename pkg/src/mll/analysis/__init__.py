"""Numerical checks of the convergence analysis of MLA."""
from .bias import BiasPoint, BiasScan, bias_at, bias_scan, ula_stationary_bias
from .constants import TheoremConstants, constants_for, growth_gamma, theorem_constants
from .coupling import ContractionFit, DeviationReport, GrowthReport, contraction_rate, deviation_check, growth_check
from .duality import duality_suite
from .fit import OrderFit, fit_order
from .laws import GaussianLaw, PointLaw, law_from_config
from .local_error import LocalErrorEstimate, local_errors, local_strong_error, local_weak_error
from .msc import MscReport, epsilon_bound, epsilon_example, epsilon_witness, msc_pair_ratio, msc_report_polytope

__all__ = [
    "BiasPoint", "BiasScan", "bias_at", "bias_scan", "ula_stationary_bias",
    "TheoremConstants", "constants_for", "growth_gamma", "theorem_constants",
    "ContractionFit", "DeviationReport", "GrowthReport", "contraction_rate", "deviation_check", "growth_check",
    "duality_suite", "OrderFit", "fit_order", "GaussianLaw", "PointLaw", "law_from_config",
    "LocalErrorEstimate", "local_errors", "local_strong_error", "local_weak_error",
    "MscReport", "epsilon_bound", "epsilon_example", "epsilon_witness", "msc_pair_ratio", "msc_report_polytope",
]
