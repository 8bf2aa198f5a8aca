"""Numerical laboratory for the chiral Landau-Lifshitz energy of planar S^2 fields."""
from .grid import GridSpec, SphereField, FieldError, sample, metric_dM, metric_dMprime
from .energy import EnergyBreakdown, evaluate, evaluate_map
from .solutions import AnalyticMap, parse_family

__all__ = ["GridSpec", "SphereField", "FieldError", "sample", "metric_dM", "metric_dMprime",
           "EnergyBreakdown", "evaluate", "evaluate_map", "AnalyticMap", "parse_family"]
__version__ = "0.1.0"
