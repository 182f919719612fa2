"""Estimate the length or area of level sets from a singular integral."""

from .expr import Expression, ExpressionDomainError, ExpressionSyntaxError, parse
from .fields import AnalyticField, DistanceField, ShiftedField, regularity_check
from .geometry import SampledCurve, circle_curve, polygon_curve
from .estimator import QuadratureConfig, MeasureEstimate, estimate_measure, integrate_fixed_k

__version__ = "0.1.0"

__all__ = [
    "Expression",
    "ExpressionDomainError",
    "ExpressionSyntaxError",
    "parse",
    "AnalyticField",
    "DistanceField",
    "ShiftedField",
    "regularity_check",
    "SampledCurve",
    "circle_curve",
    "polygon_curve",
    "QuadratureConfig",
    "MeasureEstimate",
    "estimate_measure",
    "integrate_fixed_k",
    "__version__",
]
