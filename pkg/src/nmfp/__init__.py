"""Analysis toolkit for nonsmooth multiobjective fractional programs.

Generalized directional derivatives (Clarke, Gâteaux, second-order and
Páles-Zeidan), cone and regularity probes, strong KKT multiplier search,
second-order sufficiency on samples and Mond-Weir second-order duality.
"""

from .deriv import (
    DerivativeEstimate,
    EstimatorConfig,
    InapplicableError,
    clarke_dd,
    gateaux_dd,
    pales_zeidan_dd2,
    second_dd,
)
from .expr import DomainError, Expression, ParseError, ScalarFunction, parse
from .kkt import MultiplierVector, solve_strong_kkt, strong_kkt_system
from .problem import FractionalProblem, feasible, pareto_oracle, ratio_objective

__version__ = "0.1.0"

__all__ = [
    "DerivativeEstimate",
    "DomainError",
    "EstimatorConfig",
    "Expression",
    "FractionalProblem",
    "InapplicableError",
    "MultiplierVector",
    "ParseError",
    "ScalarFunction",
    "clarke_dd",
    "feasible",
    "gateaux_dd",
    "pales_zeidan_dd2",
    "parse",
    "pareto_oracle",
    "ratio_objective",
    "second_dd",
    "solve_strong_kkt",
    "strong_kkt_system",
]
