"""Luenberger-type observers for semilinear parabolic equations with output injection.

The package discretizes the error dynamics with P1 finite elements on
rectangles, builds averaging sensors and an auxiliary family, assembles the
oblique-projection injection operator and integrates with Crank-Nicolson /
Adams-Bashforth.  ``scalar_ode`` holds the scalar stability bounds used in
the analysis.
"""
from .auxspaces import (AuxFamily, AuxKind, ObliqueProjector, build_aux_family, poincare_alpha,
                        poincare_beta)
from .config import ConfigError, ScenarioConfig, load_config, preset
from .dynamics import Coefficients, RunSummary, fit_decay, simulate_error, simulate_plant_observer
from .errors import AssumptionViolation
from .expressions import ExpressionError, parse_expression
from .fem import BC, FemSpace, RectDomain, assemble, build_grid
from .injection import InjectionOperator, build_injection, operator_norm_report
from .sensing import OutputOperator, assemble_output, ngrid_layout, sensor_layout

__version__ = "0.1.0"

__all__ = [
    "AuxFamily", "AuxKind", "ObliqueProjector", "build_aux_family", "poincare_alpha", "poincare_beta",
    "ConfigError", "ScenarioConfig", "load_config", "preset",
    "Coefficients", "RunSummary", "fit_decay", "simulate_error", "simulate_plant_observer",
    "AssumptionViolation", "ExpressionError", "parse_expression",
    "BC", "FemSpace", "RectDomain", "assemble", "build_grid",
    "InjectionOperator", "build_injection", "operator_norm_report",
    "OutputOperator", "assemble_output", "ngrid_layout", "sensor_layout",
]
