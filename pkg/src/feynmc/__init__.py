"""feynmc: Monte Carlo Schrodinger propagators over sqrt(i)-scaled paths.

A batch engine that evaluates the evolution operator U(t, t0)f and the
associated transform functionals by averaging complex weights over
scaled Brownian paths, for confining polynomial and inverse-power
potential classes, together with the numerical checks (integrability
estimators, flow identity, PDE residuals, functional-axiom probes) that
certify a configuration.
"""

__version__ = "0.1.0"

from .numerics import MCEstimate, QuadratureRule, SQRT_I, WelfordAccumulator, integrate, mc_accumulate, sqrt_i
from .paths import BrownianPath, TimeGrid, sample_path, supnorm_bound_rhs
from .potentials import (
    DomainViolationError,
    InversePowerAbsTerm,
    InversePowerPlainTerm,
    PolynomialTerm,
    PotentialSpec,
    TimeDependentPotential,
    doss_bound,
    eval_potential,
    scaled_damping_check,
)
from .states import HermiteState, StateCombination, eval_state, hermite_growth_probe
from .testfunctions import TestFunction, complement_l2, eval_g, ray
from .propagator import (
    Diagnostics,
    DomainViolationBudgetError,
    PropagatorRequest,
    Wavefunction,
    propagate,
    propagate_grid,
    schrodinger_residual,
    semigroup_check,
)
from .oracles import GridSolverConfig, cn_evolve, free_evolve, linear_source_evolve

__all__ = [
    "__version__",
    "MCEstimate",
    "QuadratureRule",
    "SQRT_I",
    "WelfordAccumulator",
    "integrate",
    "mc_accumulate",
    "sqrt_i",
    "BrownianPath",
    "TimeGrid",
    "sample_path",
    "supnorm_bound_rhs",
    "DomainViolationError",
    "InversePowerAbsTerm",
    "InversePowerPlainTerm",
    "PolynomialTerm",
    "PotentialSpec",
    "TimeDependentPotential",
    "doss_bound",
    "eval_potential",
    "scaled_damping_check",
    "HermiteState",
    "StateCombination",
    "eval_state",
    "hermite_growth_probe",
    "TestFunction",
    "complement_l2",
    "eval_g",
    "ray",
    "Diagnostics",
    "DomainViolationBudgetError",
    "PropagatorRequest",
    "Wavefunction",
    "propagate",
    "propagate_grid",
    "schrodinger_residual",
    "semigroup_check",
    "GridSolverConfig",
    "cn_evolve",
    "free_evolve",
    "linear_source_evolve",
]
