"""Stability of porous medium and fast diffusion solutions under changes of the exponent."""

from .params import (DerivedConstants, Exponent, SubcriticalExponent, critical_exponent,
                     derive_constants, make_exponent)
from .grid import IntervalGrid, RadialGrid, integrate, make_interval, make_radial
from .barenblatt import BarenblattProfile, normalize
from .solver import (CauchyProblem, DirichletProblem, SolverConfig, Trajectory, barenblatt_cauchy,
                     indicator_cauchy, solve_cauchy, solve_dirichlet)

__all__ = [
    "BarenblattProfile", "CauchyProblem", "DerivedConstants", "DirichletProblem", "Exponent",
    "IntervalGrid", "RadialGrid", "SolverConfig", "SubcriticalExponent", "Trajectory",
    "barenblatt_cauchy", "critical_exponent", "derive_constants", "indicator_cauchy", "integrate", "make_exponent", "make_interval",
    "make_radial", "normalize", "solve_cauchy", "solve_dirichlet",
]
