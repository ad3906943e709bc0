"""Inner approximations of distributionally robust chance constraints.

Typical use::

    from drchance import load_spec, build, solve, extract_inner
    spec = load_spec("configs/ex1.json")
    res = solve(build(spec))
    inner = extract_inner(res, spec.epsilon)
"""

from .distfamily import (Binomial, DistributionFamily, Exponential, FiniteList,
                         GaussianMultivariate, GaussianUnivariate, MomentTable, Poisson)
from .oracle import (ComparisonReport, OracleEstimate, compare, feasible_set_oracle,
                     kappa_closed_form, kappa_grid_mc)
from .polycore import Polynomial, VariableSpace
from .problem import ConfigError, ProblemSpec, load_spec, spec_from_json
from .relaxation import (MomentRelaxation, RelaxationError, build, build_base, build_joint,
                         build_moment_box, build_stokes, slater_witness)
from .sdpiface import (InnerApproximation, SolveError, SolveResult, SolveSettings,
                       extract_inner, solve)
from .semialg import SemialgebraicSet, box_set

__version__ = "0.1.0"

__all__ = [
    "Binomial", "ComparisonReport", "ConfigError", "DistributionFamily", "Exponential",
    "FiniteList", "GaussianMultivariate", "GaussianUnivariate", "InnerApproximation",
    "MomentRelaxation", "MomentTable", "OracleEstimate", "Poisson", "Polynomial",
    "ProblemSpec", "RelaxationError", "SemialgebraicSet", "SolveError", "SolveResult",
    "SolveSettings", "VariableSpace", "box_set", "build", "build_base", "build_joint",
    "build_moment_box", "build_stokes", "compare", "extract_inner", "feasible_set_oracle",
    "kappa_closed_form", "kappa_grid_mc", "load_spec", "slater_witness", "solve",
    "spec_from_json",
]
