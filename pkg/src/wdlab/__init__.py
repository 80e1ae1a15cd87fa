"""wdlab: a desk-scale numerical laboratory for widely degenerate and
widely singular diffusion problems.

The package solves the uniformly elliptic regularizations of an operator
whose flux vanishes on a whole ball of gradient values, and measures the
quantities entering the uniform energy, comparison and Sobolev estimates
for a nonlinear function of the gradient.

Modules:
  kernel    -- pointwise scalar/vector functions and calibrated constants
  grid      -- Q1 fields and operators on the square, mollifier, cut-off
  solver    -- convex energy minimization with damped Newton
  seminorms -- difference quotients, Besov and Gagliardo seminorms
  harness   -- experiment runners, CSV/JSON reporting
  cli       -- command-line entry points for the runners
"""

from .kernel import Params
from .grid import GridSpec, ScalarField, VectorField, BoundaryMask
from .solver import SolveConfig, SolveReport, solve

__all__ = [
    "Params",
    "GridSpec",
    "ScalarField",
    "VectorField",
    "BoundaryMask",
    "SolveConfig",
    "SolveReport",
    "solve",
]

__version__ = "0.1.0"
