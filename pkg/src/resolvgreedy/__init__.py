"""Resolvent-based coefficient surrogates and source-independent greedy selection.

Modules
-------
coeff_space
    Piecewise-constant coefficients on uniform grids and parametric families.
resolvent1d
    Exact resolvents of the 1D mixed problem and the ``T_m`` norm identities.
minimax
    Discrete L-infinity best approximation by a dense simplex method.
greedy
    Weak greedy snapshot selection and the online approximation phase.
stability_lab
    Finite-element checks of the two-sided Lipschitz stability bound.
cli
    Batch experiment runner.
"""

from .coeff_space import (
    DENSITY,
    DIFFUSIVITY,
    Grid1D,
    Grid2D,
    ParametricFamily,
    PiecewiseFn,
    affine_density_family,
    affine_diffusivity_family,
    affine_reciprocal_family,
    family_sample,
    parameter_grid,
    random_parameters,
    tabulated_family,
)
from .errors import *  # noqa: F401,F403
from .greedy import GreedyConfig, GreedyResult, greedy_run, online_approximate, select_first
from .minimax import MinimaxProblem, MinimaxSolution, brute_force, solve
from .resolvent1d import (
    Solution1D,
    apply_resolvent,
    apply_Tm,
    concentration_probe,
    empirical_star_norm,
    primitive,
    probe_suite,
    resolvent_distance_star,
    span_distance_star,
    star_norm,
    tm_operator_norm,
    wm11_norm,
)
from .rng import SplitMix64

__version__ = "0.1.0"
