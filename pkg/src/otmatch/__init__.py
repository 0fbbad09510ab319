"""Entropic optimal transport solvers built on semi-dual marginal matching.

The package solves discrete entropic transport problems by ascending the
semi-dual objective with a family of marginal-matching updates (classical
Sinkhorn, plain and kernel-smoothed gradient ascent, chi-square rescaled
ascent), sign-based steepest ascent with anchoring, and projected ascent
with optional momentum acceleration.  Supporting modules expose the
coupling-space projection/mirror views of the same updates, per-theorem
bound checkers, an accelerated mirror-flow integrator, and a 1-D diffusion
bridge demonstration.
"""

from .measures import (
    DiscreteMeasure,
    Instance,
    InstanceError,
    cost_matrix,
    load_instance,
    make_grid_measure,
    save_instance,
)
from .semidual import (
    Coupling,
    coupling,
    first_variation,
    marginal_y,
    minus_transform,
    plus_transform,
    primal_value,
    semidual_value,
)
from .kernels import Gram, KernelSpec, gram, mean_embedding, mmd_sq
from .solvers import (
    Link,
    RunResult,
    SolverConfig,
    Trace,
    default_bound,
    lambda_bound,
    match_step,
    oracle_solve,
    proj_sga_step,
    run,
    sign_sga_step,
    t_next,
)

__version__ = "0.1.0"

__all__ = [
    "DiscreteMeasure",
    "Instance",
    "InstanceError",
    "cost_matrix",
    "load_instance",
    "make_grid_measure",
    "save_instance",
    "Coupling",
    "coupling",
    "first_variation",
    "marginal_y",
    "minus_transform",
    "plus_transform",
    "primal_value",
    "semidual_value",
    "Gram",
    "KernelSpec",
    "gram",
    "mean_embedding",
    "mmd_sq",
    "Link",
    "RunResult",
    "SolverConfig",
    "Trace",
    "default_bound",
    "lambda_bound",
    "match_step",
    "oracle_solve",
    "proj_sga_step",
    "run",
    "sign_sga_step",
    "t_next",
    "__version__",
]
