"""Homoclinic and multibump solutions of periodic discrete Hamiltonian systems.

The lattice equation ``D^2 x(t-1) - L(t) x(t) + V_x(t, x(t)) = 0`` is solved
variationally: a mountain-pass search on the action
``f(u) = 1/2 ||u||_*^2 - sum_t V(t, u(t))`` produces a one-bump solution,
translates of which are glued and refined into multibump solutions.
"""

from .diagnostics import (BumpDecomposition, CCVerdict, DecayError, bump_decompose, cc_classify,
                          decay_rate, mass_profile, windowed_mass)
from .errors import HamlockError, ModelError, SeparationError, SolverError
from .functional import (OperatorA, action, apply_operator_A, grad_l2, grad_star, operator_for,
                         residual, star_norm_of_gradient, window_action)
from .model import (AssumptionGrid, AssumptionReport, SystemModel, builtin, check_assumptions,
                    from_config, hessian, power_potential)
from .mountainpass import (MinimaxEstimate, Path, PathConfig, SolverConfig, deform_path,
                           find_one_bump, initial_path, negative_endpoint, path_level, recenter)
from .multibump import (MultibumpConfig, MultibumpReport, SeparationVector, WindowSystem,
                        find_multibump, glue, glue_path, make_separation, min_spacing, windows)
from .seq import (Cutoff, IndexSet, Sequence, apply_cutoff, from_csv, inner_l2, inner_star,
                  norm_l2, norm_star, ramp_cutoff, read_csv, shift, to_csv, window_energy,
                  write_csv)
from .solvers import FlowTrajectory, SolveReport, StepControl, descend, newton_refine

__version__ = "0.1.0"
