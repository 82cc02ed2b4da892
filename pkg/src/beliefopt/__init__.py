"""Bethe free energy minimization for binary and Gaussian pairwise models."""
from .baselines import bp_solve, mf_solve, tap_free_energy, tap_solve, xi_tap
from .bethe import (Beliefs, BoundsError, bethe_free_energy, dF_dxi, grad_q, positive_root_zeta,
                    reduced_free_energy, xi_bounds, xi_solve)
from .exact import (ExactResult, GibbsConfig, brute_force, eliminate,
                    exact_marginals_via_elimination, gibbs)
from .gaussian import (GaussianBeliefs, GaussianModel, ga_boundedness_probe, ga_free_energy,
                       ga_mean_solve, ga_solve, ga_vij_solve, gabp_solve)
from .harness import CellResult, SweepSpec, error_metrics, run_methods, scatter_dump, sweep
from .model import (Model, ModelError, Topology, condition, lattice_cubic_periodic, lattice_square,
                    load_model, random_tree, sample_instance, save_model)
from .solver import (SolveConfig, SolveReport, coordinate_descent, coordinate_update_q,
                     solve_fixed_point, solve_gradient)

__version__ = "0.1.0"
