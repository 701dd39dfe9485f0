"""dnflow: doubly nonlinear diffusion in self-similar variables, at desk scale.

Library layout:

  exponents    derived constants and range classification for (m, p, n)
  barenblatt   equilibrium profiles, internal energy, costs, masses, weights
  fields       radial grids and cell-averaged densities
  solver       conservative explicit finite-volume time stepping
  functionals  entropy / Fisher battery and comparison constants
  spectral     weighted Poincare constant via sector eigenproblems
  analysis     rate fits and theorem-level verification reports
  cli          profile / simulate / spectrum / rates / verify / check
"""

from .exponents import (Exponents, LogarithmicCaseError, ParameterError,
                        RangeClass, derive, require_in_range, unit_sphere_area,
                        validate_range)
from .barenblatt import (BarenblattProfile, MassDivergenceError,
                         SandwichBounds, SingularWeightError, cost,
                         cost_conjugate, grad_cost, grad_cost_conjugate,
                         internal_energy, match_grid_mass, measured_bounds,
                         profile_mass, sandwich_bounds, solve_Dstar)
from .fields import DensityField, RadialGrid, build_grid
from .functionals import (ComparisonConstants, FunctionalSample,
                          ReferenceProfile, ck_ratio, claim1_constants,
                          claim1_pointwise_bounds, claim2_delta, div_weight,
                          eps_linear_fisher, fisher_information, fp_ratio,
                          gamma_eps_fisher, h_k, H_ratio_edges, H_ratio_pair,
                          l1_distance, linear_entropy, linear_fisher,
                          mobility, phi_eps_max, relative_entropy,
                          sample_functionals, with_eta)
from .solver import (InitialData, NumericalError, OriginalFrame, ShapeError,
                     TimeState, build_initial_data, edge_drift, edge_fluxes,
                     flux, simulate, step, to_original_variables,
                     to_rescaled_variables)
from .spectral import (GapResult, SpectralProblem, assemble,
                       evolve_linearized, hardy_poincare_constant,
                       smallest_eigenvalue, variational_audit)
from .analysis import (DiagnosticsSeries, RateFit, SeriesRow, chain_onset,
                       dissipation_identity_error, fit_exponential,
                       fit_powerlaw, measured_constants, parse_series_csv,
                       parse_snapshot_csv, rate_bound_from_constants,
                       snapshot_inequalities, verify_logsob_chain,
                       verify_theorem1)
from .config import ConfigError, RunConfig, load_config, parse_config

__version__ = "0.1.0"
