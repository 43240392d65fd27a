"""Principal spectrum points and principal eigenvalues of time-periodic
cooperative linear systems with nonlocal dispersal.

Three boundary types (dirichlet, neumann, periodic), two cross-validating
spectral routes (monodromy power iteration and Birman-Schwinger resolvent
root-finding), pointwise Floquet analysis, and mechanical evaluation of
the existence criteria.
"""

from .coupling import (CouplingField, HypothesisReport, sample_coupling,
                       validate_cooperative, validate_hypotheses,
                       validate_irreducible)
from .criteria import (CriteriaReport, SoundnessError, assemble_report,
                       check_existence, check_l1_divergence,
                       check_oscillation_bound, check_small_delta,
                       check_vanishing_condition)
from .config import RunConfig, build_problem, load_config, save_config
from .discretization import (DIRICHLET, NEUMANN, PERIODIC, DomainSpec, Grid,
                             Kernel, NonlocalOperatorMatrix,
                             assemble_nonlocal, build_grid, build_kernel)
from .floquet import (FloquetPointResult, MonodromyMatrix, PointwiseField,
                      compute_pointwise_field, integrate_monodromy,
                      periodic_eigenfunction, pointwise_eigenpair)
from .spectral_engine import (BirmanSchwingerOutcome, ComparisonReport,
                              HypothesisViolation, ResolventProbe,
                              SemiDiscreteSystem, SpectrumResult,
                              birman_schwinger_eigenvalue,
                              birman_schwinger_radius, build_system,
                              comparison_check, principal_spectrum_point,
                              resolvent_identity_check, step_evolution)

__version__ = "0.1.0"
