"""Random pure quantum states generated by unitary Brownian motion.

A structure-preserving integrator for the matrix SDE on the unitary group,
closed-form statistics of the induced coordinate law (moments, covariances,
Laplace transform, observable averages, entropy bounds) and a Monte Carlo
validation suite cross-checking the two against each other.
"""

__version__ = "0.1.0"

from . import analytics, cli, hermitian_bm, integrator, linalg, montecarlo  # noqa: F401
from .analytics import (  # noqa: F401
    covariance_curve,
    entropy_bound,
    haar_entropy_bound,
    haar_moment,
    kummer_1f1,
    laplace_marginal,
    moment_curve,
    moment_e1_curves,
    observable_average,
    pochhammer,
    rate,
    solve_coefficients,
)
from .hermitian_bm import RngStream, sample_increment  # noqa: F401
from .integrator import (  # noqa: F401
    EnsembleSample,
    IntegratorConfig,
    Trajectory,
    evolve,
    evolve_path,
    sample_ensemble,
    sample_ensemble_path,
    sample_haar_state,
    sample_unitaries,
    step,
)
from .linalg import (  # noqa: F401
    expi,
    hermitian_from_parts,
    polar_reunitarize,
    state_to_prob,
    unitarity_defect,
)
from .montecarlo import (  # noqa: F401
    Estimate,
    SuiteConfig,
    ValidationReport,
    estimate_covariance,
    estimate_moment,
    estimate_observable,
    estimate_renyi,
    invariance_test,
    run_validation_suite,
)
