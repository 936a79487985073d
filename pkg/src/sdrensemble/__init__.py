"""Ensemble sufficient dimension reduction.

Estimates the central subspace of a regression by assembling gradient-based
fits (OPG, MAVE, refined MAVE) over a family of scalar transformations of
the response, with cross-validated selection of the structural dimension
and a reproducible Monte-Carlo benchmark harness.
"""

from .core import (
    Dataset,
    FitConfig,
    StandardizeRecord,
    child_seed,
    standardize_predictors,
    substream,
    unstandardize_directions,
    validate_config,
)
from .subspace import Basis, distance, orthonormalize, principal_angles, projection
from .families import (
    FunctionFamily,
    ResponsePanel,
    boxcox_family,
    evaluate,
    haar_family,
    identity_family,
    kde_family,
    poly_family,
    sample_cf_family,
    shift_nonneg,
    slice_family,
)
from .smoothing import (
    KernelSpec,
    WeightPlan,
    bandwidth_final,
    bandwidth_initial,
    bandwidth_schedule,
    full_weights,
    get_kernel,
    refined_weights,
    trimming,
)
from .estimators import (
    EnsembleFit,
    LocalFit,
    mave_ensemble,
    mave_step_global,
    mave_step_local,
    objective,
    opg_ensemble,
    opg_local_fits,
    rmave_ensemble,
)
from .order import CvCurve, cv_value, estimate_dimension
from .simgen import ModelSpec, generate, list_models
from .bench import (
    ExperimentSpec,
    ResultTable,
    build_family,
    fit_subspace,
    run_experiment,
    write_outputs,
)

__version__ = "0.1.0"
