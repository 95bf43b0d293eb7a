"""Spectral SPDE simulation with multi-index and multilevel Monte Carlo.

The package solves semilinear parabolic stochastic PDEs in the eigenbasis of
their linear operator using an exponential integrator whose stochastic term is
sampled exactly, and estimates statistics of solution functionals with
hierarchical variance-reduction estimators (multi-index and multilevel Monte
Carlo) built on coupled solves that share one noise realization.
"""

from .model import (
    DriftKind,
    DriftSpec,
    InitKind,
    InitSpec,
    NoiseSpec,
    ProblemSpec,
    QoIForm,
    QoIFunctional,
    QoISpec,
    SpectrumSpec,
    eigenvalue,
    noise_coefficients,
    phi1_factor,
    semigroup_factor,
)
from .noise import (
    NoiseLattice,
    aggregate_pair,
    coarsen,
    lattice_from_lambdas,
    ou_variance,
    sample_lattice,
)
from .solver import (
    DyadicGrids,
    Grids,
    SolveResult,
    State,
    coeffs_to_grid,
    double_difference,
    drift_coefficients,
    grid_to_coeffs,
    h_norm,
    pair_difference,
    solve,
    step,
)
from .estimator import (
    Allocation,
    BudgetExceededError,
    EstimatorOutput,
    IndexSet,
    RateParams,
    allocate_samples,
    build_index_set,
    cost_model,
    mlmc_params,
    run_mimc,
    run_mlmc,
    variance_model,
)
from .harness import (
    DegenerateSurfaceError,
    Preset,
    RateSurface,
    SurfaceFit,
    SweepRecord,
    compute_reference,
    cost_error_sweep,
    estimate_rate_surface,
    fit_dominating_surface,
    get_preset,
    list_presets,
)

__version__ = "0.1.0"
