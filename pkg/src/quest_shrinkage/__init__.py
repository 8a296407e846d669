"""Population spectrum estimation, nonlinear covariance shrinkage and PCA retention."""

from __future__ import annotations

from .estimation import (
    ClusteredSpec,
    EstimationOptions,
    EstimationResult,
    estimate_clustered_spectrum,
    estimate_spectrum,
    isotonic_regression,
    lawley_corrected,
    objective,
)
from .mp import (
    SupportIntervals,
    compute_support,
    mass_at_zero,
    solve_mbar_at_zero,
    solve_mp_fixed_point,
    stieltjes_on_real_line,
)
from .pca import (
    ExplainedVariationCurve,
    components_to_retain,
    explained_fraction_curve,
    variation_attributable,
)
from .quest import (
    SampleSpectralModel,
    build_sample_spectral_model,
    inverse_cdf,
    quest_jacobian,
    quest_quantiles,
)
from .shrinkage import (
    Eigensystem,
    ShrinkageResult,
    finite_sample_optimal,
    finite_sample_optimal_d,
    frobenius_loss,
    linear_shrinkage,
    nonlinear_shrinkage,
    oracle_d,
    oracle_shrinkage,
    prial,
)
from .simulation import (
    SimulationDesign,
    SimulationReport,
    make_beta_spectrum,
    run_eigenvalue_experiment,
    run_pca_experiment,
    run_shrinkage_experiment,
    simulate_sample,
)
from .spectral import (
    ConcentrationContext,
    DiscreteSpectralDistribution,
    SolverError,
    SpectrumVector,
    ValidationError,
    edf_quantiles,
    spectral_distance_p,
)

__all__ = [name for name in dir() if not name.startswith("_") and name != "annotations"]
__version__ = "0.1.0"
