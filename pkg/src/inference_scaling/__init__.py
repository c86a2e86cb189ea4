"""Coverage laws for repeated sampling: pass@k models, simulation, fitting and cost."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DomainError,
    EstimationError,
    InfeasibleError,
    ISLError,
    NonConvergenceError,
    ParseError,
    ResourceGuardError,
)
from .specfun import (  # noqa: E402
    LogDomainValue,
    generalized_harmonic,
    ln_beta,
    ln_gamma,
    ln_gamma_ratio,
    riemann_zeta,
)
from .curve import CoverageCurve, read_curve_csv, write_curve_csv  # noqa: E402
from .coverage import (  # noqa: E402
    BetaFailureModel,
    DifficultyDensity,
    SigmaGrid,
    asymptotic_validity_threshold,
    difficulty_density,
    inference_loss,
    invert_difficulty,
    pass_at_k_asymptotic,
    pass_at_k_exact,
)
from .correlated import (  # noqa: E402
    CorrelatedTrialModel,
    KappaEstimate,
    Spectrum,
    TrialMatrix,
    effective_k,
    eigen_spectrum,
    error_correlation_matrix,
    estimate_kappa,
    pass_at_k_correlated,
    plateau_coverage,
)
from .cost import (  # noqa: E402
    CostParams,
    cost_for_target_coverage,
    coverage_of_cost,
    k_for_target_coverage,
    loss_of_cost,
    total_cost,
)
from .fitting import FitResult, fit_beta_model, fit_correlated_model, goodness_of_fit  # noqa: E402
from .simulator import (  # noqa: E402
    SimConfig,
    SimResult,
    SuccessMatrix,
    empirical_pass_at_k,
    hutter_error,
    sample_failure_probs,
    simulate_correlated,
    simulate_independent,
)
