"""Numerical laboratory for the Gaussian transport-entropy inequality.

Closed-form Gaussian quantities, Brownian path simulation, martingale
representations and their time reversals, couplings built from them,
reference optimal-transport solvers and a one-dimensional functional
Santalo check.
"""

from .errors import (
    AccuracyError,
    BasisDegeneracyError,
    DimensionMismatchError,
    HypothesisError,
    InequalityViolation,
    InvalidMeasureError,
    LabError,
    MarginalMismatchError,
    SizeCapError,
    UnsupportedKindError,
)
from .gaussian_analytics import (
    GaussianMeasure,
    GaussianMixture1D,
    TalagrandGapReport,
    bures_w2_squared,
    equality_pair,
    kl_mixture_to_gamma,
    kl_to_gamma,
    measure_from_dict,
    talagrand_gap,
)
from .integrands import (
    DeterministicIntegrand,
    ReversedRepresentation,
    StateFeedbackIntegrand,
    constant_integrand,
    identity_integrand,
    linear_state_integrand,
    polynomial_integrand,
    tabulated_integrand,
)
from .wiener_engine import (
    PathEnsemble,
    SampleVector,
    TimeGrid,
    ito_integral,
    martingale_snapshot,
    martingale_snapshots,
    reverse,
    sample_paths,
    second_moment,
)
from .representation_lab import (
    EntropyCertificate,
    PythagoreanGap,
    RegressionBasis,
    RegressionIntegrand,
    TailEnergyProfile,
    discrete_reversal,
    entropy_functional,
    estimate_reversed_integrand,
    follmer_integrand_1d,
    gaussian_integrand,
    mean_preservation,
    oracle_entropy,
    perturbed_gaussian_integrand,
    pythagorean_gap,
    reverse_deterministic,
    reversed_representation,
    tail_energy_profile,
)
from .ot_solver import (
    DiscreteMeasure,
    SinkhornResult,
    brute_force_w2_squared,
    cost_matrix,
    quantile_grid_w2_squared,
    sinkhorn_w2_squared,
    w2_squared_1d,
    w2_squared_exact,
)
from .coupling_lab import (
    ChainCertificate,
    CouplingReport,
    MinLinearCost,
    correlation_root,
    linear_coupling_cost,
    linear_coupling_simulate,
    linear_coupling_sweep,
    min_linear_cost,
    theorem_chain_certificate,
    time_reversal_coupling,
    w2_oracle,
)
from .santalo_check import (
    CATALOG,
    BridgeReport,
    GridFunction1D,
    SantaloReport,
    brute_force_dual,
    catalog_entry,
    duality_bridge,
    legendre_dual,
    santalo_product,
    separable_santalo_product,
)
from .config import ExperimentConfig

__version__ = "0.1.0"
