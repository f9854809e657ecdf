"""Gaussian process density sampler.

A prior over densities proportional to ``phi(g(x)) * pi(x | psi)`` with g
drawn from a Gaussian process, together with an exact generative sampler,
two MCMC inference schemes (exchange sampling and latent-history sampling)
and a normalised predictive density estimator.
"""
from .gp import (
    CholeskyFactor,
    ConditionalSampler,
    ConditioningSet,
    GpHyper,
    IllConditionedCovariance,
    chol,
    conditional,
    covariance,
    log_prior_density,
    sample_conditional,
    unwhiten,
    whiten,
)
from .model import (
    BaseHyper,
    GaussianBase,
    HyperPrior,
    HyperWalkScales,
    UniformBox,
    base_logpdf,
    base_sample,
    hyperprior_logpdf,
    log_one_minus_phi_grad,
    log_phi_grad,
    phi,
    unnormalized_density,
)
from .generate import (
    GenerativeTrace,
    ProposalBudgetError,
    continue_sampler,
    draw_prior_dataset,
)
from .exchange import (
    ExchangeState,
    FantasyBatch,
    exchange_step_control,
    exchange_step_hyper,
    exchange_step_prior,
    init_exchange_state,
    predictive_sample_exchange,
)
from .history import (
    LatentHistory,
    SweepConfig,
    ZetaSchedule,
    history_logdensity,
    init_history,
    predictive_sample_history,
    step_function_hmc,
    step_hyper_history,
    step_locations,
    step_number,
    sweep,
)
from .predictive import (
    DensityConfig,
    DensityEstimate,
    DensityGrid,
    density_grid,
    estimate_denominator,
    estimate_numerator,
)

__version__ = "0.1.0"
