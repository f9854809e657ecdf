"""Exchange-sampling MCMC on the function posterior.

Each step proposes a fresh function (from the GP prior, or perturbatively
through control-point values), generates a matching set of "fantasy" data
from it by exact rejection sampling, and proposes swapping the functions.
Because the fantasies are exact draws from the proposal's density, the two
intractable normalisers cancel from the acceptance ratio, which reduces to
a product of squashed function values at the data and the fantasies.

Bookkeeping rule: anything learned about a function must be kept while that
function is part of the Markov state.  A rejected swap therefore appends
the current function's fantasy evaluations to its conditioning set; an
accepted swap discards the old function entirely but keeps the proposal's
accumulated conditioning set.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .gp import ConditionalSampler, ConditioningSet, GpHyper, chol, kernel_matrix, prior_mean
from .generate import (
    DEFAULT_MAX_PROPOSALS,
    GenerativeTrace,
    ProposalBudgetError,
    continue_sampler,
)
from .model import (
    BaseHyper,
    HyperPrior,
    HyperWalkScales,
    base_logpdf,
    base_sample,
    hyperprior_logpdf,
    log_phi,
    propose_hypers,
)

__all__ = [
    "ExchangeState",
    "FantasyBatch",
    "init_exchange_state",
    "exchange_step_prior",
    "exchange_step_control",
    "exchange_step_hyper",
    "predictive_sample_exchange",
]


@dataclass
class ExchangeState:
    """Markov state: data, accumulated function knowledge and hyperparameters.

    ``controls`` are the anchor locations for perturbative proposals; the
    first N of them are always the data locations, and their current
    function values are ``control_values``.  ``cond`` is a superset of the
    controls: it additionally holds whatever has been learned about the
    current function at fantasy locations since the last accepted swap.
    """

    data: np.ndarray            # (N, D), fixed
    cond: ConditioningSet
    controls: np.ndarray        # (B, D), controls[:N] == data
    control_values: np.ndarray  # (B,)
    theta: GpHyper
    psi: BaseHyper
    diagnostics: Counter = field(default_factory=Counter)
    ledger: list | None = None

    @property
    def n_data(self) -> int:
        return self.data.shape[0]

    @property
    def g_data(self) -> np.ndarray:
        return self.control_values[: self.n_data]


@dataclass
class FantasyBatch:
    """Fantasies drawn under a proposed function, plus its bookkeeping."""

    fantasies: np.ndarray           # (N, D)
    proposal_cond: ConditioningSet  # everything learned about the proposal
    g_at_fantasies: np.ndarray      # current function's values at fantasies


def init_exchange_state(data: np.ndarray, theta: GpHyper, psi: BaseHyper,
                        rng: np.random.Generator,
                        n_extra_controls: int = 0) -> ExchangeState:
    """Draw the initial function at the data (and any extra controls)."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    controls = data
    if n_extra_controls > 0:
        extra = base_sample(psi, rng, size=n_extra_controls)
        controls = np.vstack([data, extra])
    sampler = ConditionalSampler(theta)
    values = np.array([sampler.draw_append(x, rng) for x in controls])
    return ExchangeState(
        data=data,
        cond=ConditioningSet(controls.copy(), values.copy()),
        controls=controls.copy(),
        control_values=values,
        theta=theta,
        psi=psi,
    )


def _crankshaft(values: np.ndarray, mean: np.ndarray, lower: np.ndarray,
                eps: float, rng: np.random.Generator) -> np.ndarray:
    """Prior-reversible update: mu + sqrt(1-eps^2)(G-mu) + eps*L*eta.

    Leaves N(mean, L L^T) invariant for any eps in (0, 1]; eps=1 is an
    independent prior draw, eps->0 freezes the values.
    """
    eta = rng.standard_normal(values.shape[0])
    return mean + math.sqrt(1.0 - eps * eps) * (values - mean) + eps * (lower @ eta)


def _swap_log_ratio(log_phi_hat_data, log_phi_cur_data,
                    log_phi_cur_fant, log_phi_hat_fant) -> float:
    """Log acceptance ratio of the function swap: the normalisers cancel,
    leaving the squashed-value products at data and fantasies."""
    return float(np.sum(log_phi_hat_data) - np.sum(log_phi_cur_data)
                 + np.sum(log_phi_cur_fant) - np.sum(log_phi_hat_fant))


def _draw_fantasies(state: ExchangeState, hat_controls: np.ndarray,
                    hat_values: np.ndarray, theta: GpHyper, psi: BaseHyper,
                    max_proposals: int, rng: np.random.Generator) -> tuple[FantasyBatch, GenerativeTrace]:
    """Generate N fantasies under the proposed function and evaluate the
    current function at them."""
    trace = continue_sampler(ConditioningSet(hat_controls, hat_values),
                             state.n_data, theta, psi, rng,
                             max_proposals=max_proposals,
                             ledger=state.ledger, tag="proposal")
    current = ConditionalSampler(state.theta, state.cond.points,
                                 state.cond.values, ledger=state.ledger,
                                 tag="current")
    g_fant = current.draw_batch(trace.accepted, rng)
    batch = FantasyBatch(fantasies=trace.accepted, proposal_cond=trace.cond,
                         g_at_fantasies=g_fant)
    return batch, trace


def _step_function(state: ExchangeState, eps: float, max_proposals: int,
                   rng: np.random.Generator, move: str) -> tuple[ExchangeState, bool]:
    n = state.n_data
    mean_c = prior_mean(state.controls, state.theta)
    if state.theta.amplitude == 0.0:
        hat_values = mean_c.copy()  # degenerate GP: the function is the mean
    elif eps >= 1.0:
        factor = chol(kernel_matrix(state.controls, state.controls, state.theta))
        hat_values = mean_c + factor.lower @ rng.standard_normal(len(mean_c))
    else:
        factor = chol(kernel_matrix(state.controls, state.controls, state.theta))
        hat_values = _crankshaft(state.control_values, mean_c, factor.lower, eps, rng)
    try:
        batch, trace = _draw_fantasies(state, state.controls, hat_values,
                                       state.theta, state.psi, max_proposals, rng)
    except ProposalBudgetError:
        state.diagnostics["budget_failures"] += 1
        state.diagnostics[f"{move}_att"] += 1
        return state, False
    log_a = _swap_log_ratio(log_phi(hat_values[:n]), log_phi(state.g_data),
                            log_phi(batch.g_at_fantasies),
                            log_phi(trace.accepted_values))
    state.diagnostics[f"{move}_att"] += 1
    if math.log(rng.uniform()) < log_a:
        state.diagnostics[f"{move}_acc"] += 1
        new_state = ExchangeState(
            data=state.data, cond=batch.proposal_cond,
            controls=state.controls, control_values=hat_values,
            theta=state.theta, psi=state.psi,
            diagnostics=state.diagnostics, ledger=state.ledger,
        )
        return new_state, True
    new_state = ExchangeState(
        data=state.data,
        cond=state.cond.extended(batch.fantasies, batch.g_at_fantasies),
        controls=state.controls, control_values=state.control_values,
        theta=state.theta, psi=state.psi,
        diagnostics=state.diagnostics, ledger=state.ledger,
    )
    return new_state, False


def exchange_step_prior(state: ExchangeState,
                        max_proposals: int = DEFAULT_MAX_PROPOSALS,
                        rng: np.random.Generator | None = None) -> tuple[ExchangeState, bool]:
    """Independence proposal: draw the new function from the GP prior."""
    return _step_function(state, 1.0, max_proposals, rng, "func")


def exchange_step_control(state: ExchangeState, step_scale: float,
                          max_proposals: int = DEFAULT_MAX_PROPOSALS,
                          rng: np.random.Generator | None = None) -> tuple[ExchangeState, bool]:
    """Perturbative proposal through the control-point values.

    The crankshaft update is reversible with respect to the GP prior at the
    controls, so the proposal and prior densities cancel exactly and the
    acceptance ratio is the same fantasy/data product as the prior step.
    """
    if not 0.0 < step_scale <= 1.0:
        raise ValueError("step_scale must be in (0, 1]")
    return _step_function(state, step_scale, max_proposals, rng, "func")


def exchange_step_hyper(state: ExchangeState, proposal_scales: HyperWalkScales,
                        priors: HyperPrior,
                        max_proposals: int = DEFAULT_MAX_PROPOSALS,
                        rng: np.random.Generator | None = None) -> tuple[ExchangeState, bool]:
    """Propose swapping (function, theta, psi) as a triplet.

    The new function is drawn from the GP prior under the proposed theta and
    fantasies are generated under the proposed psi, so the acceptance ratio
    keeps only the hyperprior ratio, the squashed-value products, and the
    base-density ratios at the data and the fantasies.
    """
    n = state.n_data
    state.diagnostics["hyper_att"] += 1
    theta_hat, psi_hat = propose_hypers(state.theta, state.psi,
                                        proposal_scales, priors, rng)
    lp_hat = hyperprior_logpdf(theta_hat, psi_hat, priors)
    if not np.isfinite(lp_hat):
        return state, False
    base_data_hat = base_logpdf(state.data, psi_hat)
    if not np.all(np.isfinite(base_data_hat)):
        return state, False
    lp_cur = hyperprior_logpdf(state.theta, state.psi, priors)
    mean_c = prior_mean(state.controls, theta_hat)
    if theta_hat.amplitude == 0.0:
        hat_values = mean_c.copy()
    else:
        factor = chol(kernel_matrix(state.controls, state.controls, theta_hat))
        hat_values = mean_c + factor.lower @ rng.standard_normal(len(mean_c))
    try:
        batch, trace = _draw_fantasies(state, state.controls, hat_values,
                                       theta_hat, psi_hat, max_proposals, rng)
    except ProposalBudgetError:
        state.diagnostics["budget_failures"] += 1
        return state, False
    log_a = (lp_hat - lp_cur
             + _swap_log_ratio(log_phi(hat_values[:n]), log_phi(state.g_data),
                               log_phi(batch.g_at_fantasies),
                               log_phi(trace.accepted_values))
             + float(np.sum(base_data_hat - base_logpdf(state.data, state.psi)))
             + float(np.sum(base_logpdf(batch.fantasies, state.psi)
                            - base_logpdf(batch.fantasies, psi_hat))))
    if math.log(rng.uniform()) < log_a:
        state.diagnostics["hyper_acc"] += 1
        new_state = ExchangeState(
            data=state.data, cond=batch.proposal_cond,
            controls=state.controls, control_values=hat_values,
            theta=theta_hat, psi=psi_hat,
            diagnostics=state.diagnostics, ledger=state.ledger,
        )
        return new_state, True
    new_state = ExchangeState(
        data=state.data,
        cond=state.cond.extended(batch.fantasies, batch.g_at_fantasies),
        controls=state.controls, control_values=state.control_values,
        theta=state.theta, psi=state.psi,
        diagnostics=state.diagnostics, ledger=state.ledger,
    )
    return new_state, False


def predictive_sample_exchange(state: ExchangeState, n_samples: int,
                               max_proposals: int = DEFAULT_MAX_PROPOSALS,
                               rng: np.random.Generator | None = None) -> np.ndarray:
    """Continue the rejection sampler from the current state's knowledge.

    Side-effect free with respect to the Markov chain: the knowledge gained
    while generating the samples is discarded.
    """
    if n_samples == 0:
        return np.empty((0, state.data.shape[1]))
    trace = continue_sampler(state.cond, n_samples, state.theta, state.psi,
                             rng, max_proposals=max_proposals)
    return trace.accepted
