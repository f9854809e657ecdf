"""Exact generation of data from a GP-transformed density.

Proposals are drawn one at a time from the base density, the latent
function is sampled retrospectively at each proposal (conditioned on every
value sampled so far), and the proposal is accepted when a uniform variate
falls below the squashed function value.  Every proposal enters the
conditioning set whether accepted or not; that bookkeeping is what makes
the accepted points exact draws from a single consistent function.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import ConditionalSampler, ConditioningSet, GpHyper, MeanLike
from .model import BaseHyper, base_sample, phi

DEFAULT_MAX_PROPOSALS = 1_000_000


@dataclass
class GenerativeTrace:
    """Full record of one run of the rejection sampler.

    ``cond`` holds every proposal with its sampled function value;
    ``accept_flags`` aligns with the proposals made during this run (the
    tail of ``cond`` when the run started from prior knowledge).  When
    ``uniforms`` is retained (debug mode), ``accept_flags[i]`` is
    reconstructible as ``uniforms[i] < phi(g_i)``.
    """

    accepted: np.ndarray          # (n, D)
    accepted_values: np.ndarray   # (n,), function values at accepted points
    cond: ConditioningSet
    accept_flags: np.ndarray      # (proposal_count,) bool
    proposal_count: int
    uniforms: np.ndarray | None = None


class ProposalBudgetError(RuntimeError):
    """Proposal budget exhausted before enough acceptances; carries the
    partial trace."""

    def __init__(self, message: str, trace: GenerativeTrace):
        super().__init__(message)
        self.trace = trace


def continue_sampler(state: ConditioningSet | GenerativeTrace, n_more: int,
                     theta: GpHyper, psi: BaseHyper,
                     rng: np.random.Generator,
                     max_proposals: int = DEFAULT_MAX_PROPOSALS,
                     mean_fn: MeanLike | None = None,
                     keep_uniforms: bool = False,
                     ledger: list | None = None, tag: str = "") -> GenerativeTrace:
    """Run the rejection sampler forward from existing function knowledge.

    Accepts either a :class:`ConditioningSet` or a previous
    :class:`GenerativeTrace` (its ``cond`` is used).  Returns once
    ``n_more`` proposals have been accepted; raises
    :class:`ProposalBudgetError` if ``max_proposals`` is hit first.
    """
    if isinstance(state, GenerativeTrace):
        state = state.cond
    if n_more < 0:
        raise ValueError("n_more must be >= 0")
    if max_proposals < n_more:
        raise ValueError("max_proposals must be at least the number of samples")
    sampler = ConditionalSampler(theta, state.points, state.values,
                                 mean_fn=mean_fn, ledger=ledger, tag=tag)
    dim = theta.dim
    accepted: list[np.ndarray] = []
    accepted_values: list[float] = []
    flags: list[bool] = []
    uniforms: list[float] = [] if keep_uniforms else None

    def _trace() -> GenerativeTrace:
        return GenerativeTrace(
            accepted=np.array(accepted).reshape(len(accepted), dim),
            accepted_values=np.asarray(accepted_values, dtype=float),
            cond=sampler.conditioning_set(),
            accept_flags=np.asarray(flags, dtype=bool),
            proposal_count=len(flags),
            uniforms=None if uniforms is None else np.asarray(uniforms),
        )

    while len(accepted) < n_more:
        if len(flags) >= max_proposals:
            raise ProposalBudgetError(
                f"{max_proposals} proposals produced only "
                f"{len(accepted)}/{n_more} acceptances", _trace()
            )
        x = base_sample(psi, rng)
        g = sampler.draw_append(x, rng)
        u = rng.uniform()
        if uniforms is not None:
            uniforms.append(u)
        ok = u < phi(g)
        flags.append(ok)
        if ok:
            accepted.append(x)
            accepted_values.append(g)
    return _trace()


def draw_prior_dataset(n: int, theta: GpHyper, psi: BaseHyper,
                       rng: np.random.Generator,
                       max_proposals: int = DEFAULT_MAX_PROPOSALS,
                       mean_fn: MeanLike | None = None,
                       keep_uniforms: bool = False) -> GenerativeTrace:
    """Generate ``n`` exact samples from a density drawn from the prior."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return continue_sampler(ConditioningSet.empty(theta.dim), n, theta, psi,
                            rng, max_proposals=max_proposals, mean_fn=mean_fn,
                            keep_uniforms=keep_uniforms)
