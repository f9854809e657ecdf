"""Normalised predictive density estimation.

Writing the Metropolis--Hastings detailed-balance identity for moves
between a point x and a base-density proposal x' and integrating both
sides gives the predictive density as a ratio of two expectations: the
numerator is estimated along the main chain (which already produces a
predictive sample x' per retained step), the denominator along a fresh
chain whose data set is augmented with x.  Neither expectation involves
the intractable normaliser.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainOptions, ChainResult, PosteriorDraw, run_exchange_chain, run_history_chain
from .gp import GpHyper
from .model import BaseHyper, HyperPrior, base_logpdf, phi


@dataclass
class DensityEstimate:
    """Predictive density estimate at one location."""

    x: np.ndarray
    numerator: float
    numerator_se: float
    denominator: float
    denominator_se: float
    n_numerator: int
    n_denominator: int

    @property
    def ratio(self) -> float:
        return self.numerator / self.denominator


@dataclass
class DensityGrid:
    """Predictive density estimates on a lattice; 1-D grids also carry the
    trapezoid integral of the ratio estimates."""

    points: np.ndarray
    estimates: list[DensityEstimate]
    integral: float | None = None

    def ratios(self) -> np.ndarray:
        return np.array([e.ratio for e in self.estimates])


@dataclass
class DensityConfig:
    """Model specification and budgets for the density chains."""

    theta0: GpHyper
    psi0: BaseHyper
    priors: HyperPrior | None = None
    sampler: str = "latent-history"  # or "exchange"
    retained: int = 2000
    burn_in: int = 500
    thinning: int = 1
    chain_options: ChainOptions | None = None

    def options(self, **overrides) -> ChainOptions:
        base = self.chain_options
        total = self.burn_in + self.retained * self.thinning
        kw = dict(total=total, burn_in=self.burn_in, thinning=self.thinning)
        if base is not None:
            for name in ("max_proposals", "zeta_insert", "walk_scales",
                         "number_moves", "hmc_step_size", "hmc_leapfrog",
                         "hmc_target", "crankshaft_eps", "n_extra_controls",
                         "infer_hypers", "hyper_scales"):
                kw[name] = getattr(base, name)
        kw.update(overrides)
        return ChainOptions(**kw)

    def run(self, data, opts: ChainOptions, rng) -> ChainResult:
        if self.sampler == "exchange":
            return run_exchange_chain(data, self.theta0, self.psi0, opts,
                                      self.priors, rng)
        return run_history_chain(data, self.theta0, self.psi0, opts,
                                 self.priors, rng)


def _mean_se(terms: np.ndarray) -> tuple[float, float]:
    n = terms.shape[0]
    mean = float(np.mean(terms))
    se = float(np.std(terms, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return mean, se


def estimate_numerator(chain_samples: list[PosteriorDraw], x) -> tuple[float, float]:
    """Posterior-mean of pi(x | psi) * min(1, phi(g(x)) / phi(g(x'))).

    ``x`` must be one of the query points registered when the chain ran
    (the draws carry the jointly evaluated function values there).  With a
    single draw the standard error is reported as NaN.
    """
    if not chain_samples:
        raise ValueError("empty sample set")
    x = np.asarray(x, dtype=float).reshape(-1)
    query = chain_samples[0].query
    idx = np.where(np.all(np.isclose(query, x), axis=1))[0]
    if idx.size == 0:
        raise ValueError("x is not among the registered query points")
    k = int(idx[0])
    terms = np.array([_numerator_term(d, k) for d in chain_samples])
    return _mean_se(terms)


def _numerator_term(d: PosteriorDraw, k: int) -> float:
    pi_x = math.exp(base_logpdf(d.query[k], d.psi))
    return pi_x * min(1.0, phi(d.g_query[k]) / phi(d.g_pred))


def estimate_denominator(x, data: np.ndarray, config: DensityConfig,
                         rng: np.random.Generator) -> tuple[float, float]:
    """Run a chain on the data augmented with x; average the reverse
    transition probability min(1, phi(g(x')) / phi(g(x))) with x' ~ base."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    data = np.atleast_2d(np.asarray(data, dtype=float))
    augmented = np.vstack([data, x])
    opts = config.options(denominator_point=augmented.shape[0] - 1)
    result = config.run(augmented, opts, rng)
    if result.denominator_terms is None or result.denominator_terms.size == 0:
        raise ValueError("augmented chain produced no denominator terms")
    return _mean_se(result.denominator_terms)


def _denominator_task(args) -> tuple[int, float, float]:
    k, x, data, config, child_seq = args
    rng = np.random.default_rng(child_seq)
    den, den_se = estimate_denominator(x, data, config, rng)
    return k, den, den_se


def density_grid(grid, data: np.ndarray, config: DensityConfig,
                 rng: np.random.Generator,
                 numerator_result: ChainResult | None = None,
                 workers: int = 1,
                 seed_seq: np.random.SeedSequence | None = None) -> DensityGrid:
    """Predictive density estimates at each grid point.

    One chain on the plain data supplies every numerator; each grid point
    runs its own augmented chain for the denominator.  A pre-computed
    ``numerator_result`` (from a chain run with ``numerator_query=grid``)
    can be reused.  Supplying ``seed_seq`` makes the per-point denominator
    chains independently seeded, so results do not depend on ``workers``.
    Grids above two dimensions are refused.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("grid must be non-empty")
    if grid.shape[1] > 2:
        raise ValueError("density grids supported in 1-D and 2-D only")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if numerator_result is None:
        opts = config.options(numerator_query=grid)
        numerator_result = config.run(data, opts, rng)
    draws = numerator_result.numerator_draws
    if not draws:
        raise ValueError("numerator chain recorded no draws")
    n_grid = grid.shape[0]
    if seed_seq is not None:
        children = seed_seq.spawn(n_grid)
        tasks = [(k, grid[k], data, config, children[k]) for k in range(n_grid)]
        if workers > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=workers) as pool:
                denom = {k: (den, se) for k, den, se in pool.map(_denominator_task, tasks)}
        else:
            denom = {k: (den, se) for k, den, se in map(_denominator_task, tasks)}
    else:
        denom = {}
        for k in range(n_grid):
            denom[k] = estimate_denominator(grid[k], data, config, rng)
    estimates = []
    for k in range(n_grid):
        terms = np.array([_numerator_term(d, k) for d in draws])
        num, num_se = _mean_se(terms)
        den, den_se = denom[k]
        estimates.append(DensityEstimate(
            x=grid[k], numerator=num, numerator_se=num_se,
            denominator=den, denominator_se=den_se,
            n_numerator=terms.shape[0],
            n_denominator=config.retained,
        ))
    integral = None
    if grid.shape[1] == 1:
        order = np.argsort(grid[:, 0])
        xs = grid[order, 0]
        ys = np.array([estimates[i].ratio for i in order])
        integral = float(np.trapezoid(ys, xs))
    return DensityGrid(points=grid, estimates=estimates, integral=integral)
