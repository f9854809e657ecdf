"""Chain drivers: run either sampler for a fixed budget and record traces.

These loops own the tuning that the individual step operations deliberately
do not: step-size adaptation during burn-in, thinned recording, predictive
sampling at retained steps, and the per-step bookkeeping needed by the
normalised-density estimator.
"""
from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .gp import ConditionalSampler, GpHyper
from .generate import DEFAULT_MAX_PROPOSALS, ProposalBudgetError, continue_sampler
from .exchange import (
    ExchangeState,
    exchange_step_control,
    exchange_step_hyper,
    exchange_step_prior,
    init_exchange_state,
)
from .history import HistoryChain, SweepConfig, ZetaSchedule, _sweep_chain, init_history
from .model import (
    BaseHyper,
    GaussianBase,
    HyperPrior,
    HyperWalkScales,
    base_logpdf,
    base_sample,
    log_one_minus_phi,
    log_phi,
    phi,
)


@dataclass
class ChainOptions:
    """Iteration budget and move tuning for one chain."""

    total: int
    burn_in: int
    thinning: int = 1
    max_proposals: int = DEFAULT_MAX_PROPOSALS
    # latent-history moves
    zeta_insert: float = 0.5
    walk_scales: np.ndarray | float | None = None  # None: 0.1 x data std
    number_moves: int = 1
    hmc_step_size: float = 0.2
    hmc_leapfrog: int = 10
    hmc_target: float = 0.8
    # exchange moves
    crankshaft_eps: float = 0.5
    n_extra_controls: int = 0
    # hyperparameters
    infer_hypers: bool = True
    hyper_scales: HyperWalkScales = field(default_factory=HyperWalkScales)
    # recording
    record_predictive: bool = False
    record_rejections: bool = False
    numerator_query: np.ndarray | None = None
    denominator_point: int | None = None  # row of the augmented datum

    def __post_init__(self):
        if self.total < 0 or self.burn_in < 0 or self.thinning < 1:
            raise ValueError("invalid iteration counts")
        if self.total and self.burn_in >= self.total:
            raise ValueError("burn_in must be smaller than total")


@dataclass
class PosteriorDraw:
    """One retained posterior draw with everything the numerator estimator
    needs: hyperparameters, a predictive sample x' with its function value,
    and jointly drawn function values at the pre-registered query points."""

    theta: GpHyper
    psi: BaseHyper
    x_pred: np.ndarray
    g_pred: float
    query: np.ndarray
    g_query: np.ndarray


@dataclass
class ChainResult:
    """Thinned records of one chain run."""

    iterations: np.ndarray
    m_counts: np.ndarray                    # latent rejections (history) or cond size (exchange)
    accept: dict[str, np.ndarray]
    amplitude: np.ndarray
    lengthscales: np.ndarray
    psi_mean: np.ndarray | None
    psi_sigma: np.ndarray | None
    log_density: np.ndarray
    predictive: np.ndarray | None
    rejection_snapshots: list[np.ndarray]
    numerator_draws: list[PosteriorDraw]
    denominator_terms: np.ndarray | None
    counters: Counter
    final_theta: GpHyper
    final_psi: BaseHyper
    hmc_step_size: float
    wall_time: float


def default_walk_scales(data: np.ndarray, frac: float = 0.1) -> np.ndarray:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    sd = data.std(axis=0)
    return frac * np.where(sd > 0, sd, 1.0)


def _history_log_density(chain: HistoryChain) -> float:
    """History log joint from the maintained factor; O(R)."""
    s = chain.sampler
    n = len(s)
    vals = s.values
    out = float(np.sum(log_phi(vals[: chain.n_data])))
    out += float(np.sum(log_one_minus_phi(vals[chain.n_data :])))
    out += float(np.sum(base_logpdf(s.points, chain.psi)))
    if not s.degenerate:
        out += -0.5 * (n * math.log(2 * math.pi)
                       + 2.0 * float(np.sum(np.log(np.diag(s.lower))))
                       + float(s.whitened @ s.whitened))
    return out


def _predictive_probe(sampler, theta, psi, opts, rng, counters):
    """Draw one predictive sample from a copy of the state and, when a query
    grid is registered, jointly evaluate the function there."""
    probe = sampler.copy()
    try:
        trace = continue_sampler(probe.conditioning_set(), 1, theta, psi, rng,
                                 max_proposals=opts.max_proposals)
    except ProposalBudgetError:
        counters["budget_failures"] += 1
        return None, None
    x_pred = trace.accepted[0]
    g_pred = float(trace.accepted_values[0])
    draw = None
    if opts.numerator_query is not None:
        probe2 = ConditionalSampler(theta, trace.cond.points, trace.cond.values,
                                    mean_fn=probe.mean_fn)
        g_query = probe2.draw_batch(opts.numerator_query, rng)
        draw = PosteriorDraw(theta=theta, psi=psi, x_pred=x_pred, g_pred=g_pred,
                             query=opts.numerator_query, g_query=g_query)
    return x_pred, draw


def run_history_chain(data: np.ndarray, theta0: GpHyper, psi0: BaseHyper,
                      opts: ChainOptions, priors: HyperPrior | None,
                      rng: np.random.Generator) -> ChainResult:
    """Latent-history MCMC with burn-in HMC step-size adaptation."""
    t_start = time.perf_counter()
    data = np.atleast_2d(np.asarray(data, dtype=float))
    dim = data.shape[1]
    h = init_history(data, theta0, psi0, rng)
    chain = HistoryChain(h)
    walk = (default_walk_scales(data) if opts.walk_scales is None
            else np.broadcast_to(np.asarray(opts.walk_scales, dtype=float), (dim,)).copy())
    cfg = SweepConfig(
        zeta=ZetaSchedule(opts.zeta_insert),
        walk_scales=walk,
        hmc_step_size=opts.hmc_step_size,
        hmc_leapfrog=opts.hmc_leapfrog,
        hyper_scales=opts.hyper_scales,
        priors=priors,
        number_moves=opts.number_moves,
        enable_hyper=opts.infer_hypers and priors is not None,
        enable_hmc=theta0.amplitude > 0,
    )
    records: list[dict] = []
    rej_snapshots: list[np.ndarray] = []
    numerator_draws: list[PosteriorDraw] = []
    denom_terms: list[float] = []
    counters = cfg.counters
    gaussian_base = isinstance(psi0, GaussianBase)

    for it in range(opts.total):
        before = Counter(counters)
        _sweep_chain(chain, cfg, rng)
        if it < opts.burn_in and cfg.enable_hmc and counters["hmc_att"] > before["hmc_att"]:
            acc = counters["hmc_acc"] - before["hmc_acc"]
            cfg.hmc_step_size *= math.exp(0.05 * (acc - opts.hmc_target))
        if it < opts.burn_in or (it - opts.burn_in) % opts.thinning:
            continue
        delta = {k: counters[k] - before[k] for k in
                 ("number_acc", "number_att", "loc_acc", "loc_att",
                  "hmc_acc", "hmc_att", "hyper_acc", "hyper_att")}
        rec = {
            "iteration": it,
            "m": chain.n_rejections,
            "log_density": _history_log_density(chain),
            "amplitude": chain.theta.amplitude,
            "lengthscales": chain.theta.lengthscales.copy(),
            "accept": delta,
        }
        if gaussian_base:
            rec["psi_mean"] = chain.psi.mean.copy()
            rec["psi_sigma"] = chain.psi.sigma.copy()
        if opts.record_rejections:
            rows = np.asarray(chain.rej_rows, dtype=int)
            rej_snapshots.append(chain.sampler.points[rows].copy()
                                 if rows.size else np.empty((0, dim)))
        if opts.record_predictive or opts.numerator_query is not None:
            x_pred, draw = _predictive_probe(chain.sampler, chain.theta,
                                             chain.psi, opts, rng, counters)
            rec["predictive"] = x_pred
            if draw is not None:
                numerator_draws.append(draw)
        if opts.denominator_point is not None:
            g_aug = float(chain.sampler.values[opts.denominator_point])
            x_prime = base_sample(chain.psi, rng)
            g_prime = chain.sampler.draw(x_prime, rng)
            denom_terms.append(min(1.0, phi(g_prime) / phi(g_aug)))
        records.append(rec)

    return _collect(records, rej_snapshots, numerator_draws, denom_terms,
                    counters, chain.theta, chain.psi, cfg.hmc_step_size,
                    gaussian_base, dim, t_start, opts)


def run_exchange_chain(data: np.ndarray, theta0: GpHyper, psi0: BaseHyper,
                       opts: ChainOptions, priors: HyperPrior | None,
                       rng: np.random.Generator) -> ChainResult:
    """Exchange-sampling MCMC: one function move (crankshaft through the
    control points, or a prior draw when crankshaft_eps >= 1) per iteration,
    interleaved 1:1 with a hyperparameter move when enabled."""
    t_start = time.perf_counter()
    data = np.atleast_2d(np.asarray(data, dtype=float))
    dim = data.shape[1]
    state = init_exchange_state(data, theta0, psi0, rng,
                                n_extra_controls=opts.n_extra_controls)
    records: list[dict] = []
    numerator_draws: list[PosteriorDraw] = []
    denom_terms: list[float] = []
    gaussian_base = isinstance(psi0, GaussianBase)

    for it in range(opts.total):
        before = Counter(state.diagnostics)
        if opts.crankshaft_eps >= 1.0:
            state, _ = exchange_step_prior(state, opts.max_proposals, rng)
        else:
            state, _ = exchange_step_control(state, opts.crankshaft_eps,
                                             opts.max_proposals, rng)
        if opts.infer_hypers and priors is not None:
            state, _ = exchange_step_hyper(state, opts.hyper_scales, priors,
                                           opts.max_proposals, rng)
        if it < opts.burn_in or (it - opts.burn_in) % opts.thinning:
            continue
        counters = state.diagnostics
        delta = {k: counters[k] - before[k] for k in
                 ("func_acc", "func_att", "hyper_acc", "hyper_att")}
        rec = {
            "iteration": it,
            "m": len(state.cond),
            "log_density": float(np.sum(log_phi(state.g_data))),
            "amplitude": state.theta.amplitude,
            "lengthscales": state.theta.lengthscales.copy(),
            "accept": delta,
        }
        if gaussian_base:
            rec["psi_mean"] = state.psi.mean.copy()
            rec["psi_sigma"] = state.psi.sigma.copy()
        if opts.record_predictive or opts.numerator_query is not None:
            sampler = ConditionalSampler(state.theta, state.cond.points,
                                         state.cond.values)
            x_pred, draw = _predictive_probe(sampler, state.theta, state.psi,
                                             opts, rng, state.diagnostics)
            rec["predictive"] = x_pred
            if draw is not None:
                numerator_draws.append(draw)
        if opts.denominator_point is not None:
            sampler = ConditionalSampler(state.theta, state.cond.points,
                                         state.cond.values)
            g_aug = float(state.g_data[opts.denominator_point])
            x_prime = base_sample(state.psi, rng)
            g_prime = sampler.draw(x_prime, rng)
            denom_terms.append(min(1.0, phi(g_prime) / phi(g_aug)))
        records.append(rec)

    return _collect(records, [], numerator_draws, denom_terms,
                    state.diagnostics, state.theta, state.psi,
                    opts.hmc_step_size, gaussian_base, dim, t_start, opts)


def _collect(records, rej_snapshots, numerator_draws, denom_terms, counters,
             theta, psi, hmc_step, gaussian_base, dim, t_start, opts) -> ChainResult:
    n = len(records)
    accept_keys = sorted({k for r in records for k in r["accept"]})
    predictive = None
    if any("predictive" in r for r in records):
        predictive = np.full((n, dim), np.nan)
        for i, r in enumerate(records):
            if r.get("predictive") is not None:
                predictive[i] = r["predictive"]
    return ChainResult(
        iterations=np.array([r["iteration"] for r in records], dtype=int),
        m_counts=np.array([r["m"] for r in records], dtype=int),
        accept={k: np.array([r["accept"].get(k, 0) for r in records], dtype=int)
                for k in accept_keys},
        amplitude=np.array([r["amplitude"] for r in records]),
        lengthscales=(np.vstack([r["lengthscales"] for r in records])
                      if n else np.empty((0, dim))),
        psi_mean=(np.vstack([r["psi_mean"] for r in records])
                  if n and gaussian_base else None),
        psi_sigma=(np.vstack([r["psi_sigma"] for r in records])
                   if n and gaussian_base else None),
        log_density=np.array([r["log_density"] for r in records]),
        predictive=predictive,
        rejection_snapshots=rej_snapshots,
        numerator_draws=numerator_draws,
        denominator_terms=np.asarray(denom_terms) if denom_terms else None,
        counters=counters,
        final_theta=theta,
        final_psi=psi,
        hmc_step_size=hmc_step,
        wall_time=time.perf_counter() - t_start,
    )
