"""Joint-distribution correctness tests for the two samplers.

Forward simulation draws (function knowledge, data) directly from the
generative procedure.  The successive-conditional simulation alternates
MCMC transitions on the latent state with an exact redraw of the data
block: by exchangeability, continuing the rejection sampler for N more
acceptances produces a fresh (data, rejections) block with the correct
conditional distribution given everything known about the function, so the
old block can be dropped.  If every acceptance ratio and all retrospective
bookkeeping are right, the two simulations have identical marginals; any
error shows up as a distribution mismatch.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ks_2samp

from .exchange import (
    ExchangeState,
    exchange_step_control,
    exchange_step_prior,
)
from .generate import DEFAULT_MAX_PROPOSALS, continue_sampler, draw_prior_dataset
from .gp import ConditioningSet, GpHyper
from .history import LatentHistory, SweepConfig, sweep
from .model import BaseHyper, phi


@dataclass
class GewekeReport:
    """Per-statistic two-sample KS results for forward vs successive runs."""

    statistics: dict[str, dict]
    n_samples: int
    threshold: float
    passed: bool
    forward: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    successive: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    def summary_lines(self) -> list[str]:
        lines = []
        for name, res in self.statistics.items():
            verdict = "PASS" if res["pass"] else "FAIL"
            lines.append(f"{name}: ks={res['ks']:.4f} p={res['p']:.4g} {verdict}")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return lines


def _make_report(forward: dict, successive: dict, threshold: float) -> GewekeReport:
    stats = {}
    ok = True
    for name in forward:
        ks, p = ks_2samp(forward[name], successive[name])
        good = p > threshold
        ok = ok and good
        stats[name] = {"ks": float(ks), "p": float(p), "pass": bool(good)}
    return GewekeReport(statistics=stats, n_samples=len(next(iter(forward.values()))),
                        threshold=threshold, passed=ok,
                        forward=forward, successive=successive)


def _history_from_trace(trace, theta, psi) -> LatentHistory:
    rej = ~trace.accept_flags
    return LatentHistory(
        data=trace.accepted,
        g_data=trace.accepted_values,
        rejections=trace.cond.points[rej],
        g_rejections=trace.cond.values[rej],
        theta=theta,
        psi=psi,
    )


def history_data_refresh(h: LatentHistory, rng: np.random.Generator,
                         max_proposals: int = DEFAULT_MAX_PROPOSALS) -> LatentHistory:
    """Replace (data, rejections) with a freshly continued block."""
    cond = h.conditioning_set()
    trace = continue_sampler(cond, h.n_data, h.theta, h.psi, rng,
                             max_proposals=max_proposals)
    new_pts = trace.cond.points[len(cond):]
    new_vals = trace.cond.values[len(cond):]
    rej = ~trace.accept_flags
    return LatentHistory(
        data=trace.accepted, g_data=trace.accepted_values,
        rejections=new_pts[rej], g_rejections=new_vals[rej],
        theta=h.theta, psi=h.psi,
    )


def _history_stats(h: LatentHistory) -> dict[str, float]:
    return {
        "n_rejections": float(h.n_rejections),
        "mean_g_data": float(np.mean(h.g_data)),
        "data_mean": float(np.mean(h.data)),
    }


def run_geweke_history(theta: GpHyper, psi: BaseHyper, n_data: int = 3,
                       n_samples: int = 5000, thin: int = 5,
                       rng: np.random.Generator | None = None,
                       sweep_config: SweepConfig | None = None,
                       corrupt_insert: bool = False,
                       threshold: float = 0.01,
                       max_proposals: int = DEFAULT_MAX_PROPOSALS) -> GewekeReport:
    """Forward vs successive-conditional check of the latent-history moves."""
    if n_samples < 10:
        raise ValueError("insufficient samples for a distribution comparison")
    cfg = sweep_config if sweep_config is not None else SweepConfig()
    cfg.corrupt_insert = corrupt_insert
    names = ("n_rejections", "mean_g_data", "data_mean")
    forward = {k: np.empty(n_samples) for k in names}
    for i in range(n_samples):
        trace = draw_prior_dataset(n_data, theta, psi, rng,
                                   max_proposals=max_proposals)
        h = _history_from_trace(trace, theta, psi)
        for k, v in _history_stats(h).items():
            forward[k][i] = v
    successive = {k: np.empty(n_samples) for k in names}
    trace = draw_prior_dataset(n_data, theta, psi, rng, max_proposals=max_proposals)
    h = _history_from_trace(trace, theta, psi)
    for i in range(n_samples):
        for _ in range(thin):
            h = sweep(h, cfg, rng)
            h = history_data_refresh(h, rng, max_proposals)
        for k, v in _history_stats(h).items():
            successive[k][i] = v
    return _make_report(forward, successive, threshold)


def _exchange_from_trace(trace, theta, psi) -> ExchangeState:
    return ExchangeState(
        data=trace.accepted,
        cond=ConditioningSet(trace.cond.points.copy(), trace.cond.values.copy()),
        controls=trace.accepted.copy(),
        control_values=trace.accepted_values.copy(),
        theta=theta, psi=psi,
    )


def exchange_data_refresh(state: ExchangeState, rng: np.random.Generator,
                          max_proposals: int = DEFAULT_MAX_PROPOSALS) -> ExchangeState:
    """Continue the sampler for N more acceptances; the fresh block becomes
    the data (and the controls), all function knowledge is kept."""
    trace = continue_sampler(state.cond, state.n_data, state.theta, state.psi,
                             rng, max_proposals=max_proposals)
    return ExchangeState(
        data=trace.accepted, cond=trace.cond,
        controls=trace.accepted.copy(), control_values=trace.accepted_values.copy(),
        theta=state.theta, psi=state.psi, diagnostics=state.diagnostics,
    )


def _exchange_stats(state: ExchangeState) -> dict[str, float]:
    return {
        "mean_g_data": float(np.mean(state.g_data)),
        "mean_phi_data": float(np.mean(phi(state.g_data))),
        "data_mean": float(np.mean(state.data)),
    }


def run_geweke_exchange(theta: GpHyper, psi: BaseHyper, n_data: int = 3,
                        n_samples: int = 5000, thin: int = 5,
                        rng: np.random.Generator | None = None,
                        crankshaft_eps: float = 0.5,
                        threshold: float = 0.01,
                        max_proposals: int = DEFAULT_MAX_PROPOSALS) -> GewekeReport:
    """Forward vs successive-conditional check of the exchange moves.

    Alternates prior-proposal steps with crankshaft control-point steps so
    both acceptance ratios are exercised.
    """
    if n_samples < 10:
        raise ValueError("insufficient samples for a distribution comparison")
    names = ("mean_g_data", "mean_phi_data", "data_mean")
    forward = {k: np.empty(n_samples) for k in names}
    for i in range(n_samples):
        trace = draw_prior_dataset(n_data, theta, psi, rng,
                                   max_proposals=max_proposals)
        state = _exchange_from_trace(trace, theta, psi)
        for k, v in _exchange_stats(state).items():
            forward[k][i] = v
    successive = {k: np.empty(n_samples) for k in names}
    trace = draw_prior_dataset(n_data, theta, psi, rng, max_proposals=max_proposals)
    state = _exchange_from_trace(trace, theta, psi)
    flip = False
    for i in range(n_samples):
        for _ in range(thin):
            if flip:
                state, _ = exchange_step_prior(state, max_proposals, rng)
            else:
                state, _ = exchange_step_control(state, crankshaft_eps,
                                                 max_proposals, rng)
            flip = not flip
            state = exchange_data_refresh(state, rng, max_proposals)
        for k, v in _exchange_stats(state).items():
            successive[k][i] = v
    return _make_report(forward, successive, threshold)
