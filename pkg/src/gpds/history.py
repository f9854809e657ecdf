"""MCMC over the latent history of the generative rejection sampler.

The chain state is everything the sampler would have produced on its way
to the observed data: the function values at the data, plus the number,
locations and function values of the rejected proposals.  Moves: insert or
delete a single latent rejection, perturb rejection locations, update all
function values jointly with Hamiltonian dynamics in the whitened space,
and random-walk the hyperparameters.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gp import (
    ConditionalSampler,
    ConditioningSet,
    GpHyper,
    chol,
    kernel_matrix,
    prior_mean,
)
from .generate import DEFAULT_MAX_PROPOSALS, continue_sampler
from .model import (
    BaseHyper,
    HyperPrior,
    HyperWalkScales,
    base_logpdf,
    base_sample,
    hyperprior_logpdf,
    log_one_minus_phi,
    log_one_minus_phi_grad,
    log_phi,
    log_phi_grad,
    phi,
    propose_hypers,
)

__all__ = [
    "LatentHistory",
    "ZetaSchedule",
    "SweepConfig",
    "history_logdensity",
    "insert_log_accept",
    "delete_log_accept",
    "location_log_accept",
    "number_move_log_ratio",
    "step_number",
    "step_locations",
    "step_function_hmc",
    "step_hyper_history",
    "sweep",
    "predictive_sample_history",
]


@dataclass
class LatentHistory:
    """Latent state of the generative procedure for a fixed data set."""

    data: np.ndarray          # (N, D), fixed
    g_data: np.ndarray        # (N,)
    rejections: np.ndarray    # (M, D)
    g_rejections: np.ndarray  # (M,)
    theta: GpHyper
    psi: BaseHyper

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        self.g_data = np.atleast_1d(np.asarray(self.g_data, dtype=float))
        rej = np.asarray(self.rejections, dtype=float)
        self.rejections = rej.reshape(-1, self.data.shape[1])
        self.g_rejections = np.asarray(self.g_rejections, dtype=float).reshape(-1)
        if self.g_data.shape[0] != self.data.shape[0]:
            raise ValueError("g_data length mismatch")
        if self.g_rejections.shape[0] != self.rejections.shape[0]:
            raise ValueError("g_rejections length mismatch")

    @property
    def n_data(self) -> int:
        return self.data.shape[0]

    @property
    def n_rejections(self) -> int:
        return self.rejections.shape[0]

    def conditioning_set(self) -> ConditioningSet:
        return ConditioningSet(
            np.vstack([self.data, self.rejections]),
            np.concatenate([self.g_data, self.g_rejections]),
        )


def init_history(data: np.ndarray, theta: GpHyper, psi: BaseHyper,
                 rng: np.random.Generator) -> LatentHistory:
    """Initial state: no latent rejections, function drawn from the prior."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    sampler = ConditionalSampler(theta)
    g = np.array([sampler.draw_append(x, rng) for x in data])
    return LatentHistory(data=data, g_data=g,
                         rejections=np.empty((0, data.shape[1])),
                         g_rejections=np.empty(0), theta=theta, psi=psi)


@dataclass(frozen=True)
class ZetaSchedule:
    """Insert-probability schedule for the number move.

    An empty history always proposes an insertion; otherwise insertion is
    chosen with the fixed probability ``insert_prob``.
    """

    insert_prob: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.insert_prob <= 1.0:
            raise ValueError("insert_prob must be in (0, 1]")

    def __call__(self, m: int, n: int) -> float:
        return 1.0 if m == 0 else self.insert_prob


def history_logdensity(h: LatentHistory) -> float:
    """Log joint density of the data and the latent history.

    GP prior over all function values at the data and rejection locations,
    plus per-point acceptance/rejection and base-density terms.  Returns
    -inf when a location falls outside the base support.
    """
    from .gp import log_prior_density

    pts = np.vstack([h.data, h.rejections])
    vals = np.concatenate([h.g_data, h.g_rejections])
    if not np.all(np.isfinite(vals)):
        return -np.inf
    base_terms = base_logpdf(pts, h.psi)
    if not np.all(np.isfinite(base_terms)):
        return -np.inf
    out = log_prior_density(vals, pts, h.theta)
    out += float(np.sum(log_phi(h.g_data)))
    out += float(np.sum(log_one_minus_phi(h.g_rejections)))
    out += float(np.sum(base_terms))
    return out


# ---------------------------------------------------------------------------
# Acceptance-ratio helpers (pure, log scale)
# ---------------------------------------------------------------------------

def insert_log_accept(m: int, n: int, zeta: Callable[[int, int], float],
                      g_plus: float) -> float:
    """Log acceptance ratio for inserting one latent rejection at value g_plus."""
    one_minus_zeta = 1.0 - zeta(m + 1, n)
    if one_minus_zeta <= 0.0:
        return -np.inf
    return (math.log(one_minus_zeta) + math.log(m + n)
            + float(log_one_minus_phi(g_plus))
            - math.log(zeta(m, n)) - math.log(m + 1))


def delete_log_accept(m: int, n: int, zeta: Callable[[int, int], float],
                      g_minus: float) -> float:
    """Log acceptance ratio for deleting the rejection whose value is g_minus."""
    if m < 1:
        raise ValueError("cannot delete from an empty history")
    one_minus_zeta = 1.0 - zeta(m, n)
    if one_minus_zeta <= 0.0:
        return np.inf
    return (math.log(zeta(m - 1, n)) + math.log(m)
            - math.log(one_minus_zeta) - math.log(m + n - 1)
            - float(log_one_minus_phi(g_minus)))


def number_move_log_ratio(m: int, m_hat: int, n: int, log_q_fwd: float,
                          log_q_rev: float, g_block) -> float:
    """Log acceptance ratio for a general block move m -> m_hat rejections.

    ``g_block`` holds the function values at the inserted points (when
    ``m_hat > m``) or at the removed points (when ``m_hat < m``);
    ``log_q_fwd``/``log_q_rev`` are the log probabilities of proposing the
    count change and its reverse.  Not used by the default sweep, which only
    makes single insert/delete moves, but kept tested as the general form.
    """
    out = (log_q_rev - log_q_fwd
           + math.lgamma(m + 1) + math.lgamma(m_hat + n)
           - math.lgamma(m_hat + 1) - math.lgamma(m + n))
    g_block = np.atleast_1d(np.asarray(g_block, dtype=float))
    if m_hat > m:
        out += float(np.sum(log_one_minus_phi(g_block)))
    elif m_hat < m:
        out -= float(np.sum(log_one_minus_phi(g_block)))
    return out


def location_log_accept(log_pi_new: float, log_pi_old: float,
                        g_new: float, g_old: float) -> float:
    """Log acceptance ratio for moving one rejection (symmetric walk)."""
    if not np.isfinite(log_pi_new):
        return -np.inf
    return (log_pi_new - log_pi_old
            + float(log_one_minus_phi(g_new)) - float(log_one_minus_phi(g_old)))


def leapfrog(potential_grad, v0: np.ndarray, p0: np.ndarray,
             step_size: float, n_steps: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Standard leapfrog integration of H(v, p) = U(v) + |p|^2 / 2.

    ``potential_grad`` maps v to (U, dU/dv).  Returns the final position and
    momentum together with the energy error H_end - H_start; a non-finite
    potential along the trajectory yields an infinite energy error, which a
    Metropolis correction turns into a certain rejection.
    """
    v = np.array(v0, dtype=float)
    p = np.array(p0, dtype=float)
    u0, grad = potential_grad(v)
    h0 = u0 + 0.5 * float(p0 @ p0)
    p = p - 0.5 * step_size * grad
    u1 = np.inf
    for step in range(n_steps):
        v = v + step_size * p
        u1, grad = potential_grad(v)
        if not np.isfinite(u1):
            return v, p, np.inf
        if step < n_steps - 1:
            p = p - step_size * grad
    p = p - 0.5 * step_size * grad
    h1 = u1 + 0.5 * float(p @ p)
    if not np.isfinite(h1):
        return v, p, np.inf
    return v, p, h1 - h0


# ---------------------------------------------------------------------------
# Mutable chain workspace
# ---------------------------------------------------------------------------

class HistoryChain:
    """Mutable engine behind the functional step operations.

    Wraps a :class:`ConditionalSampler` whose rows are the data (first N,
    never touched) followed by the latent rejections, so individual moves
    reuse the incrementally maintained factor instead of refactorising.
    ``rej_rows`` maps rejection slots to factor rows.
    """

    def __init__(self, h: LatentHistory, ledger: list | None = None):
        self.data = h.data
        self.n_data = h.n_data
        self.theta = h.theta
        self.psi = h.psi
        pts = np.vstack([h.data, h.rejections])
        vals = np.concatenate([h.g_data, h.g_rejections])
        self.sampler = ConditionalSampler(h.theta, pts, vals, ledger=ledger,
                                          tag="history")
        self.rej_rows = list(range(self.n_data, self.n_data + h.n_rejections))

    @property
    def n_rejections(self) -> int:
        return len(self.rej_rows)

    def snapshot(self) -> LatentHistory:
        vals = self.sampler.values
        pts = self.sampler.points
        rows = np.asarray(self.rej_rows, dtype=int)
        return LatentHistory(
            data=self.data.copy(),
            g_data=vals[: self.n_data].copy(),
            rejections=pts[rows].copy() if rows.size else np.empty((0, self.data.shape[1])),
            g_rejections=vals[rows].copy() if rows.size else np.empty(0),
            theta=self.theta,
            psi=self.psi,
        )

    # -- number move ------------------------------------------------------
    def step_number(self, zeta, rng: np.random.Generator,
                    corrupt_insert: bool = False) -> bool:
        m, n = self.n_rejections, self.n_data
        if rng.uniform() < zeta(m, n):
            x_plus = base_sample(self.psi, rng)
            g_plus = self.sampler.draw(x_plus, rng)
            log_a = insert_log_accept(m, n, zeta, g_plus)
            if corrupt_insert:
                # testing hook: flip the sign of the squashed-value term
                log_a = (log_a - float(log_one_minus_phi(g_plus))
                         + math.log1p(phi(g_plus)))
            if math.log(rng.uniform()) < log_a:
                self.sampler.append(x_plus, g_plus)
                self.rej_rows.append(len(self.sampler) - 1)
                return True
            return False
        k = int(rng.integers(m))
        g_minus = float(self.sampler.values[self.rej_rows[k]])
        log_a = delete_log_accept(m, n, zeta, g_minus)
        if math.log(rng.uniform()) < log_a:
            self._remove_slot(k)
            return True
        return False

    def _remove_slot(self, k: int) -> None:
        row = self.rej_rows.pop(k)
        self.sampler.delete(row)
        self.rej_rows = [r - 1 if r > row else r for r in self.rej_rows]

    # -- location moves ---------------------------------------------------
    def step_locations(self, walk_scales: np.ndarray, rng: np.random.Generator) -> int:
        """One symmetric-walk proposal per rejection; returns acceptances."""
        accepted = 0
        vals = self.sampler.values
        pts = self.sampler.points
        for slot in range(self.n_rejections):
            row = self.rej_rows[slot]
            x_old = pts[row].copy()
            g_old = float(vals[row])
            x_new = x_old + walk_scales * rng.standard_normal(x_old.shape[0])
            lp_new = float(base_logpdf(x_new, self.psi))
            if not np.isfinite(lp_new):
                continue
            g_new = self.sampler.draw(x_new, rng)
            lp_old = float(base_logpdf(x_old, self.psi))
            log_a = location_log_accept(lp_new, lp_old, g_new, g_old)
            if math.log(rng.uniform()) < log_a:
                self._remove_slot(slot)
                self.sampler.append(x_new, g_new)
                self.rej_rows.insert(slot, len(self.sampler) - 1)
                accepted += 1
                vals = self.sampler.values
                pts = self.sampler.points
        return accepted

    # -- function move (HMC in whitened coordinates) ----------------------
    # Factor rows 0..N-1 are always the data (deletes and appends only ever
    # touch rejection rows), so the data/rejection split is a range check.
    def _potential_grad(self, v: np.ndarray):
        nd = self.n_data
        L = self.sampler.lower
        g = L @ v + self.sampler.prior_mean_vec
        ll = float(np.sum(log_phi(g[:nd]))) + float(np.sum(log_one_minus_phi(g[nd:])))
        u_val = 0.5 * float(v @ v) - ll
        c = np.concatenate([log_phi_grad(g[:nd]), log_one_minus_phi_grad(g[nd:])])
        grad = v - L.T @ c
        return u_val, grad

    def step_function_hmc(self, step_size: float, n_leapfrog: int,
                          rng: np.random.Generator) -> bool:
        if step_size <= 0 or n_leapfrog < 1:
            raise ValueError("step_size must be > 0 and n_leapfrog >= 1")
        if self.sampler.degenerate or len(self.sampler) == 0:
            return True  # nothing to move
        v = self.sampler.whitened.copy()
        p = rng.standard_normal(v.shape[0])
        v1, _, delta_h = leapfrog(self._potential_grad, v, p, step_size, n_leapfrog)
        if not np.isfinite(delta_h):
            return False
        if math.log(rng.uniform()) < -delta_h:
            self.sampler.set_whitened(v1)
            return True
        return False

    # -- hyperparameter move ----------------------------------------------
    def step_hyper(self, scales: HyperWalkScales, priors: HyperPrior,
                   rng: np.random.Generator) -> bool:
        theta_hat, psi_hat = propose_hypers(self.theta, self.psi, scales, priors, rng)
        lp_hat = hyperprior_logpdf(theta_hat, psi_hat, priors)
        if not np.isfinite(lp_hat):
            return False
        lp_cur = hyperprior_logpdf(self.theta, self.psi, priors)
        pts = self.sampler.points
        vals = self.sampler.values
        base_new = base_logpdf(pts, psi_hat)
        if not np.all(np.isfinite(base_new)):
            return False
        base_old = base_logpdf(pts, self.psi)
        n = len(self.sampler)
        # GP prior density of the current values under both kernels; the
        # current one comes straight from the maintained factor.
        w = self.sampler.whitened
        log_gp_cur = -0.5 * (n * math.log(2 * math.pi)
                             + 2.0 * float(np.sum(np.log(np.diag(self.sampler.lower))))
                             + float(w @ w))
        factor_hat = chol(kernel_matrix(pts, pts, theta_hat), self.sampler.base_jitter)
        m_hat = prior_mean(pts, theta_hat, self.sampler.mean_fn)
        w_hat = factor_hat.solve_lower(vals - m_hat)
        log_gp_hat = -0.5 * (n * math.log(2 * math.pi) + factor_hat.logdet()
                             + float(w_hat @ w_hat))
        log_a = (lp_hat - lp_cur + log_gp_hat - log_gp_cur
                 + float(np.sum(base_new - base_old)))
        if math.log(rng.uniform()) < log_a:
            self.theta = theta_hat
            self.psi = psi_hat
            self.sampler = ConditionalSampler(theta_hat, pts, vals,
                                              mean_fn=self.sampler.mean_fn,
                                              ledger=self.sampler.ledger,
                                              tag=self.sampler.tag)
            return True
        return False


# ---------------------------------------------------------------------------
# Functional step operations
# ---------------------------------------------------------------------------

def step_number(h: LatentHistory, zeta, rng: np.random.Generator,
                corrupt_insert: bool = False) -> tuple[LatentHistory, bool]:
    """Propose inserting (with probability zeta(M, N)) or deleting one
    latent rejection."""
    chain = HistoryChain(h)
    acc = chain.step_number(zeta, rng, corrupt_insert=corrupt_insert)
    return chain.snapshot(), acc


def step_locations(h: LatentHistory, walk_scales,
                   rng: np.random.Generator) -> tuple[LatentHistory, int]:
    """Symmetric Gaussian-walk proposal for each rejection location."""
    chain = HistoryChain(h)
    scales = np.broadcast_to(np.asarray(walk_scales, dtype=float),
                             (h.data.shape[1],)).copy()
    n_acc = chain.step_locations(scales, rng)
    return chain.snapshot(), n_acc


def step_function_hmc(h: LatentHistory, step_size: float, n_leapfrog: int,
                      rng: np.random.Generator) -> tuple[LatentHistory, bool]:
    """Hamiltonian update of all function values in the whitened space."""
    chain = HistoryChain(h)
    acc = chain.step_function_hmc(step_size, n_leapfrog, rng)
    return chain.snapshot(), acc


def step_hyper_history(h: LatentHistory, proposal_scales: HyperWalkScales,
                       priors: HyperPrior,
                       rng: np.random.Generator) -> tuple[LatentHistory, bool]:
    """Random-walk hyperparameter move with the latent history held fixed."""
    chain = HistoryChain(h)
    acc = chain.step_hyper(proposal_scales, priors, rng)
    return chain.snapshot(), acc


@dataclass
class SweepConfig:
    """Move schedule and tuning for one full sweep.

    ``counters`` accumulates per-move acceptance diagnostics across calls.
    ``corrupt_insert`` is a testing hook that deliberately mis-computes the
    insert ratio so validation harnesses can confirm they catch it.
    """

    zeta: ZetaSchedule = field(default_factory=ZetaSchedule)
    walk_scales: np.ndarray | float = 0.1
    hmc_step_size: float = 0.2
    hmc_leapfrog: int = 10
    hyper_scales: HyperWalkScales = field(default_factory=HyperWalkScales)
    priors: HyperPrior | None = None
    number_moves: int = 1
    enable_number: bool = True
    enable_locations: bool = True
    enable_hmc: bool = True
    enable_hyper: bool = False
    corrupt_insert: bool = False
    counters: Counter = field(default_factory=Counter)


def sweep(h: LatentHistory, config: SweepConfig, rng: np.random.Generator) -> LatentHistory:
    """One full iteration: number move, location moves, HMC, hyper move."""
    chain = HistoryChain(h)
    _sweep_chain(chain, config, rng)
    return chain.snapshot()


def _sweep_chain(chain: HistoryChain, config: SweepConfig,
                 rng: np.random.Generator) -> None:
    c = config.counters
    if config.enable_number:
        for _ in range(config.number_moves):
            acc = chain.step_number(config.zeta, rng,
                                    corrupt_insert=config.corrupt_insert)
            c["number_acc"] += acc
            c["number_att"] += 1
    if config.enable_locations and chain.n_rejections:
        scales = np.broadcast_to(np.asarray(config.walk_scales, dtype=float),
                                 (chain.data.shape[1],)).copy()
        c["loc_att"] += chain.n_rejections
        c["loc_acc"] += chain.step_locations(scales, rng)
    if config.enable_hmc and not chain.sampler.degenerate:
        acc = chain.step_function_hmc(config.hmc_step_size, config.hmc_leapfrog, rng)
        c["hmc_acc"] += acc
        c["hmc_att"] += 1
    if config.enable_hyper and config.priors is not None:
        acc = chain.step_hyper(config.hyper_scales, config.priors, rng)
        c["hyper_acc"] += acc
        c["hyper_att"] += 1


def predictive_sample_history(h: LatentHistory, n_samples: int,
                              max_proposals: int = DEFAULT_MAX_PROPOSALS,
                              rng: np.random.Generator | None = None) -> np.ndarray:
    """Continue the rejection procedure forward; chain state is untouched."""
    if n_samples == 0:
        return np.empty((0, h.data.shape[1]))
    trace = continue_sampler(h.conditioning_set(), n_samples, h.theta, h.psi,
                             rng, max_proposals=max_proposals)
    return trace.accepted
