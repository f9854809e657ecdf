"""Base densities, the logistic link and hyperparameter priors.

The modelled density is proportional to ``phi(g(x)) * pi(x | psi)`` where
``g`` is a GP draw, ``phi`` the logistic squashing function and ``pi`` a
tractable base density (a uniform box or a diagonal Gaussian).  Because
``phi < 1``, the base density upper-bounds the unnormalised model density,
which is what makes exact rejection sampling possible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import expit, log_expit

from .gp import GpHyper

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Logistic link
# ---------------------------------------------------------------------------

def phi(z):
    """Logistic function 1 / (1 + exp(-z)); stable for any float input."""
    return expit(z)


def log_phi(z):
    """log phi(z) without overflow for large |z|."""
    return log_expit(z)


def log_one_minus_phi(z):
    """log (1 - phi(z)) = log phi(-z)."""
    return log_expit(-np.asarray(z))


def log_phi_grad(z):
    """d/dz log phi(z) = 1 - phi(z)."""
    return expit(-np.asarray(z))


def log_one_minus_phi_grad(z):
    """d/dz log (1 - phi(z)) = -phi(z)."""
    return -expit(z)


# ---------------------------------------------------------------------------
# Base densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UniformBox:
    """Uniform base density on an axis-aligned box."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("lower/upper shape mismatch")
        if np.any(lo >= hi):
            raise ValueError("box requires lower < upper in every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @classmethod
    def unit(cls, dim: int = 1) -> "UniformBox":
        return cls(np.zeros(dim), np.ones(dim))


@dataclass(frozen=True, eq=False)
class GaussianBase:
    """Diagonal Gaussian base density."""

    mean: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=float))
        sd = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if mu.shape != sd.shape:
            raise ValueError("mean/sigma shape mismatch")
        if np.any(sd <= 0):
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "sigma", sd)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


BaseHyper = Union[UniformBox, GaussianBase]


def base_sample(hyper: BaseHyper, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from the base density: a (D,) point, or (size, D) when given."""
    n = 1 if size is None else size
    if isinstance(hyper, UniformBox):
        out = rng.uniform(hyper.lower, hyper.upper, size=(n, hyper.dim))
    elif isinstance(hyper, GaussianBase):
        out = hyper.mean + hyper.sigma * rng.standard_normal((n, hyper.dim))
    else:
        raise TypeError(f"unknown base density {type(hyper)!r}")
    return out[0] if size is None else out


def base_logpdf(x, hyper: BaseHyper):
    """Exact normalised log-density; -inf outside a box's support.

    Accepts a single (D,) point (returns a float) or an (n, D) batch
    (returns an (n,) array).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != hyper.dim:
        raise ValueError("point dimension does not match base density")
    if isinstance(hyper, UniformBox):
        inside = np.all((pts >= hyper.lower) & (pts <= hyper.upper), axis=1)
        val = np.where(inside, -np.sum(np.log(hyper.upper - hyper.lower)), -np.inf)
    elif isinstance(hyper, GaussianBase):
        z = (pts - hyper.mean) / hyper.sigma
        val = -0.5 * np.sum(z * z, axis=1) - np.sum(np.log(hyper.sigma)) \
            - 0.5 * hyper.dim * LOG_2PI
    else:
        raise TypeError(f"unknown base density {type(hyper)!r}")
    return float(val[0]) if single else val


def unnormalized_density(x, g_at_x, hyper: BaseHyper):
    """phi(g(x)) * pi(x | psi); never exceeds pi(x | psi)."""
    lp = base_logpdf(x, hyper)
    return phi(g_at_x) * np.exp(lp)


# ---------------------------------------------------------------------------
# Hyperparameter priors and proposals
# ---------------------------------------------------------------------------

def _normal_logpdf(x, mu, sigma):
    z = (np.asarray(x, dtype=float) - mu) / sigma
    return -0.5 * z * z - np.log(sigma) - 0.5 * LOG_2PI


@dataclass(frozen=True)
class HyperPrior:
    """Independent priors over the covariance and base hyperparameters.

    Log-amplitude and log-lengthscales get normal priors (log-normal in
    the original parameters); a Gaussian base gets normal priors on its
    means and log-normal priors on its scales.  ``isotropic`` means a
    single shared lengthscale: its prior is evaluated once, not per
    dimension, and moves perturb all dimensions jointly.  When ``pin`` is
    set the pin location is treated as a hyperparameter with the base
    density as its prior.
    """

    log_amplitude: tuple[float, float] = (1.0, 0.5)
    log_lengthscale: tuple[float, float] = (0.05, 0.5)
    base_mean: tuple[np.ndarray, np.ndarray] | None = None   # (locs, scales), per dim
    log_base_sigma: tuple[np.ndarray, np.ndarray] | None = None
    isotropic: bool = False
    pin: bool = False

    @classmethod
    def for_data(cls, data: np.ndarray, gaussian_base: bool = False, **kwargs) -> "HyperPrior":
        """Weakly informative, data-scaled priors for the base parameters."""
        if not gaussian_base:
            return cls(**kwargs)
        data = np.atleast_2d(np.asarray(data, dtype=float))
        mu = data.mean(axis=0)
        sd = data.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        return cls(
            base_mean=(mu, 2.0 * sd),
            log_base_sigma=(np.log(sd), np.ones_like(sd)),
            **kwargs,
        )


def theta_logprior(theta: GpHyper, psi: BaseHyper, priors: HyperPrior) -> float:
    """Log prior density of the covariance hyperparameters."""
    if theta.amplitude <= 0 or np.any(theta.lengthscales <= 0):
        return -np.inf
    mu_a, sd_a = priors.log_amplitude
    out = float(_normal_logpdf(math.log(theta.amplitude), mu_a, sd_a))
    mu_l, sd_l = priors.log_lengthscale
    if priors.isotropic:
        out += float(_normal_logpdf(math.log(theta.lengthscales[0]), mu_l, sd_l))
    else:
        out += float(np.sum(_normal_logpdf(np.log(theta.lengthscales), mu_l, sd_l)))
    if priors.pin and theta.pin_location is not None:
        out += float(base_logpdf(theta.pin_location, psi))
    return out


def psi_logprior(psi: BaseHyper, priors: HyperPrior) -> float:
    """Log prior density of the base density hyperparameters."""
    if isinstance(psi, UniformBox):
        return 0.0  # box bounds are fixed, not inferred
    out = 0.0
    if priors.base_mean is not None:
        locs, scales = priors.base_mean
        out += float(np.sum(_normal_logpdf(psi.mean, np.asarray(locs), np.asarray(scales))))
    if priors.log_base_sigma is not None:
        if np.any(psi.sigma <= 0):
            return -np.inf
        locs, scales = priors.log_base_sigma
        out += float(np.sum(_normal_logpdf(np.log(psi.sigma), np.asarray(locs), np.asarray(scales))))
    return out


def hyperprior_logpdf(theta: GpHyper, psi: BaseHyper, priors: HyperPrior) -> float:
    """Joint log prior of (theta, psi); -inf outside the support."""
    lp = theta_logprior(theta, psi, priors)
    if not np.isfinite(lp):
        return -np.inf
    lp2 = psi_logprior(psi, priors)
    return lp + lp2 if np.isfinite(lp2) else -np.inf


@dataclass(frozen=True)
class HyperWalkScales:
    """Random-walk proposal scales for hyperparameter moves.

    Amplitude, lengthscales and base sigmas walk in log space (symmetric,
    so the proposal ratio is exactly one); base means and the pin location
    walk linearly.
    """

    log_amplitude: float = 0.1
    log_lengthscale: float = 0.1
    base_mean: float = 0.05
    log_base_sigma: float = 0.1
    pin: float = 0.1


def propose_hypers(theta: GpHyper, psi: BaseHyper, scales: HyperWalkScales,
                   priors: HyperPrior, rng: np.random.Generator) -> tuple[GpHyper, BaseHyper]:
    """Symmetric random-walk proposal for (theta, psi)."""
    amp = math.exp(math.log(theta.amplitude) + scales.log_amplitude * rng.standard_normal())
    if priors.isotropic:
        step = scales.log_lengthscale * rng.standard_normal()
        ls = theta.lengthscales * math.exp(step)
    else:
        ls = theta.lengthscales * np.exp(scales.log_lengthscale * rng.standard_normal(theta.dim))
    pin = theta.pin_location
    if priors.pin and pin is not None:
        pin = pin + scales.pin * rng.standard_normal(theta.dim)
    theta_hat = GpHyper(amplitude=amp, lengthscales=ls, pin_location=pin, mean=theta.mean)
    if isinstance(psi, GaussianBase):
        mu = psi.mean + scales.base_mean * rng.standard_normal(psi.dim)
        sd = psi.sigma * np.exp(scales.log_base_sigma * rng.standard_normal(psi.dim))
        psi_hat: BaseHyper = GaussianBase(mean=mu, sigma=sd)
    else:
        psi_hat = psi
    return theta_hat, psi_hat


def walk_logpdf(theta_to: GpHyper, psi_to: BaseHyper, theta_from: GpHyper,
                psi_from: BaseHyper, scales: HyperWalkScales, priors: HyperPrior) -> float:
    """Log proposal density of the walk; used to verify symmetry in tests."""
    out = float(_normal_logpdf(math.log(theta_to.amplitude),
                               math.log(theta_from.amplitude), scales.log_amplitude))
    if priors.isotropic:
        out += float(_normal_logpdf(math.log(theta_to.lengthscales[0]),
                                    math.log(theta_from.lengthscales[0]),
                                    scales.log_lengthscale))
    else:
        out += float(np.sum(_normal_logpdf(np.log(theta_to.lengthscales),
                                           np.log(theta_from.lengthscales),
                                           scales.log_lengthscale)))
    if priors.pin and theta_to.pin_location is not None:
        out += float(np.sum(_normal_logpdf(theta_to.pin_location,
                                           theta_from.pin_location, scales.pin)))
    if isinstance(psi_to, GaussianBase):
        out += float(np.sum(_normal_logpdf(psi_to.mean, psi_from.mean, scales.base_mean)))
        out += float(np.sum(_normal_logpdf(np.log(psi_to.sigma),
                                           np.log(psi_from.sigma), scales.log_base_sigma)))
    return out
