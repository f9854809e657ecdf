"""Synthetic benchmark densities and their samplers.

``f1`` is a mixture of an exponential and a narrow normal on [0, 1];
``f2`` is a two-dimensional location mixture of Gaussians whose means lie
uniformly on a ring of radius 3/2 (per-coordinate noise sd 1/4).
"""
from __future__ import annotations

import math

import numpy as np

RING_RADIUS = 1.5
RING_SIGMA = 0.25

_F1_NORM = math.sqrt(32.0 / math.pi)  # (pi/32)^(-1/2)


def f1_density(x):
    """Unnormalised-on-[0,1] mixture density 0.75*Exp(3) + 0.25*N(0.75, 1/64).

    The expression integrates to ~0.957 over [0, 1] because both components
    lose tail mass to truncation; :func:`f1_normalizer` gives the constant
    for the density restricted to the interval.
    """
    x = np.asarray(x, dtype=float)
    expo = 3.0 * np.exp(-3.0 * x)
    bump = _F1_NORM * np.exp(-32.0 * (x - 0.75) ** 2)
    return 0.75 * expo + 0.25 * bump


def f1_normalizer(n_grid: int = 20001) -> float:
    """Mass of f1 on [0, 1] by trapezoid quadrature."""
    xs = np.linspace(0.0, 1.0, n_grid)
    return float(np.trapezoid(f1_density(xs), xs))


def sample_f1(n: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample n points from f1 restricted to [0, 1]; returns (n, 1)."""
    bound = 2.26  # f1 peaks at f1(0) = 2.25 + tiny bump contribution
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 64)
        xs = rng.uniform(0.0, 1.0, size=m)
        us = rng.uniform(0.0, bound, size=m)
        keep = xs[us < f1_density(xs)]
        take = min(keep.shape[0], n - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out.reshape(n, 1)


def sample_f2(n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n points from the ring mixture; returns (n, 2)."""
    angles = rng.uniform(-math.pi, math.pi, size=n)
    means = RING_RADIUS * np.column_stack([np.cos(angles), np.sin(angles)])
    return means + RING_SIGMA * rng.standard_normal((n, 2))
