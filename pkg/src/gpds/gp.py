"""Gaussian process primitives.

Squared-exponential covariances (isotropic or per-dimension ARD, optionally
pinned to zero at a reference location), jittered Cholesky factorisation,
exact conditional (retrospective) sampling, prior log-densities and the
whitening transform used by the gradient-based function moves.

All functions are pure given an injected ``numpy.random.Generator``.  The
only stateful object is :class:`ConditionalSampler`, which supports O(R^2)
incremental appends/deletes so that rejection-sampling loops and MCMC moves
do not refactorise the Gram matrix from scratch at every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.linalg import solve_triangular

# Relative jitter ladder: start here, escalate x10 per retry, give up at the
# cap.  Values are relative to the mean diagonal magnitude of the matrix
# being factorised (i.e. to amplitude^2 for an unpinned kernel).
BASE_JITTER = 1e-8
JITTER_CAP = 1e-2

MeanLike = Union[float, Callable[[np.ndarray], np.ndarray]]


class IllConditionedCovariance(RuntimeError):
    """Cholesky factorisation failed even at the jitter cap."""


def _as_points(x) -> np.ndarray:
    """Coerce a point or list of points to a (n, D) float array."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    return a


@dataclass(frozen=True, eq=False)
class GpHyper:
    """Covariance hyperparameters for the squared-exponential kernel.

    ``amplitude == 0`` is allowed and denotes the degenerate GP whose draws
    equal the mean function exactly; this is how frozen, fully-known
    functions are represented.  ``pin_location`` conditions the kernel on
    the function being exactly zero there (it requires a positive
    amplitude).  ``mean`` is either a constant or a callable mapping an
    (n, D) array of locations to n mean values.
    """

    amplitude: float
    lengthscales: np.ndarray
    pin_location: np.ndarray | None = None
    mean: MeanLike = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if np.any(ls <= 0):
            raise ValueError("lengthscales must be positive")
        if self.pin_location is not None:
            pin = np.atleast_1d(np.asarray(self.pin_location, dtype=float))
            if pin.shape != ls.shape:
                raise ValueError("pin_location dimension mismatch")
            if self.amplitude == 0:
                raise ValueError("pinning requires a positive amplitude")
            object.__setattr__(self, "pin_location", pin)

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]

    def with_(self, **kwargs) -> "GpHyper":
        out = {
            "amplitude": self.amplitude,
            "lengthscales": self.lengthscales,
            "pin_location": self.pin_location,
            "mean": self.mean,
        }
        out.update(kwargs)
        return GpHyper(**out)


@dataclass
class ConditioningSet:
    """Paired locations and function values known for one GP realisation."""

    points: np.ndarray  # (R, D)
    values: np.ndarray  # (R,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1:
            # disambiguate via the value count: n 1-D points vs one n-D point
            pts = pts.reshape(-1, 1) if pts.size == vals.size else pts.reshape(1, -1)
        self.points = pts
        self.values = vals
        if self.points.shape[0] != self.values.shape[0]:
            raise ValueError("points and values must have equal length")

    @classmethod
    def empty(cls, dim: int) -> "ConditioningSet":
        return cls(np.empty((0, dim)), np.empty(0))

    def __len__(self) -> int:
        return self.points.shape[0]

    def extended(self, points, values) -> "ConditioningSet":
        """Return a copy with extra (points, values) pairs appended."""
        pts = _as_points(points)
        vals = np.atleast_1d(np.asarray(values, dtype=float))
        if len(self) == 0:
            return ConditioningSet(pts.copy(), vals.copy())
        return ConditioningSet(
            np.vstack([self.points, pts]), np.concatenate([self.values, vals])
        )


def _se_matrix(X: np.ndarray, Y: np.ndarray, amplitude: float, lengthscales: np.ndarray) -> np.ndarray:
    diff = (X[:, None, :] - Y[None, :, :]) / lengthscales
    return amplitude**2 * np.exp(-0.5 * np.einsum("ijk,ijk->ij", diff, diff))


def kernel_matrix(X, Y, hyper: GpHyper) -> np.ndarray:
    """Cross-covariance matrix between point sets X (n, D) and Y (m, D)."""
    X = _as_points(X)
    Y = _as_points(Y)
    if X.shape[1] != hyper.dim or Y.shape[1] != hyper.dim:
        raise ValueError("point dimension does not match lengthscales")
    k = _se_matrix(X, Y, hyper.amplitude, hyper.lengthscales)
    if hyper.pin_location is not None:
        x0 = hyper.pin_location.reshape(1, -1)
        kx0 = _se_matrix(X, x0, hyper.amplitude, hyper.lengthscales)
        ky0 = _se_matrix(Y, x0, hyper.amplitude, hyper.lengthscales)
        k -= (kx0 @ ky0.T) / hyper.amplitude**2
    return k


def kernel_diag(X, hyper: GpHyper) -> np.ndarray:
    """Prior variances at each point of X (cheaper than the full matrix)."""
    X = _as_points(X)
    v = np.full(X.shape[0], hyper.amplitude**2)
    if hyper.pin_location is not None:
        x0 = hyper.pin_location.reshape(1, -1)
        kx0 = _se_matrix(X, x0, hyper.amplitude, hyper.lengthscales)[:, 0]
        v -= kx0**2 / hyper.amplitude**2
    return v


def covariance(x, y, hyper: GpHyper) -> float:
    """Covariance between two single points (pin-conditioned when set)."""
    return float(kernel_matrix(x, y, hyper)[0, 0])


def prior_mean(X, hyper: GpHyper, mean_fn: MeanLike | None = None) -> np.ndarray:
    """Prior mean at X, including the deterministic pinning adjustment.

    Conditioning the GP on g(x0) = 0 shifts the mean by
    -k(x, x0) m(x0) / k(x0, x0) in addition to modifying the kernel.
    """
    X = _as_points(X)
    mf = hyper.mean if mean_fn is None else mean_fn
    if callable(mf):
        m = np.atleast_1d(np.asarray(mf(X), dtype=float))
    else:
        m = np.full(X.shape[0], float(mf))
    if hyper.pin_location is not None:
        x0 = hyper.pin_location.reshape(1, -1)
        m0 = float(mf(x0)[0]) if callable(mf) else float(mf)
        kx0 = _se_matrix(X, x0, hyper.amplitude, hyper.lengthscales)[:, 0]
        m = m - kx0 * m0 / hyper.amplitude**2
    return m


@dataclass
class CholeskyFactor:
    """Lower-triangular factor of a jittered covariance matrix.

    ``jitter`` is the absolute value that was added to the diagonal.
    """

    lower: np.ndarray
    jitter: float

    def solve_lower(self, b: np.ndarray) -> np.ndarray:
        return solve_triangular(self.lower, b, lower=True, check_finite=False)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def chol(cov: np.ndarray, base_jitter: float = BASE_JITTER) -> CholeskyFactor:
    """Cholesky of ``cov + j * scale * I`` with an escalating jitter ladder.

    ``j`` starts at ``base_jitter`` (relative to the mean diagonal
    magnitude ``scale``), multiplies by 10 on failure and gives up at
    ``JITTER_CAP``.  A zero ``base_jitter`` first tries the matrix as-is.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("cov must be a square matrix")
    if base_jitter < 0:
        raise ValueError("base_jitter must be >= 0")
    n = cov.shape[0]
    scale = float(np.mean(np.abs(np.diag(cov)))) if n else 0.0
    if scale <= 0.0:
        scale = 1.0
    j = base_jitter
    while True:
        jit = j * scale
        try:
            mat = cov if jit == 0.0 else cov + jit * np.eye(n)
            lower = np.linalg.cholesky(mat)
            return CholeskyFactor(lower=lower, jitter=jit)
        except np.linalg.LinAlgError:
            if j >= JITTER_CAP:
                raise IllConditionedCovariance(
                    f"factorisation failed at jitter cap {JITTER_CAP:g} (n={n})"
                )
            j = BASE_JITTER if j == 0.0 else j * 10.0


def conditional(query, cond: ConditioningSet, hyper: GpHyper,
                mean_fn: MeanLike | None = None,
                base_jitter: float = BASE_JITTER):
    """Gaussian conditional of the GP at ``query`` given ``cond``.

    Returns ``(mean, cov)``.  An empty conditioning set yields the prior
    mean and prior covariance.
    """
    Q = _as_points(query)
    if Q.shape[1] != hyper.dim:
        raise ValueError("query dimension does not match lengthscales")
    m_q = prior_mean(Q, hyper, mean_fn)
    if hyper.amplitude == 0.0:
        return m_q, np.zeros((Q.shape[0], Q.shape[0]))
    K_qq = kernel_matrix(Q, Q, hyper)
    if len(cond) == 0:
        return m_q, K_qq
    m_c = prior_mean(cond.points, hyper, mean_fn)
    factor = chol(kernel_matrix(cond.points, cond.points, hyper), base_jitter)
    A = factor.solve_lower(kernel_matrix(cond.points, Q, hyper))
    w = factor.solve_lower(cond.values - m_c)
    mean = m_q + A.T @ w
    cov = K_qq - A.T @ A
    return mean, cov


def sample_conditional(query, cond: ConditioningSet, hyper: GpHyper,
                       rng: np.random.Generator,
                       mean_fn: MeanLike | None = None,
                       base_jitter: float = BASE_JITTER) -> np.ndarray:
    """Draw jointly Gaussian function values at ``query`` given ``cond``.

    The caller is responsible for appending ``(query, draw)`` to its
    conditioning set if retrospective consistency with later draws is
    required.
    """
    mean, cov = conditional(query, cond, hyper, mean_fn, base_jitter)
    if hyper.amplitude == 0.0:
        return mean
    cov = 0.5 * (cov + cov.T)
    factor = chol(cov, base_jitter)
    return mean + factor.lower @ rng.standard_normal(mean.shape[0])


def log_prior_density(values, points, hyper: GpHyper,
                      mean_fn: MeanLike | None = None,
                      base_jitter: float = BASE_JITTER) -> float:
    """Multivariate normal log-density of ``values`` under the GP prior."""
    if hyper.amplitude == 0.0:
        raise ValueError("log-density undefined for the degenerate (amplitude 0) GP")
    P = _as_points(points)
    v = np.atleast_1d(np.asarray(values, dtype=float))
    if P.shape[0] != v.shape[0]:
        raise ValueError("values and points must have equal length")
    factor = chol(kernel_matrix(P, P, hyper), base_jitter)
    z = factor.solve_lower(v - prior_mean(P, hyper, mean_fn))
    n = v.shape[0]
    return -0.5 * (n * math.log(2.0 * math.pi) + factor.logdet() + float(z @ z))


def whiten(values, points, hyper: GpHyper,
           mean_fn: MeanLike | None = None,
           base_jitter: float = BASE_JITTER) -> np.ndarray:
    """Map function values to whitened coordinates v = L^-1 (g - m)."""
    if hyper.amplitude == 0.0:
        raise ValueError("whitening undefined for the degenerate (amplitude 0) GP")
    P = _as_points(points)
    v = np.atleast_1d(np.asarray(values, dtype=float))
    factor = chol(kernel_matrix(P, P, hyper), base_jitter)
    return factor.solve_lower(v - prior_mean(P, hyper, mean_fn))


def unwhiten(whitened, points, hyper: GpHyper,
             mean_fn: MeanLike | None = None,
             base_jitter: float = BASE_JITTER) -> np.ndarray:
    """Inverse of :func:`whiten`: g = L v + m."""
    if hyper.amplitude == 0.0:
        raise ValueError("whitening undefined for the degenerate (amplitude 0) GP")
    P = _as_points(points)
    w = np.atleast_1d(np.asarray(whitened, dtype=float))
    factor = chol(kernel_matrix(P, P, hyper), base_jitter)
    return factor.lower @ w + prior_mean(P, hyper, mean_fn)


def _chol_update(L: np.ndarray, u: np.ndarray) -> None:
    """In-place rank-one update: after the call, L L^T equals old L L^T + u u^T.

    Standard sequence of Givens-style rotations; u is destroyed.
    """
    n = L.shape[0]
    for k in range(n):
        lkk = L[k, k]
        r = math.hypot(lkk, u[k])
        c = r / lkk
        s = u[k] / lkk
        L[k, k] = r
        if k + 1 < n:
            L[k + 1:, k] = (L[k + 1:, k] + s * u[k + 1:]) / c
            u[k + 1:] = c * u[k + 1:] - s * L[k + 1:, k]


class ConditionalSampler:
    """Incrementally maintained GP conditional over a growing point set.

    Holds the jittered Cholesky factor of the prior covariance at the
    currently known points together with the whitened residual
    ``w = L^-1 (values - mean)``, so that conditional means/variances and
    retrospective draws cost O(R^2), appends cost O(R^2) and deletions cost
    O((R - k)^2) instead of a full refactorisation.

    With ``amplitude == 0`` the sampler is degenerate: draws equal the mean
    function and no factor is kept (appends are O(1)).
    """

    def __init__(self, hyper: GpHyper, points=None, values=None,
                 mean_fn: MeanLike | None = None,
                 base_jitter: float = BASE_JITTER,
                 ledger: list | None = None, tag: str = ""):
        self.hyper = hyper
        self.mean_fn = hyper.mean if mean_fn is None else mean_fn
        self.base_jitter = base_jitter
        self.ledger = ledger
        self.tag = tag
        self.degenerate = hyper.amplitude == 0.0
        dim = hyper.dim
        pts = _as_points(points) if points is not None and np.size(points) else np.empty((0, dim))
        vals = np.atleast_1d(np.asarray(values, dtype=float)) if values is not None and np.size(values) else np.empty(0)
        if pts.shape[0] != vals.shape[0]:
            raise ValueError("points and values must have equal length")
        n = pts.shape[0]
        cap = max(2 * n, 64)
        self._pts = np.empty((cap, dim))
        self._vals = np.empty(cap)
        self._m = np.empty(cap)
        self._n = n
        self._pts[:n] = pts
        self._vals[:n] = vals
        if n:
            self._m[:n] = prior_mean(pts, hyper, self.mean_fn)
        if self.degenerate:
            self._L = None
            self._w = None
            self.jitter = 0.0
            return
        self._L = np.zeros((cap, cap))
        self._w = np.empty(cap)
        if n:
            factor = chol(kernel_matrix(pts, pts, hyper), base_jitter)
            self._L[:n, :n] = factor.lower
            self.jitter = factor.jitter
            self._w[:n] = factor.solve_lower(vals - self._m[:n])
        else:
            self.jitter = base_jitter * hyper.amplitude**2

    def __len__(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        return self._pts[: self._n]

    @property
    def values(self) -> np.ndarray:
        return self._vals[: self._n]

    @property
    def lower(self) -> np.ndarray:
        return self._L[: self._n, : self._n]

    @property
    def prior_mean_vec(self) -> np.ndarray:
        return self._m[: self._n]

    @property
    def whitened(self) -> np.ndarray:
        return self._w[: self._n]

    def conditioning_set(self) -> ConditioningSet:
        return ConditioningSet(self.points.copy(), self.values.copy())

    def copy(self) -> "ConditionalSampler":
        out = ConditionalSampler.__new__(ConditionalSampler)
        out.hyper = self.hyper
        out.mean_fn = self.mean_fn
        out.base_jitter = self.base_jitter
        out.ledger = self.ledger
        out.tag = self.tag
        out.degenerate = self.degenerate
        out.jitter = self.jitter
        out._n = self._n
        out._pts = self._pts.copy()
        out._vals = self._vals.copy()
        out._m = self._m.copy()
        out._L = None if self._L is None else self._L.copy()
        out._w = None if self._w is None else self._w.copy()
        return out

    def _grow(self, needed: int) -> None:
        cap = self._pts.shape[0]
        if needed <= cap:
            return
        new_cap = max(2 * cap, needed)
        pts = np.empty((new_cap, self._pts.shape[1]))
        pts[: self._n] = self._pts[: self._n]
        vals = np.empty(new_cap)
        vals[: self._n] = self._vals[: self._n]
        m = np.empty(new_cap)
        m[: self._n] = self._m[: self._n]
        self._pts, self._vals, self._m = pts, vals, m
        if not self.degenerate:
            L = np.zeros((new_cap, new_cap))
            L[: self._n, : self._n] = self._L[: self._n, : self._n]
            w = np.empty(new_cap)
            w[: self._n] = self._w[: self._n]
            self._L, self._w = L, w

    def _point_mean(self, x: np.ndarray) -> float:
        return float(prior_mean(x.reshape(1, -1), self.hyper, self.mean_fn)[0])

    def _solve_k(self, x: np.ndarray) -> np.ndarray:
        k = kernel_matrix(self.points, x.reshape(1, -1), self.hyper)[:, 0]
        return solve_triangular(self.lower, k, lower=True, check_finite=False)

    def mean_var(self, x) -> tuple[float, float]:
        """Conditional mean and variance at a single point.

        The variance includes the diagonal jitter so that a draw followed
        by :meth:`append` is exactly consistent with the stored factor; at
        a duplicated location it therefore bottoms out at jitter scale.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        m = self._point_mean(x)
        if self.degenerate:
            return m, 0.0
        kxx = float(kernel_diag(x.reshape(1, -1), self.hyper)[0])
        if self._n == 0:
            return m, kxx + self.jitter
        a = self._solve_k(x)
        var = kxx + self.jitter - float(a @ a)
        return m + float(a @ self._w[: self._n]), max(var, 0.0)

    def draw(self, x, rng: np.random.Generator) -> float:
        """Sample a single function value (without recording it)."""
        mu, var = self.mean_var(x)
        if self.ledger is not None:
            self.ledger.append((self.tag, self._n))
        return mu + math.sqrt(var) * rng.standard_normal()

    def append(self, x, value: float) -> None:
        """Record a known (location, value) pair; O(R^2)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        self._grow(self._n + 1)
        n = self._n
        m = self._point_mean(x)
        self._pts[n] = x
        self._vals[n] = value
        self._m[n] = m
        if self.degenerate:
            self._n += 1
            return
        kxx = float(kernel_diag(x.reshape(1, -1), self.hyper)[0])
        if n == 0:
            d2 = kxx + self.jitter
            a = np.empty(0)
            mu = m
        else:
            a = self._solve_k(x)
            d2 = kxx + self.jitter - float(a @ a)
            mu = m + float(a @ self._w[:n])
        # Numerical floor: keep the pivot at jitter scale so the factor
        # stays valid even for coincident locations.
        d = math.sqrt(max(d2, min(self.jitter, 1e-12) if self.jitter > 0 else 1e-15))
        self._L[n, :n] = a
        self._L[n, n] = d
        self._w[n] = (value - mu) / d
        self._n += 1

    def draw_append(self, x, rng: np.random.Generator) -> float:
        """Draw at x and record the result; the solve is shared, O(R^2)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        m = self._point_mean(x)
        if self.ledger is not None:
            self.ledger.append((self.tag, self._n))
        if self.degenerate:
            g = m + 0.0 * rng.standard_normal()
            self._grow(self._n + 1)
            self._pts[self._n] = x
            self._vals[self._n] = g
            self._m[self._n] = m
            self._n += 1
            return g
        self._grow(self._n + 1)
        n = self._n
        kxx = float(kernel_diag(x.reshape(1, -1), self.hyper)[0])
        if n == 0:
            a = np.empty(0)
            mu, d2 = m, kxx + self.jitter
        else:
            a = self._solve_k(x)
            d2 = kxx + self.jitter - float(a @ a)
            mu = m + float(a @ self._w[:n])
        d = math.sqrt(max(d2, min(self.jitter, 1e-12) if self.jitter > 0 else 1e-15))
        z = rng.standard_normal()
        g = mu + d * z
        self._pts[n] = x
        self._vals[n] = g
        self._m[n] = m
        self._L[n, :n] = a
        self._L[n, n] = d
        self._w[n] = z
        self._n += 1
        return g

    def mean_cov(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Joint conditional mean and covariance at a batch of points."""
        X = _as_points(X)
        m_q = prior_mean(X, self.hyper, self.mean_fn)
        if self.degenerate:
            return m_q, np.zeros((X.shape[0], X.shape[0]))
        K_qq = kernel_matrix(X, X, self.hyper)
        if self._n == 0:
            return m_q, K_qq
        A = solve_triangular(self.lower, kernel_matrix(self.points, X, self.hyper),
                             lower=True, check_finite=False)
        return m_q + A.T @ self._w[: self._n], K_qq - A.T @ A

    def draw_batch(self, X, rng: np.random.Generator) -> np.ndarray:
        """Jointly sample function values at a batch of points (no record)."""
        X = _as_points(X)
        mean, cov = self.mean_cov(X)
        if self.ledger is not None:
            self.ledger.append((self.tag, self._n))
        if self.degenerate:
            return mean
        cov = 0.5 * (cov + cov.T)
        factor = chol(cov, self.base_jitter)
        return mean + factor.lower @ rng.standard_normal(X.shape[0])

    def append_batch(self, X, values) -> None:
        X = _as_points(X)
        values = np.atleast_1d(np.asarray(values, dtype=float))
        for x, v in zip(X, values):
            self.append(x, float(v))

    def delete(self, row: int) -> None:
        """Remove the point at ``row``; O((R - row)^2)."""
        n = self._n
        if not 0 <= row < n:
            raise IndexError("row out of range")
        self._pts[row : n - 1] = self._pts[row + 1 : n]
        self._vals[row : n - 1] = self._vals[row + 1 : n]
        self._m[row : n - 1] = self._m[row + 1 : n]
        if not self.degenerate:
            L = self._L
            c = L[row + 1 : n, row].copy()
            # shift rows up, drop column `row`, then restore triangularity of
            # the trailing block with a rank-one update by the dropped column
            L[row : n - 1, :row] = L[row + 1 : n, :row]
            block = L[row + 1 : n, row + 1 : n].copy()
            _chol_update(block, c)
            L[row : n - 1, row : n - 1] = block
            L[row : n - 1, n - 1] = 0.0
            L[n - 1, :n] = 0.0
            m = n - 1
            if m > row:
                resid = self._vals[row:m] - self._m[row:m]
                if row:
                    resid = resid - L[row:m, :row] @ self._w[:row]
                self._w[row:m] = solve_triangular(L[row:m, row:m], resid,
                                                  lower=True, check_finite=False)
        self._n = n - 1

    def set_values(self, values) -> None:
        """Replace all function values (locations unchanged); O(R^2)."""
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if values.shape[0] != self._n:
            raise ValueError("value count mismatch")
        self._vals[: self._n] = values
        if not self.degenerate and self._n:
            self._w[: self._n] = solve_triangular(
                self.lower, values - self._m[: self._n], lower=True, check_finite=False
            )

    def set_whitened(self, v: np.ndarray) -> None:
        """Replace values via their whitened coordinates g = L v + m."""
        if self.degenerate:
            raise ValueError("degenerate sampler has no whitened coordinates")
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self._n:
            raise ValueError("coordinate count mismatch")
        self._vals[: self._n] = self.lower @ v + self._m[: self._n]
        self._w[: self._n] = v
