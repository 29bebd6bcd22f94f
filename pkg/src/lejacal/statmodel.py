"""Priors, likelihoods, posteriors, and the adaptive weighting function.

All densities are evaluated in the log domain with -inf marking zeros;
likelihoods are unnormalized with peak value 1 at zero misfit.  Models
are scalar-valued by convention: a 1D array passed to a likelihood is a
batch of scalar outputs, a 2D array is a batch of vector outputs with
one row per evaluation point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import betaln

from .errors import (ConfigError, NotPositiveDefinite, QuadratureUnderflow,
                     ZeroMeanData)
from .nodes import WeightFn
from .surrogate import Surrogate, evaluate

_LOG_2PI = float(np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# Priors.

@dataclass
class Prior:
    """Normalized prior density with a seeded sampler.

    `weight` carries the search machinery (support box, node-selection
    density); `log_norm` turns its unnormalized log density into the
    proper one.
    """

    weight: WeightFn
    log_norm: float
    kind: str
    params: tuple = ()
    _sampler: Callable = None

    @property
    def dim(self) -> int:
        return self.weight.dim

    def box(self) -> np.ndarray:
        """Bounded search/quadrature box (density cut for unbounded)."""
        return self.weight.search_box()

    def log_density(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        return self.weight.log_density(pts) + self.log_norm

    def density(self, pts) -> np.ndarray:
        return np.exp(self.log_density(pts))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self._sampler is None:
            raise ConfigError(f"prior kind {self.kind!r} has no sampler")
        return self._sampler(n, rng).reshape(n, self.dim)

    @classmethod
    def uniform(cls, box) -> "Prior":
        w = WeightFn.uniform(box)
        b = w.search_box()
        log_vol = float(np.sum(np.log(b[:, 1] - b[:, 0])))

        def draw(n, rng):
            return rng.uniform(b[:, 0], b[:, 1], size=(n, w.dim))

        return cls(w, -log_vol, "uniform", tuple(map(tuple, b)), draw)

    @classmethod
    def normal(cls, mean, std) -> "Prior":
        w = WeightFn.normal(mean, std)
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        std = np.atleast_1d(np.asarray(std, dtype=float))
        log_norm = float(-np.sum(np.log(std)) - 0.5 * mean.size * _LOG_2PI)

        def draw(n, rng):
            return rng.normal(mean, std, size=(n, mean.size))

        return cls(w, log_norm, "normal",
                   (tuple(mean), tuple(std)), draw)

    @classmethod
    def beta(cls, alpha: float, beta: float, box) -> "Prior":
        w = WeightFn.beta(alpha, beta, box)
        b = w.search_box()
        width = float(b[0, 1] - b[0, 0])

        def draw(n, rng):
            return b[0, 0] + width * rng.beta(alpha, beta, size=(n, 1))

        return cls(w, -betaln(alpha, beta) - np.log(width), "beta",
                   (alpha, beta), draw)

    @classmethod
    def from_weight(cls, weight: WeightFn, log_norm: float,
                    sampler=None) -> "Prior":
        return cls(weight, log_norm, "custom", (), sampler)


# ---------------------------------------------------------------------------
# Likelihood maps.

@dataclass
class LikelihoodMap:
    """Map from model output to unnormalized likelihood, with derivative.

    P and log_P accept a scalar, a 1D batch of scalar outputs, or a 2D
    batch of vector outputs.  P_prime is the derivative with respect to a
    scalar output; for vector outputs the gradient is contracted against
    the all-ones direction.
    """

    P: Callable
    log_P: Callable
    P_prime: Callable
    data: np.ndarray
    tag: str

    def lipschitz(self, lo: float, hi: float, n: int = 10_000) -> float:
        """max |P'| over a sweep of the model image [lo, hi]; reported,
        not enforced."""
        u = np.linspace(lo, hi, n)
        return float(np.max(np.abs(self.P_prime(u))))


def _as_batch(u) -> tuple[np.ndarray, bool]:
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return u.reshape(1, 1), True
    if u.ndim == 1:
        return u[:, None], False
    return u, False


def gaussian_likelihood(z, sigma=None, cov=None) -> LikelihoodMap:
    """Gaussian misfit likelihood exp(-0.5 d^T C^-1 d), d_k = z_k - u.

    Pass a scalar standard deviation or a full covariance matrix.  The
    derivative with respect to a scalar model output is (1^T C^-1 d) P,
    so adapting the weight costs no extra model evaluations.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    m = z.size
    if (sigma is None) == (cov is None):
        raise ConfigError("pass exactly one of sigma, cov")
    if cov is None:
        if sigma <= 0:
            raise NotPositiveDefinite("sigma must be positive")
        C = np.eye(m) * float(sigma) ** 2
    else:
        C = np.asarray(cov, dtype=float).reshape(m, m)
        if not np.allclose(C, C.T, rtol=1e-12, atol=0.0):
            raise NotPositiveDefinite("covariance is not symmetric")
        try:
            np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite("covariance is not positive definite")
    Cinv = np.linalg.inv(C)
    ones = np.ones(m)

    def misfit(u):
        batch, scalar = _as_batch(u)
        if batch.shape[1] not in (1, m):
            raise ValueError(f"model output width {batch.shape[1]} "
                             f"does not match {m} data values")
        return z[None, :] - batch, scalar

    def log_P(u):
        d, scalar = misfit(u)
        q = -0.5 * np.einsum("ij,jk,ik->i", d, Cinv, d)
        return float(q[0]) if scalar else q

    def P(u):
        return np.exp(log_P(u))

    def P_prime(u):
        d, scalar = misfit(u)
        pref = d @ Cinv @ ones
        out = pref * np.exp(-0.5 * np.einsum("ij,jk,ik->i", d, Cinv, d))
        return float(out[0]) if scalar else out

    return LikelihoodMap(P, log_P, P_prime, z, "gaussian")


def beta_likelihood(z) -> LikelihoodMap:
    """Bounded polynomial likelihood (1 - e)^2 (1 + e)^2 on |e| < 1.

    e = (mean(z) - u) / mean(z) is the relative misfit; the likelihood
    vanishes outside 0 < u < 2 mean(z).
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zbar = float(z.mean())
    if zbar == 0.0:
        raise ZeroMeanData("beta likelihood requires nonzero data mean")

    def _e(u):
        batch, scalar = _as_batch(u)
        if batch.shape[1] != 1:
            batch = batch.mean(axis=1, keepdims=True)
        return (zbar - batch[:, 0]) / zbar, scalar

    def P(u):
        e, scalar = _e(u)
        inside = np.abs(e) < 1.0
        out = np.where(inside, (1.0 - e**2) ** 2, 0.0)
        return float(out[0]) if scalar else out

    def log_P(u):
        e, scalar = _e(u)
        inside = np.abs(e) < 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(inside, 2.0 * np.log(np.abs(1.0 - e**2)), -np.inf)
        return float(out[0]) if scalar else out

    def P_prime(u):
        e, scalar = _e(u)
        inside = np.abs(e) < 1.0
        out = np.where(inside, 4.0 * e * (1.0 - e**2) / zbar, 0.0)
        return float(out[0]) if scalar else out

    return LikelihoodMap(P, log_P, P_prime, z, "beta")


def peak_normalized(lik: LikelihoodMap) -> LikelihoodMap:
    """Rescale a likelihood so its best attainable value is one.

    Scattered data can push the misfit likelihood to a tiny overall
    scale even at the best possible fit, and a fixed floor added to
    |P'| then drowns the derivative term entirely.  Dividing by the
    peak over scalar outputs removes the arbitrary constant without
    moving the argmax, so downstream node selection behaves the same
    for P and c P.  Maps whose peak is already one come back as is.
    """
    if lik.data is None:
        return lik
    z = np.asarray(lik.data, dtype=float)
    lo, hi = float(z.min()), float(z.max())
    pad = 0.5 * max(hi - lo, 1.0)
    grid = np.linspace(lo - pad, hi + pad, 1 << 15)
    vals = lik.log_P(grid)
    k = int(np.argmax(vals))
    if not np.isfinite(vals[k]):
        raise ConfigError("likelihood vanishes near the data; "
                          "cannot locate its peak")
    res = minimize_scalar(lambda u: -lik.log_P(u), method="bounded",
                          bounds=(grid[max(k - 1, 0)],
                                  grid[min(k + 1, grid.size - 1)]),
                          options={"xatol": 1e-12})
    log_c = max(float(-res.fun), float(vals[k]))
    if abs(log_c) < 1e-12:
        return lik

    def log_P(u):
        return lik.log_P(u) - log_c

    def P(u):
        return np.exp(log_P(u))

    def P_prime(u):
        # P' = P (log P)', rebuilt from the log density: the raw linear
        # P' underflows exactly where the shift is deepest.  Central
        # differences are exact for any log-quadratic likelihood.
        scalar = np.ndim(u) == 0
        uu = np.atleast_1d(np.asarray(u, dtype=float))
        h = 1e-7 * np.maximum(1.0, np.abs(uu))
        scale = np.exp(np.asarray(lik.log_P(uu), dtype=float) - log_c)
        with np.errstate(invalid="ignore"):
            dlog = (np.asarray(lik.log_P(uu + h), dtype=float) -
                    np.asarray(lik.log_P(uu - h), dtype=float)) / (2.0 * h)
            out = np.where(scale == 0.0, 0.0, scale * dlog)
        return float(out[0]) if scalar else out

    return LikelihoodMap(P, log_P, P_prime, lik.data, lik.tag)


# ---------------------------------------------------------------------------
# Adaptive weighting and posteriors.

def adaptive_weight(prior: Prior, lik: LikelihoodMap, s: Surrogate,
                    zeta: float) -> WeightFn:
    """Node-selection weight (|P'(u_N(theta))| + zeta) p(theta).

    The derivative acts on the surrogate, never the true model, so
    refining the weight is free; zeta keeps the weight positive wherever
    the prior is, so the support never collapses.
    """
    if zeta <= 0:
        raise ConfigError("zeta must be positive")
    dim = prior.dim

    def log_fn(pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, dim)
        u = evaluate(s, pts)
        grad = np.abs(lik.P_prime(u))
        return np.log(grad + zeta) + prior.log_density(pts)

    return WeightFn.from_callable(log_fn, dim, box=prior.box())


@dataclass
class PosteriorEval:
    """Unnormalized posterior density with an optional normalizer."""

    log_density_fn: Callable
    prior: Prior
    source: str
    gamma: float = None

    def log_density(self, pts) -> np.ndarray:
        return self.log_density_fn(pts)

    def density(self, pts) -> np.ndarray:
        return np.exp(self.log_density_fn(pts))

    def normalized_density(self, pts) -> np.ndarray:
        if self.gamma is None:
            raise ConfigError("normalize() has not been called")
        return self.density(pts) / self.gamma


def posterior(prior: Prior, lik: LikelihoodMap, model,
              source: str = "true-model") -> PosteriorEval:
    """Unnormalized posterior P(model(theta)) p(theta), tagged by source.

    `model` is a callable over points; a Surrogate works directly and
    tags the result with its node count unless a source is given.
    """
    if isinstance(model, Surrogate) and source == "true-model":
        source = f"surrogate-{len(model)}"
    dim = prior.dim

    def log_density(pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, dim)
        u = _model_values(model, pts)
        return np.asarray(lik.log_P(u)) + prior.log_density(pts)

    return PosteriorEval(log_density, prior, source)


def _model_values(model, pts: np.ndarray) -> np.ndarray:
    if isinstance(model, Surrogate):
        return np.atleast_1d(evaluate(model, pts))
    try:
        out = np.asarray(model(pts), dtype=float)
        if out.ndim >= 1 and out.shape[0] == pts.shape[0]:
            return out if out.ndim > 1 else out.ravel()
    except (TypeError, ValueError):
        pass
    one = pts.ravel() if pts.shape[1] == 1 else pts
    return np.array([float(model(p)) for p in one])


def load_data(path):
    """Data vector from CSV, one measurement per line.

    A single column is returned as the value vector.  Two columns are
    read as (location, value) for vector-valued models and returned as
    a pair of arrays.  Lines starting with '#' are skipped.
    """
    raw = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if raw.shape[1] == 1:
        return raw[:, 0]
    if raw.shape[1] == 2:
        return raw[:, 0], raw[:, 1]
    raise ConfigError(f"expected 1 or 2 columns, found {raw.shape[1]}")


def tensor_gauss_legendre(box, n_per_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre points and weights over a box (d <= 3)."""
    box = np.atleast_2d(np.asarray(box, dtype=float))
    d = box.shape[0]
    if d > 3:
        raise ConfigError("tensor quadrature supported through d = 3")
    t, w = np.polynomial.legendre.leggauss(n_per_dim)
    axes, wts = [], []
    for lo, hi in box:
        axes.append(0.5 * (hi - lo) * t + 0.5 * (hi + lo))
        wts.append(0.5 * (hi - lo) * w)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    weight = np.ones(pts.shape[0])
    for k, wv in enumerate(wts):
        shape = [1] * d
        shape[k] = n_per_dim
        weight = weight * np.broadcast_to(
            wv.reshape(shape), [n_per_dim] * d).ravel()
    return pts, weight


def normalize(pe: PosteriorEval, n_per_dim: int = 200) -> float:
    """Normalizer gamma = integral of the unnormalized density.

    Tensor Gauss-Legendre over the prior box with at least 200 points
    per dimension; stores the value on the PosteriorEval.
    """
    if n_per_dim < 200:
        raise ConfigError("use at least 200 quadrature points per dimension")
    pts, w = tensor_gauss_legendre(pe.prior.box(), n_per_dim)
    gamma = float(w @ pe.density(pts))
    if gamma < 1e-300:
        raise QuadratureUnderflow(f"normalizer underflow: {gamma}")
    pe.gamma = gamma
    return gamma
