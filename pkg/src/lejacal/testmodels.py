"""Forward models for calibration runs and tests.

Three explicit analytic models (Gaussian bump, multivariate Runge,
sinc) and an implicit one: the zero-crossing of the steady viscous
Burgers equation, solved with a second-order finite-volume scheme.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, NonlinearSolveFailure, NoSignChange


@dataclass
class ForwardModel:
    """Deterministic parameter-to-output map with an evaluation counter.

    Calling with a single point returns a scalar; calling with an
    (n, d) batch returns (n,).  The counter advances by the number of
    points evaluated.
    """

    evaluator: Callable
    dim: int
    box: np.ndarray
    cost: str
    name: str
    _count: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock,
                                  repr=False)

    @property
    def evaluations(self) -> int:
        return self._count

    def reset_counter(self) -> None:
        with self._lock:
            self._count = 0

    def __call__(self, theta):
        pts = np.asarray(theta, dtype=float)
        scalar = pts.ndim <= 1 and pts.size == self.dim
        pts = pts.reshape(-1, self.dim)
        with self._lock:
            self._count += pts.shape[0]
        out = self.evaluator(pts)
        return float(out[0]) if scalar else out


def _unit_box(d: int) -> np.ndarray:
    return np.array([[0.0, 1.0]] * d)


def gauss_model(d: int) -> ForwardModel:
    """Gaussian bump exp(-sum (theta_k - 1/2)^2) on the unit cube."""
    if d < 1:
        raise ConfigError("dimension must be at least 1")

    def ev(pts):
        return np.exp(-np.sum((pts - 0.5) ** 2, axis=1))

    return ForwardModel(ev, d, _unit_box(d), "explicit", "gauss")


def runge_model(d: int) -> ForwardModel:
    """Multivariate Runge function 5 / (2 + 50 sum (x_k - 1/2)^2)."""
    if d < 1:
        raise ConfigError("dimension must be at least 1")

    def ev(pts):
        return 5.0 / (2.0 + 50.0 * np.sum((pts - 0.5) ** 2, axis=1))

    return ForwardModel(ev, d, _unit_box(d), "explicit", "runge")


def sinc_model() -> ForwardModel:
    """sin(t)/t on [-2, 2] with a series guard at the origin."""

    def ev(pts):
        t = pts[:, 0]
        small = np.abs(t) < 1e-8
        safe = np.where(small, 1.0, t)
        return np.where(small, 1.0 - t * t / 6.0, np.sin(safe) / safe)

    return ForwardModel(ev, 1, np.array([[-2.0, 2.0]]), "explicit", "sinc")


# ---------------------------------------------------------------------------
# Steady Burgers.

@dataclass
class BurgersConfig:
    """Discretization settings for the steady Burgers solver.

    The equation 0 = nu y'' - y y' lives on [-1, 1] with y(-1) = 1 +
    delta and y(1) = -1.  10^4 cells put the zero-crossing within about
    1e-5, well under the 0.05 data noise it is used against.
    """

    nu: float = 0.1
    cells: int = 10_000
    tol: float = 1e-10
    max_newton: int = 50

    def __post_init__(self):
        if self.nu <= 0:
            raise ConfigError("nu must be positive")
        if self.cells < 100:
            raise ConfigError("use at least 100 cells")


def _burgers_residual(y, yl, yr, nu, h):
    """Per-cell flux imbalance f_{i+1/2} - f_{i-1/2}.

    Interior faces use central averages; boundary faces use the exact
    boundary value and a one-sided quadratic gradient, keeping the
    stencil second order up to the wall.  The imbalance form (no 1/h)
    keeps the rounding floor near 1e-13, so a 1e-10 tolerance is
    meaningful at 10^4 cells.
    """
    avg = 0.5 * (y[:-1] + y[1:])
    flux = 0.5 * avg * avg - nu * (y[1:] - y[:-1]) / h
    fl = 0.5 * yl * yl - nu * (-8.0 * yl / 3.0 + 3.0 * y[0] - y[1] / 3.0) / h
    fr = 0.5 * yr * yr - nu * (8.0 * yr / 3.0 - 3.0 * y[-1] + y[-2] / 3.0) / h
    return np.concatenate([flux, [fr]]) - np.concatenate([[fl], flux])


def _burgers_jacobian(y, nu, h):
    """Tridiagonal Jacobian of the flux imbalance, solve_banded layout."""
    m = y.size
    avg = 0.5 * (y[:-1] + y[1:])
    dfl = 0.5 * avg + nu / h    # d f_{i+1/2} / d y_i
    dfr = 0.5 * avg - nu / h    # d f_{i+1/2} / d y_{i+1}
    band = np.zeros((3, m))
    band[0, 1:] = dfr                     # superdiagonal
    band[1, :-1] = dfl
    band[1, 1:] -= dfr                    # diagonal
    band[2, :-1] = -dfl                   # subdiagonal
    # boundary-face gradients enter the first and last rows
    band[1, 0] += 3.0 * nu / h
    band[0, 1] += -nu / 3.0 / h
    band[1, m - 1] += 3.0 * nu / h
    band[2, m - 2] += -nu / 3.0 / h
    return band


def burgers_solve(cfg: BurgersConfig, delta: float):
    """Cell centers and steady cell averages for one boundary offset.

    Pseudo-transient Newton continuation.  The layer position is
    supersensitive to delta and its pseudo-time drift is exponentially
    slow, so the iteration starts from a boundary-matched tanh layer:
    amplitude near 1 and position from the asymptotic balance of the
    two boundary mismatches, c = (nu/a) asinh(delta e^{a/nu} / 4a).
    Newton then corrects shape and position locally.
    """
    if not -0.5 <= delta <= 0.5:
        raise ConfigError("delta outside the supported range [-0.5, 0.5]")
    m = cfg.cells
    h = 2.0 / m
    x = -1.0 + (np.arange(m) + 0.5) * h
    yl, yr = 1.0 + delta, -1.0

    a0 = 1.0 + 0.5 * abs(delta)
    if delta == 0.0:
        c0 = 0.0
    else:
        log_t = np.log(abs(delta) / (4.0 * a0)) + a0 / cfg.nu
        asl = log_t + np.log(2.0) if log_t > 30.0 \
            else np.arcsinh(np.exp(log_t))
        c0 = float(np.copysign(min(cfg.nu / a0 * asl, 0.95), delta))
    y = -a0 * np.tanh(a0 * (x - c0) / (2.0 * cfg.nu))

    res = _burgers_residual(y, yl, yr, cfg.nu, h)
    norm = norm0 = np.max(np.abs(res))
    dtau = 1.0
    for _ in range(cfg.max_newton):
        if norm <= cfg.tol:
            return x, y
        band = _burgers_jacobian(y, cfg.nu, h)
        band[1] += h / dtau
        step = solve_banded((1, 1), band, -res)
        lam = 1.0
        for _ in range(30):
            trial = y + lam * step
            tres = _burgers_residual(trial, yl, yr, cfg.nu, h)
            tnorm = np.max(np.abs(tres))
            if tnorm < norm:
                break
            lam *= 0.5
        if tnorm < norm:
            y, res, norm = trial, tres, tnorm
            dtau = min(norm0 / norm, 1e14)   # switched evolution relaxation
        else:
            dtau = max(dtau / 4.0, 1e-6)     # retry with a stiffer shift
    if norm <= cfg.tol:
        return x, y
    raise NonlinearSolveFailure(
        f"residual {norm:.3e} after {cfg.max_newton} Newton steps")


def _locate_zero(x, y) -> float:
    """First sign change of a sampled profile, linearly interpolated."""
    sign = np.sign(y)
    idx = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    if idx.size == 0:
        exact = np.flatnonzero(y == 0.0)
        if exact.size:
            return float(x[exact[0]])
        raise NoSignChange("profile does not cross zero")
    i = idx[0]
    return float(x[i] + (x[i + 1] - x[i]) * y[i] / (y[i] - y[i + 1]))


def burgers_zero_crossing(cfg: BurgersConfig, delta: float) -> float:
    """Location where the steady solution changes sign.

    Linear interpolation between the bracketing cell centers, matching
    the second-order accuracy of the averages themselves.
    """
    return _locate_zero(*burgers_solve(cfg, delta))


def burgers_model(cfg: BurgersConfig = None) -> ForwardModel:
    """Zero-crossing map delta -> x0 over the calibration prior box."""
    cfg = cfg or BurgersConfig()

    def ev(pts):
        return np.array([burgers_zero_crossing(cfg, d) for d in pts[:, 0]])

    return ForwardModel(ev, 1, np.array([[0.0, 0.1]]), "implicit-pde",
                        "burgers")


# ---------------------------------------------------------------------------
# Data generation.

def generate_data(model: ForwardModel, truth, sigma: float, n: int,
                  seed: int, recipe: str = "output-noise") -> np.ndarray:
    """Seeded synthetic measurements of the model output.

    output-noise: z_k = u(truth) + N(0, sigma^2) draws.
    parameter-noise: perturb the parameter instead, z_k = u(theta_k)
    with theta_k ~ N(truth, sigma^2) redrawn until inside the model box
    (univariate models only).
    """
    if n < 1:
        raise ConfigError("need at least one measurement")
    rng = np.random.default_rng(seed)
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if recipe == "output-noise":
        center = model(truth)
        return center + sigma * rng.standard_normal(n)
    if recipe == "parameter-noise":
        if model.dim != 1:
            raise ConfigError("parameter-noise recipe is univariate")
        lo, hi = model.box[0]
        draws = np.empty(n)
        for k in range(n):
            while True:
                t = truth[0] + sigma * rng.standard_normal()
                if lo <= t <= hi:
                    draws[k] = t
                    break
        return np.asarray(model(draws[:, None]))
    raise ConfigError(f"unknown recipe {recipe!r}")
