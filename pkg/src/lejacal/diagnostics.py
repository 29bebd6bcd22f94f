"""Verification machinery: weighted Lebesgue constants, divergences,
and convergence-rate fits.

The univariate Lebesgue estimator searches every inter-node interval
on a grid and polishes the best bracket by golden section; for two or
more dimensions only a quasi-random grid maximum is computed, which is
a lower bound and is labeled as such.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import qmc

from ._kernels import (KIND_BETA, KIND_NORMAL, KIND_UNIFORM,
                       bary_log_weights, lebesgue_logsum, lebesgue_sweep)
from .errors import ConfigError, DegenerateFit, UnboundedDivergence
from .nodes import WeightFn
from .polybasis import VandermondeQR
from .statmodel import PosteriorEval, normalize, tensor_gauss_legendre

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_KIND_TAGS = {KIND_UNIFORM: "uniform", KIND_NORMAL: "normal",
              KIND_BETA: "beta"}


@dataclass
class LebesgueEstimate:
    """One weighted Lebesgue constant estimate."""

    n_nodes: int
    value: float
    weight_tag: str
    method: str          # "interval-newton" (1D) or "grid" (d >= 2)
    resolution: int
    note: str = ""


@dataclass
class ConvergenceCurve:
    """(N, error) samples with an optional fitted decay rate."""

    points: list
    rate: float = None
    model: str = None
    residual: float = None

    def __post_init__(self):
        self.points = sorted((int(n), float(e)) for n, e in self.points)

    def ns(self) -> np.ndarray:
        return np.array([n for n, _ in self.points], dtype=float)

    def errors(self) -> np.ndarray:
        return np.array([e for _, e in self.points])


def _weight_tag(weight: WeightFn) -> str:
    return _KIND_TAGS.get(weight.kind, "custom")


def _node_points(nodes) -> np.ndarray:
    pts = nodes.points if hasattr(nodes, "points") else np.asarray(
        nodes, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def _golden_max(f, a: float, b: float, iters: int = 40) -> float:
    """Largest f value found by golden-section search on [a, b]."""
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    best = max(f1, f2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        best = max(best, f1, f2)
    return best


def _lebesgue_1d(x: np.ndarray, weight: WeightFn, resolution: int) -> float:
    xs = np.sort(x)
    lo, hi = weight.search_box()[0]
    log_coeff = bary_log_weights(xs) - weight.log_density(xs[:, None])

    def logf(pts):
        pts = np.atleast_1d(pts)
        return weight.log_density(pts[:, None]) \
            + lebesgue_logsum(xs, log_coeff, pts)

    edges = np.concatenate([[lo], xs, [hi]])
    n_int = edges.size - 1
    per = max(64, int(np.ceil(resolution / n_int)))
    pieces = [np.array([lo, hi])]
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            pieces.append(np.linspace(a, b, per + 2)[1:-1])
    grid = np.unique(np.concatenate(pieces))
    vals = logf(grid)
    k = int(np.argmax(vals))
    a = grid[k - 1] if k > 0 else grid[0]
    b = grid[k + 1] if k + 1 < grid.size else grid[-1]
    best = _golden_max(lambda t: float(logf(t)[0]), a, b)
    return max(float(np.exp(max(best, vals[k]))), 1.0)


def _lebesgue_grid(pts: np.ndarray, weight: WeightFn, resolution: int,
                   qr: VandermondeQR, seed: int) -> float:
    box = weight.search_box()
    if qr is None or qr.n_nodes != pts.shape[0]:
        qr = VandermondeQR.from_nodes(pts, box=box)
    basis = qr.interp_basis()
    log_rho_nodes = weight.log_density(pts)

    sampler = qmc.Halton(d=box.shape[0], scramble=False, seed=seed)
    sample = qmc.scale(sampler.random(resolution), box[:, 0], box[:, 1])
    best = 1.0
    for start in range(0, resolution, 20_000):
        chunk = sample[start:start + 20_000]
        phi = basis.eval_matrix(chunk)
        lag = solve_triangular(qr.r_square, qr.q_square.T @ phi.T,
                               lower=False).T
        ratio = np.exp(weight.log_density(chunk)[:, None]
                       - log_rho_nodes[None, :])
        best = max(best, float(np.max(np.sum(ratio * np.abs(lag), axis=1))))
    return best


def lebesgue_constant(nodes, weight: WeightFn, resolution: int = None,
                      seed: int = 0) -> LebesgueEstimate:
    """Weighted Lebesgue constant of a nodal set.

    1D uses the dense interval scan with golden-section polish; higher
    dimensions report the maximum over a quasi-random grid, which can
    only undershoot the true constant.
    """
    pts = _node_points(nodes)
    n, d = pts.shape
    if n < 1:
        raise ConfigError("need at least one node")
    if resolution is None:
        resolution = 1000 if d == 1 else 100_000
    if resolution < 1000:
        raise ConfigError("resolution below 1000 is not meaningful")
    if d == 1:
        value = _lebesgue_1d(pts[:, 0], weight, resolution)
        return LebesgueEstimate(n, value, _weight_tag(weight),
                                "interval-newton", resolution)
    qr = getattr(nodes, "qr", None)
    value = _lebesgue_grid(pts, weight, resolution, qr, seed)
    return LebesgueEstimate(n, value, _weight_tag(weight), "grid",
                            resolution, note="grid maximum; lower bound")


def lebesgue_curve(nodes, weight: WeightFn,
                   pts_per_interval: int = 64) -> list:
    """Estimates for every prefix of a univariate sequence (2 nodes up).

    Family weights run through the incremental sweep kernel; callable
    weights fall back to one scan per prefix.
    """
    pts = _node_points(nodes)
    n, d = pts.shape
    if d != 1 or n < 2:
        raise ConfigError("curves need a univariate sequence of >= 2 nodes")
    tag = _weight_tag(weight)
    if weight.kind is not None and weight.params is not None:
        lo, hi = weight.search_box()[0]
        values = lebesgue_sweep(pts[:, 0], weight.kind,
                                np.asarray(weight.params, dtype=float),
                                lo, hi, pts_per_interval)
        res = pts_per_interval * n
        return [LebesgueEstimate(k + 2, float(v), tag, "interval-newton",
                                 res) for k, v in enumerate(values)]
    return [lebesgue_constant(pts[:k], weight,
                              max(1000, pts_per_interval * (k + 1)))
            for k in range(2, n + 1)]


# ---------------------------------------------------------------------------
# Kullback-Leibler divergence.

def _check_same_support(p: PosteriorEval, q: PosteriorEval) -> np.ndarray:
    bp, bq = p.prior.box(), q.prior.box()
    if bp.shape != bq.shape or not np.allclose(bp, bq, rtol=0, atol=1e-12):
        raise ConfigError("posteriors live on different support boxes")
    return bp


def _kl_from_logs(lp, lq, log_gp, log_gq, weights):
    """Quadrature sum of p log(p/q) with the 0 log 0 = 0 convention."""
    pd = np.exp(lp - log_gp)
    positive = pd > 0.0
    zero_q = np.isneginf(lq) & positive
    if np.any(zero_q & (pd > 1e-12 * pd.max())):
        raise UnboundedDivergence(
            "second density vanishes where the first does not")
    integrand = np.zeros_like(pd)
    ok = positive & ~zero_q
    integrand[ok] = pd[ok] * ((lp[ok] - log_gp) - (lq[ok] - log_gq))
    return float(weights @ integrand)


def kl_divergence(p: PosteriorEval, q: PosteriorEval,
                  n_per_dim: int = 200) -> float:
    """D_KL(p || q) of the normalized densities.

    Tensor Gauss-Legendre through d = 2; d = 3 falls through to the
    quasi-random estimator (value only; call it directly for the
    standard error).
    """
    box = _check_same_support(p, q)
    d = box.shape[0]
    if d > 3:
        raise ConfigError("divergence supported through d = 3")
    if d == 3:
        return kl_divergence_quasirandom(p, q)[0]
    if p.gamma is None:
        normalize(p, n_per_dim)
    if q.gamma is None:
        normalize(q, n_per_dim)
    pts, w = tensor_gauss_legendre(box, n_per_dim)
    return _kl_from_logs(p.log_density(pts), q.log_density(pts),
                         np.log(p.gamma), np.log(q.gamma), w)


def kl_divergence_quasirandom(p: PosteriorEval, q: PosteriorEval,
                              n: int = 1_000_000,
                              seed: int = 0) -> tuple:
    """Quasi-random divergence estimate with a standard error.

    Normalizers come from the same point set, so the value is exact in
    the limit and self-consistent at finite n; the reported error is
    the i.i.d.-sample estimate and is indicative only.
    """
    box = _check_same_support(p, q)
    v = float(np.prod(box[:, 1] - box[:, 0]))
    sampler = qmc.Halton(d=box.shape[0], scramble=False, seed=seed)
    pts = qmc.scale(sampler.random(n), box[:, 0], box[:, 1])
    lp, lq = p.log_density(pts), q.log_density(pts)
    pd, qd = np.exp(lp), np.exp(lq)
    gp, gq = v * pd.mean(), v * qd.mean()
    p.gamma, q.gamma = p.gamma or gp, q.gamma or gq
    positive = pd > 0.0
    zero_q = np.isneginf(lq) & positive
    if np.any(zero_q & (pd > 1e-12 * pd.max())):
        raise UnboundedDivergence(
            "second density vanishes where the first does not")
    terms = np.zeros(n)
    ok = positive & ~zero_q
    terms[ok] = pd[ok] / gp * ((lp[ok] - np.log(gp)) - (lq[ok] - np.log(gq)))
    value = v * terms.mean()
    stderr = v * terms.std() / np.sqrt(n)
    return value, stderr


# ---------------------------------------------------------------------------
# Rate fits.

def fit_rate(curve: ConvergenceCurve, model: str = "exponential") -> float:
    """Least-squares decay rate of an error curve.

    exponential: errors ~ A^{-N}, returns log A (slope of log e vs N).
    algebraic: errors ~ N^{-alpha}, returns alpha (slope vs log N).
    The fit is stored on the curve.
    """
    ns, errs = curve.ns(), curve.errors()
    if ns.size < 4:
        raise ConfigError("rate fits need at least 4 points")
    if np.any(errs <= 0.0):
        raise ConfigError("rate fits need positive errors")
    if model == "exponential":
        x = ns
    elif model == "algebraic":
        if np.any(ns <= 0):
            raise ConfigError("algebraic fits need positive N")
        x = np.log(ns)
    else:
        raise ConfigError(f"unknown rate model {model!r}")
    if np.ptp(x) == 0.0:
        raise DegenerateFit("no spread in the abscissa")
    y = np.log(errs)
    slope, intercept = np.polyfit(x, y, 1)
    curve.rate = float(-slope)
    curve.model = model
    curve.residual = float(np.sqrt(np.mean((y - (slope * x + intercept))
                                           ** 2)))
    return curve.rate


# ---------------------------------------------------------------------------
# CSV output.

def lebesgue_table_csv(path, estimates, comments=()) -> None:
    """Lebesgue estimates as CSV rows: N, value, method, weight-tag."""
    lines = [f"# {c}" for c in comments]
    notes = {e.note for e in estimates if e.note}
    for note in sorted(notes):
        lines.append(f"# note: {note}")
    lines.append("N,value,method,weight-tag")
    for e in estimates:
        lines.append(f"{e.n_nodes},{e.value:.17g},{e.method},{e.weight_tag}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def curve_csv(path, curve: ConvergenceCurve, method: str, weight_tag: str,
              comments=()) -> None:
    """Convergence curve as CSV, rate fit appended as a footer record."""
    lines = [f"# {c}" for c in comments]
    lines.append("N,value,method,weight-tag")
    for n, e in curve.points:
        lines.append(f"{n},{e:.17g},{method},{weight_tag}")
    if curve.rate is not None:
        lines.append(f"# rate-fit,model={curve.model},"
                     f"rate={curve.rate:.12g},residual={curve.residual:.6g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
