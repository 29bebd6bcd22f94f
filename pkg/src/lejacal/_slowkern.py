"""Pure numpy implementations of the univariate hot kernels.

These mirror the compiled extension `lejacal._fastkern` exactly in behavior:
weighted Leja extension by safeguarded Newton per inter-node interval, and
weighted Lebesgue-function scans with barycentric bookkeeping.  The compiled
module is preferred at import time by `lejacal._kernels`; this module keeps
the package fully functional without a compiler, at reduced speed.

Objective convention: a new node maximizes

    g(x) = log rho(x) + sum_k log |x - x_k|

over the weight's (possibly cut) support box.  Ties within 1e-12 in the log
objective resolve to the smallest x.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceFailure

KIND_UNIFORM = 0  # params: a, b
KIND_NORMAL = 1   # params: mu, sigma
KIND_BETA = 2     # params: alpha, beta, a, b

TIE_TOL = 1e-12
_CHUNK = 4096


# ---------------------------------------------------------------------------
# Builtin weight families (log densities up to an additive constant, so that
# scaling the weight never changes anything downstream).

def family_logrho(kind, params, x):
    x = np.asarray(x, dtype=float)
    if kind == KIND_UNIFORM:
        a, b = params[0], params[1]
        out = np.where((x >= a) & (x <= b), 0.0, -np.inf)
        return out
    if kind == KIND_NORMAL:
        mu, sigma = params[0], params[1]
        t = (x - mu) / sigma
        return -0.5 * t * t
    if kind == KIND_BETA:
        alpha, beta, a, b = params[0], params[1], params[2], params[3]
        t = (x - a) / (b - a)
        inside = (t > 0.0) & (t < 1.0)
        out = np.full(x.shape, -np.inf)
        ts = t[inside]
        out[inside] = (alpha - 1.0) * np.log(ts) + (beta - 1.0) * np.log1p(-ts)
        return out
    raise ValueError(f"unknown weight kind {kind}")


def family_dlogrho(kind, params, x):
    x = np.asarray(x, dtype=float)
    if kind == KIND_UNIFORM:
        return np.zeros_like(x)
    if kind == KIND_NORMAL:
        mu, sigma = params[0], params[1]
        return -(x - mu) / (sigma * sigma)
    if kind == KIND_BETA:
        alpha, beta, a, b = params[0], params[1], params[2], params[3]
        w = b - a
        t = (x - a) / w
        return ((alpha - 1.0) / t - (beta - 1.0) / (1.0 - t)) / w
    raise ValueError(f"unknown weight kind {kind}")


def family_d2logrho(kind, params, x):
    x = np.asarray(x, dtype=float)
    if kind == KIND_UNIFORM:
        return np.zeros_like(x)
    if kind == KIND_NORMAL:
        sigma = params[1]
        return np.full_like(x, -1.0 / (sigma * sigma))
    if kind == KIND_BETA:
        alpha, beta, a, b = params[0], params[1], params[2], params[3]
        w = b - a
        t = (x - a) / w
        return (-(alpha - 1.0) / t**2 - (beta - 1.0) / (1.0 - t) ** 2) / w**2
    raise ValueError(f"unknown weight kind {kind}")


# ---------------------------------------------------------------------------
# Newton search for the next univariate node.

def _g_values(x, nodes, logw):
    """Log objective at points x for the current node set."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = np.abs(x[:, None] - nodes[None, :])
    with np.errstate(divide="ignore"):
        s = np.sum(np.log(d), axis=1)
    return logw(x) + s


def newton_max_1d(nodes, lo, hi, logw, dlogw, d2logw, max_iter=100):
    """Maximize g(x) = logw(x) + sum log|x - x_k| over [lo, hi].

    One safeguarded Newton solve of g'(x) = 0 per open interval between
    consecutive sorted nodes (plus the two tail intervals), run for all
    intervals simultaneously.  Requires g concave per interval, which holds
    for the log-concave builtin families.

    Returns (x_best, g_best).
    """
    nodes = np.asarray(nodes, dtype=float)
    xs = np.sort(nodes)
    scale = hi - lo
    edges = np.concatenate([[lo], xs, [hi]])
    lefts, rights = edges[:-1], edges[1:]
    keep = (rights - lefts) > 1e-13 * scale
    lefts, rights = lefts[keep], rights[keep]

    cand_x: list[float] = []
    cand_g: list[float] = []

    # Box edges are candidates in their own right when the weight is
    # positive there and the edge is not already a node.
    for edge in (lo, hi):
        if nodes.size and np.min(np.abs(nodes - edge)) <= 1e-15 * scale:
            continue
        gval = float(_g_values(edge, nodes, logw)[0])
        if np.isfinite(gval):
            cand_x.append(edge)
            cand_g.append(gval)

    if lefts.size:
        eps = 1e-12 * scale
        xl = lefts + eps
        xr = rights - eps
        ok = xl < xr
        xl, xr = xl[ok], xr[ok]
        x = 0.5 * (xl + xr)
        tiny = 1e-15 * scale

        def derivs(z):
            diff = z[:, None] - nodes[None, :]
            g1 = dlogw(z) + np.sum(1.0 / diff, axis=1)
            g2 = d2logw(z) - np.sum(1.0 / diff**2, axis=1)
            return g1, g2

        done = np.zeros(x.shape, dtype=bool)
        for _ in range(max_iter):
            g1, g2 = derivs(x)
            move_left = g1 <= 0.0
            xl = np.where(done | move_left, xl, x)
            xr = np.where(done | ~move_left, xr, x)
            with np.errstate(divide="ignore", invalid="ignore"):
                xn = x - g1 / g2
            bad = ~np.isfinite(xn) | (xn <= xl) | (xn >= xr)
            xn = np.where(bad, 0.5 * (xl + xr), xn)
            newly = (np.abs(g1) < 1e-13) | (np.abs(xn - x) < tiny) \
                | ((xr - xl) < tiny)
            x = np.where(done | newly, x, xn)
            done |= newly
            if done.all():
                break
        else:
            raise ConvergenceFailure(
                "Newton failed to settle in some interval within "
                f"{max_iter} iterations")

        gx = _g_values(x, nodes, logw)
        cand_x.extend(x.tolist())
        cand_g.extend(gx.tolist())

    return _select_smallest_tie(np.array(cand_x), np.array(cand_g))


def _select_smallest_tie(xs, gs):
    finite = np.isfinite(gs)
    if not finite.any():
        raise ConvergenceFailure("objective is -inf everywhere searched")
    xs, gs = xs[finite], gs[finite]
    top = gs.max()
    near = gs >= top - TIE_TOL
    i = np.argmin(xs[near])
    return float(xs[near][i]), float(gs[near][i])


def maximize_callback_1d(nodes, lo, hi, logw, seeds_per_interval=24,
                         golden_iters=80, newton_polish=8):
    """Next-node search for an arbitrary vectorized log weight.

    Seed scan per interval, golden-section on the seed bracket, then a short
    finite-difference Newton polish on the derivative of the log objective.
    Kinks (e.g. from |P'|) are handled by the derivative-free stage; the
    polish only runs while it improves the objective.

    Returns (x_best, g_best).
    """
    nodes = np.asarray(nodes, dtype=float)
    xs = np.sort(nodes)
    scale = hi - lo
    edges = np.concatenate([[lo], xs, [hi]])
    lefts, rights = edges[:-1], edges[1:]
    keep = (rights - lefts) > 1e-13 * scale
    lefts, rights = lefts[keep], rights[keep]

    cand_x: list[float] = []
    cand_g: list[float] = []
    for edge in (lo, hi):
        if nodes.size and np.min(np.abs(nodes - edge)) <= 1e-15 * scale:
            continue
        gval = float(_g_values(edge, nodes, logw)[0])
        if np.isfinite(gval):
            cand_x.append(edge)
            cand_g.append(gval)

    if lefts.size:
        m = lefts.size
        s = seeds_per_interval
        frac = (np.arange(1, s + 1)) / (s + 1.0)
        seeds = lefts[:, None] + (rights - lefts)[:, None] * frac[None, :]
        gseeds = _g_values(seeds.ravel(), nodes, logw).reshape(m, s)
        gseeds = np.where(np.isfinite(gseeds), gseeds, -np.inf)
        best = np.argmax(gseeds, axis=1)
        lo_i = np.maximum(best - 1, 0)
        hi_i = np.minimum(best + 1, s - 1)
        a = np.where(best == 0, lefts + 1e-13 * scale,
                     seeds[np.arange(m), lo_i])
        b = np.where(best == s - 1, rights - 1e-13 * scale,
                     seeds[np.arange(m), hi_i])
        a0, b0 = a.copy(), b.copy()  # polish bounds: the pre-golden bracket

        # Golden-section maximization, all intervals at once.
        invphi = (np.sqrt(5.0) - 1.0) / 2.0
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc = _g_values(c, nodes, logw)
        fd = _g_values(d, nodes, logw)
        for _ in range(golden_iters):
            takec = fc >= fd
            b = np.where(takec, d, b)
            a = np.where(takec, a, c)
            c_new = b - invphi * (b - a)
            d_new = a + invphi * (b - a)
            # one probe per interval: the other interior point is inherited
            x_eval = np.where(takec, c_new, d_new)
            f_eval = _g_values(x_eval, nodes, logw)
            fc, fd = (np.where(takec, f_eval, fd),
                      np.where(takec, fc, f_eval))
            c, d = c_new, d_new
            if np.max(b - a) < 1e-12 * scale:
                break
        x = 0.5 * (a + b)
        gx = _g_values(x, nodes, logw)

        # Newton polish with finite-difference weight derivatives.
        h = 1e-7 * scale
        for _ in range(newton_polish):
            wp = logw(x + h)
            wm = logw(x - h)
            w0 = logw(x)
            dl = (wp - wm) / (2.0 * h)
            d2l = (wp - 2.0 * w0 + wm) / (h * h)
            diff = x[:, None] - nodes[None, :]
            g1 = dl + np.sum(1.0 / diff, axis=1)
            g2 = d2l - np.sum(1.0 / diff**2, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                xn = x - g1 / g2
            ok = np.isfinite(xn) & (xn > a0) & (xn < b0)
            xn = np.where(ok, xn, x)
            gn = _g_values(xn, nodes, logw)
            better = gn > gx
            x = np.where(better, xn, x)
            gx = np.where(better, gn, gx)
            if not better.any():
                break

        cand_x.extend(x.tolist())
        cand_g.extend(gx.tolist())

    return _select_smallest_tie(np.array(cand_x), np.array(cand_g))


def leja_extend_1d(nodes, n_new, lo, hi, kind, params):
    """Extend a univariate weighted Leja sequence by n_new nodes.

    `nodes` is in generation order and must be nonempty; the result keeps
    generation order.  Only the builtin weight families are supported here.
    """
    params = np.asarray(params, dtype=float)
    out = np.array(nodes, dtype=float).ravel().copy()
    if out.size == 0:
        raise ValueError("need at least the initial node")

    def logw(x):
        return family_logrho(kind, params, x)

    def dlogw(x):
        return family_dlogrho(kind, params, x)

    def d2logw(x):
        return family_d2logrho(kind, params, x)

    for _ in range(n_new):
        x, _g = newton_max_1d(out, lo, hi, logw, dlogw, d2logw)
        out = np.append(out, x)
    return out


# ---------------------------------------------------------------------------
# Weighted Lebesgue function machinery.

def bary_log_weights(nodes):
    """log |w_k| of the barycentric weights 1 / prod_{j != k} (x_k - x_j)."""
    nodes = np.asarray(nodes, dtype=float)
    d = np.abs(nodes[:, None] - nodes[None, :])
    np.fill_diagonal(d, 1.0)
    return -np.sum(np.log(d), axis=1)


def lebesgue_logsum(nodes, log_coeff, xs):
    """log S(x) with S(x) = sum_k exp(log_coeff_k) prod_{j != k} |x - x_j|.

    With log_coeff_k = log|w_k| - log rho(x_k) this is the weighted Lebesgue
    function divided by rho(x).  Points that coincide exactly with a node
    are reported as -inf; the true function value there is rho-independent
    and equal to 1, which callers account for separately.
    """
    nodes = np.asarray(nodes, dtype=float)
    log_coeff = np.asarray(log_coeff, dtype=float)
    xs = np.asarray(xs, dtype=float)
    out = np.empty(xs.shape)
    for start in range(0, xs.size, _CHUNK):
        x = xs[start:start + _CHUNK]
        d = np.abs(x[:, None] - nodes[None, :])
        hit = (d == 0.0).any(axis=1)
        d[d == 0.0] = 1.0
        logd = np.log(d)
        logp = np.sum(logd, axis=1)
        terms = log_coeff[None, :] + logp[:, None] - logd
        peak = np.max(terms, axis=1)
        s = np.sum(np.exp(terms - peak[:, None]), axis=1)
        vals = peak + np.log(s)
        vals[hit] = -np.inf
        out[start:start + _CHUNK] = vals
    return out


def _scan_points(sorted_nodes, lo, hi, pts_per_interval):
    """Interior grid points per inter-node interval plus finite box edges."""
    edges = np.concatenate([[lo], sorted_nodes, [hi]])
    lefts, rights = edges[:-1], edges[1:]
    frac = np.arange(1, pts_per_interval + 1) / (pts_per_interval + 1.0)
    pts = (lefts[:, None] + (rights - lefts)[:, None] * frac[None, :]).ravel()
    extra = []
    if lo < sorted_nodes[0]:
        extra.append(lo)
    if hi > sorted_nodes[-1]:
        extra.append(hi)
    if extra:
        pts = np.concatenate([pts, extra])
    return pts


def lebesgue_sweep(nodes, kind, params, lo, hi, pts_per_interval=64,
                   pts_coarse=None, n_switch=200, refine_iters=32):
    """Weighted Lebesgue constants of every prefix of a node sequence.

    Returns an array of length len(nodes) - 1: entry i is the estimate for
    the first i + 2 nodes.  The scan uses pts_per_interval grid points per
    inter-node interval; passing pts_coarse drops to that density once the
    prefix exceeds n_switch nodes (a speed knob for rough sweeps).  The
    best bracket is always refined by golden section.
    """
    nodes = np.asarray(nodes, dtype=float).ravel()
    params = np.asarray(params, dtype=float)
    n_total = nodes.size
    out = np.empty(n_total - 1)

    sorted_x = np.sort(nodes[:2])
    logw_bary = bary_log_weights(sorted_x)

    invphi = (np.sqrt(5.0) - 1.0) / 2.0

    for n in range(2, n_total + 1):
        if n > 2:
            x_new = nodes[n - 1]
            logw_bary = logw_bary - np.log(np.abs(sorted_x - x_new))
            w_new = -np.sum(np.log(np.abs(x_new - sorted_x)))
            pos = np.searchsorted(sorted_x, x_new)
            sorted_x = np.insert(sorted_x, pos, x_new)
            logw_bary = np.insert(logw_bary, pos, w_new)

        log_coeff = logw_bary - family_logrho(kind, params, sorted_x)
        pts = pts_per_interval if pts_coarse is None or n <= n_switch \
            else pts_coarse
        grid = np.sort(_scan_points(sorted_x, lo, hi, pts))
        lam_log = lebesgue_logsum(sorted_x, log_coeff, grid) \
            + family_logrho(kind, params, grid)
        best = int(np.argmax(lam_log))
        best_val = lam_log[best]

        # Golden refinement between the grid neighbors of the best point.
        a = grid[best - 1] if best > 0 else grid[best]
        b = grid[best + 1] if best < grid.size - 1 else grid[best]
        if a > b:
            a, b = b, a

        def lam(x):
            x = np.atleast_1d(x)
            return lebesgue_logsum(sorted_x, log_coeff, x) \
                + family_logrho(kind, params, x)

        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = float(lam(c)[0]), float(lam(d)[0])
        for _ in range(refine_iters):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = float(lam(c)[0])
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = float(lam(d)[0])
        best_val = max(best_val, fc, fd)

        # The function equals 1 exactly at the nodes themselves.
        out[n - 2] = max(np.exp(best_val), 1.0)

    return out
