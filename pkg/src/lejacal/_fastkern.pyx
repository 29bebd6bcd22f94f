# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled twins of the univariate hot kernels.

Same contracts as `lejacal._slowkern` (see there for the objective
convention).  The Lebesgue scans avoid transcendental calls in the inner
loop by carrying products and sums as (mantissa, base-2 exponent) pairs;
one log per evaluation point remains.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport (INFINITY, exp, fabs, floor, frexp, ldexp, log,
                        log1p, sqrt)

from .errors import ConvergenceFailure

cnp.import_array()

KIND_UNIFORM = 0
KIND_NORMAL = 1
KIND_BETA = 2

TIE_TOL = 1e-12

cdef double _TIE = 1e-12
cdef double _LN2 = 0.6931471805599453094


# ---------------------------------------------------------------------------
# Builtin weight families (log densities up to an additive constant).

cdef inline double _logrho(int kind, const double* p, double x) noexcept:
    cdef double t, w
    if kind == 0:
        return 0.0 if (x >= p[0] and x <= p[1]) else -INFINITY
    if kind == 1:
        t = (x - p[0]) / p[1]
        return -0.5 * t * t
    w = p[3] - p[2]
    t = (x - p[2]) / w
    if t <= 0.0 or t >= 1.0:
        return -INFINITY
    return (p[0] - 1.0) * log(t) + (p[1] - 1.0) * log1p(-t)


cdef inline double _dlogrho(int kind, const double* p, double x) noexcept:
    cdef double t, w
    if kind == 0:
        return 0.0
    if kind == 1:
        return -(x - p[0]) / (p[1] * p[1])
    w = p[3] - p[2]
    t = (x - p[2]) / w
    return ((p[0] - 1.0) / t - (p[1] - 1.0) / (1.0 - t)) / w


cdef inline double _d2logrho(int kind, const double* p, double x) noexcept:
    cdef double t, w
    if kind == 0:
        return 0.0
    if kind == 1:
        return -1.0 / (p[1] * p[1])
    w = p[3] - p[2]
    t = (x - p[2]) / w
    return (-(p[0] - 1.0) / (t * t)
            - (p[1] - 1.0) / ((1.0 - t) * (1.0 - t))) / (w * w)


cdef double _g_value(double x, const double[::1] nodes, int kind,
                     const double* p) noexcept:
    """Log objective log rho(x) + sum_k log |x - x_k|."""
    cdef double s = _logrho(kind, p, x)
    cdef double d
    cdef Py_ssize_t k
    for k in range(nodes.shape[0]):
        d = fabs(x - nodes[k])
        if d == 0.0:
            return -INFINITY
        s += log(d)
    return s


# ---------------------------------------------------------------------------
# Newton search for the next univariate node.

cdef int _newton_interval(double xl, double xr, const double[::1] nodes,
                          int kind, const double* p, double scale,
                          double* out_x) noexcept:
    """Safeguarded Newton for g'(x) = 0 on (xl, xr); 1 on success."""
    cdef double x = 0.5 * (xl + xr)
    cdef double tiny = 1e-15 * scale
    cdef double g1, g2, xn, diff
    cdef Py_ssize_t k, n = nodes.shape[0]
    cdef int it
    for it in range(100):
        g1 = _dlogrho(kind, p, x)
        g2 = _d2logrho(kind, p, x)
        for k in range(n):
            diff = x - nodes[k]
            g1 += 1.0 / diff
            g2 -= 1.0 / (diff * diff)
        if g1 <= 0.0:
            xr = x
        else:
            xl = x
        xn = x - g1 / g2
        if not (xn == xn and xn > xl and xn < xr):
            xn = 0.5 * (xl + xr)
        if fabs(g1) < 1e-13 or fabs(xn - x) < tiny or (xr - xl) < tiny:
            out_x[0] = x
            return 1
        x = xn
    return 0


cdef tuple _newton_max_1d(const double[::1] nodes, double lo, double hi,
                          int kind, const double* p):
    """(x_best, g_best) over [lo, hi]; ties within 1e-12 pick smallest x."""
    cdef Py_ssize_t n = nodes.shape[0]
    cdef double scale = hi - lo
    cdef cnp.ndarray[double, ndim=1] xs = np.sort(np.asarray(nodes))
    cdef double[::1] xv = xs

    cdef cnp.ndarray[double, ndim=1] cand_x = np.empty(n + 3)
    cdef cnp.ndarray[double, ndim=1] cand_g = np.empty(n + 3)
    cdef Py_ssize_t m = 0
    cdef double edge, gval, left, right, xl, xr, xsol
    cdef double mind
    cdef Py_ssize_t i, k

    for edge in (lo, hi):
        mind = INFINITY
        for k in range(n):
            if fabs(nodes[k] - edge) < mind:
                mind = fabs(nodes[k] - edge)
        if n > 0 and mind <= 1e-15 * scale:
            continue
        gval = _g_value(edge, nodes, kind, p)
        if gval > -INFINITY and gval == gval:
            cand_x[m] = edge
            cand_g[m] = gval
            m += 1

    cdef double eps = 1e-12 * scale
    for i in range(n + 1):
        left = lo if i == 0 else xv[i - 1]
        right = hi if i == n else xv[i]
        if right - left <= 1e-13 * scale:
            continue
        xl = left + eps
        xr = right - eps
        if xl >= xr:
            continue
        if not _newton_interval(xl, xr, nodes, kind, p, scale, &xsol):
            raise ConvergenceFailure(
                "Newton failed to settle in some interval within "
                "100 iterations")
        cand_x[m] = xsol
        cand_g[m] = _g_value(xsol, nodes, kind, p)
        m += 1

    cdef double top = -INFINITY
    for i in range(m):
        if cand_g[i] > top:
            top = cand_g[i]
    if top == -INFINITY:
        raise ConvergenceFailure("objective is -inf everywhere searched")
    cdef double bx = INFINITY, bg = 0.0
    for i in range(m):
        if cand_g[i] >= top - _TIE and cand_x[i] < bx:
            bx = cand_x[i]
            bg = cand_g[i]
    return bx, bg


def leja_extend_1d(nodes, Py_ssize_t n_new, double lo, double hi,
                   int kind, params):
    """Extend a univariate weighted Leja sequence by n_new nodes.

    `nodes` is in generation order and must be nonempty; the result keeps
    generation order.  Only the builtin weight families are supported here.
    """
    cdef cnp.ndarray[double, ndim=1] pv = \
        np.ascontiguousarray(params, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] out = \
        np.array(nodes, dtype=np.float64).ravel().copy()
    if out.size == 0:
        raise ValueError("need at least the initial node")
    cdef Py_ssize_t i
    cdef double x, g
    for i in range(n_new):
        x, g = _newton_max_1d(out, lo, hi, kind, &pv[0])
        out = np.append(out, x)
    return out


# ---------------------------------------------------------------------------
# Weighted Lebesgue function machinery.

def bary_log_weights(nodes):
    """log |w_k| of the barycentric weights 1 / prod_{j != k} (x_k - x_j)."""
    cdef cnp.ndarray[double, ndim=1] xs = \
        np.ascontiguousarray(nodes, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n)
    cdef double m
    cdef int e, ex
    cdef Py_ssize_t k, j
    for k in range(n):
        m = 1.0
        e = 0
        for j in range(n):
            if j == k:
                continue
            m *= fabs(xs[k] - xs[j])
            m = frexp(m, &ex)
            e += ex
        out[k] = -(log(m) + e * _LN2)
    return out


cdef void _coeff_split(const double[::1] log_coeff, double[::1] cm,
                       long[::1] ce) noexcept:
    """exp(log_coeff_k) as mantissa in [1, 2) times 2^exponent."""
    cdef Py_ssize_t k
    cdef double lc, e
    for k in range(log_coeff.shape[0]):
        lc = log_coeff[k]
        if lc == -INFINITY:
            cm[k] = 0.0
            ce[k] = 0
            continue
        e = floor(lc / _LN2)
        cm[k] = exp(lc - e * _LN2)
        ce[k] = <long> e


cdef long _coeff_shift(const double[::1] log_coeff,
                       double[::1] cm2) noexcept:
    """exp(log_coeff_k - E ln 2) with E = floor(max / ln 2); returns E.

    Entries more than ~1074 binary orders below the largest flush to zero.
    That is safe for Lebesgue sums: the distance ratios multiplying them
    are bounded far below 2^1074, so flushed terms never matter.
    """
    cdef Py_ssize_t k, n = log_coeff.shape[0]
    cdef double top = -INFINITY
    cdef double shift
    cdef long e
    for k in range(n):
        if log_coeff[k] > top:
            top = log_coeff[k]
    if top == -INFINITY:
        for k in range(n):
            cm2[k] = 0.0
        return 0
    e = <long> floor(top / _LN2)
    shift = e * _LN2
    for k in range(n):
        cm2[k] = exp(log_coeff[k] - shift)
    return e


cdef double _logsum_point_scaled(double x, const double[::1] nodes,
                                 const double[::1] cm, const long[::1] ce,
                                 double[::1] dbuf) noexcept:
    """Fully scaled evaluation; handles points arbitrarily close to nodes."""
    cdef Py_ssize_t n = nodes.shape[0]
    cdef double pm = 1.0
    cdef long pe = 0
    cdef int ex, de
    cdef double d, dm, tm, sm
    cdef long te, se, shift
    cdef Py_ssize_t k

    for k in range(n):
        d = fabs(x - nodes[k])
        if d == 0.0:
            return -INFINITY
        dbuf[k] = d
        pm *= d
        pm = frexp(pm, &ex)
        pe += ex

    sm = 0.0
    se = 0
    for k in range(n):
        if cm[k] == 0.0:
            continue
        dm = frexp(dbuf[k], &de)
        tm = pm / dm * cm[k]
        te = pe - de + ce[k]
        if sm == 0.0:
            sm = tm
            se = te
        else:
            shift = te - se
            if shift > 64:
                sm = tm + ldexp(sm, <int> (-shift if shift < 1074 else -1074))
                se = te
            elif shift < -64:
                if shift > -1074:
                    sm += ldexp(tm, <int> shift)
            else:
                sm += ldexp(tm, <int> shift)
        sm = frexp(sm, &ex)
        se += ex
    if sm == 0.0:
        return -INFINITY
    return log(sm) + se * _LN2


cdef double _logsum_point(double x, const double[::1] nodes,
                          const double[::1] cm2, long ce_max,
                          const double[::1] cm, const long[::1] ce,
                          double[::1] dbuf) noexcept:
    """log sum_k c_k prod_{j != k} |x - x_j|; -inf on exact node hits.

    Product pass renormalizes lazily; the summation pass runs in plain
    doubles on the pre-shifted coefficients.  Points within 1e-100 of a
    node take the fully scaled fallback.
    """
    cdef Py_ssize_t n = nodes.shape[0]
    cdef double pm = 1.0
    cdef long pe = 0
    cdef int ex
    cdef double d, acc
    cdef Py_ssize_t k

    for k in range(n):
        d = fabs(x - nodes[k])
        if d < 1e-100:
            return _logsum_point_scaled(x, nodes, cm, ce, dbuf)
        dbuf[k] = d
        pm *= d
        if pm > 1e99 or pm < 1e-99:
            pm = frexp(pm, &ex)
            pe += ex

    acc = 0.0
    for k in range(n):
        acc += cm2[k] / dbuf[k]
    if acc == 0.0:
        return -INFINITY
    return log(pm) + log(acc) + (pe + ce_max) * _LN2


def lebesgue_logsum(nodes, log_coeff, xs):
    """log S(x) with S(x) = sum_k exp(log_coeff_k) prod_{j != k} |x - x_j|.

    With log_coeff_k = log|w_k| - log rho(x_k) this is the weighted Lebesgue
    function divided by rho(x).  Points that coincide exactly with a node
    are reported as -inf; the true function value there is rho-independent
    and equal to 1, which callers account for separately.
    """
    cdef double[::1] nv = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef double[::1] lc = np.ascontiguousarray(log_coeff, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] xa = \
        np.ascontiguousarray(xs, dtype=np.float64).ravel()
    cdef Py_ssize_t n = nv.shape[0], npts = xa.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(npts)
    cdef double[::1] cm = np.empty(n)
    cdef long[::1] ce = np.empty(n, dtype=np.int64)
    cdef double[::1] cm2 = np.empty(n)
    cdef double[::1] dbuf = np.empty(n)
    cdef Py_ssize_t i
    cdef long ce_max
    _coeff_split(lc, cm, ce)
    ce_max = _coeff_shift(lc, cm2)
    for i in range(npts):
        out[i] = _logsum_point(xa[i], nv, cm2, ce_max, cm, ce, dbuf)
    shape = np.asarray(xs).shape
    return out.reshape(shape)


def lebesgue_sweep(nodes, int kind, params, double lo, double hi,
                   Py_ssize_t pts_per_interval=64, pts_coarse=None,
                   Py_ssize_t n_switch=200, int refine_iters=32):
    """Weighted Lebesgue constants of every prefix of a node sequence.

    Returns an array of length len(nodes) - 1: entry i is the estimate for
    the first i + 2 nodes.  The scan uses pts_per_interval grid points per
    inter-node interval; passing pts_coarse drops to that density once the
    prefix exceeds n_switch nodes (a speed knob for rough sweeps).  The
    best bracket is always refined by golden section.
    """
    cdef cnp.ndarray[double, ndim=1] seq = \
        np.ascontiguousarray(np.asarray(nodes, dtype=np.float64).ravel())
    cdef cnp.ndarray[double, ndim=1] pv = \
        np.ascontiguousarray(params, dtype=np.float64)
    cdef Py_ssize_t n_total = seq.shape[0]
    cdef Py_ssize_t p_coarse = \
        pts_per_interval if pts_coarse is None else <Py_ssize_t> pts_coarse
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n_total - 1)

    # Working state for the current prefix, kept sorted.
    cdef cnp.ndarray[double, ndim=1] sx = np.empty(n_total)
    cdef cnp.ndarray[double, ndim=1] lwb = np.empty(n_total)
    cdef cnp.ndarray[double, ndim=1] lcf = np.empty(n_total)
    cdef cnp.ndarray[double, ndim=1] cm = np.empty(n_total)
    cdef cnp.ndarray[long, ndim=1] ce = np.empty(n_total, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] cm2 = np.empty(n_total)
    cdef cnp.ndarray[double, ndim=1] dbuf = np.empty(n_total)
    cdef Py_ssize_t grid_cap = 2 + (n_total + 1) * \
        (pts_per_interval if pts_per_interval >= p_coarse else p_coarse)
    cdef cnp.ndarray[double, ndim=1] grid = np.empty(grid_cap)

    cdef double invphi = (sqrt(5.0) - 1.0) / 2.0
    cdef Py_ssize_t n, k, j, pos, pts, ng, best
    cdef double x_new, wn, left, right, step, val, best_val
    cdef double a, b, c, d, fc, fd
    cdef double[::1] sxv, cmv, cm2v, dbv
    cdef long[::1] cev
    cdef long ce_max

    if seq[0] <= seq[1]:
        sx[0], sx[1] = seq[0], seq[1]
    else:
        sx[0], sx[1] = seq[1], seq[0]
    lwb[0] = -log(fabs(sx[0] - sx[1]))
    lwb[1] = lwb[0]

    for n in range(2, n_total + 1):
        if n > 2:
            x_new = seq[n - 1]
            wn = 0.0
            pos = n - 1
            for k in range(n - 1):
                lwb[k] -= log(fabs(sx[k] - x_new))
                wn -= log(fabs(x_new - sx[k]))
                if x_new < sx[k] and pos == n - 1:
                    pos = k
            for k in range(n - 1, pos, -1):
                sx[k] = sx[k - 1]
                lwb[k] = lwb[k - 1]
            sx[pos] = x_new
            lwb[pos] = wn

        for k in range(n):
            lcf[k] = lwb[k] - _logrho(kind, &pv[0], sx[k])
        _coeff_split(lcf[:n], cm[:n], ce[:n])
        ce_max = _coeff_shift(lcf[:n], cm2[:n])
        sxv, cmv, cm2v, cev, dbv = sx[:n], cm[:n], cm2[:n], ce[:n], dbuf[:n]

        # Scan grid: sorted by construction (edges, then interval interiors).
        pts = pts_per_interval if n <= n_switch else p_coarse
        ng = 0
        if lo < sx[0]:
            grid[ng] = lo
            ng += 1
        for j in range(n + 1):
            left = lo if j == 0 else sx[j - 1]
            right = hi if j == n else sx[j]
            step = (right - left) / (pts + 1.0)
            for k in range(1, pts + 1):
                grid[ng] = left + step * k
                ng += 1
        if hi > sx[n - 1]:
            grid[ng] = hi
            ng += 1

        best = 0
        best_val = -INFINITY
        for j in range(ng):
            val = _logsum_point(grid[j], sxv, cm2v, ce_max, cmv, cev, dbv) \
                + _logrho(kind, &pv[0], grid[j])
            if val > best_val:
                best_val = val
                best = j

        a = grid[best - 1] if best > 0 else grid[best]
        b = grid[best + 1] if best < ng - 1 else grid[best]
        if a > b:
            a, b = b, a
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc = _logsum_point(c, sxv, cm2v, ce_max, cmv, cev, dbv) + _logrho(kind, &pv[0], c)
        fd = _logsum_point(d, sxv, cm2v, ce_max, cmv, cev, dbv) + _logrho(kind, &pv[0], d)
        for j in range(refine_iters):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = _logsum_point(c, sxv, cm2v, ce_max, cmv, cev, dbv) \
                    + _logrho(kind, &pv[0], c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = _logsum_point(d, sxv, cm2v, ce_max, cmv, cev, dbv) \
                    + _logrho(kind, &pv[0], d)
        if fc > best_val:
            best_val = fc
        if fd > best_val:
            best_val = fd

        # The function equals 1 exactly at the nodes themselves.
        val = exp(best_val)
        out[n - 2] = val if val > 1.0 else 1.0

    return out
