"""Nodal sequence generation.

Univariate weighted Leja sequences are grown by maximizing

    g(x) = log w(x) + sum_k log |x - x_k|

per inter-node interval (safeguarded Newton for the builtin log-concave
weight families, seed-scan plus golden section plus Newton polish for
arbitrary callables, e.g. the adaptive posterior-driven weights).  In
d >= 2 the determinant objective is maximized over a sampled candidate
set scored against the incremental QR state.  Clenshaw-Curtis grids are
provided as the non-adaptive reference family.

Weighted Leja sequences are nested by construction, deterministic under a
fixed seed, and invariant under positive scaling of the weight: scaling
enters through a stored log offset that node selection never reads, which
makes the invariance exact rather than merely numerical.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from . import _kernels
from ._kernels import KIND_BETA, KIND_NORMAL, KIND_UNIFORM
from ._slowkern import family_logrho, maximize_callback_1d
from .errors import AllCandidatesSingular, UnboundedSearch
from .polybasis import VandermondeQR

# Density drop defining the search box for unbounded weights (e^-40 cut).
UNBOUNDED_LOG_CUT = 40.0
TIE_TOL = 1e-12
# Sampled candidate scores carry O(offset^2) noise from where the draws
# happen to land, so symmetric maxima tie only to within this window.
CANDIDATE_TIE_TOL = 1e-7


@dataclass
class WeightFn:
    """Non-negative weighting function on R^d.

    `log_fn` maps an (m, d) array to (m,) log values (-inf where the weight
    vanishes).  `box` is the support bounding box, or None for unbounded
    supports with finite moments.  `kind`/`params` tag one of the builtin
    univariate families so the compiled kernels can be used; `mode` is a
    known global maximizer (the lexicographically smallest one if several
    are known).  `log_offset` carries multiplicative rescalings; selection
    logic ignores it by construction.
    """

    log_fn: callable
    dim: int
    box: np.ndarray = None
    kind: int = None
    params: np.ndarray = None
    mode: np.ndarray = None
    log_offset: float = 0.0

    # -- constructors ---------------------------------------------------

    @classmethod
    def uniform(cls, box) -> "WeightFn":
        box = np.atleast_2d(np.asarray(box, dtype=float))
        dim = box.shape[0]

        def log_fn(pts):
            pts = np.atleast_2d(pts)
            inside = np.all((pts >= box[:, 0]) & (pts <= box[:, 1]), axis=1)
            return np.where(inside, 0.0, -np.inf)

        kind = KIND_UNIFORM if dim == 1 else None
        params = box[0].copy() if dim == 1 else None
        return cls(log_fn, dim, box=box, kind=kind, params=params,
                   mode=box[:, 0].copy())

    @classmethod
    def normal(cls, mean, std) -> "WeightFn":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        std = np.atleast_1d(np.asarray(std, dtype=float))
        dim = mean.size

        def log_fn(pts):
            pts = np.atleast_2d(pts)
            t = (pts - mean) / std
            return -0.5 * np.sum(t * t, axis=1)

        kind = KIND_NORMAL if dim == 1 else None
        params = np.array([mean[0], std[0]]) if dim == 1 else None
        return cls(log_fn, dim, box=None, kind=kind, params=params,
                   mode=mean.copy())

    @classmethod
    def beta(cls, alpha: float, beta: float, box) -> "WeightFn":
        box = np.atleast_2d(np.asarray(box, dtype=float))
        if box.shape[0] != 1:
            raise ValueError("beta weight is univariate")
        a, b = box[0]
        params = np.array([alpha, beta, a, b])

        def log_fn(pts):
            pts = np.atleast_2d(pts)
            return family_logrho(KIND_BETA, params, pts[:, 0])

        if alpha > 1.0 and beta > 1.0:
            m = a + (alpha - 1.0) / (alpha + beta - 2.0) * (b - a)
        elif alpha <= 1.0:
            m = a  # mode at an edge; ties resolve to the smaller one
        else:
            m = b
        return cls(log_fn, 1, box=box, kind=KIND_BETA, params=params,
                   mode=np.array([m]))

    @classmethod
    def from_callable(cls, log_fn, dim, box=None, mode=None) -> "WeightFn":
        box = None if box is None else np.atleast_2d(np.asarray(box, float))
        mode = None if mode is None else np.atleast_1d(np.asarray(mode, float))
        return cls(log_fn, dim, box=box, mode=mode)

    # -- evaluation -------------------------------------------------------

    def log_density(self, pts) -> np.ndarray:
        """Log weight including any scaling offset; -inf where zero."""
        return self.log_fn(np.atleast_2d(np.asarray(pts, float))) \
            + self.log_offset

    def density(self, pts) -> np.ndarray:
        return np.exp(self.log_density(pts))

    def selection_log_density(self, pts) -> np.ndarray:
        """Log weight as seen by node selection: scaling-free."""
        return self.log_fn(np.atleast_2d(np.asarray(pts, float)))

    def scaled(self, c: float) -> "WeightFn":
        """The weight multiplied by c > 0.

        Node selection is exactly invariant under this: the factor lives in
        `log_offset`, which selection never consults.
        """
        if not c > 0:
            raise ValueError("scale factor must be positive")
        return replace(self, log_offset=self.log_offset + math.log(c))

    # -- support geometry -------------------------------------------------

    @property
    def bounded(self) -> bool:
        return self.box is not None

    def search_box(self) -> np.ndarray:
        """Box to search for nodes: the support box, or the e^-40 cut.

        For unbounded supports the region is where log w stays within 40 of
        its value at the mode; outside, the super-polynomial decay of the
        weight dominates every polynomial factor in the objective.
        """
        if self.box is not None:
            return self.box
        if self.kind == KIND_NORMAL:
            mu, sigma = self.params
            half = math.sqrt(2.0 * UNBOUNDED_LOG_CUT) * sigma
            return np.array([[mu - half, mu + half]])
        if self.mode is not None:
            return self._expand_from_mode()
        raise UnboundedSearch(
            "unbounded weight without a known mode: no finite search region")

    def _expand_from_mode(self) -> np.ndarray:
        peak = float(self.selection_log_density(self.mode[None, :])[0])
        target = peak - UNBOUNDED_LOG_CUT
        box = np.empty((self.dim, 2))
        for k in range(self.dim):
            for j, sign in enumerate((-1.0, 1.0)):
                h = 1.0
                for _ in range(64):
                    probe = self.mode.copy()
                    probe[k] += sign * h
                    if self.selection_log_density(probe[None, :])[0] <= target:
                        break
                    h *= 2.0
                else:
                    raise UnboundedSearch(
                        "weight does not decay along coordinate "
                        f"{k}: no finite search region")
                box[k, j] = self.mode[k] + sign * h
        return box


@dataclass
class NodalSequence:
    """An ordered, pairwise-distinct set of interpolation nodes.

    `points` has shape (n, d) in generation order.  Generation is nested:
    rerunning with the same inputs and seed reproduces every prefix
    bitwise.  `qr` carries the incremental determinant state when the
    sequence was grown by candidate scoring.
    """

    points: np.ndarray
    kind: str
    rng_seed: int = 0
    qr: VandermondeQR = None

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def x(self) -> np.ndarray:
        """Flat view of univariate nodes."""
        if self.dim != 1:
            raise ValueError("x view requires univariate nodes")
        return self.points[:, 0]

    def append(self, point, qr=None) -> "NodalSequence":
        pt = np.asarray(point, dtype=float).reshape(1, -1)
        return NodalSequence(np.vstack([self.points, pt]), self.kind,
                             self.rng_seed, qr if qr is not None else self.qr)

    def to_csv(self, path) -> None:
        """Write one row per node, 17 significant digits."""
        with open(path, "w") as fh:
            fh.write(",".join(f"x_{k + 1}" for k in range(self.dim)) + "\n")
            for row in self.points:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, kind: str = "univariate-leja") -> "NodalSequence":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data, kind)


@dataclass
class GenerationSettings:
    """Knobs for sequence generation; defaults follow the standard setup."""

    n_candidates: int = 20000
    seed: int = 0
    force_candidates: bool = False  # route d=1 through the sampler too
    with_qr: bool = False


def initial_node(w: WeightFn) -> np.ndarray:
    """Global maximizer of the weight; lexicographically smallest among ties.

    Builtin families are resolved analytically (the uniform family ties
    everywhere, so its mode is pinned to the lower corner).  Callables are
    scanned on a dense grid over the search box, with a strict-improvement
    golden refinement in 1D.
    """
    if w.mode is not None:
        return w.mode.copy()
    box = w.search_box()

    if w.dim == 1:
        grid = np.linspace(box[0, 0], box[0, 1], 100001)
        vals = w.selection_log_density(grid[:, None])
        best = _smallest_tie_point(grid[:, None], vals)
        refined = _golden_refine_1d(w, box, float(best[0]))
        return refined

    per_dim = max(2, int(round(2e5 ** (1.0 / w.dim))))
    if w.dim <= 3:
        axes = [np.linspace(box[k, 0], box[k, 1], per_dim)
                for k in range(w.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
    else:
        sampler = qmc.Halton(d=w.dim, scramble=False)
        sampler.fast_forward(1)
        u = sampler.random(200000)
        pts = box[:, 0] + u * (box[:, 1] - box[:, 0])
    vals = w.selection_log_density(pts)
    return _smallest_tie_point(pts, vals)


def _smallest_tie_point(pts, vals):
    if not np.isfinite(vals).any():
        raise UnboundedSearch("weight is zero everywhere on the search grid")
    top = np.max(vals)
    near = np.flatnonzero(vals >= top - TIE_TOL)
    rows = pts[near]
    order = np.lexsort(rows.T[::-1])
    return rows[order[0]].copy()


def _golden_refine_1d(w, box, x0: float, iters: int = 60) -> np.ndarray:
    """Polish a grid argmax; keep the grid point unless strictly improved."""
    width = (box[0, 1] - box[0, 0]) / 100000.0
    a = max(box[0, 0], x0 - width)
    b = min(box[0, 1], x0 + width)
    g0 = float(w.selection_log_density(np.array([[x0]]))[0])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c_, d_ = b - invphi * (b - a), a + invphi * (b - a)
    fc = float(w.selection_log_density(np.array([[c_]]))[0])
    fd = float(w.selection_log_density(np.array([[d_]]))[0])
    for _ in range(iters):
        if fc >= fd:
            b, d_, fd = d_, c_, fc
            c_ = b - invphi * (b - a)
            fc = float(w.selection_log_density(np.array([[c_]]))[0])
        else:
            a, c_, fc = c_, d_, fd
            d_ = a + invphi * (b - a)
            fd = float(w.selection_log_density(np.array([[d_]]))[0])
    xr, gr = (c_, fc) if fc >= fd else (d_, fd)
    return np.array([xr]) if gr > g0 else np.array([x0])


def next_node_1d(seq: NodalSequence, w: WeightFn) -> np.ndarray:
    """Next univariate weighted Leja node for the given sequence."""
    box = w.search_box()
    lo, hi = float(box[0, 0]), float(box[0, 1])
    nodes = seq.x
    if w.kind is not None:
        extended = _kernels.leja_extend_1d(nodes, 1, lo, hi,
                                           w.kind, w.params)
        return np.array([extended[-1]])

    def logw(x):
        return w.selection_log_density(np.asarray(x)[:, None])

    x, _ = maximize_callback_1d(nodes, lo, hi, logw)
    return np.array([x])


def next_node_nd(seq: NodalSequence, w: WeightFn, n_candidates: int,
                 rng: np.random.Generator, candidates=None) -> np.ndarray:
    """Next node by candidate sampling against the determinant objective.

    Candidates are half quasi-random (Halton, cursor advanced by the current
    node count so reruns and extensions see identical draws) and half
    uniform from the given generator.  An explicit `candidates` array
    overrides sampling.  Scores within 1e-7 of the best are treated as ties
    of symmetric maxima sampled at slightly different offsets and resolve
    to the lexicographically smallest point.
    """
    if seq.qr is None or seq.qr.n_nodes != len(seq):
        raise ValueError("sequence carries no matching QR state")
    box = w.search_box()
    if candidates is None:
        k_half = n_candidates // 2
        widths = box[:, 1] - box[:, 0]
        sampler = qmc.Halton(d=seq.dim, scramble=False)
        sampler.fast_forward(1 + len(seq) * k_half)
        hal = box[:, 0] + sampler.random(k_half) * widths
        uni = rng.uniform(box[:, 0], box[:, 1],
                          size=(n_candidates - k_half, seq.dim))
        parts = [hal, uni]
        # Box corners are frequent exact maximizers (e.g. uniform weights);
        # random draws never hit them, so add them deterministically.
        if seq.dim <= 6:
            corners = np.array(list(itertools.product(*box)))
            parts.append(corners)
        candidates = np.vstack(parts)
    else:
        candidates = np.atleast_2d(np.asarray(candidates, dtype=float))

    scores = w.selection_log_density(candidates) \
        + seq.qr.candidate_logdet_batch(candidates)
    if not np.isfinite(scores).any():
        raise AllCandidatesSingular(
            "every candidate is singular or outside the weight's support")
    return _select_candidate(candidates, scores, box)


def _select_candidate(candidates, scores, box):
    """Best candidate, merging near-ties into peaks before the tie-break.

    Scores within CANDIDATE_TIE_TOL of the maximum may be (a) samples on
    the flat top of one peak or (b) samples of several symmetric peaks that
    tie in exact arithmetic.  Near-ties are clustered by position; each
    cluster is represented by its best-scoring sample, and among cluster
    representatives the lexicographically smallest point wins.
    """
    i_star = int(np.argmax(scores))
    near = np.flatnonzero(scores >= scores[i_star] - CANDIDATE_TIE_TOL)
    if near.size == 1:
        return candidates[i_star].copy()
    gap = 1e-3 * np.linalg.norm(box[:, 1] - box[:, 0])
    pts, sc = candidates[near], scores[near]
    order = np.argsort(-sc, kind="stable")
    reps: list[np.ndarray] = []
    for idx in order:
        p = pts[idx]
        if all(np.linalg.norm(p - r) > gap for r in reps):
            reps.append(p)
    rep_pts = np.array(reps)
    sel = np.lexsort(rep_pts.T[::-1])[0]
    return rep_pts[sel].copy()


def generate_sequence(w: WeightFn, count: int,
                      cfg: GenerationSettings = None) -> NodalSequence:
    """Weighted Leja sequence of the given length.

    d = 1 uses the per-interval Newton/golden machinery; d >= 2 (or
    force_candidates) scores sampled candidates against the QR state.  The
    result is nested and bitwise reproducible for a fixed seed.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    cfg = cfg or GenerationSettings()
    x0 = initial_node(w)
    dim = w.dim

    if dim == 1 and not cfg.force_candidates:
        box = w.search_box()
        lo, hi = float(box[0, 0]), float(box[0, 1])
        if w.kind is not None:
            nodes = _kernels.leja_extend_1d(np.array([x0[0]]), count - 1,
                                            lo, hi, w.kind, w.params)
            pts = nodes[:, None]
        else:
            def logw(x):
                return w.selection_log_density(np.asarray(x)[:, None])

            acc = [float(x0[0])]
            for _ in range(count - 1):
                x, _ = maximize_callback_1d(np.array(acc), lo, hi, logw)
                acc.append(x)
            pts = np.array(acc)[:, None]
        seq = NodalSequence(pts, "univariate-leja", cfg.seed)
        if cfg.with_qr:
            seq.qr = VandermondeQR.from_nodes(pts, box=w.search_box())
        return seq

    qr = VandermondeQR.empty(dim, box=w.search_box())
    qr = qr.append(x0)
    seq = NodalSequence(x0[None, :], "multivariate-leja", cfg.seed, qr)
    for _ in range(count - 1):
        rng = np.random.default_rng([cfg.seed, len(seq)])
        x = next_node_nd(seq, w, cfg.n_candidates, rng)
        seq = seq.append(x, qr=seq.qr.append(x))
    return seq


def clenshaw_curtis(count: int, box) -> NodalSequence:
    """Chebyshev-extrema nodes mapped onto the interval, sorted ascending."""
    if count < 1:
        raise ValueError("count must be at least 1")
    box = np.atleast_2d(np.asarray(box, dtype=float))
    a, b = box[0]
    if count == 1:
        t = np.array([0.0])
    else:
        # sin form keeps the grid exactly symmetric with an exact midpoint
        k = np.arange(count)
        half = count // 2
        t = np.empty(count)
        ang = np.pi * (2.0 * k[:half] - (count - 1)) / (2.0 * (count - 1))
        t[:half] = np.sin(ang)
        t[count - half:] = -t[:half][::-1]
        if count % 2 == 1:
            t[half] = 0.0
    pts = 0.5 * (a + b) + 0.5 * (b - a) * t
    return NodalSequence(pts[:, None], "clenshaw-curtis")
