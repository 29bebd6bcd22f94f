"""Polynomial interpolants over nodal sequences.

A surrogate stores the model values at the nodes together with one of two
representations: signed barycentric weights (univariate, unconditionally
stable to evaluate) or coefficients with respect to the graded basis
(any dimension, solved through the stored QR factors).  Both paths exist
in 1D so they can be checked against each other.

Evaluation outside the domain box is permitted (samplers may propose
slightly outside before prior rejection) but is unreliable and reported
as such by the diagnostics layer, not here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import bary_log_weights
from .errors import ConfigError, SingularMatrix
from .nodes import NodalSequence
from .polybasis import TensorBasis, VandermondeQR

FORMAT_VERSION = 1

NODE_GUARD = 1e-14  # fraction of box width treated as "at a node"


@dataclass
class Surrogate:
    """Interpolating polynomial through model values at a nodal sequence."""

    nodes: NodalSequence
    values: np.ndarray
    box: np.ndarray
    representation: str
    bary_w: np.ndarray = None
    coeffs: np.ndarray = None
    basis: TensorBasis = None

    @property
    def dim(self) -> int:
        return self.nodes.points.shape[1]

    def __len__(self) -> int:
        return self.nodes.points.shape[0]

    def __call__(self, x):
        return evaluate(self, x)


def _signed_bary_weights(x: np.ndarray) -> np.ndarray:
    """Barycentric weights, scaled so the largest magnitude is 1.

    The common scale drops out of the barycentric quotient, and shifting
    by the largest log magnitude keeps exp() in range for long sequences.
    """
    logw = bary_log_weights(x)
    n_above = (x[:, None] < x[None, :]).sum(axis=1)
    sign = np.where(n_above % 2 == 0, 1.0, -1.0)
    return sign * np.exp(logw - logw.max())


def build(nodes: NodalSequence, values, box=None, method: str = "auto",
          family: str = "legendre") -> Surrogate:
    """Interpolant through `values` at the points of `nodes`.

    method: "auto" picks barycentric in 1D and coefficients otherwise;
    either can be forced by name (barycentric is 1D only).  The box
    defaults to the one stored with the sequence's QR factors, else to
    the hull of the nodes.
    """
    values = np.asarray(values, dtype=float).ravel()
    pts = nodes.points
    n, d = pts.shape
    if values.size != n:
        raise ValueError(f"{values.size} values for {n} nodes")

    if box is None:
        if nodes.qr is not None and nodes.qr.basis.box is not None:
            box = nodes.qr.basis.box
        else:
            box = np.column_stack([pts.min(axis=0), pts.max(axis=0)])
    box = np.asarray(box, dtype=float).reshape(d, 2)

    if method == "auto":
        method = "barycentric" if d == 1 else "coefficients"
    if method == "barycentric":
        if d != 1:
            raise ConfigError("barycentric representation is univariate only")
        x = pts.ravel()
        if np.unique(x).size != n:
            raise SingularMatrix("coincident interpolation nodes")
        return Surrogate(nodes, values, box, "barycentric",
                         bary_w=_signed_bary_weights(x))
    if method != "coefficients":
        raise ConfigError(f"unknown representation {method!r}")

    qr = nodes.qr
    reuse = (qr is not None and qr.n_nodes == n
             and qr.basis.family == family and qr.basis.box is not None
             and np.array_equal(np.asarray(qr.basis.box, float).reshape(d, 2),
                                box))
    if not reuse:
        qr = VandermondeQR.from_nodes(pts, box=box, family=family)
    coeffs = qr.solve(values)
    return Surrogate(nodes, values, box, "coefficients",
                     coeffs=coeffs, basis=qr.interp_basis())


def evaluate(s: Surrogate, x):
    """u_N at a point (scalar or shape (d,)) or a batch (m, d).

    Exact at the nodes; within NODE_GUARD of a univariate node the nodal
    value is returned directly to avoid the 0/0 barycentric limit.
    """
    x = np.asarray(x, dtype=float)
    scalar_in = x.ndim == 0 or (x.ndim == 1 and s.dim > 1)
    pts = np.atleast_2d(x.reshape(-1, s.dim) if x.ndim else x)
    pts = pts.reshape(-1, s.dim)

    if s.representation == "barycentric":
        out = _eval_bary(s, pts.ravel())
    else:
        out = s.basis.eval_matrix(pts) @ s.coeffs
    return float(out[0]) if scalar_in else out


def _eval_bary(s: Surrogate, x: np.ndarray) -> np.ndarray:
    nodes = s.nodes.points.ravel()
    guard = NODE_GUARD * (s.box[0, 1] - s.box[0, 0])
    diff = x[:, None] - nodes[None, :]
    adiff = np.abs(diff)
    near = adiff <= guard
    hit = near.any(axis=1)
    safe = np.where(near, 1.0, diff)
    terms = s.bary_w[None, :] / safe
    # guarded rows may cancel to 0/0; they are overwritten just below
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (terms @ s.values) / terms.sum(axis=1)
    if hit.any():
        out[hit] = s.values[np.argmin(adiff[hit], axis=1)]
    return out


def sup_error(s: Surrogate, truth, weight, grid) -> float:
    """max over the grid of weight(x) |u_N(x) - truth(x)|.

    `truth` may be vectorized over a batch or accept single points;
    weight=None means the unweighted sup norm.
    """
    grid = np.asarray(grid, dtype=float).reshape(-1, s.dim)
    if grid.size == 0:
        raise ValueError("empty audit grid")
    approx = evaluate(s, grid)
    exact = _eval_model(truth, grid)
    err = np.abs(approx - exact)
    if weight is not None:
        err = err * np.exp(weight.log_density(grid))
    return float(err.max())


def _eval_model(fn, grid: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(fn(grid), dtype=float).ravel()
        if out.size == grid.shape[0]:
            return out
    except (TypeError, ValueError):
        pass
    one = grid.ravel() if grid.shape[1] == 1 else grid
    return np.array([float(fn(p)) for p in one])


def audit_grid(box, rng_seed: int = 0) -> np.ndarray:
    """Standard sup-norm audit grid for a box.

    Tensor grid with 1000 points per dimension through d = 2; beyond that
    a quasi-random set of 10^5 points.
    """
    box = np.atleast_2d(np.asarray(box, dtype=float))
    d = box.shape[0]
    if d <= 2:
        axes = [np.linspace(lo, hi, 1000) for lo, hi in box]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])
    from scipy.stats import qmc

    u = qmc.Halton(d, scramble=False, seed=rng_seed).random(100_000)
    return box[:, 0] + u * (box[:, 1] - box[:, 0])


# ---------------------------------------------------------------------------
# Serialization: structured text, one record per line, exact float roundtrip.

def save(s: Surrogate, path) -> None:
    """Write a surrogate to a text file (reloadable without the model)."""
    lines = [f"format {FORMAT_VERSION}",
             f"dim {s.dim}",
             f"representation {s.representation}",
             f"family {s.basis.family if s.basis is not None else 'legendre'}",
             "ordering graded-reverse-lex",
             f"sequence {s.nodes.kind} {s.nodes.rng_seed}"]
    for lo, hi in s.box:
        lines.append(f"box {lo:.17g} {hi:.17g}")
    lines.append(f"nodes {len(s)}")
    for p in s.nodes.points:
        lines.append(" ".join(f"{c:.17g}" for c in p))
    lines.append(f"values {len(s)}")
    lines.extend(f"{v:.17g}" for v in s.values)
    payload = s.bary_w if s.representation == "barycentric" else s.coeffs
    lines.append(f"payload {payload.size}")
    lines.extend(f"{v:.17g}" for v in payload)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load(path) -> Surrogate:
    """Reload a surrogate written by `save`."""
    with open(path) as fh:
        toks = [ln.split() for ln in fh if ln.strip()]
    it = iter(toks)

    def expect(tag):
        row = next(it)
        if row[0] != tag:
            raise ConfigError(f"surrogate file: expected {tag}, got {row[0]}")
        return row[1:]

    version = int(expect("format")[0])
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported surrogate format {version}")
    d = int(expect("dim")[0])
    rep = expect("representation")[0]
    family = expect("family")[0]
    expect("ordering")
    seq_kind, seq_seed = expect("sequence")
    box = np.array([[float(v) for v in expect("box")] for _ in range(d)])
    n = int(expect("nodes")[0])
    pts = np.array([[float(v) for v in next(it)] for _ in range(n)])
    n_val = int(expect("values")[0])
    values = np.array([float(next(it)[0]) for _ in range(n_val)])
    n_pay = int(expect("payload")[0])
    payload = np.array([float(next(it)[0]) for _ in range(n_pay)])

    seq = NodalSequence(pts.reshape(n, d), seq_kind, int(seq_seed))
    if rep == "barycentric":
        return Surrogate(seq, values, box, rep, bary_w=payload)
    qr = VandermondeQR.from_nodes(seq.points, box=box, family=family)
    return Surrogate(seq, values, box, rep, coeffs=payload,
                     basis=qr.interp_basis())
