"""Polynomial basis bookkeeping and incremental interpolation-matrix QR.

Multi-indices are enumerated degree by degree; within a degree block the
order is graded reverse lexicographic: scanning exponents from the last
coordinate to the first, the index whose first differing exponent is
smaller comes first.  The enumeration is prefix-stable, so a basis of size
n is always the first n entries of any larger basis.

The QR state tracks a tall matrix with one row per basis function and one
column per node, kept one basis function ahead of the node count.  Scoring
a candidate node against it gives the log determinant growth of the
interpolation matrix without refactorizing, and appending a node is a
single Gram-Schmidt step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import SingularMatrix

# Relative residual below which a candidate column counts as dependent.
DEPENDENT_TOL = 1e-14
# Batch scoring computes residuals by subtraction, which bottoms out near
# sqrt(eps); below this the batch path flags a candidate as dependent.
BATCH_DEPENDENT_TOL = 1e-7
# Reconstruction drift that triggers a Householder refactorization.
REFACTOR_TOL = 1e-8


def _degree_block(dim: int, degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples of the given total degree, in grevlex order."""

    def compositions(total, parts):
        if parts == 1:
            yield (total,)
            return
        for head in range(total + 1):
            for tail in compositions(total - head, parts - 1):
                yield (head,) + tail

    return sorted(compositions(degree, dim), key=lambda e: e[::-1])


@dataclass(frozen=True)
class MultiIndexSet:
    """A prefix of the grevlex enumeration of multi-indices.

    Attributes
    ----------
    dim : int
        Number of coordinates per index.
    exponents : ndarray of shape (count, dim)
        Exponent rows, grevlex-ordered.
    """

    dim: int
    exponents: np.ndarray

    def __len__(self) -> int:
        return self.exponents.shape[0]

    def __getitem__(self, i):
        return tuple(int(e) for e in self.exponents[i])

    def __iter__(self):
        for row in self.exponents:
            yield tuple(int(e) for e in row)

    @property
    def total_degrees(self) -> np.ndarray:
        return self.exponents.sum(axis=1)

    @property
    def max_degree(self) -> int:
        return int(self.exponents.max(initial=0))

    def prefix(self, count: int) -> "MultiIndexSet":
        if count > len(self):
            raise ValueError("prefix longer than index set")
        return MultiIndexSet(self.dim, self.exponents[:count])


def enumerate_basis(dim: int, count: int) -> MultiIndexSet:
    """First `count` multi-indices in `dim` variables, grevlex-ordered.

    Parameters
    ----------
    dim : int
        Number of variables, at least 1.
    count : int
        Number of indices to return, at least 1.

    Returns
    -------
    MultiIndexSet
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if count < 1:
        raise ValueError("count must be at least 1")
    rows: list[tuple[int, ...]] = []
    degree = 0
    while len(rows) < count:
        rows.extend(_degree_block(dim, degree))
        degree += 1
    return MultiIndexSet(dim, np.array(rows[:count], dtype=np.int64))


def _map_to_reference(points: np.ndarray, box: np.ndarray) -> np.ndarray:
    """Affine map from a bounding box onto [-1, 1] per coordinate."""
    lo, hi = box[:, 0], box[:, 1]
    return (2.0 * points - (lo + hi)) / (hi - lo)


def _recurrence_table(t: np.ndarray, max_degree: int, family: str) -> np.ndarray:
    """Univariate basis values up to max_degree, shape (npts, max_degree+1)."""
    npts = t.shape[0]
    table = np.empty((npts, max_degree + 1))
    table[:, 0] = 1.0
    if max_degree == 0:
        return table
    table[:, 1] = t
    if family in ("legendre", "monomial"):
        for n in range(1, max_degree):
            if family == "legendre":
                table[:, n + 1] = (
                    (2 * n + 1) * t * table[:, n] - n * table[:, n - 1]
                ) / (n + 1)
            else:
                table[:, n + 1] = t * table[:, n]
    elif family == "hermite":
        # Probabilists' Hermite: He_{n+1} = t He_n - n He_{n-1}.
        for n in range(1, max_degree):
            table[:, n + 1] = t * table[:, n] - n * table[:, n - 1]
    else:
        raise ValueError(f"unknown basis family: {family!r}")
    return table


@dataclass
class TensorBasis:
    """Tensorized univariate basis over a multi-index set.

    Bounded boxes are mapped affinely onto [-1, 1] per coordinate before the
    univariate family is evaluated; the Hermite family instead standardizes
    by a location and scale per coordinate.
    """

    indices: MultiIndexSet
    box: np.ndarray = None
    family: str = "legendre"
    loc: np.ndarray = None
    scale: np.ndarray = None

    def __post_init__(self):
        d = self.indices.dim
        if self.family == "hermite":
            self.loc = np.zeros(d) if self.loc is None else np.asarray(self.loc, float)
            self.scale = np.ones(d) if self.scale is None else np.asarray(self.scale, float)
        else:
            if self.box is None:
                self.box = np.column_stack([-np.ones(d), np.ones(d)])
            else:
                self.box = np.asarray(self.box, dtype=float).reshape(d, 2)

    def eval_matrix(self, points: np.ndarray) -> np.ndarray:
        """Evaluate every basis function at every point.

        Parameters
        ----------
        points : ndarray of shape (npts, dim) or (dim,)

        Returns
        -------
        ndarray of shape (npts, len(indices))
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.indices.dim:
            raise ValueError("point dimension does not match basis")
        if self.family == "hermite":
            ref = (pts - self.loc) / self.scale
        else:
            ref = _map_to_reference(pts, self.box)
        exps = self.indices.exponents
        out = np.ones((pts.shape[0], len(self.indices)))
        for k in range(self.indices.dim):
            maxdeg = int(exps[:, k].max(initial=0))
            table = _recurrence_table(ref[:, k], maxdeg, self.family)
            out *= table[:, exps[:, k]]
        return out


def eval_basis(basis, x, box=None, family: str = "legendre") -> np.ndarray:
    """Evaluate a multi-index basis at one point or a batch of points.

    `basis` may be a MultiIndexSet or anything convertible to exponent rows.
    With no box the reference box [-1, 1]^d is used.
    """
    if not isinstance(basis, MultiIndexSet):
        exps = np.atleast_2d(np.asarray(basis, dtype=np.int64))
        basis = MultiIndexSet(exps.shape[1], exps)
    tb = TensorBasis(basis, box=box, family=family)
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    vals = tb.eval_matrix(x)
    return vals[0] if single else vals


@dataclass
class VandermondeQR:
    """Incrementally maintained QR of the interpolation matrix.

    With n nodes the tracked matrix has n+1 basis rows and n node columns,
    so the next basis function is already present for candidate scoring.
    The square factors of the current n-by-n interpolation system are kept
    alongside for solves.  Appending returns a new state; existing states
    are never mutated.
    """

    basis: TensorBasis
    points: np.ndarray
    matrix: np.ndarray          # (n+1, n) tall: rows basis, cols nodes
    q: np.ndarray               # (n+1, n) thin orthonormal factor
    r: np.ndarray               # (n, n) upper triangular
    q_square: np.ndarray = None  # (n, n) factor of the square system
    r_square: np.ndarray = None
    log_abs_det: float = 0.0

    # -- construction -------------------------------------------------

    @classmethod
    def empty(cls, dim: int, box=None, family: str = "legendre",
              loc=None, scale=None) -> "VandermondeQR":
        basis = TensorBasis(enumerate_basis(dim, 1), box=box, family=family,
                            loc=loc, scale=scale)
        return cls(
            basis=basis,
            points=np.empty((0, dim)),
            matrix=np.ones((1, 0)),
            q=np.ones((1, 0)),
            r=np.empty((0, 0)),
            log_abs_det=-math.inf,
        )

    @classmethod
    def from_nodes(cls, points, box=None, family: str = "legendre",
                   loc=None, scale=None) -> "VandermondeQR":
        """Build a state by appending the given nodes in order.

        A flat array is read as univariate nodes, shape (n, 1).
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        state = cls.empty(pts.shape[1], box=box, family=family, loc=loc, scale=scale)
        for row in pts:
            state = state.append(row)
        return state

    # -- queries -------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return self.points.shape[0]

    def _grow_basis(self, count: int) -> TensorBasis:
        full = enumerate_basis(self.basis.indices.dim, count)
        return TensorBasis(full, box=self.basis.box, family=self.basis.family,
                           loc=self.basis.loc, scale=self.basis.scale)

    def _column(self, x: np.ndarray) -> np.ndarray:
        """Basis column (all current basis rows) at one point."""
        return self.basis.eval_matrix(np.atleast_2d(x))[0]

    def _sum_log_diag_r(self) -> float:
        if self.r.shape[0] == 0:
            return 0.0
        return float(np.sum(np.log(np.abs(np.diag(self.r)))))

    def candidate_logdet(self, x) -> float:
        """log |det| of the interpolation matrix after appending node x.

        Returns -inf when the candidate column is linearly dependent on the
        existing node columns (relative residual below 1e-14).
        """
        b = self._column(np.asarray(x, dtype=float))
        bnorm = np.linalg.norm(b)
        if self.n_nodes == 0:
            r = abs(b[0])
            return math.log(r) if r > DEPENDENT_TOL else -math.inf
        y = self.q.T @ b
        res = b - self.q @ y
        res -= self.q @ (self.q.T @ res)  # second pass keeps tiny residuals honest
        rnorm = np.linalg.norm(res)
        if rnorm <= DEPENDENT_TOL * bnorm:
            return -math.inf
        return self._sum_log_diag_r() + math.log(rnorm)

    def candidate_logdet_batch(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized candidate scores for many points at once.

        Residual norms come from the subtraction identity, whose noise floor
        is near sqrt(machine eps); candidates below a 1e-7 relative residual
        are reported as -inf.
        """
        pts = np.atleast_2d(np.asarray(xs, dtype=float))
        cols = self.basis.eval_matrix(pts)  # (K, n+1)
        sq_norms = np.einsum("ij,ij->i", cols, cols)
        if self.n_nodes == 0:
            vals = np.abs(cols[:, 0])
            out = np.full(pts.shape[0], -np.inf)
            ok = vals > DEPENDENT_TOL
            out[ok] = np.log(vals[ok])
            return out
        proj = cols @ self.q  # (K, n)
        res_sq = sq_norms - np.einsum("ij,ij->i", proj, proj)
        np.clip(res_sq, 0.0, None, out=res_sq)
        out = np.full(pts.shape[0], -np.inf)
        ok = res_sq > (BATCH_DEPENDENT_TOL ** 2) * sq_norms
        out[ok] = self._sum_log_diag_r() + 0.5 * np.log(res_sq[ok])
        return out

    # -- growth ---------------------------------------------------------

    def append(self, x) -> "VandermondeQR":
        """Return a new state with node x appended.

        Raises
        ------
        SingularMatrix
            If the new column is dependent beyond the 1e-14 tolerance.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        n = self.n_nodes
        b = self._column(x)
        bnorm = np.linalg.norm(b)

        if n == 0:
            if abs(b[0]) <= DEPENDENT_TOL:
                raise SingularMatrix("first basis function vanishes at the node")
            q_sq = np.array([[1.0 if b[0] > 0 else -1.0]])
            r_sq = np.array([[abs(b[0])]])
            log_det = math.log(abs(b[0]))
        else:
            y = self.q.T @ b
            res = b - self.q @ y
            dy = self.q.T @ res
            res = res - self.q @ dy
            y = y + dy
            rnorm = float(np.linalg.norm(res))
            if rnorm <= DEPENDENT_TOL * bnorm:
                raise SingularMatrix(
                    f"node {x} makes the interpolation matrix singular"
                )
            q_sq = np.column_stack([self.q, res / rnorm])
            r_sq = np.zeros((n + 1, n + 1))
            r_sq[:n, :n] = self.r
            r_sq[:n, n] = y
            r_sq[n, n] = rnorm
            log_det = self._sum_log_diag_r() + math.log(rnorm)

        new_points = np.vstack([self.points, x[None, :]])
        new_basis = self._grow_basis(n + 2)
        new_matrix = new_basis.eval_matrix(new_points).T  # (n+2, n+1)

        # Row append via Givens rotations acting on the square factors.
        q_ext = np.zeros((n + 2, n + 2))
        q_ext[: n + 1, : n + 1] = q_sq
        q_ext[n + 1, n + 1] = 1.0
        r_ext = np.vstack([r_sq, new_matrix[n + 1, :][None, :]])
        for i in range(n + 1):
            a, c = r_ext[i, i], r_ext[n + 1, i]
            g = math.hypot(a, c)
            if g == 0.0:
                continue
            cs, sn = a / g, c / g
            ri, rb = r_ext[i, :].copy(), r_ext[n + 1, :].copy()
            r_ext[i, :] = cs * ri + sn * rb
            r_ext[n + 1, :] = -sn * ri + cs * rb
            qi, qb = q_ext[:, i].copy(), q_ext[:, n + 1].copy()
            q_ext[:, i] = cs * qi + sn * qb
            q_ext[:, n + 1] = -sn * qi + cs * qb
        new_q = q_ext[:, : n + 1]
        new_r = r_ext[: n + 1, :]

        drift = np.linalg.norm(new_q @ new_r - new_matrix)
        scale = max(np.linalg.norm(new_matrix), 1.0)
        if drift > REFACTOR_TOL * scale:
            new_q, new_r = np.linalg.qr(new_matrix, mode="reduced")

        return VandermondeQR(
            basis=new_basis,
            points=new_points,
            matrix=new_matrix,
            q=new_q,
            r=new_r,
            q_square=q_sq,
            r_square=r_sq,
            log_abs_det=log_det,
        )

    # -- solving ----------------------------------------------------------

    def solve(self, values: np.ndarray) -> np.ndarray:
        """Coefficients of the interpolant through the stored nodes.

        Solves V c = values where V[i, j] is basis function j at node i,
        using the square orthogonal factors.
        """
        if self.n_nodes == 0:
            raise SingularMatrix("no nodes to interpolate")
        values = np.asarray(values, dtype=float)
        diag = np.abs(np.diag(self.r_square))
        if diag.min() < 1e-12 * diag.max():
            raise SingularMatrix("interpolation matrix is rank deficient")
        y = solve_triangular(self.r_square.T, values, lower=True)
        return self.q_square @ y

    def interp_basis(self) -> TensorBasis:
        """Basis spanning the current interpolation space (n functions)."""
        return TensorBasis(
            self.basis.indices.prefix(self.n_nodes),
            box=self.basis.box, family=self.basis.family,
            loc=self.basis.loc, scale=self.basis.scale,
        )


def qr_append_node(state: VandermondeQR, x) -> VandermondeQR:
    """Functional wrapper: new QR state with node x appended."""
    return state.append(x)


def candidate_logdet(state: VandermondeQR, x) -> float:
    """Log determinant growth if node x were appended to the state."""
    return state.candidate_logdet(x)
