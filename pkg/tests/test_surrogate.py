"""Interpolant construction, evaluation, and serialization.

Independent truths used here: exact polynomials evaluated directly,
the classical equidistant-vs-Chebyshev comparison on Runge's function,
and both 1D representations checked against each other.
"""

import numpy as np
import pytest

from lejacal import nodes as nd
from lejacal import surrogate as sg
from lejacal.errors import ConfigError, SingularMatrix


def uniform_seq(count, lo=-1.0, hi=1.0, with_qr=False):
    w = nd.WeightFn.uniform([(lo, hi)])
    return nd.generate_sequence(w, count,
                                nd.GenerationSettings(with_qr=with_qr))


def manual_seq(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return nd.NodalSequence(pts, "manual", 0)


# -- build ------------------------------------------------------------------

def test_constant_values_reproduce_constant():
    seq = uniform_seq(7)
    s = sg.build(seq, np.full(7, 3.25), box=[(-1, 1)])
    grid = np.linspace(-1, 1, 500)
    assert np.max(np.abs(sg.evaluate(s, grid) - 3.25)) <= 1e-10


def test_degree_n_polynomial_exact_univariate():
    def p(x):
        return 3.0 * x**4 - 2.0 * x**2 + 0.5 * x - 1.0

    seq = uniform_seq(5)  # N+1 = 5 nodes for degree 4
    x = seq.x.ravel()
    s = sg.build(seq, p(x), box=[(-1, 1)])
    grid = np.linspace(-1, 1, 1000)
    err = np.abs(sg.evaluate(s, grid) - p(grid))
    assert np.max(err / (1.0 + np.abs(p(grid)))) <= 1e-8


def test_runge_equidistant_beats_chebyshev_nodes():
    def runge(x):
        return 1.0 / (1.0 + 25.0 * (2.0 * x - 1.0) ** 2)

    box = [(0.0, 1.0)]
    grid = np.linspace(0.0, 1.0, 2000)
    eq = manual_seq(np.linspace(0.0, 1.0, 11))
    cc = nd.clenshaw_curtis(11, box)
    err = {}
    for tag, seq in [("equidistant", eq), ("clenshaw-curtis", cc)]:
        s = sg.build(seq, runge(seq.x.ravel()), box=box)
        err[tag] = np.max(np.abs(sg.evaluate(s, grid) - runge(grid)))
    assert err["equidistant"] > err["clenshaw-curtis"]


def test_mismatched_lengths_rejected():
    with pytest.raises(ValueError):
        sg.build(uniform_seq(5), np.zeros(4))


def test_duplicate_nodes_rejected():
    seq = manual_seq([0.0, 0.5, 0.5])
    with pytest.raises(SingularMatrix):
        sg.build(seq, np.zeros(3), box=[(-1, 1)])


def test_barycentric_needs_one_dimension():
    pts = np.array([[0.0, 0.0], [1.0, 0.5], [0.5, 1.0]])
    with pytest.raises(ConfigError):
        sg.build(manual_seq(pts), np.zeros(3), method="barycentric")


# -- evaluate ---------------------------------------------------------------

def test_interpolation_property_at_nodes():
    rng = np.random.default_rng(5)
    seq = uniform_seq(15)
    vals = rng.normal(size=15)
    for method in ("barycentric", "coefficients"):
        s = sg.build(seq, vals, box=[(-1, 1)], method=method)
        got = sg.evaluate(s, seq.x.ravel())
        assert np.all(np.abs(got - vals) <= 1e-9 * (1.0 + np.abs(vals)))


def test_near_node_guard_returns_nodal_value():
    seq = manual_seq([-1.0, 0.0, 1.0])
    s = sg.build(seq, np.array([2.0, -3.0, 4.0]), box=[(-1, 1)])
    assert sg.evaluate(s, 1e-15) == -3.0
    assert sg.evaluate(s, -1.0 + 5e-15) == 2.0


def test_dual_representation_agreement_1d():
    rng = np.random.default_rng(17)
    seq = uniform_seq(12, with_qr=True)
    vals = rng.normal(size=12)
    bary = sg.build(seq, vals, box=[(-1, 1)], method="barycentric")
    coef = sg.build(seq, vals, box=[(-1, 1)], method="coefficients")
    grid = np.linspace(-1, 1, 1000)
    a, b = sg.evaluate(bary, grid), sg.evaluate(coef, grid)
    assert np.max(np.abs(a - b) / (1.0 + np.abs(a))) <= 1e-9


def test_scalar_and_batch_shapes():
    seq = uniform_seq(6)
    s = sg.build(seq, seq.x.ravel() ** 2, box=[(-1, 1)])
    assert isinstance(sg.evaluate(s, 0.3), float)
    assert sg.evaluate(s, np.array([0.1, 0.2])).shape == (2,)
    assert s(0.3) == sg.evaluate(s, 0.3)


def test_multivariate_point_and_batch():
    w = nd.WeightFn.uniform([(-1, 1), (-1, 1)])
    seq = nd.generate_sequence(w, 10, nd.GenerationSettings(with_qr=True))

    def f(p):
        p = np.atleast_2d(p)
        return 1.0 + p[:, 0] + 2.0 * p[:, 1] + p[:, 0] * p[:, 1]

    s = sg.build(seq, f(seq.points), box=[(-1, 1), (-1, 1)])
    got = sg.evaluate(s, np.array([0.25, -0.5]))
    assert isinstance(got, float)
    batch = sg.evaluate(s, seq.points)
    assert np.allclose(batch, f(seq.points), atol=1e-9)


# -- invariants -------------------------------------------------------------

def test_linearity_of_build():
    rng = np.random.default_rng(23)
    seq = uniform_seq(9)
    v1, v2 = rng.normal(size=9), rng.normal(size=9)
    a, b = 2.5, -1.25
    box = [(-1, 1)]
    grid = np.linspace(-1, 1, 400)
    combined = sg.evaluate(sg.build(seq, a * v1 + b * v2, box=box), grid)
    parts = a * sg.evaluate(sg.build(seq, v1, box=box), grid) \
        + b * sg.evaluate(sg.build(seq, v2, box=box), grid)
    assert np.max(np.abs(combined - parts) / (1.0 + np.abs(parts))) <= 1e-9


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_degree_reproduction_through_total_degree_four(dim):
    rng = np.random.default_rng(31 + dim)
    from lejacal.polybasis import enumerate_basis

    # enough basis functions to span total degree 4 in `dim` variables
    from math import comb
    n_basis = comb(dim + 4, 4)
    idx = enumerate_basis(dim, n_basis)
    coef = rng.normal(size=n_basis)

    def poly(p):
        p = np.atleast_2d(p)
        out = np.zeros(p.shape[0])
        for c, e in zip(coef, idx.exponents):
            out += c * np.prod(p ** e[None, :], axis=1)
        return out

    box = [(-1.0, 1.0)] * dim
    w = nd.WeightFn.uniform(box)
    seq = nd.generate_sequence(w, n_basis, nd.GenerationSettings(with_qr=True))
    s = sg.build(seq, poly(seq.points), box=box, method="coefficients")
    audit = rng.uniform(-1.0, 1.0, (100, dim))
    got, want = sg.evaluate(s, audit), poly(audit)
    assert np.max(np.abs(got - want) / (1.0 + np.abs(want))) <= 1e-8


def test_rebuild_with_added_node_keeps_old_nodes():
    rng = np.random.default_rng(41)
    def f(x):
        return np.sin(3.0 * x)

    seq_small = uniform_seq(8)
    seq_big = uniform_seq(12)
    assert np.allclose(seq_small.points, seq_big.points[:8])  # nested
    s = sg.build(seq_big, f(seq_big.x.ravel()), box=[(-1, 1)])
    old_x = seq_small.x.ravel()
    assert np.all(np.abs(sg.evaluate(s, old_x) - f(old_x))
                  <= 1e-9 * (1.0 + np.abs(f(old_x))))


# -- sup_error --------------------------------------------------------------

def test_sup_error_zero_for_matching_polynomial():
    def p(x):
        return x**3 - x

    seq = uniform_seq(6)
    s = sg.build(seq, p(seq.x.ravel()), box=[(-1, 1)])
    grid = np.linspace(-1, 1, 500)
    assert sg.sup_error(s, p, None, grid) <= 1e-9


def test_sup_error_zero_weight_region():
    seq = uniform_seq(5)
    s = sg.build(seq, np.ones(5), box=[(-1, 1)])
    w = nd.WeightFn.uniform([(5.0, 6.0)])  # zero density on the audit grid
    grid = np.linspace(-1, 1, 100)
    assert sg.sup_error(s, lambda x: np.zeros_like(x), w, grid) == 0.0


def test_sup_error_decreases_with_more_nodes():
    def bump(x):
        return np.exp(-(x ** 2))

    w = nd.WeightFn.uniform([(-1, 1)])
    grid = np.linspace(-1, 1, 2000)
    errs = {}
    for count in (5, 20):
        seq = nd.generate_sequence(w, count)
        s = sg.build(seq, bump(seq.x.ravel()), box=[(-1, 1)])
        errs[count] = sg.sup_error(s, bump, w, grid)
    assert errs[20] < errs[5]


def test_audit_grid_shapes():
    g1 = sg.audit_grid([(-1.0, 1.0)])
    assert g1.shape == (1000, 1)
    g3 = sg.audit_grid([(-1.0, 1.0)] * 3)
    assert g3.shape == (100_000, 3)
    assert g3.min() >= -1.0 and g3.max() <= 1.0


# -- serialization ----------------------------------------------------------

@pytest.mark.parametrize("method", ["barycentric", "coefficients"])
def test_save_load_roundtrip(tmp_path, method):
    rng = np.random.default_rng(59)
    seq = uniform_seq(10, with_qr=True)
    vals = rng.normal(size=10)
    s = sg.build(seq, vals, box=[(-1, 1)], method=method)
    path = tmp_path / "surrogate.txt"
    sg.save(s, path)
    back = sg.load(path)
    grid = np.linspace(-1, 1, 333)
    assert back.representation == method
    assert np.array_equal(back.nodes.points, s.nodes.points)
    assert np.array_equal(sg.evaluate(back, grid), sg.evaluate(s, grid))


def test_load_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("format 99\ndim 1\n")
    with pytest.raises(ConfigError):
        sg.load(path)
