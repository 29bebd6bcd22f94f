"""Lebesgue estimators, KL divergence, and rate fitting.

Univariate Lebesgue oracles are recomputed from scratch here: small
cases through coefficient-domain Lagrange polynomials, larger ones
through a plain log-domain product formula on a dense grid.
"""

import numpy as np
import pytest
from numpy.polynomial import polynomial as P

from lejacal.diagnostics import (ConvergenceCurve, curve_csv, fit_rate,
                                 kl_divergence, kl_divergence_quasirandom,
                                 lebesgue_constant, lebesgue_curve,
                                 lebesgue_table_csv)
from lejacal.errors import ConfigError, DegenerateFit, UnboundedDivergence
from lejacal.nodes import (GenerationSettings, NodalSequence, WeightFn,
                           generate_sequence)
from lejacal.statmodel import (Prior, adaptive_weight, beta_likelihood,
                               gaussian_likelihood, posterior)
from lejacal.surrogate import build, evaluate
from lejacal.testmodels import gauss_model


def lagrange_lambda_coeffs(x, log_rho, grid, log_rho_grid):
    """Weighted Lebesgue function via coefficient-domain Lagrange polys.

    Only safe for a handful of nodes; conditioning of the monomial
    coefficients rots quickly.
    """
    total = np.zeros(grid.size)
    for k in range(x.size):
        others = np.delete(x, k)
        coeffs = P.polyfromroots(others)
        denom = P.polyval(x[k], coeffs)
        lk = P.polyval(grid, coeffs) / denom
        total += np.exp(log_rho_grid - log_rho[k]) * np.abs(lk)
    return total


def product_lambda_log(x, log_rho, grid, log_rho_grid):
    """Same function through the log-domain product formula."""
    dg = np.log(np.abs(grid[:, None] - x[None, :]))      # (m, n)
    dn = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(dn, 1.0)
    dn = np.log(dn)
    log_num = dg.sum(axis=1)[:, None] - dg               # drop own factor
    log_den = dn.sum(axis=1)[None, :]
    terms = log_num - log_den + log_rho_grid[:, None] - log_rho[None, :]
    return np.exp(terms).sum(axis=1)


def subsequence(seq, n):
    return NodalSequence(seq.points[:n], seq.kind, seq.rng_seed)


class TestLebesgue1D:
    def test_single_node_uniform_is_one(self):
        w = WeightFn.uniform([[-1.0, 1.0]])
        est = lebesgue_constant(np.array([0.3]), w)
        assert est.method == "interval-newton"
        assert est.weight_tag == "uniform"
        assert 1.0 <= est.value <= 1.0 + 1e-12

    def test_single_offcenter_node_normal_weight(self):
        # lambda(x) = rho(x)/rho(1), maximal at the mean: exp(1/2)
        w = WeightFn.normal(0.0, 1.0)
        est = lebesgue_constant(np.array([1.0]), w)
        np.testing.assert_allclose(est.value, np.exp(0.5), rtol=1e-9)

    def test_two_endpoints_uniform_is_one(self):
        w = WeightFn.uniform([[-1.0, 1.0]])
        est = lebesgue_constant(np.array([-1.0, 1.0]), w)
        assert 1.0 <= est.value <= 1.0 + 1e-12

    def test_three_equidistant_exact(self):
        # sup of |l0|+|l1|+|l2| on [-1,1] sits at x = +-1/2 and equals 5/4
        w = WeightFn.uniform([[-1.0, 1.0]])
        est = lebesgue_constant(np.array([-1.0, 0.0, 1.0]), w)
        np.testing.assert_allclose(est.value, 1.25, rtol=1e-9)

    def test_matches_coefficient_domain_oracle(self):
        rng = np.random.default_rng(7)
        x = np.sort(rng.uniform(-1.0, 1.0, 5))
        w = WeightFn.uniform([[-1.0, 1.0]])
        grid = np.linspace(-1.0, 1.0, 200_001)
        zeros = np.zeros(grid.size)
        brute = lagrange_lambda_coeffs(x, np.zeros(5), grid, zeros).max()
        est = lebesgue_constant(x, w, resolution=2000)
        assert est.value >= brute * (1.0 - 1e-12)
        np.testing.assert_allclose(est.value, brute, rtol=1e-6)

    def test_matches_product_formula_normal_leja_40(self):
        w = WeightFn.normal(0.0, 1.0)
        seq = generate_sequence(w, 40)
        x = seq.points[:, 0]
        lo, hi = w.search_box()[0]
        grid = np.linspace(lo, hi, 400_001)
        mask = ~np.isin(grid, x)
        grid = grid[mask]
        brute = product_lambda_log(x, w.log_density(x[:, None]), grid,
                                   w.log_density(grid[:, None])).max()
        est = lebesgue_constant(seq, w)
        assert est.value >= brute * (1.0 - 1e-12)
        np.testing.assert_allclose(est.value, brute, rtol=1e-6)

    def test_curve_matches_per_prefix_estimates(self):
        w = WeightFn.uniform([[-1.0, 1.0]])
        seq = generate_sequence(w, 15)
        curve = lebesgue_curve(seq, w)
        assert [e.n_nodes for e in curve] == list(range(2, 16))
        for est in (curve[0], curve[6], curve[-1]):
            single = lebesgue_constant(seq.points[:est.n_nodes], w)
            np.testing.assert_allclose(est.value, single.value, rtol=1e-9)

    def test_curve_callable_weight_fallback(self):
        w = WeightFn.uniform([[-1.0, 1.0]])
        wc = WeightFn.from_callable(
            lambda pts: w.log_density(pts), 1, box=[[-1.0, 1.0]])
        seq = generate_sequence(w, 6)
        fam = lebesgue_curve(seq, w)
        cal = lebesgue_curve(seq, wc)
        for a, b in zip(fam, cal):
            np.testing.assert_allclose(a.value, b.value, rtol=1e-8)
        assert cal[0].weight_tag == "custom"

    def test_uniform_leja_growth_bound(self):
        # degree N interpolation (N + 1 nodes) stays below N
        w = WeightFn.uniform([[-1.0, 1.0]])
        seq = generate_sequence(w, 201)
        for est in lebesgue_curve(seq, w):
            assert est.value <= (est.n_nodes - 1) * (1.0 + 1e-12)

    def test_value_at_least_one_random_sets(self):
        rng = np.random.default_rng(3)
        w = WeightFn.uniform([[0.0, 1.0]])
        for _ in range(20):
            n = int(rng.integers(1, 9))
            x = np.unique(rng.uniform(0.0, 1.0, n))
            assert lebesgue_constant(x, w).value >= 1.0

    def test_beta_weight_curve(self):
        w = WeightFn.beta(4.0, 4.0, [[-1.0, 1.0]])
        seq = generate_sequence(w, 12)
        curve = lebesgue_curve(seq, w)
        assert all(e.value >= 1.0 for e in curve)
        assert curve[0].weight_tag == "beta"
        single = lebesgue_constant(seq.points[:8], w)
        np.testing.assert_allclose(curve[6].value, single.value, rtol=1e-9)

    def test_resolution_guard(self):
        w = WeightFn.uniform([[-1.0, 1.0]])
        with pytest.raises(ConfigError):
            lebesgue_constant(np.array([0.0, 0.5]), w, resolution=500)

    def test_empty_nodes_rejected(self):
        w = WeightFn.uniform([[-1.0, 1.0]])
        with pytest.raises(ConfigError):
            lebesgue_constant(np.empty(0), w)


class TestLebesgueGrid:
    def triangle_lambda(self, nodes, pts):
        # barycentric coordinates are the degree-1 Lagrange functions
        A = np.vstack([nodes.T, np.ones(3)])
        lam = np.linalg.solve(A, np.vstack([pts.T, np.ones(len(pts))]))
        return np.abs(lam).sum(axis=0)

    def test_triangle_against_barycentric_oracle(self):
        nodes = np.array([[0.1, 0.2], [0.8, 0.3], [0.4, 0.9]])
        w = WeightFn.uniform([[0.0, 1.0], [0.0, 1.0]])
        est = lebesgue_constant(nodes, w, resolution=40_000)
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        exact = self.triangle_lambda(nodes, corners).max()
        assert est.method == "grid"
        assert "lower bound" in est.note
        assert est.value <= exact * (1.0 + 1e-9)
        assert est.value >= exact * 0.95

    def test_grid_values_match_direct_solve(self):
        # same Halton points, Lagrange rows from an affine solve
        from scipy.stats import qmc
        nodes = np.array([[0.1, 0.2], [0.8, 0.3], [0.4, 0.9]])
        w = WeightFn.uniform([[0.0, 1.0], [0.0, 1.0]])
        sampler = qmc.Halton(d=2, scramble=False, seed=0)
        pts = sampler.random(5000)
        brute = self.triangle_lambda(nodes, pts).max()
        est = lebesgue_constant(nodes, w, resolution=5000)
        np.testing.assert_allclose(est.value, max(brute, 1.0), rtol=1e-9)

    def test_reuses_sequence_qr(self):
        w = WeightFn.uniform([[0.0, 1.0], [0.0, 1.0]])
        seq = generate_sequence(w, 6, GenerationSettings(seed=5))
        est = lebesgue_constant(seq, w, resolution=2000)
        bare = lebesgue_constant(seq.points, w, resolution=2000)
        np.testing.assert_allclose(est.value, bare.value, rtol=1e-10)
        assert est.value >= 1.0


def identity_model(pts):
    return np.asarray(pts, dtype=float)[:, 0]


def gaussian_posterior_pair(m1, m2, sigma, box):
    pr = Prior.uniform(box)
    p = posterior(pr, gaussian_likelihood(np.array([m1]), sigma=sigma),
                  identity_model)
    q = posterior(pr, gaussian_likelihood(np.array([m2]), sigma=sigma),
                  identity_model)
    return p, q


class TestKLDivergence:
    def test_identical_posteriors_zero(self):
        p, _ = gaussian_posterior_pair(0.3, 0.5, 0.25, [[-3.0, 4.0]])
        assert abs(kl_divergence(p, p)) <= 1e-10

    def test_gaussian_closed_form(self):
        # box edges are ~14 sigma out, truncation is invisible at 1e-6
        p, q = gaussian_posterior_pair(0.3, 0.5, 0.25, [[-3.0, 4.0]])
        exact = (0.3 - 0.5) ** 2 / (2 * 0.25 ** 2)
        assert abs(kl_divergence(p, q) - exact) <= 1e-6

    def test_gibbs_inequality_random_pairs(self):
        rng = np.random.default_rng(11)
        box = [[-1.0, 2.0]]
        for _ in range(1000):
            m1, m2 = rng.uniform(0.0, 1.0, 2)
            s = rng.uniform(0.1, 0.6)
            p, q = gaussian_posterior_pair(m1, m2, s, box)
            assert kl_divergence(p, q, n_per_dim=200) >= -1e-10

    def test_vanishing_q_raises(self):
        pr = Prior.uniform([[0.0, 1.0]])
        wide = posterior(pr, gaussian_likelihood(np.array([0.5]), sigma=5.0),
                         identity_model)
        narrow = posterior(pr, beta_likelihood(np.array([0.2])),
                           identity_model)
        with pytest.raises(UnboundedDivergence):
            kl_divergence(wide, narrow)

    def test_mismatched_boxes_rejected(self):
        p, _ = gaussian_posterior_pair(0.3, 0.5, 0.25, [[0.0, 1.0]])
        _, q = gaussian_posterior_pair(0.3, 0.5, 0.25, [[0.0, 2.0]])
        with pytest.raises(ConfigError):
            kl_divergence(p, q)

    def test_dimension_cap(self):
        box = [[0.0, 1.0]] * 4
        pr = Prior.uniform(box)
        p = posterior(pr, gaussian_likelihood(np.array([0.5]), sigma=1.0),
                      identity_model)
        with pytest.raises(ConfigError):
            kl_divergence(p, p)

    def test_quasirandom_3d_matches_separable_form(self):
        # model depends on the first coordinate only, so the KL equals
        # the univariate truncated-Gaussian divergence
        box = [[-2.0, 2.0]] * 3
        pr = Prior.uniform(box)
        p = posterior(pr, gaussian_likelihood(np.array([0.1]), sigma=0.5),
                      identity_model)
        q = posterior(pr, gaussian_likelihood(np.array([-0.2]), sigma=0.5),
                      identity_model)
        val, se = kl_divergence_quasirandom(p, q, n=400_000)
        exact = (0.1 + 0.2) ** 2 / (2 * 0.5 ** 2)
        assert se < 2e-3
        assert abs(val - exact) <= max(5 * se, 2e-3)

    def test_3d_dispatch_returns_value(self):
        box = [[-2.0, 2.0]] * 3
        pr = Prior.uniform(box)
        p = posterior(pr, gaussian_likelihood(np.array([0.1]), sigma=0.5),
                      identity_model)
        q = posterior(pr, gaussian_likelihood(np.array([-0.2]), sigma=0.5),
                      identity_model)
        exact = (0.1 + 0.2) ** 2 / (2 * 0.5 ** 2)
        assert abs(kl_divergence(p, q) - exact) <= 2e-3


class TestRateFit:
    def test_exponential_exact(self):
        curve = ConvergenceCurve([(n, 2.0 ** -n) for n in range(1, 9)])
        rate = fit_rate(curve, "exponential")
        assert abs(rate - np.log(2.0)) <= 1e-10
        assert curve.rate == rate and curve.model == "exponential"
        assert curve.residual <= 1e-12

    def test_algebraic_exact(self):
        curve = ConvergenceCurve([(n, float(n) ** -3) for n in range(2, 10)])
        assert abs(fit_rate(curve, "algebraic") - 3.0) <= 1e-10

    def test_points_sorted_on_construction(self):
        curve = ConvergenceCurve([(5, 0.1), (2, 0.4), (9, 0.01), (3, 0.3)])
        assert [n for n, _ in curve.points] == [2, 3, 5, 9]

    def test_too_few_points(self):
        with pytest.raises(ConfigError):
            fit_rate(ConvergenceCurve([(1, 0.5), (2, 0.25), (3, 0.125)]))

    def test_nonpositive_errors(self):
        with pytest.raises(ConfigError):
            fit_rate(ConvergenceCurve([(n, 0.0) for n in range(1, 6)]))

    def test_unknown_model(self):
        curve = ConvergenceCurve([(n, 2.0 ** -n) for n in range(1, 6)])
        with pytest.raises(ConfigError):
            fit_rate(curve, "harmonic")

    def test_degenerate_abscissa(self):
        curve = ConvergenceCurve([(4, 0.5), (4, 0.4), (4, 0.3), (4, 0.2)])
        with pytest.raises(DegenerateFit):
            fit_rate(curve)


class TestGaussStudy:
    """Convergence behavior of surrogate posteriors for the bump model."""

    def setup_method(self):
        self.model = gauss_model(1)
        self.prior = Prior.uniform([[0.0, 1.0]])
        z = np.array([self.model(np.array([0.3]))])
        self.lik = gaussian_likelihood(z, sigma=0.2)
        self.seq = generate_sequence(self.prior.weight, 16)
        self.grid = np.linspace(0.0, 1.0, 2001)[:, None]
        self.u_true = self.model(self.grid)
        self.p_true = posterior(self.prior, self.lik, self.model)
        self.pd_true = self.p_true.density(self.grid)

    def errors_at(self, n):
        sub = subsequence(self.seq, n)
        s = build(sub, self.model(sub.points), box=[[0.0, 1.0]])
        u_n = evaluate(s, self.grid)
        sup = float(np.max(np.abs(u_n - self.u_true)))
        p_n = posterior(self.prior, self.lik, s)
        kl = kl_divergence(self.p_true, p_n)
        psup = float(np.max(np.abs(p_n.density(self.grid) - self.pd_true)))
        return sup, kl, psup, u_n

    def test_kl_rate_doubles_model_rate(self):
        sup_curve, kl_curve = [], []
        for n in range(3, 11):
            sup, kl, _, _ = self.errors_at(n)
            sup_curve.append((n, sup))
            kl_curve.append((n, kl))
        r_sup = fit_rate(ConvergenceCurve(sup_curve), "exponential")
        r_kl = fit_rate(ConvergenceCurve(kl_curve), "exponential")
        assert 1.5 <= r_kl / r_sup <= 2.5

    def test_posterior_error_bounded_by_lipschitz(self):
        for n in range(3, 13):
            sup, _, psup, u_n = self.errors_at(n)
            lo = min(self.u_true.min(), u_n.min())
            hi = max(self.u_true.max(), u_n.max())
            lip = self.lik.lipschitz(lo, hi)
            assert psup <= lip * sup * 1.05


class TestAdaptiveWeightBound:
    def test_two_sided_lebesgue_bound(self):
        # nodes drawn under the reweighted density; the constants under
        # either weight can differ by at most 1 + sup|P'|/zeta
        prior = Prior.uniform([[-2.0, 2.0]])
        model = gauss_model(1)

        def shifted(pts):
            return model(np.asarray(pts) * 0.25 + 0.5)

        lik = gaussian_likelihood(np.array([0.9]), sigma=0.15)
        base = generate_sequence(prior.weight, 20)
        s = build(subsequence(base, 20), shifted(base.points),
                  box=[[-2.0, 2.0]])
        zeta = 0.1
        q = adaptive_weight(prior, lik, s, zeta)
        nodes = generate_sequence(q, 50)

        grid = np.linspace(-2.0, 2.0, 4001)[:, None]
        sup_pprime = float(np.max(np.abs(lik.P_prime(evaluate(s, grid)))))
        factor = 1.0 + sup_pprime / zeta

        for n in (10, 30, 50):
            pts = nodes.points[:n]
            lam_q = lebesgue_constant(pts, q).value
            lam_p = lebesgue_constant(pts, prior.weight).value
            assert lam_p <= factor * lam_q * (1.0 + 1e-9)
            assert lam_q <= factor * lam_p * (1.0 + 1e-9)


class TestCsvOutput:
    def test_lebesgue_table(self, tmp_path):
        w = WeightFn.uniform([[-1.0, 1.0]])
        seq = generate_sequence(w, 6)
        ests = lebesgue_curve(seq, w)
        path = tmp_path / "lebesgue.csv"
        lebesgue_table_csv(path, ests, comments=["run 1"])
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "# run 1"
        assert lines[1] == "N,value,method,weight-tag"
        row = lines[2].split(",")
        assert row[0] == "2" and row[2] == "interval-newton"
        assert row[3] == "uniform"
        np.testing.assert_allclose(float(row[1]), ests[0].value, rtol=1e-15)

    def test_lower_bound_note_emitted(self, tmp_path):
        w = WeightFn.uniform([[0.0, 1.0], [0.0, 1.0]])
        est = lebesgue_constant(np.array([[0.2, 0.4], [0.7, 0.1],
                                          [0.5, 0.8]]), w, resolution=2000)
        path = tmp_path / "grid.csv"
        lebesgue_table_csv(path, [est])
        text = path.read_text()
        assert "# note: grid maximum; lower bound" in text
        assert ",grid," in text

    def test_curve_with_rate_footer(self, tmp_path):
        curve = ConvergenceCurve([(n, 3.0 ** -n) for n in range(1, 7)])
        fit_rate(curve, "exponential")
        path = tmp_path / "curve.csv"
        curve_csv(path, curve, "interval-newton", "uniform")
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "N,value,method,weight-tag"
        assert lines[-1].startswith("# rate-fit,model=exponential,rate=")
        rate = float(lines[-1].split("rate=")[1].split(",")[0])
        np.testing.assert_allclose(rate, np.log(3.0), rtol=1e-9)

    def test_curve_without_fit_has_no_footer(self, tmp_path):
        curve = ConvergenceCurve([(2, 0.5), (4, 0.25)])
        path = tmp_path / "plain.csv"
        curve_csv(path, curve, "grid", "custom")
        assert "rate-fit" not in path.read_text()
