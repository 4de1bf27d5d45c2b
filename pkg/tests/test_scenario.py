"""Sample-complexity bound, scenario LP fit, and holdout generalization."""

import numpy as np
import pytest

from rampc.poly import monomial_basis
from rampc.scenario import (CostSurrogate, fit, holdout_validate,
                            required_samples)


class TestRequiredSamples:
    def test_paper_count_l10(self):
        assert required_samples(0.1, 0.1, 10) == 267

    def test_l6(self):
        assert required_samples(0.1, 0.1, 6) == 187

    def test_l6_tight(self):
        assert required_samples(0.05, 0.05, 6) == 400

    def test_monotone_in_epsilon(self):
        counts = [required_samples(e, 0.1, 3) for e in (0.1, 0.3, 0.6, 0.9)]
        assert counts == sorted(counts, reverse=True)

    def test_defining_inequality(self):
        for eps, beta, l in [(0.1, 0.1, 10), (0.05, 0.05, 6), (0.37, 0.02, 4)]:
            n = required_samples(eps, beta, l)
            assert eps >= 2.0 / n * (np.log(1 / beta) + l + 1)
            assert eps < 2.0 / (n - 1) * (np.log(1 / beta) + l + 1)

    def test_domain(self):
        with pytest.raises(ValueError):
            required_samples(0.0, 0.1, 3)
        with pytest.raises(ValueError):
            required_samples(0.1, 1.0, 3)


class TestFit:
    def test_representable_target_exact(self):
        rng = np.random.default_rng(0)
        template = monomial_basis(2, 2)
        c_true = rng.standard_normal(len(template))
        truth = CostSurrogate(template, c_true, 0.0, 0.5, 0.5, 0)
        xs = rng.uniform(-1, 1, size=(80, 2))
        qs = truth.eval_many(xs)
        sur = fit(xs, qs, template, coeff_bound=1e4)
        assert sur.delta_star <= 1e-8
        np.testing.assert_allclose(sur.c, c_true, atol=1e-6)

    def test_two_point_constant(self):
        xs = np.array([[0.0], [1.0]])
        qs = np.array([1.0, 3.0])
        sur = fit(xs, qs, [(0,)], coeff_bound=1e4)
        assert sur.c[0] == pytest.approx(2.0, abs=1e-8)
        assert sur.delta_star == pytest.approx(1.0, abs=1e-8)

    def test_residual_identity(self):
        # training max-residual equals delta_star
        rng = np.random.default_rng(1)
        template = monomial_basis(2, 2)
        xs = rng.uniform(-2, 2, size=(120, 2))
        qs = np.abs(xs[:, 0] * xs[:, 1]) ** 1.5 + xs[:, 0]  # not representable
        sur = fit(xs, qs, template)
        resid = np.abs(sur.eval_many(xs) - qs)
        assert resid.max() == pytest.approx(sur.delta_star, abs=1e-8)
        assert np.all(resid <= sur.delta_star + 1e-8)

    def test_coefficient_box_active(self):
        xs = np.array([[1.0], [2.0]])
        qs = np.array([100.0, 200.0])
        sur = fit(xs, qs, [(1,)], coeff_bound=10.0)
        assert abs(sur.c[0]) <= 10.0 + 1e-9
        assert sur.c[0] == pytest.approx(10.0, abs=1e-7)

    def test_json_roundtrip(self, tmp_path):
        sur = CostSurrogate(monomial_basis(2, 1), np.array([1.0, -2.0, 0.5]),
                            0.25, 0.1, 0.1, 207)
        path = tmp_path / "s.json"
        sur.save(path)
        back = CostSurrogate.load(path)
        assert back.template == sur.template
        np.testing.assert_allclose(back.c, sur.c)
        assert back.delta_star == sur.delta_star


class TestHoldout:
    def test_zero_noise_representable(self):
        rng = np.random.default_rng(2)
        template = monomial_basis(2, 2)
        c_true = rng.standard_normal(len(template))
        truth = CostSurrogate(template, c_true, 0.0, 0.5, 0.5, 0)
        xs = rng.uniform(-1, 1, size=(60, 2))
        sur = fit(xs, truth.eval_many(xs), template)
        fresh = rng.uniform(-1, 1, size=(500, 2))
        # a zero-residual fit generalizes with zero violations up to float
        sur.delta_star = max(sur.delta_star, 1e-9)
        assert holdout_validate(sur, fresh, truth.eval_many(fresh)) == 0.0

    def test_binomial_concentration(self):
        # the PAC guarantee transfers to a fresh sample: violation fraction
        # stays within eps plus three binomial standard errors
        rng = np.random.default_rng(3)
        template = monomial_basis(1, 1)
        eps, beta = 0.1, 0.1
        n = required_samples(eps, beta, len(template))

        def q_fn(x):
            return np.sin(3.0 * x[:, 0]) + x[:, 0]

        xs = rng.uniform(-1, 1, size=(n, 1))
        sur = fit(xs, q_fn(xs), template)
        m_holdout = 2000
        fresh = rng.uniform(-1, 1, size=(m_holdout, 1))
        frac = holdout_validate(sur, fresh, q_fn(fresh))
        assert frac <= eps + 3 * np.sqrt(eps * (1 - eps) / m_holdout)

    def test_refit_ordering(self):
        # refitting on the holdout cannot produce a larger optimum than the
        # holdout's own worst residual under the training fit
        rng = np.random.default_rng(4)
        template = monomial_basis(1, 2)
        xs = rng.uniform(-1, 1, size=(100, 1))
        q = lambda x: np.exp(x[:, 0])
        sur = fit(xs, q(xs), template)
        fresh = rng.uniform(-1, 1, size=(100, 1))
        refit = fit(fresh, q(fresh), template)
        worst_under_train = np.abs(sur.eval_many(fresh) - q(fresh)).max()
        assert refit.delta_star <= worst_under_train + 1e-9
