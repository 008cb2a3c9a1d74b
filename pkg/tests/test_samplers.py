import numpy as np
import pytest

from vimlab.data import gen_linear_pair, gen_toeplitz_gaussian
from vimlab.exceptions import NumericalRankError, SamplerKindError, ValidationError
from vimlab.samplers import draw, draw_complement, fit_sampler


def _fig1_x(n=50000, seed=20):
    return gen_linear_pair(n, 0.6, 1.0, seed=seed).x


class TestFit:
    def test_marginal_is_stateless(self):
        s = fit_sampler("marginal_permutation", np.random.default_rng(0).normal(size=(30, 3)))
        assert s.mean is None and s.residuals is None

    def test_gaussian_stores_correlation(self):
        s = fit_sampler("gaussian_conditional", _fig1_x())
        assert abs(s.cov[0, 1] - 0.6) < 0.02

    def test_known_cov_override(self):
        x = _fig1_x(n=100)
        sigma = np.array([[1.0, 0.6], [0.6, 1.0]])
        s = fit_sampler("gaussian_conditional", x, known_mean=np.zeros(2), known_cov=sigma)
        assert (s.cov == sigma).all()

    def test_residual_recovers_noise(self):
        rng = np.random.default_rng(1)
        x0 = rng.normal(size=500)
        e = rng.normal(size=500)
        design = np.column_stack([np.ones(500), x0])
        e -= design @ np.linalg.lstsq(design, e, rcond=None)[0]  # exact noise component
        x = np.column_stack([x0, 2.0 * x0 + e])
        s = fit_sampler("residual_permutation", x)
        assert np.abs(s.residuals[1] - e).max() < 1e-8

    def test_degenerate_conditional_rejected(self):
        rng = np.random.default_rng(2)
        c = rng.normal(size=200)
        x = np.column_stack([c, c.copy()])
        with pytest.raises(NumericalRankError):
            fit_sampler("gaussian_conditional", x)

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            fit_sampler("knockoff", np.zeros((10, 2)))


class TestDraw:
    def test_marginal_preserves_multiset(self):
        x = np.column_stack([np.array([1.0, 2.0, 3.0]), np.array([5.0, 6.0, 7.0])])
        s = fit_sampler("marginal_permutation", x)
        cols = draw(s, x, 0, 4, seed=3)
        for k in range(4):
            assert sorted(cols[k].tolist()) == [1.0, 2.0, 3.0]

    def test_other_columns_untouched(self):
        # replacement is column-only by construction; composing leaves -j intact
        x = _fig1_x(n=200)
        for kind in ("marginal_permutation", "gaussian_conditional", "residual_permutation"):
            s = fit_sampler(kind, x)
            col = draw(s, x, 0, 1, seed=4)[0]
            x_mod = x.copy()
            x_mod[:, 0] = col
            assert (x_mod[:, 1] == x[:, 1]).all()

    def test_gaussian_independent_case(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(10000, 2))
        s = fit_sampler("gaussian_conditional", x, known_mean=np.zeros(2), known_cov=np.eye(2))
        col = draw(s, x, 1, 1, seed=6)[0]
        assert abs(np.corrcoef(col, x[:, 0])[0, 1]) < 0.05

    def test_gaussian_conditional_mean(self):
        s = fit_sampler("gaussian_conditional", _fig1_x())
        x_at_one = np.column_stack([np.ones(10000), np.zeros(10000)])
        col = draw(s, x_at_one, 1, 1, seed=7)[0]
        assert abs(col.mean() - 0.6) < 0.05

    def test_residual_preserves_mean(self):
        x = _fig1_x(n=500)
        s = fit_sampler("residual_permutation", x)
        for k, col in enumerate(draw(s, x, 1, 3, seed=8)):
            assert abs(col.mean() - x[:, 1].mean()) < 1e-9

    def test_deterministic_and_distinct(self):
        x = _fig1_x(n=100)
        s = fit_sampler("gaussian_conditional", x)
        a = draw(s, x, 0, 2, seed=9)
        b = draw(s, x, 0, 2, seed=9)
        c = draw(s, x, 0, 2, seed=10)
        assert (a == b).all()
        assert not (a == c).all()
        assert not (a[0] == a[1]).all()  # sequential sub-seeds differ

    def test_bad_args(self):
        x = _fig1_x(n=50)
        s = fit_sampler("marginal_permutation", x)
        with pytest.raises(ValidationError):
            draw(s, x, 0, 0, seed=0)
        with pytest.raises(ValidationError):
            draw(s, x, 5, 1, seed=0)


class TestDrawComplement:
    def test_requires_gaussian(self):
        x = _fig1_x(n=100)
        s = fit_sampler("residual_permutation", x)
        with pytest.raises(SamplerKindError):
            draw_complement(s, x, [0], 2, seed=0)

    def test_empty_subset_matches_marginal(self):
        x = gen_toeplitz_gaussian(2000, 3, 0.5, seed=11)
        sigma = 0.5 ** np.abs(np.subtract.outer(np.arange(3), np.arange(3)))
        s = fit_sampler("gaussian_conditional", x, known_mean=np.zeros(3), known_cov=sigma)
        draws = draw_complement(s, x[:5], [], 4000, seed=12)
        flat = draws.reshape(-1, 3)
        assert np.abs(np.cov(flat, rowvar=False) - sigma).max() < 0.05

    def test_conditional_moments(self):
        x = _fig1_x()
        s = fit_sampler("gaussian_conditional", x)
        obs = np.array([[1.0, 0.0]])  # condition on x0 = 1
        draws = draw_complement(s, obs, [0], 20000, seed=13)[:, 0, 0]
        assert abs(draws.mean() - 0.6) < 0.05
        assert abs(draws.var() - 0.64) < 0.05

    def test_full_subset_empty_output(self):
        x = _fig1_x(n=10)
        s = fit_sampler("gaussian_conditional", x)
        assert draw_complement(s, x, [0, 1], 3, seed=0).shape == (3, 10, 0)
