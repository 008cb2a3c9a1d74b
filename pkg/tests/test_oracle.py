import itertools

import numpy as np
import pytest

from vimlab.data import CROSS_ENTROPY, QUADRATIC, GaussianLinearSpec
from vimlab.exceptions import SizeError, ValidationError
from vimlab.oracle import (
    DiscreteJoint,
    conditional_independence_gap,
    correlated_coins,
    exact_cond_mean,
    exact_pfi,
    exact_shapley,
    exact_tsi,
    exact_value_function,
    factored_null_joint,
    gaussian_linear_index,
    independence_fixture,
    joint_from_text,
    joint_to_text,
    r2_difference,
    random_joint,
)


def fair_coins():
    """x0, x1 independent fair coins; y = x1 deterministically."""
    probs = np.zeros((2, 2, 2))
    for a in (0, 1):
        for b in (0, 1):
            probs[a, b, b] = 0.25
    return DiscreteJoint(
        (np.array([0.0, 1.0]), np.array([0.0, 1.0])), np.array([0.0, 1.0]), probs
    )


class TestDiscreteJoint:
    def test_mass_must_be_one(self):
        probs = np.full((2, 2), 0.999 / 4)
        with pytest.raises(ValidationError, match="mass"):
            DiscreteJoint((np.array([0.0, 1.0]),), np.array([0.0, 1.0]), probs)

    def test_negative_mass(self):
        probs = np.array([[0.6, 0.5], [-0.1, 0.0]])
        with pytest.raises(ValidationError):
            DiscreteJoint((np.array([0.0, 1.0]),), np.array([0.0, 1.0]), probs)

    def test_text_roundtrip(self):
        d = random_joint(3, 3, seed=0)
        back = joint_from_text(joint_to_text(d))
        assert np.abs(back.probs - d.probs).max() < 1e-15
        for a, b in zip(back.supports, d.supports):
            assert (a == b).all()


class TestCondMean:
    def test_empty_subset_is_global_mean(self):
        d = random_joint(2, 3, seed=1)
        table = exact_cond_mean(d, [])
        expect = float((d.probs.sum(axis=(0, 1)) * d.y_support).sum())
        assert table[()] == pytest.approx(expect, abs=1e-12)

    def test_deterministic_identity(self):
        d = fair_coins()
        table = exact_cond_mean(d, [1])
        assert table[(0.0,)] == 0.0 and table[(1.0,)] == 1.0

    def test_independent_coin_constant(self):
        table = exact_cond_mean(fair_coins(), [0])
        assert table[(0.0,)] == pytest.approx(0.5) and table[(1.0,)] == pytest.approx(0.5)


class TestValueFunction:
    def test_empty_coalition_zero(self):
        for seed in range(5):
            d = random_joint(2 + seed % 2, 3, seed=seed)
            for mode in ("conditional", "marginal"):
                assert exact_value_function(d, [], QUADRATIC, mode) == pytest.approx(0.0, abs=1e-14)

    def test_full_coalition_total_variance_law(self):
        # v([p]) under squared loss must equal Var(y) - E[Var(y | X)]
        for seed in range(5):
            d = random_joint(2, 3, seed=10 + seed)
            m1 = (d.probs.sum(axis=(0, 1)) * d.y_support).sum()
            m2 = (d.probs.sum(axis=(0, 1)) * d.y_support**2).sum()
            var_y = m2 - m1**2
            px = d.probs.sum(axis=-1)
            with np.errstate(invalid="ignore", divide="ignore"):
                cm = np.where(px > 0, (d.probs @ d.y_support) / px, 0.0)
                cm2 = np.where(px > 0, (d.probs @ d.y_support**2) / px, 0.0)
            e_var = (px * (cm2 - cm**2)).sum()
            v = exact_value_function(d, range(d.p), QUADRATIC)
            assert v == pytest.approx(var_y - e_var, abs=1e-12)

    def test_correlated_coins_single_coalition(self):
        # E[y | x0] is 0.2 or 0.8; its variance is 0.09
        assert exact_value_function(correlated_coins(0.8), [0], QUADRATIC) == pytest.approx(
            0.09, abs=1e-14
        )


class TestTsiFormulations:
    def test_equivalence_on_random_joints(self):
        worst = 0.0
        for i in range(100):
            d = random_joint(2 + i % 2, 3, seed=100 + i)
            for j in range(d.p):
                vals = [exact_tsi(d, j, QUADRATIC, f) for f in (1, 2, 3, 4, 5)]
                worst = max(worst, max(vals) - min(vals))
        assert worst < 1e-12

    def test_factored_null_gives_zero(self):
        for i in range(20):
            p = 2 + i % 2
            j = i % p
            d = factored_null_joint(p, j, 3, seed=200 + i)
            for f in (1, 2, 3, 4, 5):
                assert abs(exact_tsi(d, j, QUADRATIC, f)) < 1e-12

    def test_fair_coins_values(self):
        d = fair_coins()
        assert exact_tsi(d, 1, QUADRATIC, 2) == pytest.approx(0.25, abs=1e-14)
        assert exact_tsi(d, 1, CROSS_ENTROPY, 7) == pytest.approx(np.log(2), abs=1e-12)
        assert exact_tsi(d, 0, QUADRATIC, 3) == pytest.approx(0.0, abs=1e-14)

    def test_information_form_matches_risk_form(self):
        # for binary y with interior probabilities, the cross-entropy risk gap
        # is exactly the conditional mutual information
        for i in range(10):
            d = _binary_y_joint(seed=300 + i)
            for j in range(d.p):
                assert exact_tsi(d, j, CROSS_ENTROPY, 3) == pytest.approx(
                    exact_tsi(d, j, CROSS_ENTROPY, 7), abs=1e-12
                )

    def test_formulation_loss_compatibility(self):
        d = fair_coins()
        with pytest.raises(ValidationError):
            exact_tsi(d, 0, CROSS_ENTROPY, 2)
        with pytest.raises(ValidationError):
            exact_tsi(d, 0, QUADRATIC, 7)

    def test_r2_difference(self):
        d = random_joint(2, 3, seed=400)
        m1 = (d.probs.sum(axis=(0, 1)) * d.y_support).sum()
        m2 = (d.probs.sum(axis=(0, 1)) * d.y_support**2).sum()
        assert r2_difference(d, 0) == pytest.approx(
            exact_tsi(d, 0, QUADRATIC, 3) / (m2 - m1**2), abs=1e-12
        )


def _binary_y_joint(seed):
    rng = np.random.default_rng(seed)
    p = 2
    sizes = rng.integers(2, 4, size=p)
    supports = [np.sort(rng.normal(size=s)) for s in sizes]
    raw = rng.random(tuple(sizes) + (2,)) + 0.1
    probs = raw / raw.sum()
    return DiscreteJoint(tuple(supports), np.array([0.0, 1.0]), probs)


class TestAxiomBothDirections:
    def test_dependence_implies_positive(self):
        found = 0
        for i in range(30):
            d = random_joint(2 + i % 2, 3, seed=500 + i)
            for j in range(d.p):
                if conditional_independence_gap(d, j) > 1e-6:
                    assert exact_tsi(d, j, QUADRATIC, 3) > 1e-10
                    found += 1
        assert found > 20

    def test_independence_implies_zero(self):
        for i in range(20):
            p = 2 + i % 2
            j = i % p
            d = factored_null_joint(p, j, 3, seed=600 + i)
            assert conditional_independence_gap(d, j) < 1e-12
            assert abs(exact_tsi(d, j, QUADRATIC, 3)) < 1e-12


class TestShapley:
    def test_efficiency(self):
        for i in range(10):
            d = random_joint(2 + i % 2, 3, seed=700 + i)
            for mode in ("conditional", "marginal"):
                total = sum(exact_shapley(d, j, QUADRATIC, mode) for j in range(d.p))
                assert total == pytest.approx(
                    exact_value_function(d, range(d.p), QUADRATIC, mode), abs=1e-12
                )

    def test_correlated_coins_witness(self):
        d = correlated_coins(0.8)
        assert exact_shapley(d, 0, QUADRATIC, "conditional") == pytest.approx(0.045, abs=1e-14)
        assert exact_shapley(d, 0, QUADRATIC, "marginal") == pytest.approx(0.0, abs=1e-14)

    def test_size_cap(self):
        with pytest.raises(SizeError):
            gaussian_linear_index(
                GaussianLinearSpec(np.zeros(13), np.eye(13), np.zeros(13)), 0, "sage"
            )
        binary = np.array([0.0, 1.0])
        big = DiscreteJoint(
            tuple([binary] * 13), binary, np.full((2,) * 14, 2.0**-14)
        )
        with pytest.raises(SizeError):
            exact_shapley(big, 0, QUADRATIC)


class TestPfi:
    def test_fair_coins(self):
        d = fair_coins()
        # y-coin: E[(y - y')^2] with an independent copy = 2 Var(y) = 0.5
        assert exact_pfi(d, 1, QUADRATIC) == pytest.approx(0.5, abs=1e-14)
        assert exact_pfi(d, 0, QUADRATIC) == pytest.approx(0.0, abs=1e-14)

    def test_functionally_independent_feature(self):
        for i in range(10):
            d = factored_null_joint(2, 0, 3, seed=900 + i)
            assert abs(exact_pfi(d, 0, QUADRATIC)) < 1e-12


class TestIndependenceFactorization:
    def test_premises_force_conditional_factorization(self):
        for i in range(10):
            d = independence_fixture(2 + i % 2, 3, seed=1000 + i)
            assert abs(exact_pfi(d, 0, QUADRATIC)) < 1e-12
            assert conditional_independence_gap(d, 0) < 1e-12
            # premise check: x0 independent of the rest both ways
            px = d.probs.sum(axis=-1)
            p0 = px.sum(axis=tuple(range(1, d.p)))
            prest = px.sum(axis=0)
            assert np.abs(px - np.tensordot(p0, prest, axes=0)).max() < 1e-12


class TestSurplusIdentity:
    def test_equals_total_index(self):
        for i in range(20):
            d = random_joint(2 + i % 2, 3, seed=1100 + i)
            for j in range(d.p):
                surplus = exact_value_function(d, range(d.p), QUADRATIC) - exact_value_function(
                    d, [a for a in range(d.p) if a != j], QUADRATIC
                )
                assert surplus == pytest.approx(exact_tsi(d, j, QUADRATIC, 3), abs=1e-12)


class TestGaussianClosedForms:
    def _fig1(self):
        return GaussianLinearSpec(
            np.zeros(2), np.array([[1.0, 0.6], [0.6, 1.0]]), np.array([1.0, 0.0])
        )

    def test_figure1_values(self):
        spec = self._fig1()
        assert gaussian_linear_index(spec, 0, "tsi") == pytest.approx(0.64, abs=1e-12)
        assert gaussian_linear_index(spec, 1, "tsi") == pytest.approx(0.0, abs=1e-12)
        assert gaussian_linear_index(spec, 0, "sage") == pytest.approx(0.82, abs=1e-12)
        assert gaussian_linear_index(spec, 1, "sage") == pytest.approx(0.18, abs=1e-12)
        assert gaussian_linear_index(spec, 1, "sage_vf") == pytest.approx(0.36, abs=1e-12)
        assert gaussian_linear_index(spec, 0, "pfi") == pytest.approx(2.0, abs=1e-12)
        assert gaussian_linear_index(spec, 1, "pfi") == pytest.approx(0.0, abs=1e-12)
        assert gaussian_linear_index(spec, 0, "dtsi") == pytest.approx(1.0, abs=1e-12)

    def test_diagonal_sigma(self):
        spec = GaussianLinearSpec(
            np.zeros(3), np.diag([1.0, 2.0, 0.5]), np.array([1.0, -1.0, 2.0])
        )
        for j, expect in enumerate([1.0, 2.0, 2.0]):
            assert gaussian_linear_index(spec, j, "tsi") == pytest.approx(expect, abs=1e-12)
            assert gaussian_linear_index(spec, j, "sage") == pytest.approx(expect, abs=1e-10)

    def test_toeplitz_linear_terms(self):
        p = 10
        sigma = 0.6 ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        beta = np.zeros(p)
        beta[0] = 1.0
        beta[1] = 2.0
        spec = GaussianLinearSpec(np.zeros(p), sigma, beta)
        precision = np.linalg.inv(sigma)
        assert gaussian_linear_index(spec, 0, "tsi") == pytest.approx(
            1.0 / precision[0, 0], abs=1e-10
        )
        # AR(1) edge coordinate: conditional variance is 1 - rho^2
        assert gaussian_linear_index(spec, 0, "tsi") == pytest.approx(0.64, abs=1e-10)
        assert gaussian_linear_index(spec, 1, "tsi") == pytest.approx(
            4.0 / precision[1, 1], abs=1e-10
        )

    def test_shapley_efficiency(self):
        spec = GaussianLinearSpec(
            np.zeros(4),
            0.5 ** np.abs(np.subtract.outer(np.arange(4), np.arange(4))),
            np.array([1.0, 0.0, -2.0, 0.5]),
        )
        total = sum(gaussian_linear_index(spec, j, "sage") for j in range(4))
        assert total == pytest.approx(float(spec.beta @ spec.sigma @ spec.beta), abs=1e-10)

    def test_singular_sigma_rejected(self):
        c = np.ones((2, 2))
        spec = GaussianLinearSpec(np.zeros(2), c, np.array([1.0, 0.0]))
        with pytest.raises(ValidationError):
            gaussian_linear_index(spec, 0, "tsi")
