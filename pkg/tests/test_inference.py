import itertools

import numpy as np
import pytest
from scipy import stats

from vimlab.estimators import ImportanceReport
from vimlab.exceptions import InsufficientSampleError, UnsupportedMethodError, ValidationError
from vimlab.inference import (
    classify_features,
    sign_test,
    wilcoxon_signed_rank,
    z_test,
)


def brute_force_wilcoxon_p(deltas):
    """Exhaustive one-sided signed-rank p over all 2^n sign assignments."""
    deltas = np.asarray(deltas, dtype=float)
    nz = deltas[deltas != 0]
    ranks = stats.rankdata(np.abs(nz))
    observed = ranks[nz > 0].sum()
    count = 0
    n = nz.size
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if w >= observed - 1e-12:
            count += 1
    return count / 2.0**n


class TestSignTest:
    def test_all_positive(self):
        r = sign_test([1.0] * 5)
        assert r.p_value == pytest.approx(2.0**-5, abs=1e-15)
        assert r.n_effective == 5

    def test_mixed_pair(self):
        assert sign_test([1.0, -1.0]).p_value == pytest.approx(0.75, abs=1e-15)

    def test_all_zero(self):
        r = sign_test([0.0, 0.0])
        assert r.p_value == 1.0 and r.n_effective == 0

    def test_zeros_discarded(self):
        a = sign_test([1.0, 1.0, 0.0, -2.0])
        b = sign_test([1.0, 1.0, -2.0])
        assert a.p_value == b.p_value and a.n_effective == 3

    def test_sign_only_invariance(self):
        # any sign-preserving rescaling of the magnitudes leaves p unchanged
        rng = np.random.default_rng(0)
        d = rng.normal(size=40)
        assert sign_test(d).p_value == sign_test(np.sign(d) * np.exp(np.abs(d))).p_value


class TestWilcoxon:
    @pytest.mark.parametrize("n", range(5, 11))
    def test_matches_enumeration(self, n):
        rng = np.random.default_rng(n)
        for trial in range(8):
            d = np.round(rng.normal(size=n), 1)  # rounding forces ties
            d[d == 0] = 0.5
            r = wilcoxon_signed_rank(d)
            assert r.p_value == pytest.approx(brute_force_wilcoxon_p(d), abs=1e-12)

    def test_extreme_statistic(self):
        assert wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0, 5.0]).p_value == pytest.approx(
            1 / 32, abs=1e-15
        )

    def test_antisymmetric_near_half(self):
        d = np.concatenate([np.arange(1, 41), -np.arange(1, 41)]).astype(float)
        assert abs(wilcoxon_signed_rank(d).p_value - 0.5) < 0.05

    def test_too_few_nonzero(self):
        with pytest.raises(InsufficientSampleError, match="sign_test"):
            wilcoxon_signed_rank([1.0, -1.0, 0.0, 0.0, 0.0, 0.0])

    def test_rank_preserving_invariance(self):
        rng = np.random.default_rng(1)
        d = rng.normal(size=15)
        transformed = np.sign(d) * np.abs(d) ** 3  # strictly monotone in |d|
        assert wilcoxon_signed_rank(d).p_value == pytest.approx(
            wilcoxon_signed_rank(transformed).p_value, abs=1e-12
        )

    def test_large_sample_approximation(self):
        rng = np.random.default_rng(2)
        d = rng.normal(0.5, 1.0, size=200)
        r = wilcoxon_signed_rank(d)
        assert r.n_effective == 200 and r.p_value < 1e-6


class TestZTest:
    def test_centered(self):
        rng = np.random.default_rng(3)
        half = rng.normal(size=500)
        sample = np.concatenate([half, -half])  # mean exactly zero
        assert z_test(sample).p_value == pytest.approx(0.5, abs=1e-12)

    def test_shifted(self):
        rng = np.random.default_rng(4)
        assert z_test(rng.normal(1.0, 1.0, size=1000)).p_value < 1e-10

    def test_degenerate(self):
        assert z_test([2.0] * 30).p_value == 0.0
        assert z_test([-2.0] * 30).p_value == 1.0

    def test_small_sample_rejected(self):
        with pytest.raises(InsufficientSampleError):
            z_test([1.0] * 10)


class TestTypeICalibration:
    @pytest.mark.parametrize("kind,level", [("sign", 0.05), ("wilcoxon", 0.05)])
    def test_null_rejection_rate(self, kind, level):
        rng = np.random.default_rng(5)
        reps = 1000
        test_fn = sign_test if kind == "sign" else wilcoxon_signed_rank
        rejections = sum(
            test_fn(rng.normal(size=60)).p_value <= level for _ in range(reps)
        )
        rate = rejections / reps
        slack = 2 * np.sqrt(level * (1 - level) / reps)
        assert rate <= level + slack


class TestClassifyFeatures:
    def _report(self, deltas):
        deltas = np.asarray(deltas, dtype=float)
        return ImportanceReport(method="CFI", scores=deltas.mean(axis=1), deltas=deltas)

    def test_alpha_one_selects_all(self):
        rng = np.random.default_rng(6)
        r = self._report(rng.normal(size=(3, 40)))
        sel = classify_features(r, "sign", alpha=1.0)
        assert sel.selected == (0, 1, 2)

    def test_threshold_rule(self):
        rng = np.random.default_rng(7)
        deltas = np.vstack([np.abs(rng.normal(size=50)) + 0.5, rng.normal(size=50)])
        sel = classify_features(self._report(deltas), "sign", alpha=0.05)
        assert 0 in sel.selected
        assert (sel.p_values <= 0.05).sum() == len(sel.selected)

    def test_bonferroni(self):
        rng = np.random.default_rng(8)
        r = self._report(rng.normal(size=(4, 60)))
        plain = classify_features(r, "z", alpha=0.2)
        corrected = classify_features(r, "z", alpha=0.2, bonferroni=True)
        assert (corrected.p_values >= plain.p_values).all()

    def test_rejects_reports_without_deltas(self):
        r = ImportanceReport(method="GLM", scores=np.array([1.0, 4.0]))
        with pytest.raises(UnsupportedMethodError):
            classify_features(r, "sign", 0.05)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        r = self._report(rng.normal(size=(2, 30)))
        a = classify_features(r, "sign", 0.05)
        b = classify_features(r, "sign", 0.05)
        assert a.selected == b.selected and (a.p_values == b.p_values).all()

    def test_alpha_validation(self):
        r = self._report(np.ones((1, 10)))
        with pytest.raises(ValidationError):
            classify_features(r, "sign", alpha=0.0)
