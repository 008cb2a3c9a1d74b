"""Finite-sample tests over per-sample loss deltas and the resulting
null-feature classification.

All alternatives are one-sided (positive shift): the importance indices in
scope are nonnegative at the population level, so evidence of importance is
evidence that perturbed/reduced losses exceed the originals. Zero deltas are
discarded before sign and signed-rank tests, the classical convention; ties
are otherwise common with tree models whose predictions ignore a feature.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import InsufficientSampleError, UnsupportedMethodError, ValidationError

TEST_KINDS = ("sign", "wilcoxon", "z")

# exact signed-rank distribution is enumerated up to this many nonzero deltas
WILCOXON_EXACT_MAX = 25


@dataclass(frozen=True)
class TestResult:
    kind: str
    statistic: float
    p_value: float
    n_effective: int

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0):
            raise ValidationError(f"p-value {self.p_value} outside [0, 1]")


@dataclass(frozen=True)
class SelectionResult:
    method: str
    alpha: float
    selected: tuple
    p_values: np.ndarray


def sign_test(deltas) -> TestResult:
    """Exact one-sided binomial test of P(delta > 0) > 1/2, zeros discarded."""
    deltas = np.asarray(deltas, dtype=np.float64)
    nz = deltas[deltas != 0]
    n = nz.size
    if n == 0:
        return TestResult(kind="sign", statistic=0.0, p_value=1.0, n_effective=0)
    k = int((nz > 0).sum())
    p = float(stats.binom.sf(k - 1, n, 0.5))
    return TestResult(kind="sign", statistic=float(k), p_value=min(p, 1.0), n_effective=n)


def _wilcoxon_exact_p(ranks, w_plus):
    """P(W+ >= observed) by dynamic programming over doubled ranks.

    Average ranks are multiples of 1/2, so doubling makes every rank an
    integer and the full null distribution is a polynomial product that
    handles ties exactly.
    """
    r2 = np.rint(2 * ranks).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    w2 = int(np.rint(2 * w_plus))
    return float(counts[w2:].sum() / 2.0 ** len(r2))


def wilcoxon_signed_rank(deltas) -> TestResult:
    """One-sided signed-rank test against a positive shift.

    Ties share average ranks and zeros are discarded. Up to 25 nonzero
    deltas the p-value comes from exact enumeration of the tied-rank null;
    beyond that, a normal approximation with continuity and tie corrections.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    nz = deltas[deltas != 0]
    n = nz.size
    if n < 5:
        raise InsufficientSampleError(
            f"signed-rank test needs >= 5 nonzero deltas, got {n}; use sign_test"
        )
    ranks = stats.rankdata(np.abs(nz))
    w_plus = float(ranks[nz > 0].sum())
    if n <= WILCOXON_EXACT_MAX:
        p = _wilcoxon_exact_p(ranks, w_plus)
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float(((tie_counts**3 - tie_counts) / 2.0).sum())
        var = (n * (n + 1) * (2 * n + 1) - tie_term) / 24.0
        z = (w_plus - mean - 0.5) / math.sqrt(var)
        p = float(stats.norm.sf(z))
    return TestResult(kind="wilcoxon", statistic=w_plus, p_value=min(p, 1.0), n_effective=n)


def z_test(deltas) -> TestResult:
    """One-sided normal test from the mean and standard error of the deltas."""
    deltas = np.asarray(deltas, dtype=np.float64)
    n = deltas.size
    if n < 30:
        raise InsufficientSampleError(f"z test needs n >= 30, got {n}")
    mean = deltas.mean()
    sd = deltas.std(ddof=1)
    if sd == 0.0:
        p = 0.0 if mean > 0 else 1.0
        stat = math.inf if mean > 0 else -math.inf
        return TestResult(kind="z", statistic=stat, p_value=p, n_effective=n)
    z = mean / (sd / math.sqrt(n))
    return TestResult(kind="z", statistic=float(z), p_value=float(stats.norm.sf(z)), n_effective=n)


_TESTS = {"sign": sign_test, "wilcoxon": wilcoxon_signed_rank, "z": z_test}


def run_test(deltas, kind) -> TestResult:
    if kind not in _TESTS:
        raise ValidationError(f"unknown test kind {kind!r}; choose from {TEST_KINDS}")
    return _TESTS[kind](deltas)


def classify_features(report, test_kind="sign", alpha=0.05, bonferroni=False) -> SelectionResult:
    """Per-feature p-values from the chosen test over that feature's deltas,
    selecting features with p <= alpha (optionally Bonferroni-corrected)."""
    if not (0.0 < alpha <= 1.0):
        raise ValidationError("alpha must lie in (0, 1]")
    if report.deltas is None:
        raise UnsupportedMethodError(
            f"method {report.method} records no per-sample deltas; cannot test"
        )
    p = report.scores.shape[0]
    p_values = np.empty(p)
    for j in range(p):
        p_values[j] = run_test(report.deltas[j], test_kind).p_value
    if bonferroni:
        p_values = np.minimum(1.0, p_values * p)
    selected = tuple(int(j) for j in range(p) if p_values[j] <= alpha)
    return SelectionResult(
        method=report.method, alpha=alpha, selected=selected, p_values=p_values
    )
