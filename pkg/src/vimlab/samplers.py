"""Perturbation engines producing replacement columns for a coordinate:
marginal permutations, Gaussian conditional draws, and conditional
permutation of regression residuals.

Every draw returns replacement values only; callers splice them into a copy
of the matrix, so the remaining coordinates are bit-identical by
construction.
"""

from dataclasses import dataclass, field

import numpy as np

from ._rng import rng_from
from .exceptions import (
    NumericalRankError,
    SamplerKindError,
    ValidationError,
)

KINDS = ("marginal_permutation", "gaussian_conditional", "residual_permutation")

CONDITIONAL_KINDS = ("gaussian_conditional", "residual_permutation")


@dataclass(frozen=True)
class ConditionalSampler:
    """Fitted perturbation state for one kind.

    gaussian_conditional stores the (possibly user-supplied) mean vector,
    covariance, and its jittered inverse. residual_permutation stores one
    OLS fit of each column on the remaining columns plus its training
    residuals.
    """

    kind: str
    p: int
    mean: np.ndarray = None
    cov: np.ndarray = None
    precision: np.ndarray = None
    intercepts: np.ndarray = None
    coefs: tuple = None
    residuals: tuple = None


def _freeze(a):
    a = np.asarray(a, dtype=np.float64).copy()
    a.setflags(write=False)
    return a


def _fit_gaussian(x, known_mean, known_cov):
    n, p = x.shape
    mean = x.mean(axis=0) if known_mean is None else np.asarray(known_mean, np.float64)
    if known_cov is None:
        cov = np.cov(x, rowvar=False, ddof=1).reshape(p, p)
    else:
        cov = np.asarray(known_cov, np.float64)
    cov = 0.5 * (cov + cov.T)
    if np.linalg.eigvalsh(cov).min() < -1e-10:
        raise ValidationError("fitted covariance is not PSD within 1e-10")
    jittered = cov + 1e-10 * np.eye(p)
    try:
        precision = np.linalg.inv(jittered)
    except np.linalg.LinAlgError:
        raise NumericalRankError("covariance block singular even after jitter") from None
    cond_var = 1.0 / np.diag(precision)
    floor = 1e-8 * np.maximum(np.diag(cov), 1e-12)
    if (cond_var <= floor).any():
        bad = int(np.argmin(cond_var / floor))
        raise NumericalRankError(
            f"column {bad} has numerically zero conditional variance (degenerate conditional)"
        )
    return mean, cov, precision


def _fit_residual(x):
    n, p = x.shape
    intercepts = np.empty(p)
    coefs = []
    residuals = []
    for j in range(p):
        rest = np.delete(np.arange(p), j)
        if rest.size == 0:
            intercepts[j] = x[:, j].mean()
            coefs.append(np.zeros(0))
        else:
            design = np.column_stack([np.ones(n), x[:, rest]])
            beta, _, _, _ = np.linalg.lstsq(design, x[:, j], rcond=None)
            intercepts[j] = beta[0]
            coefs.append(beta[1:])
        residuals.append(_freeze(x[:, j] - _residual_fitted(intercepts[j], coefs[j], x, j)))
    return intercepts, tuple(_freeze(c) for c in coefs), tuple(residuals)


def _residual_fitted(intercept, coef, x, j):
    rest = np.delete(np.arange(x.shape[1]), j)
    if rest.size == 0:
        return np.full(x.shape[0], intercept)
    return intercept + x[:, rest] @ coef


def fit_sampler(kind, x, known_mean=None, known_cov=None) -> ConditionalSampler:
    """Fit sampler state on a matrix of covariate rows.

    ``known_mean``/``known_cov`` override the empirical Gaussian moments for
    oracle-aligned runs where the population covariance is available.
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown sampler kind {kind!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValidationError("sampler fitting needs an n x p matrix with n >= 2")
    p = x.shape[1]
    if kind == "marginal_permutation":
        return ConditionalSampler(kind=kind, p=p)
    if kind == "gaussian_conditional":
        mean, cov, precision = _fit_gaussian(x, known_mean, known_cov)
        return ConditionalSampler(
            kind=kind, p=p, mean=_freeze(mean), cov=_freeze(cov), precision=_freeze(precision)
        )
    intercepts, coefs, residuals = _fit_residual(x)
    return ConditionalSampler(
        kind=kind, p=p, intercepts=_freeze(intercepts), coefs=coefs, residuals=residuals
    )


def _check_draw_args(s, x, j, n_draws):
    if n_draws < 1:
        raise ValidationError("n_draws must be >= 1")
    if not (0 <= j < s.p):
        raise ValidationError(f"feature {j} out of range for p={s.p}")
    if x.ndim != 2 or x.shape[1] != s.p:
        raise ValidationError(f"matrix has {x.shape[1]} columns, sampler expects {s.p}")


def draw(s: ConditionalSampler, x, j, n_draws, seed) -> np.ndarray:
    """Replacement columns for coordinate ``j``, shape (n_draws, k).

    marginal_permutation permutes the observed column; gaussian_conditional
    samples row-wise from the fitted conditional normal; residual_permutation
    adds permuted regression residuals (computed on ``x``) back onto the
    fitted values, preserving the empirical column mean.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_draw_args(s, x, j, n_draws)
    k = x.shape[0]
    out = np.empty((n_draws, k))
    if s.kind == "marginal_permutation":
        col = x[:, j]
        for d in range(n_draws):
            out[d] = rng_from(seed, d).permutation(col)
        return out
    if s.kind == "gaussian_conditional":
        lam = s.precision
        cond_var = 1.0 / lam[j, j]
        rest = np.delete(np.arange(s.p), j)
        shift = (x[:, rest] - s.mean[rest]) @ lam[j, rest] if rest.size else np.zeros(k)
        cond_mean = s.mean[j] - cond_var * shift
        sd = np.sqrt(cond_var)
        for d in range(n_draws):
            out[d] = cond_mean + sd * rng_from(seed, d).standard_normal(k)
        return out
    fitted = _residual_fitted(s.intercepts[j], s.coefs[j], x, j)
    resid = x[:, j] - fitted
    for d in range(n_draws):
        out[d] = fitted + rng_from(seed, d).permutation(resid)
    return out


def draw_complement(s: ConditionalSampler, x, subset, n_draws, seed) -> np.ndarray:
    """Joint conditional draws of all coordinates outside ``subset`` given the
    observed ``subset`` values, shape (n_draws, k, p - |subset|). Gaussian
    only: general-set conditioning is what the closed-form block formulas
    buy us."""
    if s.kind != "gaussian_conditional":
        raise SamplerKindError("joint complement draws need the gaussian_conditional sampler")
    x = np.asarray(x, dtype=np.float64)
    if n_draws < 1:
        raise ValidationError("n_draws must be >= 1")
    subset = np.asarray(sorted(subset), dtype=np.int64)
    comp = np.setdiff1d(np.arange(s.p), subset)
    k = x.shape[0]
    if comp.size == 0:
        return np.empty((n_draws, k, 0))
    if subset.size == 0:
        cond_mean = np.broadcast_to(s.mean[comp], (k, comp.size))
        cond_cov = s.cov[np.ix_(comp, comp)]
    else:
        sig_ss = s.cov[np.ix_(subset, subset)]
        sig_sc = s.cov[np.ix_(subset, comp)]
        a = np.linalg.solve(sig_ss + 1e-10 * np.eye(subset.size), sig_sc)
        cond_mean = s.mean[comp] + (x[:, subset] - s.mean[subset]) @ a
        cond_cov = s.cov[np.ix_(comp, comp)] - sig_sc.T @ a
        cond_cov = 0.5 * (cond_cov + cond_cov.T)
    try:
        chol = np.linalg.cholesky(cond_cov)
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(cond_cov + 1e-10 * np.eye(comp.size))
    z = rng_from(seed).standard_normal((n_draws, k, comp.size))
    return cond_mean[None, :, :] + z @ chol.T
