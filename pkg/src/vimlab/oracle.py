"""Exact evaluation of every theoretical importance index on finite discrete
joints and on linear-Gaussian populations.

Everything here enumerates the full probability table (or applies a closed
form), so results are exact up to float rounding; this module is the ground
truth that estimator and axiom tests are checked against.

Conventions worth knowing:

* The variance formulation of the total-index is computed as
  E[Var(y | X^-j)] - E[Var(y | X)], i.e. the risk-difference convention, so
  that it matches the other formulations on noisy joints. (In a regression
  setting the subtracted term is the constant noise variance, which is why
  it is often dropped.)
* Conditional mutual information is reported in nats, consistent with a
  natural-log cross-entropy.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from ._rng import rng_from
from .data import GaussianLinearSpec, Loss
from .exceptions import (
    DimensionError,
    LossDomainError,
    SizeError,
    ValidationError,
)

MAX_ATOMS = 10**6

TSI_FORMULATIONS = (1, 2, 3, 4, 5, 7)

GAUSSIAN_INDICES = ("tsi", "sage", "sage_vf", "pfi", "dtsi")


@dataclass(frozen=True)
class DiscreteJoint:
    """An exact finite joint over p real-valued covariates and a target.

    ``probs`` has shape (len(supports[0]), ..., len(supports[p-1]),
    len(y_support)); entries are nonnegative and sum to 1 within 1e-12.
    """

    supports: tuple
    y_support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        supports = tuple(np.asarray(s, dtype=np.float64) for s in self.supports)
        ys = np.asarray(self.y_support, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if len(supports) < 1:
            raise ValidationError("need at least one covariate support")
        for s in supports + (ys,):
            if s.ndim != 1 or s.size < 1:
                raise ValidationError("each support needs at least one point")
            if s.size > 1 and (np.diff(s) <= 0).any():
                raise ValidationError("support values must be strictly increasing")
        shape = tuple(s.size for s in supports) + (ys.size,)
        if probs.shape != shape:
            raise DimensionError(f"probs shape {probs.shape} != supports shape {shape}")
        if probs.size > MAX_ATOMS:
            raise SizeError(f"joint has {probs.size} atoms; cap is {MAX_ATOMS}")
        if probs.min() < 0:
            raise ValidationError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValidationError(f"total mass {probs.sum()!r} is not 1 within 1e-12")
        for a in supports + (ys, probs):
            a.setflags(write=False)
        object.__setattr__(self, "supports", supports)
        object.__setattr__(self, "y_support", ys)
        object.__setattr__(self, "probs", probs)

    @property
    def p(self):
        return len(self.supports)


@dataclass(frozen=True)
class IndexValue:
    """An exact index value for one feature of one joint."""

    index: str
    feature: int
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError("index value must be finite")


# ---------------------------------------------------------------------------
# pmf plumbing
# ---------------------------------------------------------------------------


def _axes_tuple(axes):
    return tuple(int(a) for a in axes)


def _px(d):
    """Marginal over covariates, shape d.probs.shape[:-1]."""
    return d.probs.sum(axis=-1)


def _cond_moments(d, S):
    """E[y | x^S] and E[y^2 | x^S] tables over the S-marginal space.

    Returns (mean, second_moment, mass) with NaN where the marginal mass is
    zero.
    """
    p = d.p
    S = sorted(S)
    drop = tuple(a for a in range(p) if a not in S)
    joint_sy = d.probs.sum(axis=drop) if drop else d.probs
    mass = joint_sy.sum(axis=-1)
    num1 = joint_sy @ d.y_support
    num2 = joint_sy @ (d.y_support**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        m1 = np.where(mass > 0, num1 / mass, np.nan)
        m2 = np.where(mass > 0, num2 / mass, np.nan)
    return m1, m2, mass


def _broadcast_over_x(d, table, S):
    """Expand a table over the S-axes to the full covariate space."""
    p = d.p
    S = sorted(S)
    shape = [1] * p
    for rank, axis in enumerate(S):
        shape[axis] = d.probs.shape[axis]
    t = table.reshape(shape)
    return np.broadcast_to(t, d.probs.shape[:-1])


def _loss_table(d, loss, pred_x):
    """ell(y, pred(x)) over the full (x, y) space; pred_x spans the x space."""
    y = d.y_support
    pred = pred_x[..., None]
    if loss.kind == "quadratic":
        diff = y - pred
        return diff * diff
    if not np.isin(y, (0.0, 1.0)).all():
        raise LossDomainError("cross-entropy requires y support {0, 1}")
    mask = d.probs > 0
    used = np.broadcast_to(pred, d.probs.shape)[mask]
    if ((used <= 0) | (used >= 1)).any():
        raise LossDomainError("cross-entropy requires conditional means inside (0, 1)")
    safe = np.clip(pred, 1e-300, 1 - 1e-16)
    return -(y * np.log(safe) + (1 - y) * np.log1p(-safe))


def _risk(d, loss, pred_x):
    return float((d.probs * _loss_table(d, loss, pred_x)).sum())


def _full_m(d):
    m, _, mass = _cond_moments(d, range(d.p))
    return m, mass


def _check_defined(weights, values, what):
    bad = (weights > 0) & ~np.isfinite(values)
    if bad.any():
        raise ValidationError(
            f"{what} needs the regression function at zero-mass covariate points"
        )


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def exact_cond_mean(d: DiscreteJoint, S):
    """Lookup table x^S -> E[y | x^S] for configurations with positive mass."""
    S = sorted(int(j) for j in S)
    if any(j < 0 or j >= d.p for j in S):
        raise ValidationError(f"subset {S} out of range")
    m1, _, mass = _cond_moments(d, S)
    table = {}
    if not S:
        table[()] = float(m1)
        return table
    grids = [d.supports[j] for j in S]
    for pos in itertools.product(*(range(g.size) for g in grids)):
        if mass[pos] > 0:
            table[tuple(float(g[i]) for g, i in zip(grids, pos))] = float(m1[pos])
    return table


def exact_value_function(d: DiscreteJoint, S, loss: Loss, mode="conditional"):
    """Predictive-power gain v(S) of coalition S over the mean prediction.

    ``conditional`` uses the restricted regression E[y | x^S]; ``marginal``
    integrates the full regression function against the marginal law of the
    complement, independent of x^S.
    """
    if mode not in ("conditional", "marginal"):
        raise ValidationError(f"unknown mode {mode!r}")
    S = sorted(int(j) for j in S)
    ybar, _, _ = _cond_moments(d, ())
    base = _risk(d, loss, np.broadcast_to(np.float64(ybar), d.probs.shape[:-1]))
    if mode == "conditional":
        m1, _, _ = _cond_moments(d, S)
        pred = _broadcast_over_x(d, m1, S) if S else np.broadcast_to(np.float64(m1), d.probs.shape[:-1])
        pred = np.where(np.isfinite(pred), pred, ybar)
    else:
        m, mass_x = _full_m(d)
        comp = [a for a in range(d.p) if a not in S]
        if not comp:
            pred = np.where(mass_x > 0, m, ybar)
        else:
            pcomp = mass_x
            for a in sorted(S, reverse=True):
                pcomp = pcomp.sum(axis=a)
            mass_s = mass_x.sum(axis=tuple(comp)) if S else np.float64(1.0)
            # weight the full m by the complement marginal, independent of x^S
            shape = [d.probs.shape[a] if a in comp else 1 for a in range(d.p)]
            w = np.broadcast_to(pcomp.reshape(shape), m.shape)
            s_shape = [1 if a in comp else d.probs.shape[a] for a in range(d.p)]
            ws = np.broadcast_to(np.asarray(mass_s).reshape(s_shape), m.shape)
            _check_defined(w * ws, m, "marginal value function")
            integrand = np.where(w > 0, np.nan_to_num(m) * w, 0.0)
            pred_s = integrand.sum(axis=tuple(comp))
            pred = _broadcast_over_x(d, pred_s, S) if S else np.broadcast_to(
                np.float64(pred_s), d.probs.shape[:-1]
            )
        pred = np.where(np.isfinite(pred), pred, ybar)
    return base - _risk(d, loss, pred)


def exact_tsi(d: DiscreteJoint, j, loss: Loss, formulation=3):
    """Total-index of feature j under the designated equivalent formulation.

    1: E[Var(y|X^-j)] - E[Var(y|X)]        (quadratic)
    2: E[(m_-j - m)^2]                     (quadratic)
    3: risk difference of m_-j vs m        (any loss)
    4: marginalization of m over X^j|X^-j  (any loss)
    5: half the conditional-perturbation loss gap (quadratic)
    7: conditional mutual information I(y; X^j | X^-j) in nats (cross-entropy)
    """
    j = int(j)
    if not (0 <= j < d.p):
        raise ValidationError(f"feature {j} out of range")
    if formulation not in TSI_FORMULATIONS:
        raise ValidationError(f"formulation must be one of {TSI_FORMULATIONS}")
    if formulation in (1, 2, 5) and loss.kind != "quadratic":
        raise ValidationError(f"formulation {formulation} requires the quadratic loss")
    if formulation == 7 and loss.kind != "cross_entropy":
        raise ValidationError("formulation 7 is the cross-entropy (information) form")

    rest = [a for a in range(d.p) if a != j]
    px = _px(d)

    if formulation == 1:
        m_r, m2_r, mass_r = _cond_moments(d, rest)
        var_r = m2_r - m_r**2
        m_f, m2_f, mass_f = _cond_moments(d, range(d.p))
        var_f = m2_f - m_f**2
        e_var_r = float(np.where(mass_r > 0, np.nan_to_num(var_r) * mass_r, 0.0).sum())
        e_var_f = float(np.where(mass_f > 0, np.nan_to_num(var_f) * mass_f, 0.0).sum())
        return e_var_r - e_var_f

    if formulation == 2:
        m_full, mass_x = _full_m(d)
        m_r, _, _ = _cond_moments(d, rest)
        m_r_full = _broadcast_over_x(d, m_r, rest)
        diff = np.where(mass_x > 0, np.nan_to_num(m_r_full) - np.nan_to_num(m_full), 0.0)
        return float((px * diff**2).sum())

    if formulation == 3:
        m_full, mass_x = _full_m(d)
        ybar = float(_cond_moments(d, ())[0])
        m_full = np.where(mass_x > 0, m_full, ybar)
        m_r, _, _ = _cond_moments(d, rest)
        m_r_full = _broadcast_over_x(d, m_r, rest)
        m_r_full = np.where(mass_x > 0, m_r_full, ybar)
        return _risk(d, loss, m_r_full) - _risk(d, loss, m_full)

    if formulation == 4:
        m_full, mass_x = _full_m(d)
        ybar = float(_cond_moments(d, ())[0])
        mass_rest = px.sum(axis=j)
        # average the full regression against p(x^j | x^-j)
        with np.errstate(invalid="ignore", divide="ignore"):
            w = px / np.expand_dims(mass_rest, axis=j)
        integrand = np.where(px > 0, np.nan_to_num(m_full) * np.nan_to_num(w), 0.0)
        marginalized = integrand.sum(axis=j)
        marg_full = _broadcast_over_x(d, marginalized, rest)
        marg_full = np.where(mass_x > 0, marg_full, ybar)
        m_full = np.where(mass_x > 0, m_full, ybar)
        return _risk(d, loss, marg_full) - _risk(d, loss, m_full)

    if formulation == 5:
        m_full, mass_x = _full_m(d)
        ybar = float(_cond_moments(d, ())[0])
        m_filled = np.where(mass_x > 0, m_full, ybar)
        risk_orig = _risk(d, loss, m_filled)
        mass_rest = px.sum(axis=j)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond_j = px / np.expand_dims(mass_rest, axis=j)
        cond_j = np.where(px > 0, cond_j, 0.0)
        # E over (x, y) and replacement value t ~ p(.|x^-j) of (y - m(x^-j, t))^2
        perturbed = 0.0
        sj = d.supports[j].size
        for t in range(sj):
            m_t = np.take(m_filled, t, axis=j)
            m_t_full = _broadcast_over_x(d, m_t, rest)
            w_t = np.take(cond_j, t, axis=j)
            w_t_full = _broadcast_over_x(d, w_t, rest)
            loss_t = _loss_table(d, loss, m_t_full)
            perturbed += float((d.probs * w_t_full[..., None] * loss_t).sum())
        return 0.5 * (perturbed - risk_orig)

    # formulation 7: direct pmf summation of I(y; X^j | X^-j)
    total = 0.0
    p_rest = d.probs.sum(axis=j).sum(axis=-1)
    p_rest_y = d.probs.sum(axis=j)
    p_x = _px(d)
    it = np.nditer(d.probs, flags=["multi_index"])
    for v in it:
        pr = float(v)
        if pr <= 0:
            continue
        ix = it.multi_index
        rest_ix = tuple(ix[a] for a in range(d.p) if a != j)
        x_ix = ix[:-1]
        y_ix = ix[-1]
        log_num = math.log(pr) + math.log(p_rest[rest_ix])
        log_den = math.log(p_x[x_ix]) + math.log(p_rest_y[rest_ix + (y_ix,)])
        total += pr * (log_num - log_den)
    return total


def r2_difference(d: DiscreteJoint, j):
    """Display form of the total-index as a drop in explained-variance
    fraction: the risk-difference formulation divided by Var(y)."""
    m1, m2, _ = _cond_moments(d, ())
    var_y = float(m2) - float(m1) ** 2
    if var_y <= 0:
        raise ValidationError("target variance is zero")
    return exact_tsi(d, j, Loss("quadratic"), 3) / var_y


def exact_shapley(d: DiscreteJoint, j, loss: Loss, mode="conditional"):
    """Exact Shapley aggregation of the value function over all coalitions."""
    j = int(j)
    p = d.p
    if p > 12:
        raise SizeError(f"exact Shapley enumerates 2^p subsets; p={p} > 12")
    if not (0 <= j < p):
        raise ValidationError(f"feature {j} out of range")
    others = [a for a in range(p) if a != j]
    cache = {}

    def v(S):
        key = frozenset(S)
        if key not in cache:
            cache[key] = exact_value_function(d, sorted(key), loss, mode)
        return cache[key]

    total = 0.0
    for size in range(p):
        w = 1.0 / (p * comb(p - 1, size, exact=True))
        for S in itertools.combinations(others, size):
            total += w * (v(S + (j,)) - v(S))
    return total


def exact_pfi(d: DiscreteJoint, j, loss: Loss):
    """Exact loss gap when X^j is replaced by an independent marginal copy."""
    j = int(j)
    if not (0 <= j < d.p):
        raise ValidationError(f"feature {j} out of range")
    rest = [a for a in range(d.p) if a != j]
    m_full, mass_x = _full_m(d)
    px = _px(d)
    pj = px.sum(axis=tuple(rest))
    ybar = float(_cond_moments(d, ())[0])

    risk_orig = _risk(d, loss, np.where(mass_x > 0, m_full, ybar))
    perturbed = 0.0
    for t in range(d.supports[j].size):
        if pj[t] <= 0:
            continue
        m_t = np.take(m_full, t, axis=j)
        m_t_full = _broadcast_over_x(d, m_t, rest)
        _check_defined(px, m_t_full, "marginal perturbation")
        loss_t = _loss_table(d, loss, np.nan_to_num(m_t_full))
        perturbed += pj[t] * float((d.probs * loss_t).sum())
    return perturbed - risk_orig


def conditional_independence_gap(d: DiscreteJoint, j):
    """Max atomwise gap |p(x^j, y | x^-j) - p(x^j | x^-j) p(y | x^-j)|.

    Zero iff X^j is conditionally independent of y given the rest.
    """
    j = int(j)
    p_rest = d.probs.sum(axis=j).sum(axis=-1)
    p_rest_y = d.probs.sum(axis=j)
    p_x = _px(d)
    gap = 0.0
    it = np.nditer(d.probs, flags=["multi_index"])
    for v in it:
        ix = it.multi_index
        rest_ix = tuple(ix[a] for a in range(d.p) if a != j)
        pr_rest = p_rest[rest_ix]
        if pr_rest <= 0:
            continue
        lhs = float(v) / pr_rest
        rhs = (p_x[ix[:-1]] / pr_rest) * (p_rest_y[rest_ix + (ix[-1],)] / pr_rest)
        gap = max(gap, abs(lhs - rhs))
    return gap


# ---------------------------------------------------------------------------
# linear-Gaussian closed forms
# ---------------------------------------------------------------------------


def _gaussian_v(spec: GaussianLinearSpec, S):
    """Explained variance of the best prediction from X^S: Var(E[y | X^S])."""
    S = sorted(S)
    if not S:
        return 0.0
    sig = spec.sigma
    beta = spec.beta
    cols = sig[:, S]
    block = sig[np.ix_(S, S)]
    sol = np.linalg.solve(block, cols.T @ beta)
    return float((cols @ sol) @ beta)


def gaussian_linear_index(spec: GaussianLinearSpec, j, index):
    """Closed-form index values for y = beta'X + noise with X ~ N(mean, sigma)."""
    j = int(j)
    if index not in GAUSSIAN_INDICES:
        raise ValidationError(f"index must be one of {GAUSSIAN_INDICES}")
    if not (0 <= j < spec.p):
        raise ValidationError(f"feature {j} out of range")
    sig = spec.sigma
    beta = spec.beta
    if index in ("tsi", "dtsi"):
        try:
            precision = np.linalg.inv(sig)
        except np.linalg.LinAlgError:
            raise ValidationError("sigma must be strictly positive definite") from None
        cond_var = 1.0 / precision[j, j]
        if cond_var <= 0:
            raise ValidationError("sigma must be strictly positive definite")
        return float(beta[j] ** 2 * cond_var) if index == "tsi" else float(beta[j] ** 2)
    if index == "pfi":
        # linear m: E[(m(X with independent copy of X^j) - m(X))^2]
        return float(2.0 * beta[j] ** 2 * sig[j, j])
    if index == "sage_vf":
        return _gaussian_v(spec, [j])
    p = spec.p
    if p > 12:
        raise SizeError(f"exact Shapley enumerates 2^p subsets; p={p} > 12")
    others = [a for a in range(p) if a != j]
    total = 0.0
    for size in range(p):
        w = 1.0 / (p * comb(p - 1, size, exact=True))
        for S in itertools.combinations(others, size):
            total += w * (_gaussian_v(spec, list(S) + [j]) - _gaussian_v(spec, list(S)))
    return total


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------


def random_joint(p, max_support, seed, positive=True):
    """A random fully-supported joint with supports of size 2..max_support."""
    rng = rng_from(seed)
    sizes = rng.integers(2, max_support + 1, size=p + 1)
    supports = [np.sort(rng.normal(size=s)) for s in sizes[:-1]]
    ys = np.sort(rng.normal(size=sizes[-1]))
    raw = rng.random(tuple(sizes))
    if positive:
        raw = raw + 0.05
    probs = raw / raw.sum()
    probs.flat[-1] += 1.0 - probs.sum()
    return DiscreteJoint(tuple(supports), ys, probs)


def factored_null_joint(p, j, max_support, seed):
    """A joint where X^j is conditionally independent of y given the rest:
    probs factor as p(x^-j) p(x^j | x^-j) p(y | x^-j)."""
    rng = rng_from(seed)
    sizes = rng.integers(2, max_support + 1, size=p + 1)
    supports = [np.sort(rng.normal(size=s)) for s in sizes[:-1]]
    ys = np.sort(rng.normal(size=sizes[-1]))
    rest_shape = tuple(int(sizes[a]) for a in range(p) if a != j)
    p_rest = rng.random(rest_shape) + 0.05
    p_rest /= p_rest.sum()
    cond_j = rng.random(rest_shape + (int(sizes[j]),)) + 0.05
    cond_j /= cond_j.sum(axis=-1, keepdims=True)
    cond_y = rng.random(rest_shape + (int(sizes[p]),)) + 0.05
    cond_y /= cond_y.sum(axis=-1, keepdims=True)
    probs = p_rest[..., None, None] * cond_j[..., :, None] * cond_y[..., None, :]
    # axes are (rest..., j, y); move j back into position
    probs = np.moveaxis(probs, -2, j)
    probs = probs / probs.sum()
    return DiscreteJoint(tuple(supports), ys, probs)


def correlated_coins(match_prob=0.8):
    """Two fair coins agreeing with probability ``match_prob``; y is the
    second coin. The first coin is conditionally null yet its value function
    is positive: the standard witness that Shapley-style indices can assign
    importance to a conditionally independent feature."""
    if not (0.0 < match_prob < 1.0):
        raise ValidationError("match_prob must lie in (0, 1)")
    probs = np.zeros((2, 2, 2))
    for x1 in (0, 1):
        for x2 in (0, 1):
            mass = match_prob / 2 if x1 == x2 else (1 - match_prob) / 2
            probs[x1, x2, x2] = mass
    return DiscreteJoint(
        (np.array([0.0, 1.0]), np.array([0.0, 1.0])), np.array([0.0, 1.0]), probs
    )


def independence_fixture(p, max_support, seed):
    """A joint with X^0 independent of everything else: probs =
    p(x^0) p(x^rest, y). Satisfies the premises under which a zero marginal
    perturbation index forces the conditional factorization."""
    rng = rng_from(seed)
    sizes = rng.integers(2, max_support + 1, size=p + 1)
    supports = [np.sort(rng.normal(size=s)) for s in sizes[:-1]]
    ys = np.sort(rng.normal(size=sizes[-1]))
    p0 = rng.random(int(sizes[0])) + 0.05
    p0 /= p0.sum()
    rest = rng.random(tuple(int(s) for s in sizes[1:])) + 0.05
    rest /= rest.sum()
    probs = p0.reshape((-1,) + (1,) * p) * rest[None, ...]
    probs = probs / probs.sum()
    return DiscreteJoint(tuple(supports), ys, probs)


# ---------------------------------------------------------------------------
# plain-text serialization
# ---------------------------------------------------------------------------


def joint_to_text(d: DiscreteJoint) -> str:
    """Serialize: support lines, then one `x_1 ... x_p y prob` row per
    positive-mass atom."""
    lines = [f"p {d.p}"]
    for s in d.supports:
        lines.append("support " + " ".join(repr(float(v)) for v in s))
    lines.append("y_support " + " ".join(repr(float(v)) for v in d.y_support))
    lines.append("atoms")
    it = np.nditer(d.probs, flags=["multi_index"])
    for v in it:
        pr = float(v)
        if pr <= 0:
            continue
        ix = it.multi_index
        vals = [repr(float(d.supports[a][ix[a]])) for a in range(d.p)]
        vals.append(repr(float(d.y_support[ix[-1]])))
        vals.append(repr(pr))
        lines.append(" ".join(vals))
    return "\n".join(lines) + "\n"


def joint_from_text(text: str) -> DiscreteJoint:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("p "):
        raise ValidationError("joint text must start with a 'p <count>' line")
    p = int(lines[0].split()[1])
    supports = []
    k = 1
    for _ in range(p):
        parts = lines[k].split()
        if parts[0] != "support":
            raise ValidationError(f"expected a support line, got {lines[k]!r}")
        supports.append(np.array([float(v) for v in parts[1:]]))
        k += 1
    parts = lines[k].split()
    if parts[0] != "y_support":
        raise ValidationError("expected a y_support line")
    ys = np.array([float(v) for v in parts[1:]])
    k += 1
    if lines[k] != "atoms":
        raise ValidationError("expected the 'atoms' marker")
    shape = tuple(s.size for s in supports) + (ys.size,)
    probs = np.zeros(shape)
    lookups = [
        {float(v): i for i, v in enumerate(s)} for s in list(supports) + [ys]
    ]
    for ln in lines[k + 1 :]:
        vals = [float(v) for v in ln.split()]
        if len(vals) != p + 2:
            raise ValidationError(f"atom row needs {p + 2} values: {ln!r}")
        try:
            ix = tuple(lookups[a][vals[a]] for a in range(p + 1))
        except KeyError:
            raise ValidationError(f"atom value off-support in row {ln!r}") from None
        probs[ix] += vals[-1]
    return DiscreteJoint(tuple(supports), ys, probs)
