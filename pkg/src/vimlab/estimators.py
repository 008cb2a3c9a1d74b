"""The variable-importance estimator catalog.

Each estimator targets one theoretical index (``method_target``) through one
estimation style (``method_style``): perturbing a fixed model's inputs,
marginalizing coordinates out of it, or refitting reduced models. Estimators
return an ``ImportanceReport`` whose per-feature score is the mean of stored
per-sample loss deltas (per-ordering contributions for the Shapley methods,
fold contributions for the double-split leave-out variant).

All estimators are deterministic functions of their inputs and seed; each
feature derives its own stream so results do not depend on evaluation order.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import rng_from
from .data import Dataset, Loss, standardize, split
from .exceptions import (
    DegenerateDenominatorError,
    DimensionError,
    InsufficientSampleError,
    SamplerKindError,
    ValidationError,
)
from .predictors import FittedPredictor, PredictorSpec, fit, glm_index, per_sample_loss, predict
from .samplers import CONDITIONAL_KINDS, ConditionalSampler, draw, draw_complement

METHODS = (
    "PFI", "CFI", "SobolCPI", "LOCO", "LOCO_W", "LOCI",
    "cSAGE", "cSAGEvf", "mSAGE", "mSAGEvf", "scSAGE", "dTSI", "GLM",
)

_TARGETS = {
    "PFI": "pfi",
    "CFI": "tsi",
    "SobolCPI": "tsi",
    "LOCO": "tsi",
    "LOCO_W": "tsi",
    "LOCI": "loci",
    "cSAGE": "sage",
    "cSAGEvf": "loci",
    "mSAGE": "msage",
    "mSAGEvf": "msage_vf",
    "scSAGE": "tsi",
    "dTSI": "dtsi",
    "GLM": "glm",
}

_STYLES = {
    "PFI": "perturbation",
    "CFI": "perturbation",
    "SobolCPI": "perturbation",
    "LOCO": "refitting",
    "LOCO_W": "refitting",
    "LOCI": "refitting",
    "cSAGE": "marginalization",
    "cSAGEvf": "marginalization",
    "mSAGE": "marginalization",
    "mSAGEvf": "marginalization",
    "scSAGE": "marginalization",
    "dTSI": "refitting",
    "GLM": "refitting",
}


def method_target(method):
    """The theoretical index a method estimates."""
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}")
    return _TARGETS[method]


def method_style(method):
    """perturbation, marginalization, or refitting."""
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}")
    return _STYLES[method]


@dataclass(frozen=True)
class ImportanceReport:
    """Per-feature scores with the per-sample contributions behind them."""

    method: str
    scores: np.ndarray
    deltas: np.ndarray = None  # (p, m); None for methods without contributions
    std_errors: np.ndarray = None
    p_values: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        if self.deltas is not None:
            deltas = np.asarray(self.deltas, dtype=np.float64)
            if deltas.shape[0] != scores.shape[0]:
                raise DimensionError("one delta row per feature required")
            if np.abs(deltas.mean(axis=1) - scores).max() > 1e-9:
                raise ValidationError("scores must equal the mean of their deltas")
            object.__setattr__(self, "deltas", deltas)
            if self.std_errors is None:
                m = deltas.shape[1]
                se = deltas.std(axis=1, ddof=1) / np.sqrt(m) if m > 1 else np.zeros(scores.shape)
                object.__setattr__(self, "std_errors", se)
        if self.std_errors is None:
            object.__setattr__(self, "std_errors", np.full(scores.shape, np.nan))

    def with_p_values(self, p_values):
        return replace(self, p_values=np.asarray(p_values, dtype=np.float64))


def normalize_scores(scores):
    """Scores divided by the max absolute entry (all-zero vectors pass through)."""
    scores = np.asarray(scores, dtype=np.float64)
    top = np.abs(scores).max()
    return scores / top if top > 0 else scores.copy()


def _mix(seed, *key):
    """Derived integer sub-seed for a feature/repetition stream."""
    ss = np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _check_full_model(m: FittedPredictor, p):
    if m.subset != tuple(range(p)):
        raise DimensionError(
            f"estimator needs a model trained on all {p} features in order, got subset {m.subset}"
        )


def _check_conditional(s):
    if s is None or s.kind not in CONDITIONAL_KINDS:
        kind = None if s is None else s.kind
        raise SamplerKindError(f"a conditional sampler is required, got {kind!r}")


def _replaced(x, j, col):
    out = x.copy()
    out[:, j] = col
    return out


def _batch_predict_replaced(m, x, j, cols):
    """Predictions with column j replaced by each draw, shape (D, k)."""
    n_draws, k = cols.shape
    stacked = np.tile(x, (n_draws, 1))
    stacked[:, j] = cols.reshape(-1)
    return predict(m, stacked).reshape(n_draws, k)


def estimate_pfi(m, test: Dataset, loss: Loss, n_perm=10, seed=0) -> ImportanceReport:
    """Marginal-permutation importance: loss gap when column j is shuffled."""
    _check_full_model(m, test.p)
    if n_perm < 1:
        raise ValidationError("n_perm must be >= 1")
    x, y = test.x, test.y
    base_loss = loss(y, predict(m, x))
    deltas = np.empty((test.p, test.n))
    for j in range(test.p):
        fseed = _mix(seed, j)
        cols = np.stack([rng_from(fseed, k).permutation(x[:, j]) for k in range(n_perm)])
        preds = _batch_predict_replaced(m, x, j, cols)
        deltas[j] = (loss(y, preds) - base_loss).mean(axis=0)
    return ImportanceReport(
        method="PFI", scores=deltas.mean(axis=1), deltas=deltas,
        metadata={"seed": seed, "n_perm": n_perm},
    )


def estimate_cfi(m, test: Dataset, loss: Loss, s: ConditionalSampler, n_draws=10, seed=0):
    """Conditional-replacement importance: column j is redrawn given the rest;
    the per-draw loss gaps are averaged."""
    _check_full_model(m, test.p)
    _check_conditional(s)
    x, y = test.x, test.y
    base_loss = loss(y, predict(m, x))
    deltas = np.empty((test.p, test.n))
    for j in range(test.p):
        cols = draw(s, x, j, n_draws, _mix(seed, j))
        preds = _batch_predict_replaced(m, x, j, cols)
        deltas[j] = (loss(y, preds) - base_loss).mean(axis=0)
    return ImportanceReport(
        method="CFI", scores=deltas.mean(axis=1), deltas=deltas,
        metadata={"seed": seed, "n_draws": n_draws, "sampler": s.kind},
    )


def estimate_sobol_cpi(m, test: Dataset, loss: Loss, s: ConditionalSampler, n_cal=100, seed=0):
    """Conditional-permutation total-index estimator: the prediction is first
    averaged over n_cal conditional draws, then the loss gap is scaled by
    n_cal / (n_cal + 1) to undo the finite-draw bias."""
    _check_full_model(m, test.p)
    _check_conditional(s)
    if n_cal < 1:
        raise ValidationError("n_cal must be >= 1")
    x, y = test.x, test.y
    base_loss = loss(y, predict(m, x))
    factor = n_cal / (n_cal + 1.0)
    deltas = np.empty((test.p, test.n))
    for j in range(test.p):
        cols = draw(s, x, j, n_cal, _mix(seed, j))
        avg = _batch_predict_replaced(m, x, j, cols).mean(axis=0)
        deltas[j] = factor * (loss(y, avg) - base_loss)
    return ImportanceReport(
        method="SobolCPI", scores=deltas.mean(axis=1), deltas=deltas,
        metadata={"seed": seed, "n_cal": n_cal, "sampler": s.kind},
    )


def _reduced_spec_fit(spec, train, keep, sub_seed):
    if keep:
        return fit(replace(spec, seed=sub_seed), train, keep)
    return fit(PredictorSpec("mean", seed=sub_seed), train, ())


def estimate_loco(spec: PredictorSpec, train: Dataset, test: Dataset, loss: Loss, seed=0):
    """Leave-one-covariate-out: refit without column j, compare test risks."""
    full = fit(replace(spec, seed=_mix(seed, 0)), train)
    full_loss = per_sample_loss(full, test, loss)
    deltas = np.empty((test.p, test.n))
    for j in range(test.p):
        keep = tuple(a for a in range(train.p) if a != j)
        reduced = _reduced_spec_fit(spec, train, keep, _mix(seed, 1 + j))
        deltas[j] = loss(test.y, predict(reduced, test.x[:, keep])) - full_loss
    return ImportanceReport(
        method="LOCO", scores=deltas.mean(axis=1), deltas=deltas,
        metadata={"seed": seed, "model": spec.kind},
    )


def estimate_loco_w(spec: PredictorSpec, d: Dataset, loss: Loss, seed=0):
    """Leave-one-covariate-out with extra data splitting: the full model is
    fit and evaluated on one half, each reduced model on the other, so the
    two risks are independent. Contributions are the reduced-model test
    losses minus the full-model risk; the variance adds both folds' terms."""
    half_a, half_b = split(d, [0.5, 0.5], _mix(seed, 0))
    train_a, test_a = split(half_a, [0.7, 0.3], _mix(seed, 1))
    train_b, test_b = split(half_b, [0.7, 0.3], _mix(seed, 2))
    if test_a.n < 20 or test_b.n < 20:
        raise InsufficientSampleError(
            f"each fold needs >= 20 evaluation rows, got {test_a.n} and {test_b.n}"
        )
    full = fit(replace(spec, seed=_mix(seed, 3)), train_a)
    loss_a = per_sample_loss(full, test_a, loss)
    risk_a = loss_a.mean()
    var_a = loss_a.var(ddof=1) / test_a.n
    deltas = np.empty((d.p, test_b.n))
    se = np.empty(d.p)
    for j in range(d.p):
        keep = tuple(a for a in range(d.p) if a != j)
        reduced = _reduced_spec_fit(spec, train_b, keep, _mix(seed, 4 + j))
        loss_b = loss(test_b.y, predict(reduced, test_b.x[:, keep]))
        deltas[j] = loss_b - risk_a
        se[j] = np.sqrt(loss_b.var(ddof=1) / test_b.n + var_a)
    return ImportanceReport(
        method="LOCO_W", scores=deltas.mean(axis=1), deltas=deltas, std_errors=se,
        metadata={"seed": seed, "model": spec.kind, "fold_sizes": (test_a.n, test_b.n)},
    )


def estimate_loci(spec: PredictorSpec, train: Dataset, test: Dataset, loss: Loss, seed=0):
    """Leave-one-covariate-in: baseline (mean-prediction) risk minus the risk
    of a model fit on column j alone, so informative features score positive."""
    base = fit(PredictorSpec("mean", seed=_mix(seed, 0)), train, ())
    base_loss = loss(test.y, predict(base, test.x[:, ()]))
    deltas = np.empty((test.p, test.n))
    for j in range(test.p):
        single = fit(replace(spec, seed=_mix(seed, 1 + j)), train, (j,))
        deltas[j] = base_loss - loss(test.y, predict(single, test.x[:, (j,)]))
    return ImportanceReport(
        method="LOCI", scores=deltas.mean(axis=1), deltas=deltas,
        metadata={"seed": seed, "model": spec.kind},
    )


def _coalition_pred(m, x, subset, mode, s, n_draws, seed):
    """Average model output with out-of-coalition coordinates replaced.

    conditional + gaussian sampler: joint conditional draws given the
    observed coalition. conditional + residual sampler: valid only when the
    complement is a single coordinate (or the empty coalition, which falls
    back to empirical row resampling). marginal: complement coordinates come
    from seeded row permutations, preserving their joint law independently
    of the coalition.
    """
    p = x.shape[1]
    comp = [c for c in range(p) if c not in subset]
    if not comp:
        return predict(m, x)
    k = x.shape[0]
    stacked = np.tile(x, (n_draws, 1))
    if mode == "conditional" and s.kind == "gaussian_conditional":
        draws = draw_complement(s, x, subset, n_draws, seed)
        stacked[:, comp] = draws.reshape(n_draws * k, len(comp))
    elif mode == "conditional" and subset:
        if len(comp) != 1:
            raise SamplerKindError(
                "residual_permutation only supports single-coordinate conditioning"
            )
        cols = draw(s, x, comp[0], n_draws, seed)
        stacked[:, comp[0]] = cols.reshape(-1)
    else:
        rng = rng_from(seed)
        for dd in range(n_draws):
            perm = rng.permutation(k)
            stacked[dd * k : (dd + 1) * k, comp] = x[perm][:, comp]
    return predict(m, stacked).reshape(n_draws, k).mean(axis=0)


def _check_sage_args(mode, s, p, n_draws):
    if mode not in ("conditional", "marginal"):
        raise ValidationError(f"mode must be conditional or marginal, got {mode!r}")
    if n_draws < 1:
        raise ValidationError("n_draws must be >= 1")
    if mode == "conditional":
        _check_conditional(s)
        if s.kind == "residual_permutation" and p > 2:
            raise SamplerKindError(
                "residual_permutation cannot condition on arbitrary coalitions; "
                "use gaussian_conditional for p > 2"
            )


def estimate_sage(m, test: Dataset, loss: Loss, mode="conditional", s=None,
                  n_permutations=64, n_draws=16, seed=0):
    """Monte Carlo Shapley importance over uniformly random feature orderings.

    Walking each ordering's prefix chain and averaging the telescoping loss
    drops reproduces, in expectation, the exact combinatorial weighting over
    coalitions. Stored deltas are per-ordering mean contributions; the
    metadata carries an independently drawn estimate of the total value for
    the efficiency check.
    """
    _check_full_model(m, test.p)
    _check_sage_args(mode, s, test.p, n_draws)
    if n_permutations < 1:
        raise ValidationError("n_permutations must be >= 1")
    x, y = test.x, test.y
    p = test.p
    loss_full = loss(y, predict(m, x))
    contrib = np.zeros((p, n_permutations))
    for r in range(n_permutations):
        ordering = rng_from(seed, r).permutation(p)
        base = _coalition_pred(m, x, (), mode, s, n_draws, _mix(seed, r, p))
        prev_loss = loss(y, base)
        coalition = []
        for t, j in enumerate(ordering):
            coalition.append(int(j))
            if len(coalition) == p:
                new_loss = loss_full
            else:
                pred = _coalition_pred(
                    m, x, tuple(sorted(coalition)), mode, s, n_draws, _mix(seed, r, t)
                )
                new_loss = loss(y, pred)
            contrib[j, r] = (prev_loss - new_loss).mean()
            prev_loss = new_loss
    base = _coalition_pred(m, x, (), mode, s, n_draws, _mix(seed, n_permutations, p + 1))
    v_full_deltas = loss(y, base) - loss_full
    method = "cSAGE" if mode == "conditional" else "mSAGE"
    return ImportanceReport(
        method=method, scores=contrib.mean(axis=1), deltas=contrib,
        metadata={
            "seed": seed, "mode": mode, "n_permutations": n_permutations,
            "n_draws": n_draws, "v_full": float(v_full_deltas.mean()),
            "v_full_se": float(v_full_deltas.std(ddof=1) / np.sqrt(v_full_deltas.size)),
        },
    )


def estimate_sage_vf(m, test: Dataset, loss: Loss, mode="conditional", s=None,
                     n_draws=32, seed=0):
    """Single-coalition value function v({j}) (or its marginal counterpart):
    baseline loss minus the loss of predictions marginalized down to x^j."""
    _check_full_model(m, test.p)
    _check_sage_args(mode, s, test.p, n_draws)
    x, y = test.x, test.y
    p = test.p
    base = _coalition_pred(m, x, (), mode, s, n_draws, _mix(seed, p))
    base_loss = loss(y, base)
    deltas = np.empty((p, test.n))
    for j in range(p):
        pred_j = _coalition_pred(m, x, (j,), mode, s, n_draws, _mix(seed, j))
        deltas[j] = base_loss - loss(y, pred_j)
    method = "cSAGEvf" if mode == "conditional" else "mSAGEvf"
    return ImportanceReport(
        method=method, scores=deltas.mean(axis=1), deltas=deltas,
        metadata={"seed": seed, "mode": mode, "n_draws": n_draws},
    )


def estimate_sc_sage(m, test: Dataset, loss: Loss, s: ConditionalSampler, n_draws=32, seed=0):
    """Surplus value of completing the coalition: v([p]) - v(-j), estimated by
    marginalizing coordinate j out of the model with conditional draws. With
    the quadratic loss this is the total-index in marginalization form."""
    _check_full_model(m, test.p)
    _check_conditional(s)
    if n_draws < 1:
        raise ValidationError("n_draws must be >= 1")
    x, y = test.x, test.y
    base_loss = loss(y, predict(m, x))
    deltas = np.empty((test.p, test.n))
    for j in range(test.p):
        cols = draw(s, x, j, n_draws, _mix(seed, j))
        avg = _batch_predict_replaced(m, x, j, cols).mean(axis=0)
        deltas[j] = loss(y, avg) - base_loss
    return ImportanceReport(
        method="scSAGE", scores=deltas.mean(axis=1), deltas=deltas,
        metadata={"seed": seed, "n_draws": n_draws, "sampler": s.kind},
    )


def estimate_dtsi(spec: PredictorSpec, train: Dataset, test: Dataset, seed=0):
    """Decorrelated total-index: the squared model gap from removing column j,
    normalized by the conditional variance of X^j given the rest (estimated
    by regressing X^j on X^-j on the training split). Quadratic loss only."""
    full = fit(replace(spec, seed=_mix(seed, 0)), train)
    pred_full = predict(full, test.x)
    deltas = np.empty((test.p, test.n))
    for j in range(test.p):
        keep = tuple(a for a in range(train.p) if a != j)
        reduced = _reduced_spec_fit(spec, train, keep, _mix(seed, 1 + j))
        num = (pred_full - predict(reduced, test.x[:, keep])) ** 2
        if keep:
            design = np.column_stack([np.ones(train.n), train.x[:, keep]])
            beta, _, _, _ = np.linalg.lstsq(design, train.x[:, j], rcond=None)
            fitted = beta[0] + test.x[:, keep] @ beta[1:]
        else:
            fitted = np.full(test.n, train.x[:, j].mean())
        den = float(((test.x[:, j] - fitted) ** 2).mean())
        if den <= 1e-8:
            raise DegenerateDenominatorError(
                f"conditional variance of feature {j} is numerically zero"
            )
        deltas[j] = num / den
    return ImportanceReport(
        method="dTSI", scores=deltas.mean(axis=1), deltas=deltas,
        metadata={"seed": seed, "model": spec.kind},
    )


def estimate_glm(train: Dataset, seed=0):
    """Squared standardized-OLS coefficients. No per-sample deltas."""
    fitted = fit(PredictorSpec("ols", seed=seed), standardize(train))
    return ImportanceReport(
        method="GLM", scores=glm_index(fitted.linear), deltas=None,
        metadata={"seed": seed},
    )
