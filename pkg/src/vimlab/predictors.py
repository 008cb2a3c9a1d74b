"""Predictive models standing in for the regression function and its
restrictions to feature subsets, plus the squared-coefficient importance
index for standardized linear fits.

Tree ensembles are grown from scratch (axis-aligned squared-error CART) so
that split tie-breaking and per-tree seeding are fully deterministic; the
split-search and traversal inner loops live in ``_tree_kernels``.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _tree_kernels as _tk
from ._rng import rng_from
from .data import QUADRATIC, Dataset, Loss
from .exceptions import (
    DimensionError,
    RankDeficiencyError,
    ValidationError,
)

KINDS = ("mean", "ols", "ridge", "random_forest", "boosted_trees")


@dataclass(frozen=True)
class PredictorSpec:
    """Model family plus hyperparameters.

    ``max_depth=None`` resolves to 12 for forests and 6 for boosting;
    ``mtry=None`` resolves to ceil(p/3) at fit time.
    """

    kind: str
    lam: float = 1.0
    n_trees: int = 100
    max_depth: int = None
    min_leaf: int = 5
    mtry: int = None
    n_rounds: int = 200
    learning_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown predictor kind {self.kind!r}")
        if self.lam < 0:
            raise ValidationError("ridge penalty must be nonnegative")
        for name in ("n_trees", "min_leaf", "n_rounds"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValidationError("mtry must be >= 1")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValidationError("learning_rate must lie in (0, 1]")


@dataclass(frozen=True)
class LinearFit:
    """Intercept and coefficients of a linear least-squares fit."""

    intercept: float
    coefficients: np.ndarray
    standardized_inputs: bool = False

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=np.float64)
        coef.setflags(write=False)
        if not np.isfinite(coef).all() or not math.isfinite(self.intercept):
            raise ValidationError("linear fit has non-finite entries")
        object.__setattr__(self, "coefficients", coef)


class _MeanModel:
    def __init__(self, value):
        self.value = float(value)

    def predict(self, x):
        return np.full(x.shape[0], self.value)


class _LinearModel:
    def __init__(self, fit: LinearFit):
        self.fit = fit

    def predict(self, x):
        return self.fit.intercept + x @ self.fit.coefficients


class _EnsembleModel:
    """Concatenated tree arrays; prediction is init + scale * sum of leaves."""

    def __init__(self, feature, threshold, left, right, value, offsets, scale, init):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.offsets = offsets
        self.scale = float(scale)
        self.init = float(init)

    def predict(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _tk.predict_ensemble(
            self.feature, self.threshold, self.left, self.right, self.value,
            self.offsets, x, self.scale, self.init,
        )


@dataclass(frozen=True)
class FittedPredictor:
    """A trained model over an ordered subset of the original columns.

    ``predict`` accepts exactly ``len(subset)`` columns, in subset order.
    """

    kind: str
    subset: tuple
    train_loss: float
    model: object

    def predict(self, x):
        return predict(self, x)

    @property
    def linear(self) -> LinearFit:
        if not isinstance(self.model, _LinearModel):
            raise ValidationError(f"{self.kind} predictor has no linear fit")
        return self.model.fit


def _check_subset(subset, p, kind):
    if subset is None:
        subset = tuple(range(p))
    subset = tuple(int(j) for j in subset)
    if len(set(subset)) != len(subset):
        raise ValidationError("subset indices must be distinct")
    if any(j < 0 or j >= p for j in subset):
        raise ValidationError(f"subset {subset} out of range for p={p}")
    if not subset and kind != "mean":
        raise ValidationError(f"empty subset is only allowed for the mean predictor, not {kind!r}")
    return subset


def _fit_linear(x, y, lam):
    n, k = x.shape
    if lam == 0.0:
        design = np.column_stack([np.ones(n), x])
        coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        if rank < k + 1:
            raise RankDeficiencyError(
                f"normal equations are singular (rank {rank} < {k + 1}); set a ridge penalty"
            )
        return float(coef[0]), coef[1:]
    xm = x.mean(axis=0)
    ym = y.mean()
    xc = x - xm
    beta = np.linalg.solve(xc.T @ xc + lam * np.eye(k), xc.T @ (y - ym))
    return float(ym - xm @ beta), beta


def _max_nodes(n, max_depth, min_leaf):
    by_rows = 2 * math.ceil(n / max(min_leaf, 1)) + 1
    if max_depth < 60:
        return min(by_rows, 2 ** (max_depth + 1) - 1)
    return by_rows


def _grow_tree(x, y, sorted_idx, max_depth, min_leaf, cand):
    max_nodes = _max_nodes(x.shape[0], max_depth, min_leaf)
    if cand.shape[0] > 1 and cand.shape[0] < max_nodes:
        raise ValidationError("candidate matrix shorter than the node bound")
    f, t, l, r, v, n_nodes = _tk.fit_tree(x, y, sorted_idx, max_depth, min_leaf, cand, max_nodes)
    return f[:n_nodes], t[:n_nodes], l[:n_nodes], r[:n_nodes], v[:n_nodes]


def _concat_trees(trees, scale, init):
    feature = np.concatenate([t[0] for t in trees])
    threshold = np.concatenate([t[1] for t in trees])
    left = np.concatenate([t[2] for t in trees])
    right = np.concatenate([t[3] for t in trees])
    value = np.concatenate([t[4] for t in trees])
    offsets = np.zeros(len(trees) + 1, np.int64)
    np.cumsum([t[0].shape[0] for t in trees], out=offsets[1:])
    return _EnsembleModel(feature, threshold, left, right, value, offsets, scale, init)


def _fit_forest(x, y, spec: PredictorSpec):
    n, p = x.shape
    depth = 12 if spec.max_depth is None else spec.max_depth
    mtry = min(p, math.ceil(p / 3) if spec.mtry is None else spec.mtry)
    max_nodes = _max_nodes(n, depth, spec.min_leaf)
    trees = []
    for t in range(spec.n_trees):
        rng = rng_from(spec.seed, t)
        rows = rng.integers(0, n, n)
        if mtry == p:
            cand = np.arange(p, dtype=np.int64)[None, :]
        else:
            cand = np.sort(
                np.argsort(rng.random((max_nodes, p)), axis=1)[:, :mtry], axis=1
            ).astype(np.int64)
        x_boot = np.ascontiguousarray(x[rows])
        trees.append(
            _grow_tree(x_boot, y[rows], _tk.presort(x_boot), depth, spec.min_leaf, cand)
        )
    return _concat_trees(trees, 1.0 / spec.n_trees, 0.0)


def _fit_boosted(x, y, spec: PredictorSpec):
    n, p = x.shape
    depth = 6 if spec.max_depth is None else spec.max_depth
    cand = np.arange(p, dtype=np.int64)[None, :]
    init = y.mean()
    resid = y - init
    x = np.ascontiguousarray(x)
    sorted_idx = _tk.presort(x)
    trees = []
    one = np.zeros(2, np.int64)
    for _ in range(spec.n_rounds):
        tree = _grow_tree(x, resid, sorted_idx, depth, spec.min_leaf, cand)
        trees.append(tree)
        one[1] = tree[0].shape[0]
        step = _tk.predict_ensemble(*tree, one, x, spec.learning_rate, 0.0)
        resid = resid - step
    return _concat_trees(trees, spec.learning_rate, init)


def fit(spec: PredictorSpec, d: Dataset, subset=None) -> FittedPredictor:
    """Train ``spec`` on ``d`` restricted to ``subset`` (default: all columns)."""
    subset = _check_subset(subset, d.p, spec.kind)
    y = d.y
    if spec.kind == "mean":
        model = _MeanModel(y.mean())
    else:
        x = d.x[:, subset]
        if spec.kind in ("ols", "ridge"):
            lam = 0.0 if spec.kind == "ols" else spec.lam
            intercept, coef = _fit_linear(x, y, lam)
            model = _LinearModel(LinearFit(intercept, coef, standardized_inputs=d.standardized))
        elif spec.kind == "random_forest":
            model = _fit_forest(x, y, spec)
        else:
            model = _fit_boosted(x, y, spec)
    fitted = FittedPredictor(kind=spec.kind, subset=subset, train_loss=0.0, model=model)
    train_loss = float(per_sample_loss(fitted, d, QUADRATIC).mean())
    return replace(fitted, train_loss=train_loss)


def predict(f: FittedPredictor, x) -> np.ndarray:
    """Evaluate the model on rows restricted to its training subset."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError("predict expects a 2-D matrix")
    if x.shape[1] != len(f.subset):
        raise DimensionError(
            f"predictor was trained on {len(f.subset)} columns, got {x.shape[1]}"
        )
    out = f.model.predict(x)
    if not np.isfinite(out).all():
        raise ValidationError("non-finite predictions")
    return out


def per_sample_loss(f: FittedPredictor, d: Dataset, loss: Loss) -> np.ndarray:
    """Pointwise losses on ``d``; the mean is the empirical risk."""
    preds = predict(f, d.x[:, f.subset])
    return loss(d.y, preds)


def exact_linear(coefficients, intercept=0.0) -> FittedPredictor:
    """A population linear model m(x) = intercept + coef'x (no fitting)."""
    lin = LinearFit(float(intercept), np.asarray(coefficients, dtype=np.float64))
    return FittedPredictor(
        kind="ols",
        subset=tuple(range(lin.coefficients.shape[0])),
        train_loss=0.0,
        model=_LinearModel(lin),
    )


def glm_index(fit: LinearFit) -> np.ndarray:
    """Squared coefficients of a linear fit on standardized covariates.

    Squaring drops the sign of each effect; comparability across features is
    only meaningful when the inputs share a common scale, so fits on
    unstandardized covariates are refused.
    """
    if not fit.standardized_inputs:
        raise ValidationError(
            "squared-coefficient importance needs standardized covariates: "
            "coefficients on raw scales are not comparable across features"
        )
    return fit.coefficients**2
