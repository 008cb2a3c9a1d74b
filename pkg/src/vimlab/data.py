"""Datasets, losses, synthetic generators, CSV ingestion, and splitting.

The shared substrate every estimator consumes. All types are immutable after
construction (arrays are flagged read-only) and generators are pure functions
of their parameters and seed.
"""

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ._rng import rng_from
from .exceptions import (
    DegenerateColumnError,
    DimensionError,
    InsufficientSampleError,
    LossDomainError,
    MissingColumnError,
    NanCellError,
    NonNumericCellError,
    ValidationError,
)

STANDARDIZED_TOL = 1e-9


def _readonly(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """An n x p design matrix with a length-n target and feature names.

    Invariants enforced at construction: n >= 2, p >= 1, finite entries, no
    two columns exactly identical, and (when ``standardized``) column means
    within 1e-9 of 0 and sample standard deviations within 1e-9 of 1.
    """

    x: np.ndarray
    y: np.ndarray
    names: tuple = None
    standardized: bool = False

    def __post_init__(self):
        x = _readonly(self.x)
        y = _readonly(self.y)
        if x.ndim != 2:
            raise DimensionError("x must be a 2-D matrix")
        if y.ndim != 1:
            raise DimensionError("y must be a 1-D vector")
        n, p = x.shape
        if n < 2 or p < 1:
            raise ValidationError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise DimensionError(f"y has length {y.shape[0]}, expected {n}")
        if not np.isfinite(x).all() or not np.isfinite(y).all():
            raise ValidationError("x and y must be finite (no NaN/inf)")

        names = self.names
        if names is None:
            names = tuple(f"x{j}" for j in range(p))
        else:
            names = tuple(str(s) for s in names)
            if len(names) != p:
                raise DimensionError(f"{len(names)} names for {p} columns")

        # exact duplicate columns break identifiability
        seen = {}
        for j in range(p):
            key = x[:, j].tobytes()
            if key in seen:
                raise ValidationError(
                    f"columns {seen[key]} and {j} ({names[j]!r}) are identical"
                )
            seen[key] = j

        if self.standardized:
            mu = x.mean(axis=0)
            sd = x.std(axis=0, ddof=1)
            if np.abs(mu).max() > STANDARDIZED_TOL or np.abs(sd - 1).max() > STANDARDIZED_TOL:
                raise ValidationError("standardized flag set but columns are not standardized")

        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", names)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class Loss:
    """Pointwise loss ell(y, yhat) -> nonnegative real.

    ``quadratic`` is (y - yhat)^2. ``cross_entropy`` requires y in {0, 1} and
    yhat in the open interval (0, 1).
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("quadratic", "cross_entropy"):
            raise ValidationError(f"unknown loss kind {self.kind!r}")

    def __call__(self, y, yhat):
        y = np.asarray(y, dtype=np.float64)
        yhat = np.asarray(yhat, dtype=np.float64)
        if self.kind == "quadratic":
            d = y - yhat
            return d * d
        if not np.isin(y, (0.0, 1.0)).all():
            raise LossDomainError("cross-entropy requires y in {0, 1}")
        if not ((yhat > 0.0) & (yhat < 1.0)).all():
            raise LossDomainError("cross-entropy requires predictions strictly inside (0, 1)")
        return -(y * np.log(yhat) + (1.0 - y) * np.log1p(-yhat))


QUADRATIC = Loss("quadratic")
CROSS_ENTROPY = Loss("cross_entropy")


@dataclass(frozen=True)
class GaussianLinearSpec:
    """A linear-Gaussian population: X ~ N(mean, sigma), y = beta'X + noise."""

    mean: np.ndarray
    sigma: np.ndarray
    beta: np.ndarray
    noise_var: float = 0.0

    def __post_init__(self):
        mean = _readonly(self.mean)
        sigma = _readonly(self.sigma)
        beta = _readonly(self.beta)
        p = mean.shape[0]
        if sigma.shape != (p, p) or beta.shape != (p,):
            raise DimensionError("mean, sigma, beta dimensions disagree")
        if np.abs(sigma - sigma.T).max() > 1e-12:
            raise ValidationError("sigma must be symmetric within 1e-12")
        if np.linalg.eigvalsh(sigma).min() < -1e-10:
            raise ValidationError("sigma must be positive semi-definite")
        if self.noise_var < 0:
            raise ValidationError("noise_var must be nonnegative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "beta", beta)

    @property
    def p(self):
        return self.mean.shape[0]


def standardize(d: Dataset) -> Dataset:
    """Center each column and scale by its (n-1) sample standard deviation."""
    sd = d.x.std(axis=0, ddof=1)
    for j, s in enumerate(sd):
        if s == 0.0:
            raise DegenerateColumnError(f"column {j} ({d.names[j]!r}) is constant")
    x = (d.x - d.x.mean(axis=0)) / sd
    return Dataset(x=x, y=d.y, names=d.names, standardized=True)


def _cholesky_with_jitter(sigma):
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        p = sigma.shape[0]
        return np.linalg.cholesky(sigma + 1e-10 * np.eye(p))


def gen_toeplitz_gaussian(n, p, rho, seed):
    """Rows i.i.d. from N(0, Sigma) with Sigma[i, j] = rho^|i-j|."""
    if not (-1.0 < rho < 1.0):
        raise ValidationError(f"rho must lie in (-1, 1), got {rho}")
    if n < 1 or p < 1:
        raise ValidationError("need n >= 1 and p >= 1")
    sigma = rho ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    chol = _cholesky_with_jitter(sigma)
    z = rng_from(seed).standard_normal((n, p))
    return z @ chol.T


def gen_poly_response(x, noise_sd, seed):
    """y_i = x_i0 + 2 x_i1 - x_i4^2 + x_i7 x_i8 + eps_i, eps ~ N(0, noise_sd^2)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 9:
        raise DimensionError("response needs at least 9 columns")
    y = x[:, 0] + 2.0 * x[:, 1] - x[:, 4] ** 2 + x[:, 7] * x[:, 8]
    if noise_sd > 0:
        y = y + noise_sd * rng_from(seed).standard_normal(x.shape[0])
    return y


# features the polynomial response never touches
POLY_NULL_FEATURES = (2, 3, 5, 6, 9)


def gen_linear_pair(n, rho, beta, seed):
    """Two Gaussian features with correlation rho; noise-free y = beta * x0."""
    if not (-1.0 < rho < 1.0):
        raise ValidationError(f"rho must lie in (-1, 1), got {rho}")
    sigma = np.array([[1.0, rho], [rho, 1.0]])
    z = rng_from(seed).standard_normal((n, 2))
    x = z @ _cholesky_with_jitter(sigma).T
    return Dataset(x=x, y=beta * x[:, 0], names=("x0", "x1"))


def load_csv(path, target):
    """Read a headered numeric CSV into a Dataset with ``target`` as y."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if target not in header:
            raise MissingColumnError(f"target column {target!r} not in {header}")
        t_idx = header.index(target)
        rows = []
        for r, rec in enumerate(reader, start=1):
            if len(rec) != len(header):
                raise ValidationError(f"row {r} has {len(rec)} cells, expected {len(header)}")
            vals = []
            for c, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCellError(
                        f"row {r}, column {header[c]!r}: cannot parse {cell!r}"
                    ) from None
                if math.isnan(v) or math.isinf(v):
                    raise NanCellError(f"row {r}, column {header[c]!r}: non-finite value {cell!r}")
                vals.append(v)
            rows.append(vals)
    data = np.array(rows, dtype=np.float64)
    if data.size == 0:
        raise ValidationError(f"{path} has no data rows")
    keep = [c for c in range(len(header)) if c != t_idx]
    return Dataset(x=data[:, keep], y=data[:, t_idx], names=[header[c] for c in keep])


def split(d: Dataset, fractions, seed):
    """Disjoint, exhaustive row partition; shuffle deterministic given seed.

    Parts are returned with ``standardized=False`` since row subsets of a
    standardized matrix are no longer exactly standardized.
    """
    fractions = [float(f) for f in fractions]
    if any(f <= 0 for f in fractions):
        raise ValidationError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must sum to 1, got {sum(fractions)}")
    n = d.n
    bounds = [0] + [int(round(c * n)) for c in np.cumsum(fractions)]
    bounds[-1] = n
    sizes = np.diff(bounds)
    if (sizes < 1).any():
        raise InsufficientSampleError(f"fractions {fractions} leave an empty part at n={n}")
    perm = rng_from(seed).permutation(n)
    parts = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        rows = perm[lo:hi]
        parts.append(Dataset(x=d.x[rows], y=d.y[rows], names=d.names))
    return parts
