"""Closed-form squared 2-Wasserstein distance between Gaussian fits.

For X ~ N(mu_x, S_x) and Y ~ N(mu_y, S_y)::

    W2^2 = |mu_x - mu_y|^2 + tr(S_x + S_y - 2 (S_x^1/2 S_y S_x^1/2)^1/2)

Applied to ICV-normalized regional volumes this is the WASABI score; applied to
network embeddings it is the Frechet (FID) distance. Both go through
:func:`fit_gaussian` and :func:`w2_squared`.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NotPSDError, NumericalError
from .feature_table import FeatureTable

__all__ = [
    "GaussianSummary",
    "DistanceResult",
    "fit_gaussian",
    "sqrt_psd",
    "w2_squared",
    "wasabi",
    "frechet_distance",
    "SYMMETRY_RTOL",
    "PSD_RTOL",
    "RIDGE_RTOL",
    "CLAMP_RTOL",
]

# |A - A.T| <= SYMMETRY_RTOL * max|A|
SYMMETRY_RTOL = 1e-10
# eigenvalues >= -PSD_RTOL * lambda_max are round-off, below that the matrix is indefinite
PSD_RTOL = 1e-8
# ridge added to a fitted covariance whose smallest eigenvalue is < RIDGE_RTOL * trace / d
RIDGE_RTOL = 1e-10
# negative W2^2 totals within CLAMP_RTOL * (tr S_x + tr S_y + |dmu|^2) are clamped to 0
CLAMP_RTOL = 1e-10

METRICS = ("wasabi", "frechet", "mmd_biased", "mmd_unbiased")


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    """Mean and covariance of a cohort.

    ``n`` is the number of samples the summary was fitted on, or None for
    analytically specified parameters.
    """

    mean: np.ndarray
    cov: np.ndarray
    n: int | None = None
    regularization_added: float = 0.0

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.array(self.cov, dtype=float))
        d = mean.shape[0]
        if d < 1:
            raise InputError("Gaussian summary needs dimension >= 1")
        if cov.shape != (d, d):
            raise InputError(f"covariance shape {cov.shape} does not match mean length {d}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InputError("mean and covariance must be finite")
        _check_symmetric(cov)
        _check_psd(np.linalg.eigvalsh(cov))
        if self.n is not None and self.n < 2:
            raise InputError(f"sample count must be >= 2, got {self.n}")
        if self.regularization_added < 0:
            raise InputError("regularization_added must be nonnegative")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "n": self.n,
            "d": self.d,
            "regularization_added": self.regularization_added,
        }


@dataclass(frozen=True)
class DistanceResult:
    metric: str
    value: float
    d: int
    n_x: int | None
    n_y: int | None
    regularization: float = 0.0
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.metric not in METRICS:
            raise InputError(f"unknown metric {self.metric!r}")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "notes", tuple(self.notes))

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "value": self.value,
            "d": self.d,
            "n_x": self.n_x,
            "n_y": self.n_y,
            "regularization": self.regularization,
            "notes": list(self.notes),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _check_symmetric(a: np.ndarray) -> None:
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise InputError("matrix is not symmetric")


def _check_psd(eigvals: np.ndarray) -> None:
    lam_max = eigvals[-1]
    lam_min = eigvals[0]
    if lam_max < 0 or lam_min < -PSD_RTOL * lam_max:
        raise NotPSDError(
            f"matrix is not positive semidefinite (min eigenvalue {lam_min:.3e}, "
            f"max {lam_max:.3e})"
        )


def sqrt_psd(a) -> np.ndarray:
    """Principal square root of a symmetric positive semidefinite matrix.

    Uses a symmetric eigendecomposition ``V diag(sqrt(max(w, 0))) V^T``.
    Eigenvalues down to ``-PSD_RTOL * lambda_max`` are treated as round-off
    and clamped; anything more negative raises :class:`NotPSDError`.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    _check_symmetric(a)
    w, v = np.linalg.eigh(a)
    _check_psd(w)
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return (root + root.T) / 2


def fit_gaussian(data, *, require_normalized: bool = True, ddof: int = 1) -> GaussianSummary:
    """Fit mean and sample covariance to the rows of ``data``.

    ``data`` is a :class:`FeatureTable` or an ``(n, d)`` array. Volume tables
    must be ICV-normalized unless ``require_normalized=False``. The
    covariance uses divisor ``n - ddof`` and is symmetrized; if its smallest
    eigenvalue falls below ``RIDGE_RTOL * trace / d``, a ridge of that size
    is added and recorded in ``regularization_added``.
    """
    if isinstance(data, FeatureTable):
        if require_normalized and data.volumes and not data.normalized:
            raise InputError(
                "table is not ICV-normalized; call normalize_by_icv first "
                "or pass require_normalized=False"
            )
        x = data.values
    else:
        x = np.asarray(data, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
    if x.ndim != 2:
        raise InputError(f"expected a 2-D sample matrix, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise InputError(f"need at least 2 samples to fit a covariance, got {n}")
    if not np.all(np.isfinite(x)):
        raise InputError("sample matrix contains non-finite values")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - ddof)
    cov = (cov + cov.T) / 2
    trace = float(np.trace(cov))
    if trace <= 0:
        raise InputError("all features have zero variance")
    floor = RIDGE_RTOL * trace / d
    ridge = 0.0
    if np.linalg.eigvalsh(cov)[0] < floor:
        ridge = floor
        cov = cov + ridge * np.eye(d)
    return GaussianSummary(mean=mean, cov=cov, n=n, regularization_added=ridge)


def w2_squared(gx: GaussianSummary, gy: GaussianSummary, metric: str = "wasabi") -> DistanceResult:
    """Squared 2-Wasserstein distance between two Gaussian summaries."""
    if gx.d != gy.d:
        raise InputError(f"dimension mismatch: {gx.d} vs {gy.d}")
    reg = gx.regularization_added + gy.regularization_added
    common = dict(metric=metric, d=gx.d, n_x=gx.n, n_y=gy.n, regularization=reg)
    if np.array_equal(gx.mean, gy.mean) and np.array_equal(gx.cov, gy.cov):
        return DistanceResult(value=0.0, notes=("identical summaries",), **common)

    diff = gx.mean - gy.mean
    mean_term = float(diff @ diff)
    root_x = sqrt_psd(gx.cov)
    inner = root_x @ gy.cov @ root_x
    inner = (inner + inner.T) / 2
    cross = float(np.trace(sqrt_psd(inner)))
    tr_x, tr_y = float(np.trace(gx.cov)), float(np.trace(gy.cov))
    total = mean_term + tr_x + tr_y - 2 * cross

    notes = []
    if total < 0:
        tol = CLAMP_RTOL * (tr_x + tr_y + mean_term)
        if total < -tol:
            raise NumericalError(f"W2^2 evaluated to {total:.3e}, beyond round-off tolerance {tol:.3e}")
        notes.append(f"clamped round-off total {total:.3e} to 0")
        total = 0.0
    if reg:
        notes.append(f"ridge {reg:.3e} added to covariance")
    return DistanceResult(value=total, notes=tuple(notes), **common)


def _check_same_features(x: FeatureTable, y: FeatureTable) -> None:
    if x.feature_names == y.feature_names:
        return
    sym = sorted(set(x.feature_names) ^ set(y.feature_names))
    if sym:
        raise InputError(f"feature names differ between tables: {sym}")
    raise InputError("tables have the same features in a different column order")


def wasabi(x: FeatureTable, y: FeatureTable) -> DistanceResult:
    """WASABI score: W2^2 between Gaussian fits of two ICV-normalized tables."""
    _check_same_features(x, y)
    return w2_squared(fit_gaussian(x), fit_gaussian(y), metric="wasabi")


def frechet_distance(fx, fy) -> DistanceResult:
    """Frechet distance between two sets of feature vectors (the FID formula).

    Works on raw embeddings from any external extractor; no normalization is
    required or applied.
    """
    if isinstance(fx, FeatureTable) and isinstance(fy, FeatureTable):
        _check_same_features(fx, fy)
    gx = fit_gaussian(fx, require_normalized=False)
    gy = fit_gaussian(fy, require_normalized=False)
    return dataclasses.replace(w2_squared(gx, gy), metric="frechet")
