"""Supporting statistics and the resampling protocol.

* :func:`cohens_d` -- per-region standardized mean difference.
* :func:`henze_zirkler` -- multivariate normality test, to check the Gaussian
  assumption behind the closed-form distance.
* :func:`run_bootstrap` / :func:`within_cohort_null` -- repeated subsampling of
  two cohorts (or two random halves of one cohort) to get a distribution of a
  distance rather than a single number.

Every repeat draws from its own generator, seeded by hashing
``(seed, repeat, side)`` with :func:`derive_seed`, so results do not depend on
the number of workers or the order repeats finish in.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps
from scipy.spatial.distance import pdist

from .errors import InputError, NumericalError, WasabiError
from .feature_table import FeatureTable
from .gaussian_w2 import RIDGE_RTOL, DistanceResult, frechet_distance, wasabi
from .mmd import KernelSpec, mmd_squared

__all__ = [
    "cohens_d",
    "HZResult",
    "henze_zirkler",
    "derive_seed",
    "resolve_metric",
    "BootstrapReport",
    "summarize",
    "run_bootstrap",
    "within_cohort_null",
]

_MASK64 = (1 << 64) - 1


def cohens_d(x, y) -> float:
    """Standardized mean difference ``(mean(x) - mean(y)) / pooled_sd``.

    The pooled SD combines the two unbiased variances weighted by their
    degrees of freedom.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n, m = x.size, y.size
    if n < 2 or m < 2:
        raise InputError("cohens_d needs at least 2 values per group")
    pooled_var = ((n - 1) * x.var(ddof=1) + (m - 1) * y.var(ddof=1)) / (n + m - 2)
    if not pooled_var > 0:
        raise InputError("pooled variance is zero")
    return float((x.mean() - y.mean()) / math.sqrt(pooled_var))


# --------------------------------------------------------------------------
# Henze-Zirkler
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HZResult:
    statistic: float
    beta: float
    pvalue: float
    n: int
    d: int

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "beta": self.beta, "pvalue": self.pvalue, "n": self.n, "d": self.d}


def hz_beta(n: int, d: int) -> float:
    """Smoothing parameter that is optimal for the sample size and dimension."""
    return ((n * (2 * d + 1)) / 4) ** (1 / (d + 4)) / math.sqrt(2)


def hz_lognormal_params(beta: float, d: int) -> tuple[float, float]:
    """(log-mean, log-sd) of the lognormal approximating the null statistic."""
    b2 = beta * beta
    b4, b8 = b2 * b2, b2**4
    a = 1 + 2 * b2
    w = (1 + b2) * (1 + 3 * b2)
    mu = 1 - a ** (-d / 2) * (1 + d * b2 / a + d * (d + 2) * b4 / (2 * a * a))
    var = (
        2 * (1 + 4 * b2) ** (-d / 2)
        + 2 * a ** (-d) * (1 + 2 * d * b4 / a**2 + 3 * d * (d + 2) * b8 / (4 * a**4))
        - 4 * w ** (-d / 2) * (1 + 3 * d * b4 / (2 * w) + d * (d + 2) * b8 / (2 * w * w))
    )
    log_mean = math.log(math.sqrt(mu**4 / (var + mu**2)))
    log_sd = math.sqrt(math.log((var + mu**2) / mu**2))
    return log_mean, log_sd


def henze_zirkler(data) -> HZResult:
    """Henze-Zirkler test of multivariate normality.

    Rows are standardized with the maximum-likelihood covariance (divisor n),
    so the statistic is invariant to invertible affine maps of the data. The
    p-value uses the lognormal approximation to the null distribution.
    Small p-values reject normality.
    """
    x = data.values if isinstance(data, FeatureTable) else np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n <= d:
        raise InputError(f"Henze-Zirkler needs more samples than dimensions (n={n}, d={d})")
    if not np.all(np.isfinite(x)):
        raise InputError("data contains non-finite values")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / n
    cov = (cov + cov.T) / 2
    w, v = np.linalg.eigh(cov)
    if w[0] <= RIDGE_RTOL * max(w.sum(), 0.0) / d:
        raise NumericalError("sample covariance is singular")
    z = centered @ ((v / np.sqrt(w)) @ v.T)

    beta = hz_beta(n, d)
    b2 = beta * beta
    d_jk = pdist(z, "sqeuclidean")
    d_j = np.einsum("ij,ij->i", z, z)
    # full double sum = 2 * (sum over pairs j<k) + n diagonal terms of exp(0)
    pair_sum = 2 * np.exp(-b2 / 2 * d_jk).sum() + n
    stat = (
        pair_sum / n
        - 2 * (1 + b2) ** (-d / 2) * np.exp(-b2 / (2 * (1 + b2)) * d_j).sum()
        + n * (1 + 2 * b2) ** (-d / 2)
    )
    log_mean, log_sd = hz_lognormal_params(beta, d)
    pvalue = float(sps.lognorm.sf(stat, s=log_sd, scale=math.exp(log_mean)))
    return HZResult(statistic=float(stat), beta=beta, pvalue=min(max(pvalue, 0.0), 1.0), n=n, d=d)


# --------------------------------------------------------------------------
# Resampling
# --------------------------------------------------------------------------


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int, side: int = 0) -> int:
    """64-bit sub-seed for (seed, repeat index, side); injective in ``index``."""
    h = _splitmix64(seed & _MASK64)
    h = _splitmix64(h ^ (index & _MASK64))
    return _splitmix64(h ^ (side & _MASK64))


MetricFn = Callable[[FeatureTable, FeatureTable], DistanceResult]


def _mmd_default(a: FeatureTable, b: FeatureTable) -> DistanceResult:
    return mmd_squared(a.values, b.values, KernelSpec(), "unbiased")


_METRICS: dict[str, MetricFn] = {
    "wasabi": wasabi,
    "frechet": frechet_distance,
    "mmd": _mmd_default,
}


def resolve_metric(metric: str | MetricFn) -> tuple[str, MetricFn]:
    """Map a metric name (``wasabi``, ``frechet``, ``mmd``) or callable to ``(name, fn)``."""
    if callable(metric):
        return getattr(metric, "__name__", "custom"), metric
    try:
        return metric, _METRICS[metric]
    except KeyError:
        raise InputError(f"unknown metric {metric!r}; choose from {sorted(_METRICS)}") from None


def summarize(values: Sequence[float]) -> dict:
    v = np.asarray(values, dtype=float)
    return {
        "mean": float(v.mean()),
        "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "median": float(np.median(v)),
        "q2.5": float(np.percentile(v, 2.5)),
        "q97.5": float(np.percentile(v, 97.5)),
    }


@dataclass(frozen=True)
class BootstrapReport:
    """Per-repeat metric values and their summary.

    ``design`` is ``"between"`` for two-cohort resampling and ``"within"``
    for the split-half null of a single cohort.
    """

    metric: str
    repeats: int
    sample_size: int
    seed: int
    values: tuple[float, ...]
    design: str = "between"
    summary: dict = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) != self.repeats:
            raise InputError(f"expected {self.repeats} values, got {len(self.values)}")
        object.__setattr__(self, "summary", summarize(self.values))

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "design": self.design,
            "protocol": {"sample_size": self.sample_size, "repeats": self.repeats, "seed": self.seed},
            "summary": self.summary,
            "values": list(self.values),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["repeat", "value"])
        for i, v in enumerate(self.values):
            w.writerow([i, repr(v)])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d: dict) -> BootstrapReport:
        p = d["protocol"]
        return cls(
            metric=d["metric"],
            repeats=p["repeats"],
            sample_size=p["sample_size"],
            seed=p["seed"],
            values=tuple(d["values"]),
            design=d.get("design", "between"),
        )


def _run_repeats(fn: Callable[[int], float], repeats: int, workers: int) -> list[float]:
    def guarded(i: int) -> float:
        try:
            return fn(i)
        except (WasabiError, np.linalg.LinAlgError, ValueError) as exc:
            cls = InputError if isinstance(exc, InputError) else NumericalError
            raise cls(f"repeat {i} failed: {exc}") from exc

    if workers <= 1:
        return [guarded(i) for i in range(repeats)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, range(repeats)))


def _value(result) -> float:
    return float(result.value if isinstance(result, DistanceResult) else result)


def run_bootstrap(
    x: FeatureTable,
    y: FeatureTable,
    metric: str | MetricFn = "wasabi",
    sample_size: int = 500,
    repeats: int = 1000,
    seed: int = 0,
    *,
    workers: int = 1,
) -> BootstrapReport:
    """Distribution of a distance over repeated subsamples of two cohorts.

    Each repeat draws ``sample_size`` rows without replacement from ``x`` and,
    independently, from ``y``, then evaluates the metric on the pair. Values
    are returned in repeat order whatever ``workers`` is.
    """
    name, fn = resolve_metric(metric)
    if repeats < 1:
        raise InputError("repeats must be >= 1")
    if sample_size < 2:
        raise InputError("sample_size must be >= 2")
    if sample_size > min(len(x), len(y)):
        raise InputError(
            f"sample_size {sample_size} exceeds cohort size ({len(x)} and {len(y)} rows)"
        )

    def one(i: int) -> float:
        ix = np.random.default_rng(derive_seed(seed, i, 0)).choice(len(x), sample_size, replace=False)
        iy = np.random.default_rng(derive_seed(seed, i, 1)).choice(len(y), sample_size, replace=False)
        return _value(fn(x.take(ix), y.take(iy)))

    values = _run_repeats(one, repeats, workers)
    return BootstrapReport(name, repeats, sample_size, seed, tuple(values), design="between")


def within_cohort_null(
    t: FeatureTable,
    metric: str | MetricFn = "wasabi",
    sample_size: int = 500,
    repeats: int = 1000,
    seed: int = 0,
    *,
    workers: int = 1,
) -> BootstrapReport:
    """Reference distribution of a distance within one homogeneous cohort.

    Each repeat splits the rows into two random disjoint halves and draws
    ``sample_size`` rows from each half.
    """
    name, fn = resolve_metric(metric)
    if repeats < 1:
        raise InputError("repeats must be >= 1")
    if sample_size < 2:
        raise InputError("sample_size must be >= 2")
    if len(t) < 2 * sample_size:
        raise InputError(f"need at least {2 * sample_size} rows for the split-half null, got {len(t)}")
    half = len(t) // 2

    def one(i: int) -> float:
        rng = np.random.default_rng(derive_seed(seed, i, 2))
        perm = rng.permutation(len(t))
        a = rng.choice(perm[:half], sample_size, replace=False)
        b = rng.choice(perm[half:], sample_size, replace=False)
        return _value(fn(t.take(a), t.take(b)))

    values = _run_repeats(one, repeats, workers)
    return BootstrapReport(name, repeats, sample_size, seed, tuple(values), design="within")
