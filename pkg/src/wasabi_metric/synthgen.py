"""Seeded synthetic cohorts with known Gaussian ground truth.

``CohortSpec.mean`` / ``cov`` describe the ICV-normalized measures. Generated
tables hold volumes (normalized draw times the subject's ICV), so running
them through :func:`~wasabi_metric.feature_table.normalize_by_icv` recovers
draws from ``N(mean, cov)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from os import PathLike

import numpy as np

from .errors import InputError, NumericalError
from .feature_table import FeatureTable
from .gaussian_w2 import GaussianSummary, w2_squared
from .stats import derive_seed

__all__ = [
    "QCDistribution",
    "ICVDistribution",
    "CohortSpec",
    "generate_cohort",
    "generate_scenario_suite",
    "scenario_ground_truth",
    "shift_direction",
]


@dataclass(frozen=True)
class QCDistribution:
    base: float = 0.78
    jitter_sd: float = 0.02
    outlier_fraction: float = 0.0
    outlier_value: float = 0.5

    def __post_init__(self):
        if not 0 <= self.base <= 1:
            raise InputError("qc base must lie in [0, 1]")
        if self.jitter_sd < 0:
            raise InputError("qc jitter_sd must be nonnegative")
        if not 0 <= self.outlier_fraction <= 1:
            raise InputError("qc outlier_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class ICVDistribution:
    mean: float = 1.5e6
    sd: float = 1.5e5

    def __post_init__(self):
        if not self.mean > 0 or self.sd < 0:
            raise InputError("ICV mean must be positive and sd nonnegative")


@dataclass(frozen=True, eq=False)
class CohortSpec:
    name: str
    mean: np.ndarray
    cov: np.ndarray
    n: int
    qc_distribution: QCDistribution | None = QCDistribution()
    icv_distribution: ICVDistribution | None = ICVDistribution()
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.atleast_2d(np.array(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise InputError(f"cov shape {cov.shape} does not match mean length {mean.size}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(np.abs(cov).max(), 1.0)):
            raise InputError("cov must be symmetric")
        if self.n < 1:
            raise InputError("n must be >= 1")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if self.feature_names is None:
            object.__setattr__(self, "feature_names", tuple(f"f{j}" for j in range(mean.size)))
        elif len(self.feature_names) != mean.size:
            raise InputError("feature_names length does not match mean length")
        else:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def d(self) -> int:
        return self.mean.size

    @classmethod
    def from_dict(cls, d: dict) -> CohortSpec:
        qc = d.get("qc_distribution", {})
        icv = d.get("icv_distribution", {})
        return cls(
            name=d["name"],
            mean=d["mean"],
            cov=d["cov"],
            n=int(d["n"]),
            qc_distribution=None if qc is None else QCDistribution(**qc),
            icv_distribution=None if icv is None else ICVDistribution(**icv),
            feature_names=d.get("feature_names"),
        )

    @classmethod
    def from_json(cls, path: str | PathLike) -> CohortSpec:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "n": self.n,
            "qc_distribution": None if self.qc_distribution is None else vars(self.qc_distribution),
            "icv_distribution": None if self.icv_distribution is None else vars(self.icv_distribution),
            "feature_names": list(self.feature_names),
        }


def _factor(cov: np.ndarray) -> np.ndarray:
    """Lower factor L with L L^T ~= cov; a zero matrix gives a zero factor."""
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    d = cov.shape[0]
    eps = 1e-10 * max(np.trace(cov), np.finfo(float).tiny) / d
    for _ in range(6):
        try:
            return np.linalg.cholesky(cov + eps * np.eye(d))
        except np.linalg.LinAlgError:
            eps *= 100
    raise NumericalError("covariance could not be repaired to positive definite")


def generate_cohort(spec: CohortSpec, seed: int = 0) -> FeatureTable:
    """Draw ``spec.n`` subjects; ids are ``"{name}_{index}"``.

    Draws happen in a fixed order (features, ICV, QC jitter, QC outliers) from
    one generator, so a given (spec, seed) always yields the same table.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((spec.n, spec.d))
    draws = spec.mean + z @ _factor(spec.cov).T

    icv = None
    values = draws
    if spec.icv_distribution is not None:
        icv = rng.normal(spec.icv_distribution.mean, spec.icv_distribution.sd, spec.n)
        if np.any(icv <= 0):
            raise InputError(f"cohort {spec.name!r}: ICV distribution produced nonpositive volumes")
        values = draws * icv[:, None]
        if np.any(values < 0):
            raise InputError(
                f"cohort {spec.name!r}: negative volumes drawn; the mean is too close to zero "
                "relative to the covariance"
            )

    qc = None
    if spec.qc_distribution is not None:
        q = spec.qc_distribution
        qc = q.base + q.jitter_sd * rng.standard_normal(spec.n)
        n_out = int(round(q.outlier_fraction * spec.n))
        if n_out:
            qc[rng.choice(spec.n, n_out, replace=False)] = q.outlier_value
        qc = np.clip(qc, 0.0, 1.0)

    return FeatureTable(
        subject_ids=[f"{spec.name}_{i}" for i in range(spec.n)],
        feature_names=spec.feature_names,
        values=values,
        qc=qc,
        icv=icv,
        volumes=spec.icv_distribution is not None,
    )


def shift_direction(d: int) -> np.ndarray:
    """Fixed unit direction used for scenario mean shifts: all-ones / sqrt(d)."""
    return np.full(d, 1 / np.sqrt(d))


def _shift(base: CohortSpec, effect: float) -> np.ndarray:
    return effect * np.sqrt(np.diag(base.cov)) * shift_direction(base.d)


def _check_effects(effect_sizes, cov_scales):
    effects = [float(e) for e in effect_sizes]
    if not effects or effects[0] != 0:
        raise InputError("effect_sizes must start with 0 (the null pair)")
    if any(b < a for a, b in zip(effects, effects[1:])) or any(e < 0 for e in effects):
        raise InputError("effect_sizes must be nonnegative and sorted ascending")
    if cov_scales is None:
        cov_scales = [1.0] * len(effects)
    cov_scales = [float(s) for s in cov_scales]
    if len(cov_scales) != len(effects) or any(s <= 0 for s in cov_scales):
        raise InputError("cov_scales must be positive, one per effect size")
    return effects, cov_scales


def generate_scenario_suite(
    base: CohortSpec,
    effect_sizes,
    seed: int = 0,
    cov_scales=None,
) -> list[tuple[FeatureTable, FeatureTable]]:
    """Pairs of cohorts with increasing, known separation.

    Pair ``k`` is ``(base, shifted_k)`` where ``shifted_k`` has its mean moved
    by ``effect_sizes[k] * sqrt(diag(cov))`` along :func:`shift_direction` and,
    optionally, its covariance scaled by ``cov_scales[k] ** 2``. The base
    cohort is one draw shared by every pair; all shifted cohorts reuse one
    independent draw of standard normals, so pairs differ only by their
    shift. With effect 0 (and scale 1) the pair is two independent samples of
    the same distribution.
    """
    effects, scales = _check_effects(effect_sizes, cov_scales)
    x = generate_cohort(replace(base, name=f"{base.name}_base"), derive_seed(seed, 0, 0))
    pairs = []
    for k, (e, s) in enumerate(zip(effects, scales)):
        spec_k = replace(base, name=f"{base.name}_e{k}", mean=base.mean + _shift(base, e), cov=s * s * base.cov)
        pairs.append((x, generate_cohort(spec_k, derive_seed(seed, 0, 1))))
    return pairs


def scenario_ground_truth(base: CohortSpec, effect_sizes, cov_scales=None) -> list[float]:
    """Population W2^2 of each scenario pair: ``|shift|^2 + (1 - s)^2 tr(cov)``."""
    effects, scales = _check_effects(effect_sizes, cov_scales)
    out = []
    for e, s in zip(effects, scales):
        shift = _shift(base, e)
        out.append(float(shift @ shift + (1 - s) ** 2 * np.trace(base.cov)))
    return out


def scenario_ground_truth_numeric(base: CohortSpec, effect_sizes, cov_scales=None) -> list[float]:
    """Same quantity evaluated through :func:`w2_squared`; used as a cross-check."""
    effects, scales = _check_effects(effect_sizes, cov_scales)
    g = GaussianSummary(base.mean, base.cov)
    return [
        w2_squared(g, GaussianSummary(base.mean + _shift(base, e), s * s * base.cov)).value
        for e, s in zip(effects, scales)
    ]
