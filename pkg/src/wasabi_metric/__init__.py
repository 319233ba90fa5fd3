"""Morphometric distance between cohorts of regional brain volumes.

The headline metric, :func:`wasabi`, fits a Gaussian to each cohort's
ICV-normalized regional volumes and returns the closed-form squared
2-Wasserstein distance between the fits.
"""

from .errors import InputError, NotPSDError, NumericalError, WasabiError
from .feature_table import (
    FeatureTable,
    RegionEntry,
    RegionMap,
    TableSchema,
    apply_region_map,
    default_region_map,
    filter_by_qc,
    load_table,
    normalize_by_icv,
    qc_iqr_threshold,
    write_table,
)
from .gaussian_w2 import (
    DistanceResult,
    GaussianSummary,
    fit_gaussian,
    frechet_distance,
    sqrt_psd,
    w2_squared,
    wasabi,
)
from .mmd import KernelSpec, mmd_permutation_pvalue, mmd_squared
from .ot_oracle import (
    TransportPlan,
    empirical_w2_squared,
    empirical_w2_squared_1d,
    gaussian_vs_empirical_gap,
)
from .stats import (
    BootstrapReport,
    HZResult,
    cohens_d,
    henze_zirkler,
    run_bootstrap,
    within_cohort_null,
)
from .synthgen import (
    CohortSpec,
    ICVDistribution,
    QCDistribution,
    generate_cohort,
    generate_scenario_suite,
    scenario_ground_truth,
)

__version__ = "0.1.0"
