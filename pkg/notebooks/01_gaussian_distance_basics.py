"""
Distances between Gaussian fits
===============================

Fit a mean and covariance to each cohort, then compare the fits with the
closed-form squared 2-Wasserstein distance.
"""

# %%
import numpy as np

from wasabi_metric import GaussianSummary, fit_gaussian, sqrt_psd, w2_squared

# %% [markdown]
# Two one-dimensional unit Gaussians three apart: only the means differ,
# so the squared distance is just 3**2.

# %%
a = GaussianSummary([0.0], [[1.0]])
b = GaussianSummary([3.0], [[1.0]])
print("mean shift only:", w2_squared(a, b).value)

# %% [markdown]
# Covariances that do not commute need the matrix square root. The root is
# computed from a symmetric eigendecomposition.

# %%
s = np.array([[2.0, 1.0], [1.0, 2.0]])
r = sqrt_psd(s)
print("sqrt:\n", r)
print("r @ r - s:", np.abs(r @ r - s).max())

rot = GaussianSummary([0.0, 0.0], np.diag([4.0, 0.25]))
print("rotated ellipses:", w2_squared(GaussianSummary([0.0, 0.0], s), rot).value)

# %% [markdown]
# Fitting from data. A rank-deficient sample gets a tiny ridge, which is
# reported on the result rather than applied silently.

# %%
rng = np.random.default_rng(0)
x = rng.multivariate_normal([1.0, 2.0, 3.0], np.diag([1.0, 0.5, 0.2]), size=400)
y = rng.multivariate_normal([1.2, 2.0, 2.9], np.diag([1.1, 0.5, 0.3]), size=400)
res = w2_squared(fit_gaussian(x), fit_gaussian(y))
print(res.to_json(indent=2))

flat = fit_gaussian(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))
print("ridge on a rank-1 fit:", flat.regularization_added)
