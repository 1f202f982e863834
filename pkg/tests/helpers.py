"""Shared fixtures-as-functions for the test modules."""

import numpy as np


def gaussian_blobs(rng, means, n_per, scale=1.0):
    """Labeled isotropic Gaussian clusters around ``means``."""
    means = np.asarray(means, dtype=float)
    X = np.vstack([m + scale * rng.standard_normal((n_per, means.shape[1])) for m in means])
    y = np.repeat(np.arange(len(means)), n_per)
    return X, y
