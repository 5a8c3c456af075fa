"""Shared oracles for the test suite."""
import numpy as np


def cov_with_stderr(x, y):
    """Sample covariance of centred-by-design variables and its standard error."""
    p = x * y
    return float(p.mean()), float(p.std(ddof=1) / np.sqrt(p.size))


def random_custom_matrix(n, seed=0):
    rng = np.random.default_rng(seed)
    m = np.tril(rng.uniform(0.2, 1.0, (n + 1, n + 1)), k=-1)
    return m
