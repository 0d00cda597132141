"""Empirical distributions, Kolmogorov-Smirnov distances and
standardization of Lyapunov samples."""

import math

import numpy as np
from scipy.special import erfc

from .errors import DegenerateVarianceError
from .moments import aggregate_moments

__all__ = [
    "EmpiricalSample",
    "KSResult",
    "gaussian_cdf",
    "ks_one_sample",
    "ks_two_sample",
    "ks_moment_matched",
    "central_moments",
    "standardize_lyapunov",
]

CONVENTIONS = ("corrected", "literal")


class EmpiricalSample:
    """Sorted copy of a finite, non-empty sample."""

    def __init__(self, values):
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("empty sample")
        if not np.isfinite(values).all():
            raise ValueError("sample contains non-finite values")
        self.values = np.sort(values)
        self.values.flags.writeable = False

    @property
    def count(self):
        return self.values.size

    def __len__(self):
        return self.count

    def cdf(self, x):
        """Right-continuous empirical CDF at ``x``."""
        return np.searchsorted(self.values, x, side="right") / self.count


class KSResult:
    __slots__ = ("statistic", "sample_sizes")

    def __init__(self, statistic, sample_sizes):
        self.statistic = float(statistic)
        self.sample_sizes = tuple(sample_sizes)

    def __repr__(self):
        return f"KSResult(statistic={self.statistic:.6g}, sample_sizes={self.sample_sizes})"


def _as_sample(sample):
    return sample if isinstance(sample, EmpiricalSample) else EmpiricalSample(sample)


def gaussian_cdf(x, mu=0.0, sigma=1.0):
    """Normal CDF via ``erfc``; accepts scalars or arrays."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    z = (np.asarray(x, dtype=float) - mu) / sigma
    out = 0.5 * erfc(-z / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def ks_one_sample(sample, mu=0.0, sigma=1.0):
    """Exact sup distance between the empirical CDF and N(mu, sigma^2).

    Both one-sided gaps are taken at every order statistic.
    """
    sample = _as_sample(sample)
    n = sample.count
    F = gaussian_cdf(sample.values, mu, sigma)
    F = np.atleast_1d(F)
    i = np.arange(1, n + 1)
    d = max(np.max(i / n - F), np.max(F - (i - 1) / n))
    return KSResult(min(max(d, 0.0), 1.0), (n,))


def ks_two_sample(a, b):
    """Exact two-sample KS statistic ``sup |F_a - F_b|``."""
    a, b = _as_sample(a), _as_sample(b)
    grid = np.concatenate([a.values, b.values])
    d = np.max(np.abs(a.cdf(grid) - b.cdf(grid)))
    return KSResult(d, (a.count, b.count))


def ks_moment_matched(sample):
    """KS distance to the Gaussian with the sample's mean and variance."""
    sample = _as_sample(sample)
    mean = math.fsum(sample.values) / sample.count
    sd = math.sqrt(central_moments(sample, 2))
    if sd == 0:
        raise DegenerateVarianceError("sample has zero variance")
    return ks_one_sample(sample, mean, sd)


def central_moments(sample, p):
    """``(1/n) sum (x_i - mean)^p`` with compensated summation."""
    if p not in range(1, 9):
        raise ValueError(f"p must lie in 1..8, got {p}")
    sample = _as_sample(sample)
    x = sample.values
    mean = math.fsum(x) / x.size
    return math.fsum((x - mean) ** p) / x.size


def standardize_lyapunov(values, spec, convention="corrected"):
    """Centre and scale top-exponent samples by their predicted law.

    ``corrected``: ``(x - mu/2) / sqrt(Sigma/4)``, the mean and standard
    deviation of ``(1/2N) sum_i log Beta(n/2, l_i/2)``.

    ``literal``: ``(x - mu) / Sigma``, kept for comparison; it divides by a
    variance and does not produce a unit-variance sample.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    agg = aggregate_moments(spec)
    if agg.sigma2 <= 0:
        raise DegenerateVarianceError(
            "all truncations are zero: the exponents are deterministic"
        )
    x = np.asarray(values, dtype=float)
    if convention == "corrected":
        return (x - agg.mu / 2) / math.sqrt(agg.sigma2 / 4)
    return (x - agg.mu) / agg.sigma2
