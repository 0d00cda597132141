"""Samplers for Ginibre, Haar orthogonal and truncated orthogonal matrices.

Matrices are plain ``numpy`` arrays.  All samplers are pure functions of
their arguments and the seed.

Ginibre draws are laid out column by column: the first ``c`` columns of a
``rows x cols`` Ginibre matrix consume exactly the first ``rows * c``
normals of the stream.  Because Gram-Schmidt only looks at leading columns,
the truncated sampler can stop after ``n`` columns and still return the
top-left block of the Haar matrix the full sampler would build from the
same seed.
"""

from dataclasses import dataclass
from itertools import groupby

import numpy as np

from .rng import as_generator

__all__ = [
    "EnsembleSpec",
    "FrameK",
    "sample_ginibre",
    "sample_haar_orthogonal",
    "sample_truncated_orthogonal",
    "haar_columns_batch",
    "truncated_orthogonal_batch",
    "product_factors",
    "sample_log_beta",
    "log_beta_batch",
    "canonical_frame",
]


@dataclass(frozen=True)
class EnsembleSpec:
    """Product ``A_N ... A_1`` of ``n x n`` truncations of Haar O(n + l_i).

    Parameters
    ----------
    n : int
        Size of each truncated block.
    N : int
        Number of factors.
    truncations : tuple of int
        ``l_1, ..., l_N``; factor ``i`` is cut from O(n + l_i).
    """

    n: int
    N: int
    truncations: tuple

    def __post_init__(self):
        truncations = tuple(int(l) for l in self.truncations)
        object.__setattr__(self, "truncations", truncations)
        if int(self.n) < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if int(self.N) < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if len(truncations) != self.N:
            raise ValueError(
                f"expected {self.N} truncations, got {len(truncations)}"
            )
        if min(truncations) < 0:
            raise ValueError("truncations must be non-negative")

    @classmethod
    def uniform(cls, n, N, l):
        return cls(n=n, N=N, truncations=(l,) * N)

    @property
    def l(self):
        return min(self.truncations)

    @property
    def L(self):
        return max(self.truncations)


@dataclass(frozen=True)
class FrameK:
    """``k`` orthonormal vectors in R^n, stored as the columns of an array."""

    n: int
    k: int
    columns: np.ndarray

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.columns.shape != (self.n, self.k):
            raise ValueError("columns must have shape (n, k)")
        gram = self.columns.T @ self.columns
        if np.max(np.abs(gram - np.eye(self.k))) > 1e-12:
            raise ValueError("frame columns are not orthonormal")


def _check_dim(name, value, minimum=1):
    if int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value}")
    return int(value)


def _sign_fixed_qr(G):
    """Q factor of ``G`` (possibly stacked) with a positive R diagonal."""
    Q, R = np.linalg.qr(G)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    # sign(0) would zero a column; a zero pivot has probability zero anyway
    signs = np.where(d < 0, -1.0, 1.0)
    return Q * signs[..., None, :]


def sample_ginibre(rows, cols, seed):
    """``rows x cols`` matrix of i.i.d. standard normals."""
    rows = _check_dim("rows", rows)
    cols = _check_dim("cols", cols)
    rng = as_generator(seed)
    return rng.standard_normal((cols, rows)).T.copy()


def sample_haar_orthogonal(dim, seed):
    """Haar-distributed element of O(dim).

    QR of a Ginibre matrix, with the columns of Q flipped so that
    ``diag(R) > 0``; without the flip the law is not Haar.
    """
    dim = _check_dim("dim", dim)
    G = sample_ginibre(dim, dim, seed)
    return _sign_fixed_qr(G)


def sample_truncated_orthogonal(n, l, seed):
    """Top-left ``n x n`` block of a Haar element of O(n + l)."""
    n = _check_dim("n", n)
    l = _check_dim("l", l, minimum=0)
    return truncated_orthogonal_batch(n, l, 1, seed)[0]


def haar_columns_batch(m, k, count, seed):
    """First ``k`` columns of ``count`` Haar elements of O(m), ``(count, m, k)``."""
    rng = as_generator(seed)
    G = rng.standard_normal((count, k, m)).transpose(0, 2, 1)
    return _sign_fixed_qr(G)


def truncated_orthogonal_batch(n, l, count, seed):
    """``count`` independent truncated blocks, shape ``(count, n, n)``.

    Equivalent to ``count`` successive calls of
    :func:`sample_truncated_orthogonal` on one generator.
    """
    return haar_columns_batch(n + l, n, count, seed)[:, :n, :]


def product_factors(spec, seed, block=512):
    """Yield the factors ``A_1, ..., A_N`` of ``spec`` in blocks.

    Each item is an array of shape ``(b, n, n)`` with ``b <= block``.  The
    values do not depend on ``block``.
    """
    rng = as_generator(seed)
    for start in range(0, spec.N, block):
        chunk = spec.truncations[start:start + block]
        pieces = [
            truncated_orthogonal_batch(spec.n, l, len(list(run)), rng)
            for l, run in groupby(chunk)
        ]
        yield pieces[0] if len(pieces) == 1 else np.concatenate(pieces)


def sample_log_beta(n, l, seed):
    """One draw of ``log Beta(n/2, l/2)`` as a Gaussian norm ratio.

    With ``x`` an ``(n + l)``-vector of standard normals the ratio
    ``(x_1^2 + ... + x_n^2) / |x|^2`` is Beta(n/2, l/2).  ``l = 0`` is the
    point mass at 1, so the result is exactly 0.
    """
    n = _check_dim("n", n)
    l = _check_dim("l", l, minimum=0)
    if l == 0:
        return 0.0
    return float(log_beta_batch(n, l, 1, seed)[0])


def log_beta_batch(n, l, count, seed):
    rng = as_generator(seed)
    if l == 0:
        return np.zeros(count)
    x2 = rng.standard_normal((count, n + l)) ** 2
    head = x2[:, :n].sum(axis=1)
    tail = x2[:, n:].sum(axis=1)
    return -np.log1p(tail / head)


def canonical_frame(n, k):
    """The first ``k`` standard basis vectors of R^n."""
    n = _check_dim("n", n)
    k = _check_dim("k", k)
    if k > n:
        raise ValueError(f"frame size k={k} exceeds dimension n={n}")
    return FrameK(n=n, k=k, columns=np.eye(n)[:, :k])
