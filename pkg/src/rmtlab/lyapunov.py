"""Lyapunov spectra and frame growth rates of ``X = A_N ... A_1``.

Two estimators of the spectrum are provided.

``qr-accumulate``
    Carry an orthonormal frame ``Q`` through the product, QR-factor
    ``A_t Q`` at every step and add ``log|R_ii|`` to per-index
    accumulators.  Cheap and stable for any ``N``.  For finite ``N`` the
    accumulators estimate, but do not equal, the log singular values.

``svd-rescale``
    Exact log singular values of the product.  For each ``k`` the top
    singular value of the ``k``-th compound matrix of ``X`` equals
    ``s_1 ... s_k``; the compound products are rescaled by their spectral
    norm after every step and the log scales are summed.  Costs
    ``C(n, k)^2`` minors per step, so it is limited to small ``n`` and
    ``N <= 10**4``.

Everything is batched over independent trials: functions taking ``seeds``
run one realization per seed and return results in seed order.  A trial's
result depends only on its own seed.
"""

from dataclasses import dataclass, field
from itertools import combinations, groupby
from math import fsum

import numpy as np

from .ensembles import EnsembleSpec, log_beta_batch, product_factors
from .errors import DegenerateRealizationError
from .rng import as_generator

__all__ = [
    "LyapunovSpectrum",
    "GrowthSample",
    "lyapunov_spectrum",
    "lyapunov_spectra",
    "frame_growth",
    "frame_growths",
    "telescoped_growth",
    "telescoped_growths",
]

MODES = ("qr-accumulate", "svd-rescale")
SVD_MAX_N = 8
SVD_MAX_STEPS = 10**4


@dataclass
class LyapunovSpectrum:
    spec: EnsembleSpec
    lambdas: np.ndarray
    log_det_accum: float
    accumulators: np.ndarray = field(repr=False)
    mode: str = "qr-accumulate"


@dataclass
class GrowthSample:
    spec: EnsembleSpec
    k: int
    value: float


def _blocks(spec, rngs, block):
    streams = [product_factors(spec, rng, block) for rng in rngs]
    while True:
        try:
            yield np.stack([next(s) for s in streams])
        except StopIteration:
            return


def _qr_accumulate(spec, rngs, k, block=512, with_logdet=False):
    """Per-index log|R_ii| sums of the frame QR recursion, shape (T, k)."""
    T, n = len(rngs), spec.n
    Q = np.broadcast_to(np.eye(n)[:, :k], (T, n, k)).copy()
    acc = np.zeros((T, k))
    logdet = np.zeros(T)
    for A in _blocks(spec, rngs, block):
        if with_logdet:
            logdet += np.linalg.slogdet(A)[1].sum(axis=1)
        for t in range(A.shape[1]):
            Q, R = np.linalg.qr(A[:, t] @ Q)
            d = np.abs(np.diagonal(R, axis1=1, axis2=2))
            if not d.all():
                raise DegenerateRealizationError(
                    "zero pivot in the frame recursion (rank collapse)"
                )
            acc += np.log(d)
    return acc, logdet


def _compound_index(n, k):
    idx = np.array(list(combinations(range(n), k)))
    return idx[:, None, :, None], idx[None, :, None, :]


def _svd_rescale(spec, rngs, block=512):
    """Cumulative log singular values ``log(s_1 ... s_k)``, shape (T, n)."""
    T, n = len(rngs), spec.n
    index = {k: _compound_index(n, k) for k in range(2, n + 1)}
    P = {k: None for k in range(1, n + 1)}
    scale = np.zeros((T, n))
    logdet = np.zeros(T)
    for A in _blocks(spec, rngs, block):
        logdet += np.linalg.slogdet(A)[1].sum(axis=1)
        for t in range(A.shape[1]):
            At = A[:, t]
            for k in range(1, n + 1):
                if k == 1:
                    C = At
                else:
                    rows, cols = index[k]
                    C = np.linalg.det(At[:, rows, cols])
                P[k] = C if P[k] is None else C @ P[k]
                s = np.linalg.norm(P[k], ord=2, axis=(1, 2))
                if not s.all():
                    raise DegenerateRealizationError("compound product vanished")
                P[k] = P[k] / s[:, None, None]
                scale[:, k - 1] += np.log(s)
    # each P[k] now has unit spectral norm; the scales carry the growth
    return scale, logdet


def _generators(seeds):
    return [as_generator(s) for s in seeds]


def lyapunov_spectra(spec, seeds, mode="qr-accumulate", block=512):
    """Lyapunov spectra of independent realizations, one per seed.

    Parameters
    ----------
    spec : EnsembleSpec
    seeds : sequence of int or numpy.random.Generator
    mode : {"qr-accumulate", "svd-rescale"}
    block : int
        Number of factors sampled at a time; does not affect results.

    Returns
    -------
    list of LyapunovSpectrum
        ``lambdas`` sorted descending (stable, so ties keep index order).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    rngs = _generators(seeds)
    N, n = spec.N, spec.n
    if mode == "qr-accumulate":
        acc, logdet = _qr_accumulate(spec, rngs, n, block, with_logdet=True)
    else:
        if N > SVD_MAX_STEPS or n > SVD_MAX_N:
            raise ValueError(
                f"svd-rescale is a validation mode: needs N <= {SVD_MAX_STEPS}"
                f" and n <= {SVD_MAX_N}"
            )
        cumulative, logdet = _svd_rescale(spec, rngs, block)
        acc = np.diff(cumulative, axis=1, prepend=0.0)
    out = []
    for row, ld in zip(acc, logdet):
        order = np.argsort(-row, kind="stable")
        out.append(
            LyapunovSpectrum(
                spec=spec,
                lambdas=row[order] / N,
                log_det_accum=float(ld),
                accumulators=row.copy(),
                mode=mode,
            )
        )
    return out


def lyapunov_spectrum(spec, seed, mode="qr-accumulate"):
    """Lyapunov spectrum ``lambda_i = (1/N) log s_i`` of one realization."""
    return lyapunov_spectra(spec, [seed], mode)[0]


def frame_growths(spec, k, seeds, block=512):
    """``(1/N) log vol_k(X e_1, ..., X e_k)`` for each seed, as an array."""
    if not 1 <= k <= spec.n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={spec.n}")
    acc, _ = _qr_accumulate(spec, _generators(seeds), k, block)
    return acc.sum(axis=1) / spec.N


def frame_growth(spec, k, seed):
    """Growth rate of the k-volume spanned by the canonical k-frame.

    The volume is the square root of the Gram determinant, so the value is
    ``(1/N) sum_t sum_{i<=k} log|r_ii(t)|``.  For ``k = n`` this is
    ``(1/N) log|det X|``.
    """
    return GrowthSample(spec=spec, k=k, value=float(frame_growths(spec, k, [seed])[0]))


def telescoped_growths(spec, seeds):
    N, n = spec.N, spec.n
    out = np.empty(len(seeds))
    for i, seed in enumerate(seeds):
        rng = as_generator(seed)
        parts = [
            log_beta_batch(n, l, len(list(run)), rng)
            for l, run in groupby(spec.truncations)
        ]
        out[i] = fsum(np.concatenate(parts)) / (2 * N)
    return out


def telescoped_growth(spec, seed):
    """``(1/2N) sum_i T_i`` with independent ``T_i ~ log Beta(n/2, l_i/2)``.

    Same law as the ``k = 1`` frame growth, built without any matrices.
    """
    return float(telescoped_growths(spec, [seed])[0])
