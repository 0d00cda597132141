"""Closed-form moments and concentration bounds.

The non-explicit universal constants in the bounds (``C``, ``c``) are
arguments defaulting to 1, so the evaluators are meaningful for their
shape (monotonicity, scaling, crossover points), not their absolute level.
"""

import math
from dataclasses import dataclass

from .errors import UndefinedBoundError

__all__ = [
    "digamma",
    "trigamma",
    "BetaLogMoments",
    "AggregateMoments",
    "ConcentrationParams",
    "SkorskiParams",
    "DeltaMethodLog",
    "beta_log_moments",
    "aggregate_moments",
    "concentration_params",
    "latala_moment_bound",
    "mixed_tail_bound",
    "mixed_tail_crossover",
    "clt_ks_rate",
    "skorski_params",
    "skorski_tail_bound",
    "beta_projection_variance",
    "frame_deviation_allowance",
    "delta_method_log",
]

# B_2, B_4, ..., B_12
_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730)
_SHIFT = 10.0


def _check_positive(x):
    if not x > 0:
        raise ValueError(f"argument must be positive, got {x}")
    return float(x)


def digamma(x):
    """psi(x) = d/dx log Gamma(x) for x > 0.

    Upward recurrence ``psi(x) = psi(x + 1) - 1/x`` until ``x >= 10``, then
    the asymptotic series through ``x**-12``.
    """
    x = _check_positive(x)
    shift = 0.0
    while x < _SHIFT:
        shift += 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for j, b in enumerate(_BERNOULLI, start=1):
        series += b / (2 * j) * power
        power *= inv2
    return math.log(x) - 0.5 / x - series - shift


def trigamma(x):
    """psi_1(x) = d/dx psi(x) for x > 0."""
    x = _check_positive(x)
    shift = 0.0
    while x < _SHIFT:
        shift += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv + 0.5 * inv2
    power = inv2 * inv
    for b in _BERNOULLI:
        series += b * power
        power *= inv2
    return series + shift


@dataclass(frozen=True)
class BetaLogMoments:
    mean: float
    variance: float


@dataclass(frozen=True)
class AggregateMoments:
    mu: float
    sigma2: float


@dataclass(frozen=True)
class ConcentrationParams:
    M_list: tuple
    M: float
    M_N: float
    M_hat: float
    p0: float


@dataclass(frozen=True)
class SkorskiParams:
    v: float
    c: float


@dataclass(frozen=True)
class DeltaMethodLog:
    mean_log: float
    mean_log_second_order: float
    var_log: float
    mu4_log: float


def beta_log_moments(n, l):
    """Mean and variance of ``log Beta(n/2, l/2)``; ``l = 0`` gives (0, 0)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if l < 0:
        raise ValueError(f"l must be >= 0, got {l}")
    if l == 0:
        return BetaLogMoments(0.0, 0.0)
    a, s = n / 2, (n + l) / 2
    return BetaLogMoments(digamma(a) - digamma(s), trigamma(a) - trigamma(s))


def aggregate_moments(spec):
    """``mu = (1/N) sum mean_i`` and ``Sigma = (1/N^2) sum var_i``."""
    means, variances = [], []
    for l in spec.truncations:
        m = beta_log_moments(spec.n, l)
        means.append(m.mean)
        variances.append(m.variance)
    N = spec.N
    return AggregateMoments(math.fsum(means) / N, math.fsum(variances) / N**2)


def _sub_gaussian_constant(n, l):
    return n * n * (n + l + 2) / (n + l) ** 2


def concentration_params(spec):
    """Sub-Gaussian constants ``M_i = n^2 (n + l_i + 2) / (n + l_i)^2``.

    ``M`` uses the largest truncation ``L`` (the smallest ``M_i``),
    ``M_N`` the last factor, ``M_hat = sum 1/M_j`` and
    ``p0 = M_N^2 * M_hat``.
    """
    n = spec.n
    M_list = tuple(_sub_gaussian_constant(n, l) for l in spec.truncations)
    M_hat = math.fsum(1.0 / M for M in M_list)
    M_N = M_list[-1]
    return ConcentrationParams(
        M_list=M_list,
        M=_sub_gaussian_constant(n, spec.L),
        M_N=M_N,
        M_hat=M_hat,
        p0=M_N**2 * M_hat,
    )


def latala_moment_bound(p, spec, C=1.0):
    """``C (sqrt(p N / M) + p / M)``, a bound on ``||sum_i (T_i - E T_i)||_p``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if not C > 0:
        raise ValueError("C must be positive")
    M = concentration_params(spec).M
    return C * (math.sqrt(p * spec.N / M) + p / M)


def mixed_tail_bound(s, spec, c=1.0):
    """``2 exp(-c N min(M_hat s^2, M_N s))``, capped at 2.

    Evaluated exactly as stated even though ``M_hat`` itself grows with
    ``N``; treat the output as a shape, not a calibrated probability.
    """
    if s < 0:
        raise ValueError(f"s must be non-negative, got {s}")
    if not c > 0:
        raise ValueError("c must be positive")
    cp = concentration_params(spec)
    rate = c * spec.N * min(cp.M_hat * s * s, cp.M_N * s)
    return min(2.0, 2.0 * math.exp(-rate))


def mixed_tail_crossover(spec):
    """Deviation ``s*`` where ``M_hat s^2 = M_N s``."""
    cp = concentration_params(spec)
    return cp.M_N / cp.M_hat


def clt_ks_rate(spec, C=1.0):
    """KS rate ``sqrt(4C log^2 n log^2(N/n) n (n + l) / (2 l N))``.

    ``l`` is the smallest truncation.  Requires ``N > n >= 2`` and
    ``l >= 1`` (the expression divides by ``l``).
    """
    n, N, l = spec.n, spec.N, spec.l
    if n < 2:
        raise ValueError("the KS bound needs n >= 2")
    if N <= n:
        raise ValueError(f"the KS bound needs N > n, got N={N}, n={n}")
    if l == 0:
        raise UndefinedBoundError("the KS bound is undefined for l = 0")
    if not C > 0:
        raise ValueError("C must be positive")
    value = (
        4 * C * math.log(n) ** 2 * math.log(N / n) ** 2 * n * (n + l)
        / (2 * l * N)
    )
    return math.sqrt(value)


def skorski_params(alpha, beta):
    """Variance ``v`` and skew parameter ``c`` of Beta(alpha, beta)."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("Beta shape parameters must be positive")
    s = alpha + beta
    return SkorskiParams(
        v=alpha * beta / (s * s * (s + 1)),
        c=2 * (beta - alpha) / (s * (s + 2)),
    )


def skorski_tail_bound(alpha, beta, eps, side="upper"):
    """Bernstein-type bound on ``P(X > EX + eps)`` or ``P(X < EX - eps)``.

    The Bernstein form ``exp(-eps^2 / (2 (v + c eps / 3)))`` applies on the
    heavy side (upper tail when ``beta >= alpha``, lower tail when
    ``alpha >= beta``); the other side is sub-Gaussian,
    ``exp(-eps^2 / (2 v))``.  The lower tail of X is the upper tail of
    ``1 - X ~ Beta(beta, alpha)``, so it uses ``-c``.
    """
    if side not in ("upper", "lower"):
        raise ValueError(f"side must be 'upper' or 'lower', got {side!r}")
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    params = skorski_params(alpha, beta)
    if eps == 0:
        return 1.0
    c = params.c if side == "upper" else -params.c
    if c >= 0:
        exponent = eps * eps / (2 * (params.v + c * eps / 3))
    else:
        exponent = eps * eps / (2 * params.v)
    return min(1.0, math.exp(-exponent))


def beta_projection_variance(n, l, exact=True):
    """Variance of ``Beta(n/2, l/2)``.

    ``exact=False`` returns the simpler upper bound ``1 / (2 (n + l + 2))``.
    """
    if n < 1 or l < 0:
        raise ValueError("need n >= 1 and l >= 0")
    if not exact:
        return 1.0 / (2 * (n + l + 2))
    return 2.0 * n * l / ((n + l) ** 2 * (n + l + 2))


def frame_deviation_allowance(n, k, N, eps):
    """Deviation radius ``(k / 2N) log(n / (k eps^2))``."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if N < 1:
        raise ValueError("N must be >= 1")
    return k / (2 * N) * math.log(n / (k * eps * eps))


def delta_method_log(meanZ, varZ, mu4Z):
    """First-order moments of ``log Z`` from those of ``Z``.

    ``mean_log_second_order`` adds the ``-Var Z / (2 (E Z)^2)`` correction.
    """
    if not meanZ > 0:
        raise ValueError(f"meanZ must be positive, got {meanZ}")
    if varZ < 0 or mu4Z < 0:
        raise ValueError("varZ and mu4Z must be non-negative")
    m2 = meanZ * meanZ
    mean_log = math.log(meanZ)
    return DeltaMethodLog(
        mean_log=mean_log,
        mean_log_second_order=mean_log - varZ / (2 * m2),
        var_log=varZ / m2,
        mu4_log=mu4Z / (m2 * m2),
    )
