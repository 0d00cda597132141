"""Weingarten calculus on the real orthogonal group.

Haar moments of O(m) are sums over pairs of perfect matchings::

    E[g_{i1 j1} ... g_{i2k j2k}] = sum_{a, b} Wg(a, b) delta_a(i) delta_b(j)

where ``delta_a(i) = 1`` when ``i`` is constant on every pair of ``a`` and
``Wg`` is the inverse of the Gram matrix ``G[a][b] = m ** loops(a, b)``.

``Wg(a, b)`` only depends on the loop structure of ``a`` and ``b`` (the
reduced coset type), which gives two independent ways to compute it:

* :func:`weingarten_table` inverts the full Gram matrix in floating point;
* :func:`weingarten_function` solves the small exact-rational system that
  one row of ``G Wg = I`` reduces to on coset types.

When ``m`` is smaller than the number of pairs the Gram matrix is singular;
moments are then computed with its Moore-Penrose pseudo-inverse, which
still reproduces Haar integrals.
"""

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .ensembles import haar_columns_batch
from .errors import SingularGramError
from .rng import as_generator

__all__ = [
    "PairMatching",
    "MomentQuery",
    "WeingartenTable",
    "DetGramMC",
    "enumerate_matchings",
    "loops_between",
    "loop_sizes",
    "reduced_coset_type",
    "format_coset_type",
    "weingarten_function",
    "weingarten_table",
    "weingarten_value",
    "wg_asymptotic",
    "catalan",
    "orthogonal_moment",
    "orthogonal_moment_mc",
    "moment_patterns",
    "det_gram_moment_exact",
    "det_gram_moment_mc",
    "table_rows",
]

MAX_MATCHING_K = 5
MAX_TABLE_K = 4
MAX_MOMENT_PAIRS = 4


@dataclass(frozen=True)
class PairMatching:
    """Perfect matching of ``{1, ..., 2k}`` as sorted pairs."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple(sorted(tuple(sorted(p)) for p in self.pairs))
        object.__setattr__(self, "pairs", pairs)
        points = [x for p in pairs for x in p]
        if any(len(p) != 2 for p in pairs) or sorted(points) != list(
            range(1, len(points) + 1)
        ):
            raise ValueError(f"not a perfect matching of 1..2k: {self.pairs}")

    @property
    def k(self):
        return len(self.pairs)

    def partner(self):
        out = {}
        for x, y in self.pairs:
            out[x] = y
            out[y] = x
        return out

    def __str__(self):
        return "".join(f"({x},{y})" for x, y in self.pairs)

    @classmethod
    def parse(cls, text):
        """Inverse of ``str``: ``"(1,2)(3,4)"`` -> matching."""
        body = text.strip()
        if not (body.startswith("(") and body.endswith(")")):
            raise ValueError(f"cannot parse matching {text!r}")
        pairs = [
            tuple(int(v) for v in chunk.split(","))
            for chunk in body[1:-1].split(")(")
        ]
        return cls(tuple(pairs))


@dataclass(frozen=True)
class MomentQuery:
    """Row and column indices (1-based) of a product of Haar entries."""

    i_indices: tuple
    j_indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "i_indices", tuple(int(v) for v in self.i_indices))
        object.__setattr__(self, "j_indices", tuple(int(v) for v in self.j_indices))
        if len(self.i_indices) != len(self.j_indices):
            raise ValueError("i and j index sequences must have equal length")


@dataclass(frozen=True)
class WeingartenTable:
    k: int
    m: int
    matchings: tuple
    values: np.ndarray
    gram: np.ndarray


def _matchings(items):
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for idx, other in enumerate(rest):
        for tail in _matchings(rest[:idx] + rest[idx + 1:]):
            yield ((first, other),) + tail


@lru_cache(maxsize=None)
def enumerate_matchings(k):
    """All ``(2k - 1)!!`` matchings of ``{1..2k}``.

    Ordered lexicographically: the smallest unpaired point is matched with
    each candidate partner in increasing order.
    """
    if not 1 <= k <= MAX_MATCHING_K:
        raise ValueError(f"k must lie in 1..{MAX_MATCHING_K}, got {k}")
    return tuple(PairMatching(p) for p in _matchings(tuple(range(1, 2 * k + 1))))


def loop_sizes(a, b):
    """Sizes (in pairs) of the loops of the union multigraph, descending."""
    if a.k != b.k:
        raise ValueError(f"matchings of different sizes: {a.k} and {b.k}")
    pa, pb = a.partner(), b.partner()
    seen = set()
    sizes = []
    for start in range(1, 2 * a.k + 1):
        if start in seen:
            continue
        size, u = 0, start
        while True:
            w = pa[u]
            seen.update((u, w))
            size += 1
            u = pb[w]
            if u == start:
                break
        sizes.append(size)
    return tuple(sorted(sizes, reverse=True))


def loops_between(a, b):
    """Number of connected loops formed by the pairs of ``a`` and ``b``."""
    return len(loop_sizes(a, b))


def reduced_coset_type(a, b):
    """Loop sizes minus one, zeros dropped; ``()`` stands for ``(0)``."""
    return tuple(s - 1 for s in loop_sizes(a, b) if s > 1)


def format_coset_type(mu):
    return "(" + ",".join(str(p) for p in mu) + ")" if mu else "(0)"


def _normalize_type(mu):
    return tuple(sorted((int(p) for p in mu if p), reverse=True))


@lru_cache(maxsize=None)
def _pair_structure(k):
    """Loop counts and coset-type ids for every pair of matchings."""
    ms = enumerate_matchings(k)
    types, type_ids = [], {}
    loops = np.empty((len(ms), len(ms)), dtype=np.int64)
    tids = np.empty_like(loops)
    for x, a in enumerate(ms):
        for y in range(x, len(ms)):
            sizes = loop_sizes(a, ms[y])
            mu = tuple(s - 1 for s in sizes if s > 1)
            if mu not in type_ids:
                type_ids[mu] = len(types)
                types.append(mu)
            loops[x, y] = loops[y, x] = len(sizes)
            tids[x, y] = tids[y, x] = type_ids[mu]
    return loops, tids, tuple(types)


def _solve_fraction(matrix, rhs):
    """Gauss-Jordan elimination over the rationals; None if singular."""
    size = len(rhs)
    aug = [list(row) + [r] for row, r in zip(matrix, rhs)]
    for col in range(size):
        pivot = next((r for r in range(col, size) if aug[r][col] != 0), None)
        if pivot is None:
            return None
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [v * inv for v in aug[col]]
        for r in range(size):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [v - f * p for v, p in zip(aug[r], aug[col])]
    return [row[-1] for row in aug]


@lru_cache(maxsize=None)
def weingarten_function(k, m):
    """Exact Wg values of O(m) on ``k`` pairs, keyed by reduced coset type.

    Only row ``e`` (the first matching) of ``G Wg = I`` is needed: taking
    one representative ``c`` of each coset type relative to ``e`` gives a
    square system in the unknown values, one per partition of ``k``.

    Raises
    ------
    SingularGramError
        If the Gram matrix is singular (``m`` below the number of pairs).
    """
    if m < 1:
        raise ValueError(f"dimension m must be >= 1, got {m}")
    ms = enumerate_matchings(k)
    e = ms[0]
    row_loops = [loops_between(e, b) for b in ms]
    reps = {}
    for c in ms:
        reps.setdefault(reduced_coset_type(e, c), c)
    types = sorted(reps, key=lambda mu: (sum(mu), mu))
    index = {mu: t for t, mu in enumerate(types)}
    system = [[Fraction(0)] * len(types) for _ in types]
    for r, nu in enumerate(types):
        c = reps[nu]
        for b, lp in zip(ms, row_loops):
            system[r][index[reduced_coset_type(b, c)]] += Fraction(m) ** lp
    rhs = [Fraction(int(nu == ())) for nu in types]
    solution = _solve_fraction(system, rhs)
    if solution is None:
        raise SingularGramError(f"Gram matrix of O({m}) on {k} pairs is singular")
    return dict(zip(types, solution))


@lru_cache(maxsize=None)
def weingarten_table(k, m):
    """Floating-point Gram inverse over all matchings of ``{1..2k}``.

    Raises
    ------
    SingularGramError
        If ``values @ gram`` misses the identity by more than 1e-10.
    """
    if not 1 <= k <= MAX_TABLE_K:
        raise ValueError(f"tables are limited to 1 <= k <= {MAX_TABLE_K}")
    if m < 1:
        raise ValueError(f"dimension m must be >= 1, got {m}")
    loops, _, _ = _pair_structure(k)
    gram = float(m) ** loops
    try:
        values = np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularGramError(str(exc)) from None
    residual = np.max(np.abs(values @ gram - np.eye(len(gram))))
    if not residual <= 1e-10:
        raise SingularGramError(
            f"Gram matrix of O({m}) on {k} pairs is singular"
            f" (inverse residual {residual:.2e})"
        )
    values = (values + values.T) / 2
    values.flags.writeable = False
    return WeingartenTable(k, m, enumerate_matchings(k), values, gram)


@lru_cache(maxsize=None)
def _pseudo_inverse(k, m):
    loops, _, _ = _pair_structure(k)
    return np.linalg.pinv(float(m) ** loops, hermitian=True)


def _check_realizable(mu, k):
    if sum(p + 1 for p in mu) > k:
        raise ValueError(f"coset type {format_coset_type(mu)} needs more than {k} pairs")


def weingarten_value(mu, k, m):
    """Wg of O(m) at any pair of ``k``-matchings of reduced coset type ``mu``."""
    mu = _normalize_type(mu)
    _check_realizable(mu, k)
    return float(weingarten_function(k, m)[mu])


def catalan(j):
    if not 0 <= j <= 20:
        raise ValueError(f"catalan index must lie in 0..20, got {j}")
    return math.comb(2 * j, j) // (j + 1)


def wg_asymptotic(mu, k, m, leading_only=False):
    """Large-``m`` expansion of Wg.

    Types ``(0)`` and ``(1)`` use three terms::

        (0): m^-k + k(k-1) m^-(k+2) - k(k-1) m^-(k+3)
        (1): -m^-(k+1) + m^-(k+2) - (k^2 + 3k - 7) m^-(k+3)

    Any other type (or ``leading_only=True``) gets the leading term
    ``(-1)^|mu| prod Cat(mu_i) m^-(k + |mu|)``.
    """
    mu = _normalize_type(mu)
    _check_realizable(mu, k)
    m = float(m)
    if not leading_only and mu == ():
        return m**-k + k * (k - 1) * m ** -(k + 2) - k * (k - 1) * m ** -(k + 3)
    if not leading_only and mu == (1,):
        return -(m ** -(k + 1)) + m ** -(k + 2) - (k * k + 3 * k - 7) * m ** -(k + 3)
    size = sum(mu)
    return (-1) ** size * math.prod(catalan(p) for p in mu) * m ** -(k + size)


def _consistent(labels, k):
    return np.array(
        [all(labels[x - 1] == labels[y - 1] for x, y in a.pairs) for a in enumerate_matchings(k)]
    )


def orthogonal_moment(q, m, exact=False):
    """Exact ``E[prod_t g_{i_t j_t}]`` for ``g`` Haar on O(m).

    Odd-length queries vanish.  With ``exact=True`` the result is a
    :class:`fractions.Fraction` (unavailable when the Gram matrix is
    singular, which raises :class:`SingularGramError`).
    """
    i, j = q.i_indices, q.j_indices
    if any(not 1 <= v <= m for v in i + j):
        raise ValueError(f"indices must lie in 1..{m}")
    if len(i) % 2:
        return Fraction(0) if exact else 0.0
    k = len(i) // 2
    if k == 0:
        return Fraction(1) if exact else 1.0
    if k > MAX_MOMENT_PAIRS:
        raise ValueError(f"moments are limited to {2 * MAX_MOMENT_PAIRS} entries")
    rows, cols = _consistent(i, k), _consistent(j, k)
    if not rows.any() or not cols.any():
        return Fraction(0) if exact else 0.0
    _, tids, types = _pair_structure(k)
    try:
        wg = weingarten_function(k, m)
    except SingularGramError:
        if exact:
            raise
        return float(_pseudo_inverse(k, m)[np.ix_(rows, cols)].sum())
    counts = np.bincount(tids[np.ix_(rows, cols)].ravel(), minlength=len(types))
    total = sum(int(c) * wg[mu] for c, mu in zip(counts, types) if c)
    return total if exact else float(total)


def _restricted_growth(length):
    def extend(prefix, top):
        if len(prefix) == length:
            yield tuple(prefix)
            return
        for b in range(top + 2):
            yield from extend(prefix + [b], max(top, b))

    yield from extend([], -1)


def _relabel(seq):
    seen = {}
    return tuple(seen.setdefault(v, len(seen)) for v in seq)


@lru_cache(maxsize=None)
def moment_patterns(k):
    """Distinct matchable index patterns with ``2k`` entries.

    A pattern is a pair of set partitions of the ``2k`` positions (which
    row indices coincide, which column indices coincide) in which every
    block has even size, taken up to simultaneous reordering of the
    positions.  Each is returned as a query with labels ``1, 2, ...``.
    Patterns with an odd block vanish identically and are not listed.
    """
    size = 2 * k
    even = [
        p for p in _restricted_growth(size)
        if all(p.count(b) % 2 == 0 for b in set(p))
    ]
    perms = list(itertools.permutations(range(size)))
    seen = set()
    out = []
    for p in even:
        for q in even:
            key = min(
                (_relabel([p[s] for s in perm]), _relabel([q[s] for s in perm]))
                for perm in perms
            )
            if key not in seen:
                seen.add(key)
                out.append(key)
    out.sort()
    return tuple(
        MomentQuery(tuple(v + 1 for v in p), tuple(v + 1 for v in q)) for p, q in out
    )


def orthogonal_moment_mc(queries, m, trials, seed, chunk=20000):
    """Monte Carlo means and standard errors of Haar moments.

    All queries are evaluated on the same ``trials`` Haar samples.
    Returns ``(means, standard_errors)`` arrays in query order.
    """
    rng = as_generator(seed)
    sums = np.zeros(len(queries))
    squares = np.zeros(len(queries))
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        g = haar_columns_batch(m, m, b, rng)
        for t, q in enumerate(queries):
            x = np.ones(b)
            for r, c in zip(q.i_indices, q.j_indices):
                x = x * g[:, r - 1, c - 1]
            sums[t] += x.sum()
            squares[t] += (x * x).sum()
        done += b
    means = sums / trials
    var = np.maximum(squares / trials - means**2, 0.0) * trials / (trials - 1)
    return means, np.sqrt(var / trials)


def _permutations_with_sign(k):
    for perm in itertools.permutations(range(k)):
        inversions = sum(
            1 for x in range(k) for y in range(x + 1, k) if perm[x] > perm[y]
        )
        yield perm, -1 if inversions % 2 else 1


def _falling(n, b):
    return math.prod(range(n - b + 1, n + 1)) if b <= n else 0


def det_gram_moment_exact(k, n, m, p, exact=False):
    """``E[Z^p]`` for ``Z = det(B^T B)``, ``B`` the top-left ``n x k`` block
    of a Haar element of O(m).

    Expands ``Z`` as a signed sum over permutations and distinct row-index
    tuples, then groups row tuples by their coincidence pattern: the moment
    only depends on the pattern, and a pattern with ``b`` distinct rows
    occurs ``n (n-1) ... (n-b+1)`` times.  Each moment comes from
    :func:`orthogonal_moment`.
    """
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    limit = 3 if p == 1 else 2
    if not 1 <= k <= limit:
        raise ValueError(f"k must lie in 1..{limit} for p={p}, got {k}")
    if not k <= n <= m:
        raise ValueError(f"need k <= n <= m, got k={k}, n={n}, m={m}")
    slots = [(r, i) for r in range(p) for i in range(k)]
    perms = list(_permutations_with_sign(k))
    total = Fraction(0) if exact else 0.0
    for blocks in _restricted_growth(len(slots)):
        rows_of = {}
        for (r, _), b in zip(slots, blocks):
            rows_of.setdefault(r, []).append(b)
        if any(len(set(v)) != len(v) for v in rows_of.values()):
            continue
        count = _falling(n, max(blocks) + 1)
        if count == 0:
            continue
        pattern_sum = Fraction(0) if exact else 0.0
        for choice in itertools.product(perms, repeat=p):
            sign = math.prod(s for _, s in choice)
            i_idx, j_idx = [], []
            for (r, i), b in zip(slots, blocks):
                sigma = choice[r][0]
                i_idx += [b + 1, b + 1]
                j_idx += [i + 1, sigma[i] + 1]
            pattern_sum += sign * orthogonal_moment(MomentQuery(i_idx, j_idx), m, exact)
        total += count * pattern_sum
    return total


@dataclass(frozen=True)
class DetGramMC:
    mean: float
    variance: float
    mu4: float
    se_mean: float
    trials: int


def det_gram_moment_mc(k, n, l, trials, seed):
    """Monte Carlo moments of ``Z = det(B^T B)`` for the truncated block."""
    if trials < 100:
        raise ValueError(f"trials must be >= 100, got {trials}")
    if not 1 <= k <= n or l < 0:
        raise ValueError("need 1 <= k <= n and l >= 0")
    if l == 0:
        # orthonormal columns: Z == 1 identically
        return DetGramMC(1.0, 0.0, 0.0, 0.0, trials)
    B = haar_columns_batch(n + l, k, trials, seed)[:, :n, :]
    z = np.linalg.det(np.swapaxes(B, 1, 2) @ B)
    mean = math.fsum(z) / trials
    dev = z - mean
    variance = math.fsum(dev**2) / trials
    mu4 = math.fsum(dev**4) / trials
    return DetGramMC(mean, variance, mu4, math.sqrt(variance / (trials - 1)), trials)


def table_rows(table):
    """Rows ``(matching_a, matching_b, loops, reduced_coset_type, value)``."""
    loops, _, _ = _pair_structure(table.k)
    out = []
    for x, a in enumerate(table.matchings):
        for y, b in enumerate(table.matchings):
            out.append(
                (
                    str(a),
                    str(b),
                    int(loops[x, y]),
                    format_coset_type(reduced_coset_type(a, b)),
                    float(table.values[x, y]),
                )
            )
    return out
