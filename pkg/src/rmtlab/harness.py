"""Experiment configs, seeded parallel execution and result files.

Trial ``i`` of an experiment draws everything from the stream
``derive_trial_seed(master_seed, i)``.  Trials are processed in fixed
chunks of :data:`CHUNK` consecutive indices whatever the worker count, and
results are reassembled in trial order, so per-trial values do not depend
on how many workers ran them.  Summaries use compensated sums over the
reassembled records.
"""

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import weingarten as wg
from .ensembles import EnsembleSpec, log_beta_batch
from .errors import ConfigError, DegenerateVarianceError, UndefinedBoundError
from .lyapunov import MODES, frame_growths, lyapunov_spectra, telescoped_growths
from .moments import aggregate_moments, skorski_tail_bound, clt_ks_rate
from .rng import as_generator, check_seed, derive_trial_seed
from .stats import CONVENTIONS, ks_one_sample, ks_two_sample, standardize_lyapunov

__all__ = [
    "KINDS",
    "ExperimentConfig",
    "ExperimentResult",
    "derive_trial_seed",
    "resolve_workers",
    "run_experiment",
    "run_clt_experiment",
    "run_identity_check",
    "run_weingarten_verification",
    "run_tail_check",
    "summarize_records",
    "emit_results",
    "load_summary",
    "load_records",
]

KINDS = ("clt", "clt-topk", "tails", "weingarten-verify", "identity-check")
CHUNK = 128
WORKERS_ENV = "RMTLAB_WORKERS"
# largest pattern size checked by Monte Carlo in the Weingarten verification
MAX_VERIFY_K = 3

_TRIAL_COLUMNS = {
    "clt": ("trial", "seed", "value", "standardized"),
    "clt-topk": ("trial", "seed", "value", "standardized"),
    "identity-check": ("trial", "seed", "frame_growth", "telescoped_growth"),
    "tails": ("eps", "side", "empirical", "bound", "se", "excess", "passed"),
    "weingarten-verify": ("check", "label", "exact", "estimate", "tolerance", "score"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A single experiment, usually loaded from one JSON document.

    ``truncations`` is either one integer (all factors alike) or a list of
    ``N`` integers.  ``m`` is the ambient dimension for
    ``weingarten-verify``; ``alpha``, ``beta`` and ``eps`` parametrize
    ``tails``.  ``constants`` holds the unspecified universal constants
    ``C`` and ``c`` of the reference bounds.
    """

    kind: str
    n: int = 4
    N: int = 100
    k: int = 1
    truncations: object = 4
    trials: int = 1000
    master_seed: int = 0
    convention: str = "corrected"
    constants: dict = field(default_factory=lambda: {"C": 1.0, "c": 1.0})
    output_path: str = None
    mode: str = "qr-accumulate"
    m: int = 6
    alpha: float = 1.0
    beta: float = 1.0
    eps: tuple = (0.1, 0.2, 0.3)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("n", "N", "k", "trials", "m"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        try:
            check_seed(self.master_seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.convention not in CONVENTIONS:
            raise ConfigError(f"convention must be one of {CONVENTIONS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        constants = {"C": 1.0, "c": 1.0}
        constants.update({str(key): float(v) for key, v in dict(self.constants).items()})
        if constants["C"] <= 0 or constants["c"] <= 0:
            raise ConfigError("constants C and c must be positive")
        object.__setattr__(self, "constants", constants)
        if isinstance(self.truncations, (list, tuple)):
            truncations = tuple(self.truncations)
            if len(truncations) != self.N:
                raise ConfigError(
                    f"truncations has {len(truncations)} entries, expected N={self.N}"
                )
        else:
            truncations = self.truncations
        values = truncations if isinstance(truncations, tuple) else (truncations,)
        if any(isinstance(v, bool) or not isinstance(v, int) or v < 0 for v in values):
            raise ConfigError("truncations must be non-negative integers")
        object.__setattr__(self, "truncations", truncations)
        eps = self.eps
        if isinstance(eps, (int, float)):
            eps = (eps,)
        eps = tuple(float(e) for e in eps)
        if not eps or any(e < 0 for e in eps):
            raise ConfigError("eps must be a non-empty list of non-negative numbers")
        object.__setattr__(self, "eps", eps)
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigError("alpha and beta must be positive")
        if self.kind in ("clt", "clt-topk", "identity-check") and self.k > self.n:
            raise ConfigError(f"k={self.k} exceeds n={self.n}")
        if self.kind == "weingarten-verify" and self.k > MAX_VERIFY_K:
            raise ConfigError(f"weingarten-verify supports k <= {MAX_VERIFY_K}")

    def spec(self):
        """The :class:`EnsembleSpec` described by ``n``, ``N`` and ``truncations``."""
        if isinstance(self.truncations, tuple):
            return EnsembleSpec(self.n, self.N, self.truncations)
        return EnsembleSpec.uniform(self.n, self.N, self.truncations)

    def to_dict(self):
        out = asdict(self)
        out["truncations"] = (
            list(self.truncations) if isinstance(self.truncations, tuple) else self.truncations
        )
        out["eps"] = list(self.eps)
        return out

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        if "kind" not in data:
            raise ConfigError("config needs a 'kind'")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    summary: dict
    manifest: dict


def resolve_workers(workers=None):
    """Worker count: the request (default: CPU count) capped by ``RMTLAB_WORKERS``."""
    requested = workers if workers is not None else (os.cpu_count() or 1)
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        try:
            requested = min(requested, int(cap))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {cap!r}") from None
    return max(1, int(requested))


def _map_chunks(fn, config, workers):
    """Apply ``fn(config_dict, start, stop)`` over trial chunks, in order."""
    bounds = [(s, min(s + CHUNK, config.trials)) for s in range(0, config.trials, CHUNK)]
    payload = config.to_dict()
    if workers <= 1 or len(bounds) == 1:
        parts = [fn(payload, a, b) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(bounds))) as pool:
            parts = list(pool.map(fn, [payload] * len(bounds), *zip(*bounds)))
    records = [r for part in parts for r in part]
    records.sort(key=lambda r: r["trial"])
    return records


def _trial_seeds(master, start, stop):
    return [derive_trial_seed(master, i) for i in range(start, stop)]


def _mean_var(values):
    values = [float(v) for v in values]
    count = len(values)
    mean = math.fsum(values) / count
    var = math.fsum((v - mean) ** 2 for v in values) / (count - 1) if count > 1 else 0.0
    return mean, var


def _manifest(config, workers, started):
    return {
        "code_version": __version__,
        "kind": config.kind,
        "seed": config.master_seed,
        "workers": workers,
        "wall_time": time.perf_counter() - started,
    }


# ----------------------------------------------------------------- clt kinds

def _clt_chunk(payload, start, stop):
    config = ExperimentConfig.from_dict(payload)
    spec = config.spec()
    seeds = _trial_seeds(config.master_seed, start, stop)
    top = 1 if config.kind == "clt" else config.k
    spectra = lyapunov_spectra(spec, seeds, mode=config.mode)
    return [
        {"trial": start + t, "seed": seed, "value": math.fsum(s.lambdas[:top])}
        for t, (seed, s) in enumerate(zip(seeds, spectra))
    ]


def _standardize(config, values):
    if config.kind == "clt":
        return standardize_lyapunov(values, config.spec(), config.convention)
    mean, var = _mean_var(values)
    if var <= 0:
        raise DegenerateVarianceError("top-k sums have zero sample variance")
    return (np.asarray(values) - mean) / math.sqrt(var)


def _clt_summary(config, values, standardized):
    spec = config.spec()
    mean, var = _mean_var(values)
    summary = {
        "trials": float(len(values)),
        "sample_mean": mean,
        "sample_variance": var,
        "ks_statistic": ks_one_sample(standardized).statistic,
    }
    agg = aggregate_moments(spec)
    if config.kind == "clt":
        if config.convention == "corrected":
            summary["expected_mean"] = agg.mu / 2
            summary["expected_variance"] = agg.sigma2 / 4
        else:
            summary["expected_mean"] = agg.mu
            summary["expected_variance"] = agg.sigma2
    try:
        summary["clt_ks_rate"] = clt_ks_rate(spec, config.constants["C"])
    except (UndefinedBoundError, ValueError):
        pass
    return summary


def run_clt_experiment(config, workers=None):
    """Top exponent (``clt``) or top-``k`` sum (``clt-topk``) across trials.

    ``clt`` standardizes with the predicted mean and variance and measures
    KS against N(0, 1); ``clt-topk`` standardizes with the sample moments.
    The closed-form KS rate is attached for reference when it is defined.
    """
    if config.kind not in ("clt", "clt-topk"):
        raise ConfigError(f"expected kind clt or clt-topk, got {config.kind!r}")
    spec = config.spec()
    if spec.L == 0:
        raise DegenerateVarianceError(
            "all truncations are zero: every exponent is exactly 0"
        )
    started = time.perf_counter()
    workers = resolve_workers(workers)
    records = _map_chunks(_clt_chunk, config, workers)
    values = [r["value"] for r in records]
    standardized = _standardize(config, values)
    for r, z in zip(records, standardized):
        r["standardized"] = float(z)
    summary = _clt_summary(config, values, standardized)
    return ExperimentResult(config, records, summary, _manifest(config, workers, started))


# ------------------------------------------------------------ identity check

def _identity_chunk(payload, start, stop):
    config = ExperimentConfig.from_dict(payload)
    spec = config.spec()
    seeds = _trial_seeds(config.master_seed, start, stop)
    growth = frame_growths(spec, 1, seeds)
    telescoped = telescoped_growths(spec, [derive_trial_seed(s, 0) for s in seeds])
    if config.convention == "literal":
        telescoped = 2 * telescoped
    return [
        {"trial": start + t, "seed": seed, "frame_growth": float(g), "telescoped_growth": float(h)}
        for t, (seed, g, h) in enumerate(zip(seeds, growth, telescoped))
    ]


def _identity_summary(config, growth, telescoped):
    agg = aggregate_moments(config.spec())
    g_mean, g_var = _mean_var(growth)
    t_mean, t_var = _mean_var(telescoped)
    return {
        "trials": float(len(growth)),
        "ks_statistic": ks_two_sample(growth, telescoped).statistic,
        "sample_mean": g_mean,
        "sample_variance": g_var,
        "telescoped_mean": t_mean,
        "telescoped_variance": t_var,
        "expected_mean": agg.mu / 2,
        "expected_variance": agg.sigma2 / 4,
    }


def run_identity_check(config, workers=None):
    """Compare the ``k = 1`` frame growth with the telescoped Beta sum.

    Each trial draws the matrix product from its own stream and the Beta
    variables from an independent stream derived from it.  Under the
    ``literal`` convention the telescoped value is doubled, which breaks the
    agreement on purpose.
    """
    if config.kind != "identity-check":
        raise ConfigError(f"expected kind identity-check, got {config.kind!r}")
    started = time.perf_counter()
    workers = resolve_workers(workers)
    records = _map_chunks(_identity_chunk, config, workers)
    summary = _identity_summary(
        config,
        [r["frame_growth"] for r in records],
        [r["telescoped_growth"] for r in records],
    )
    return ExperimentResult(config, records, summary, _manifest(config, workers, started))


# ------------------------------------------------------ weingarten verification

def _score(exact, estimate, tolerance):
    gap = abs(exact - estimate)
    if tolerance > 0:
        return gap / tolerance
    return 0.0 if gap == 0 else math.inf


def _check(check, label, exact, estimate, tolerance):
    return {
        "check": check,
        "label": label,
        "exact": float(exact),
        "estimate": float(estimate),
        "tolerance": float(tolerance),
        "score": _score(float(exact), float(estimate), float(tolerance)),
    }


def _pattern_label(q):
    return "i=" + "".join(map(str, q.i_indices)) + " j=" + "".join(map(str, q.j_indices))


def run_weingarten_verification(config, workers=None):
    """Exact Weingarten moments against Monte Carlo and asymptotics.

    Every record has a ``score``: the deviation divided by its tolerance,
    so a check passes when ``score <= 1``.  Checks:

    ``haar-moment``
        every matchable index pattern of up to ``2k`` entries that fits in
        dimension ``m``, tolerance 3 standard errors;
    ``wg-asymptotic``
        types ``(0)`` and ``(1)`` against the three-term expansion,
        tolerance ``5 m^-(k+4)``;
    ``det-identity``
        ``E[Z] = E[Z^2] = 1`` when the block is the whole group;
    ``det-mean``
        exact ``E[Z]`` for an ``(m - l) x min(k, 2)`` block against Monte
        Carlo, 3 standard errors;
    ``det-variance-l0``
        the Monte Carlo variance of ``Z`` is exactly zero when ``l = 0``;
    ``det-variance-scaling``
        ``max / min`` of ``n Var Z`` over ``n in {8, 16, 32}``, tolerance 2.
    """
    if config.kind != "weingarten-verify":
        raise ConfigError(f"expected kind weingarten-verify, got {config.kind!r}")
    started = time.perf_counter()
    k, m, trials = config.k, config.m, config.trials
    l = config.truncations if isinstance(config.truncations, int) else min(config.truncations)
    records = []

    queries = [
        q for kk in range(1, k + 1) for q in wg.moment_patterns(kk)
        if max(q.i_indices + q.j_indices) <= m
    ]
    means, ses = wg.orthogonal_moment_mc(
        queries, m, trials, derive_trial_seed(config.master_seed, 0)
    )
    for q, mean, se in zip(queries, means, ses):
        records.append(
            _check("haar-moment", _pattern_label(q), wg.orthogonal_moment(q, m), mean, 3 * se)
        )

    if k >= 2 and m >= k:
        exact = wg.weingarten_function(k, m)
        for mu in ((), (1,)):
            records.append(
                _check(
                    "wg-asymptotic",
                    wg.format_coset_type(mu),
                    exact[mu],
                    wg.wg_asymptotic(mu, k, m),
                    5.0 * float(m) ** -(k + 4),
                )
            )

    kd = min(k, 2)
    if m >= kd:
        for p in (1, 2):
            records.append(
                _check("det-identity", f"p={p}", 1.0, wg.det_gram_moment_exact(kd, m, m, p), 1e-10)
            )
    n = m - l
    if l >= 1 and n >= kd:
        mc = wg.det_gram_moment_mc(kd, n, l, max(trials, 100), derive_trial_seed(config.master_seed, 1))
        records.append(
            _check(
                "det-mean",
                f"k={kd} n={n} m={m}",
                wg.det_gram_moment_exact(kd, n, m, 1),
                mc.mean,
                3 * mc.se_mean,
            )
        )
    if n >= kd:
        mc0 = wg.det_gram_moment_mc(kd, n, 0, max(trials, 100), derive_trial_seed(config.master_seed, 2))
        records.append(_check("det-variance-l0", f"k={kd} n={n}", 0.0, mc0.variance, 0.0))

    l_scale = l if l >= 1 else 2
    scaled = []
    for size in (8, 16, 32):
        first = wg.det_gram_moment_exact(kd, size, size + l_scale, 1, exact=True)
        second = wg.det_gram_moment_exact(kd, size, size + l_scale, 2, exact=True)
        scaled.append(size * float(second - first * first))
    ratio = max(scaled) / min(scaled)
    # a one-sided check: the ratio itself against the allowed factor 2
    records.append(
        {
            "check": "det-variance-scaling",
            "label": f"k={kd} l={l_scale}",
            "exact": 2.0,
            "estimate": ratio,
            "tolerance": 2.0,
            "score": ratio / 2.0,
        }
    )

    summary = {"checks": float(len(records))}
    for name in sorted({r["check"] for r in records}):
        summary[f"max_score_{name.replace('-', '_')}"] = max(
            r["score"] for r in records if r["check"] == name
        )
    summary["det_variance_scaling_ratio"] = ratio
    summary["max_score"] = max(r["score"] for r in records)
    summary["all_pass"] = float(summary["max_score"] <= 1.0)
    return ExperimentResult(config, records, summary, _manifest(config, 1, started))


# ------------------------------------------------------------------- tails

def _beta_draws(alpha, beta, count, seed):
    """Beta draws, via Gaussian norm ratios when both shapes are half-integers."""
    rng = as_generator(seed)
    a2, b2 = 2 * alpha, 2 * beta
    if float(a2).is_integer() and float(b2).is_integer():
        return np.exp(log_beta_batch(int(a2), int(b2), count, rng))
    return rng.beta(alpha, beta, size=count)


def run_tail_check(config, workers=None):
    """Empirical Beta tails against the Bernstein-type bound.

    A tail passes when the empirical frequency is at most the bound plus
    three binomial standard errors of the frequency.
    """
    if config.kind != "tails":
        raise ConfigError(f"expected kind tails, got {config.kind!r}")
    started = time.perf_counter()
    a, b, T = config.alpha, config.beta, config.trials
    x = _beta_draws(a, b, T, derive_trial_seed(config.master_seed, 0))
    mean = a / (a + b)
    records = []
    for eps in config.eps:
        for side in ("upper", "lower"):
            hits = np.count_nonzero(x > mean + eps if side == "upper" else x < mean - eps)
            p = hits / T
            se = math.sqrt(p * (1 - p) / T)
            bound = skorski_tail_bound(a, b, eps, side)
            excess = p - bound - 3 * se
            records.append(
                {
                    "eps": eps,
                    "side": side,
                    "empirical": p,
                    "bound": bound,
                    "se": se,
                    "excess": excess,
                    "passed": int(excess <= 0),
                }
            )
    summary = {
        "trials": float(T),
        "sample_mean": math.fsum(x) / T,
        "max_excess": max(r["excess"] for r in records),
        "all_pass": float(all(r["passed"] for r in records)),
    }
    return ExperimentResult(config, records, summary, _manifest(config, 1, started))


_RUNNERS = {
    "clt": run_clt_experiment,
    "clt-topk": run_clt_experiment,
    "identity-check": run_identity_check,
    "weingarten-verify": run_weingarten_verification,
    "tails": run_tail_check,
}


def run_experiment(config, workers=None):
    """Dispatch on ``config.kind``."""
    return _RUNNERS[config.kind](config, workers)


def summarize_records(config, records):
    """Recompute the summary of a trial-based experiment from its records.

    Supported for ``clt``, ``clt-topk`` and ``identity-check``; matches the
    stored summary when fed the records read back from disk.
    """
    if config.kind in ("clt", "clt-topk"):
        values = [float(r["value"]) for r in records]
        return _clt_summary(config, values, [float(r["standardized"]) for r in records])
    if config.kind == "identity-check":
        return _identity_summary(
            config,
            [float(r["frame_growth"]) for r in records],
            [float(r["telescoped_growth"]) for r in records],
        )
    raise ValueError(f"no per-trial summary for kind {config.kind!r}")


# ----------------------------------------------------------------- output

def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _histogram_rows(standardized):
    z = np.asarray(standardized, dtype=float)
    bins = int(min(60, max(10, round(math.sqrt(z.size)))))
    counts, edges = np.histogram(z, bins=bins)
    mids = (edges[:-1] + edges[1:]) / 2
    density = np.exp(-mids**2 / 2) / math.sqrt(2 * math.pi)
    return [
        (float(lo), float(hi), int(c), float(d))
        for lo, hi, c, d in zip(edges[:-1], edges[1:], counts, density)
    ]


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def emit_results(result, fmt="csv", path=None):
    """Write ``result`` into the directory ``path`` and return the file paths.

    ``csv`` writes ``records.csv`` (one row per trial or check; trial
    experiments use the header ``trial,seed,value,standardized``),
    ``summary.csv`` (``statistic,value``) and, when standardized values
    exist, ``histogram.csv`` (``bin_left,bin_right,count,gaussian_density``).
    ``jsonl`` writes ``results.jsonl``: a config-and-summary object, then
    one object per record.  Both write ``manifest.json``, kept apart so the
    other files are byte-stable for a fixed config.

    Raises
    ------
    OSError
        If the directory cannot be created or written.
    """
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"format must be csv or jsonl, got {fmt!r}")
    path = Path(path or result.config.output_path or "results")
    path.mkdir(parents=True, exist_ok=True)
    columns = _TRIAL_COLUMNS[result.config.kind]
    written = []
    if fmt == "csv":
        target = path / "records.csv"
        _write_csv(target, columns, ([r[c] for c in columns] for r in result.records))
        written.append(target)
        target = path / "summary.csv"
        _write_csv(target, ("statistic", "value"), result.summary.items())
        written.append(target)
        if "standardized" in columns:
            target = path / "histogram.csv"
            _write_csv(
                target,
                ("bin_left", "bin_right", "count", "gaussian_density"),
                _histogram_rows([r["standardized"] for r in result.records]),
            )
            written.append(target)
    else:
        target = path / "results.jsonl"
        with open(target, "w", encoding="utf-8") as fh:
            head = {"config": result.config.to_dict(), "summary": result.summary}
            fh.write(json.dumps(head, sort_keys=True) + "\n")
            for r in result.records:
                fh.write(json.dumps({c: r[c] for c in columns}) + "\n")
        written.append(target)
    target = path / "manifest.json"
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(result.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(target)
    return written


def load_summary(path):
    """Read ``summary.csv`` or the header line of ``results.jsonl``."""
    path = Path(path)
    if path.is_dir():
        path = path / "summary.csv" if (path / "summary.csv").exists() else path / "results.jsonl"
    if path.suffix == ".jsonl":
        with open(path, encoding="utf-8") as fh:
            return json.loads(fh.readline())["summary"]
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["statistic"]: float(row["value"]) for row in csv.DictReader(fh)}


def load_records(path):
    """Read ``records.csv`` (values as strings) or ``results.jsonl`` records."""
    path = Path(path)
    if path.is_dir():
        path = path / "records.csv" if (path / "records.csv").exists() else path / "results.jsonl"
    with open(path, newline="", encoding="utf-8") as fh:
        if path.suffix == ".jsonl":
            fh.readline()
            return [json.loads(line) for line in fh if line.strip()]
        return list(csv.DictReader(fh))
