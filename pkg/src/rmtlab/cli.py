"""Command-line entry point ``rmtlab``.

Exit codes: 0 success, 1 usage or configuration error, 2 a ``--check``
threshold failed, 3 I/O error.
"""

import argparse
import csv
import operator
import re
import sys

import numpy as np

from . import __version__
from . import weingarten as wg
from .errors import ConfigError, DegenerateVarianceError
from .harness import ExperimentConfig, emit_results, run_experiment
from .lyapunov import MODES, lyapunov_spectra
from .ensembles import EnsembleSpec
from .rng import derive_trial_seed

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3

_OPS = {"<=": operator.le, ">=": operator.ge, "<": operator.lt, ">": operator.gt}
_ALIASES = {"ks": "ks_statistic", "mean": "sample_mean", "var": "sample_variance"}
_CHECK_RE = re.compile(r"^\s*([A-Za-z_][\w]*)\s*(<=|>=|<|>)\s*([-+0-9.eE]+)\s*$")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_checks(text):
    """Parse ``"ks<=0.06,mean>=-1"`` into ``[(statistic, op, threshold)]``."""
    checks = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        match = _CHECK_RE.match(part)
        if not match:
            raise UsageError(f"cannot parse check {part!r}")
        name, op, value = match.groups()
        try:
            threshold = float(value)
        except ValueError:
            raise UsageError(f"bad threshold in {part!r}") from None
        checks.append((_ALIASES.get(name, name), op, threshold))
    return checks


def evaluate_checks(summary, checks):
    """Print one line per check; return True when all hold."""
    ok = True
    for name, op, threshold in checks:
        if name not in summary:
            raise UsageError(f"unknown statistic {name!r} in --check")
        passed = _OPS[op](summary[name], threshold)
        ok &= passed
        status = "PASS" if passed else "FAIL"
        print(f"check {name} {op} {threshold}: {summary[name]!r} {status}")
    return ok


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _print_summary(summary):
    for key, value in summary.items():
        print(f"{key} = {value!r}")


def _finish(result, args):
    _print_summary(result.summary)
    if args.out:
        for path in emit_results(result, args.format, args.out):
            print(f"wrote {path}", file=sys.stderr)
    if args.check:
        return EXIT_OK if evaluate_checks(result.summary, parse_checks(args.check)) else EXIT_CHECK
    return EXIT_OK


def _cmd_config(args, allowed):
    config = ExperimentConfig.from_json(args.config)
    if allowed and config.kind not in allowed:
        raise ConfigError(f"config kind {config.kind!r} not accepted here; expected {allowed}")
    if args.out is None and config.output_path:
        args.out = config.output_path
    return _finish(run_experiment(config, args.workers), args)


def cmd_clt(args):
    return _cmd_config(args, ("clt", "clt-topk"))


def cmd_run(args):
    return _cmd_config(args, None)


def cmd_identity(args):
    config = ExperimentConfig(
        kind="identity-check", n=args.n, N=args.N, truncations=args.l,
        trials=args.trials, master_seed=args.seed, convention=args.convention,
    )
    return _finish(run_experiment(config, args.workers), args)


def cmd_tails(args):
    config = ExperimentConfig(
        kind="tails", alpha=args.alpha, beta=args.beta, eps=tuple(args.eps),
        trials=args.trials, master_seed=args.seed,
    )
    return _finish(run_experiment(config, args.workers), args)


def cmd_weingarten_verify(args):
    config = ExperimentConfig(
        kind="weingarten-verify", k=args.k, m=args.m, truncations=args.l,
        trials=args.trials, master_seed=args.seed,
    )
    return _finish(run_experiment(config, args.workers), args)


def cmd_weingarten_table(args):
    if not 1 <= args.k <= wg.MAX_TABLE_K:
        raise ConfigError(f"k must lie in 1..{wg.MAX_TABLE_K}")
    if args.m < 1:
        raise ConfigError("m must be positive")
    table = wg.weingarten_table(args.k, args.m)
    rows = wg.table_rows(table)
    header = ("matching_a", "matching_b", "loops", "reduced_coset_type", "value")
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_lyapunov(args):
    spec = EnsembleSpec.uniform(args.n, args.N, args.l)
    seeds = [derive_trial_seed(args.seed, i) for i in range(args.trials)]
    lambdas = np.array([s.lambdas for s in lyapunov_spectra(spec, seeds, args.mode)])
    mean = lambdas.mean(axis=0)
    se = lambdas.std(axis=0, ddof=1) / np.sqrt(args.trials) if args.trials > 1 else 0 * mean
    for i, (m, s) in enumerate(zip(mean, se), start=1):
        print(f"lambda_{i} = {float(m)!r} (se {float(s)!r})")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["trial", "seed"] + [f"lambda_{i}" for i in range(1, args.n + 1)])
            for t, (seed, row) in enumerate(zip(seeds, lambdas)):
                writer.writerow([t, seed] + [repr(float(v)) for v in row])
    return EXIT_OK


def _add_output(p, check=True):
    p.add_argument("--out", help="directory for result files")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (capped by RMTLAB_WORKERS)")
    if check:
        p.add_argument("--check", help='thresholds such as "ks<=0.06"; exit 2 if any fails')


def build_parser():
    parser = _Parser(prog="rmtlab", allow_abbrev=False,
                     description="Products of truncated Haar orthogonal matrices.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("clt", help="CLT experiment from a JSON config", allow_abbrev=False)
    p.add_argument("--config", required=True)
    _add_output(p)
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("run", help="any experiment kind from a JSON config", allow_abbrev=False)
    p.add_argument("--config", required=True)
    _add_output(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("identity", help="frame growth vs telescoped Beta sum", allow_abbrev=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--convention", choices=("corrected", "literal"), default="corrected")
    _add_output(p)
    p.set_defaults(func=cmd_identity)

    wgp = sub.add_parser("weingarten", help="Weingarten tables and checks", allow_abbrev=False)
    wsub = wgp.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = wsub.add_parser("table", allow_abbrev=False, help="write the Wg matrix as CSV")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_weingarten_table)
    p = wsub.add_parser("verify", allow_abbrev=False, help="exact vs Monte Carlo and asymptotics")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--l", type=int, default=2, help="truncation for the determinant checks")
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)
    p.set_defaults(func=cmd_weingarten_verify)

    p = sub.add_parser("tails", help="Beta tail frequencies vs bound", allow_abbrev=False)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--eps", type=_float_list, default=[0.1, 0.2, 0.3])
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)
    p.set_defaults(func=cmd_tails)

    p = sub.add_parser("lyapunov", help="mean Lyapunov spectrum", allow_abbrev=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=MODES, default="qr-accumulate")
    p.add_argument("--out", help="CSV file of per-trial spectra")
    p.set_defaults(func=cmd_lyapunov)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, DegenerateVarianceError, ValueError, TypeError) as exc:
        print(f"rmtlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"rmtlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
