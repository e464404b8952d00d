"""Command-line entry point: ``fpqn {run,sweep,check,prox-bench}``.

Exit codes: 0 success, 1 configuration error, 2 solver divergence,
3 I/O failure, 4 a verification check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..solvers import ALGORITHMS, ConfigurationError
from .config import ConfigError, parse_config
from .scenarios import GAUSSIAN_SCENARIOS, RAYLEIGH_SCENARIOS, SCENARIOS

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_IO = 3
EXIT_CHECK_FAILED = 4

DEFAULTS = {
    "scenario": None,
    "image": "phantom",
    "algo": "fp2o_qn,pdfp2o",
    "tol": 5e-4,
    "max_iter": 5000,
    "seed": 0,
    "out_dir": None,
    "jobs": 1,
}

# solver-facing keys, translated to build_config override names
_OVERRIDES = {
    "mu": "mu", "lambda": "lam", "gamma": "gamma", "kappa": "kappa", "epsilon": "epsilon",
    "beta": "beta", "tol": "tol", "max_iter": "max_iter",
    "allow_lambda_violation": "allow_lambda_violation",
}


def _lambda_arg(text: str):
    if text.strip().lower() == "auto":
        return "auto"
    return float(text)


def _common(p: argparse.ArgumentParser):
    # every default is None so config-file values can show through
    p.add_argument("--config", help="key=value config file; flags override its values")
    p.add_argument("--scenario", help="scenario id (1-4, R1-R4), comma list, 'gaussian', "
                                      "'rayleigh' or 'all'")
    p.add_argument("--image", help="'phantom', 'phantom:<size>' or a PGM path")
    p.add_argument("--algo", help=f"comma list from {', '.join(ALGORITHMS[:4])}")
    p.add_argument("--mu", type=float)
    p.add_argument("--lambda", dest="lambda", type=_lambda_arg, help="step size or 'auto'")
    p.add_argument("--gamma", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tol", type=float, help="relative-change tolerance (default 5e-4)")
    p.add_argument("--max-iter", dest="max_iter", type=int, help="iteration cap (default 5000)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--jobs", type=int)
    p.add_argument("--allow-lambda-violation", dest="allow_lambda_violation",
                   action="store_const", const=True)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpqn", description="TV deblurring experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run one scenario"),
                       ("sweep", "run a scenario x algorithm grid"),
                       ("check", "theory and invariant checks at desk scale")):
        _common(sub.add_parser(name, help=text))
    bench = sub.add_parser("prox-bench", help="closed-form prox against the brute-force oracle")
    bench.add_argument("--n", type=int, default=100)
    bench.add_argument("--grid-step", dest="grid_step", type=float, default=1e-4)
    bench.add_argument("--seed", type=int, default=0)
    return parser


def resolve(args) -> dict:
    """Merge defaults, config file and flags (flags win)."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        opts.update(parse_config(args.config))
    for key, value in vars(args).items():
        if key in ("config", "command", "verbose"):
            continue
        if value is not None:
            opts[key] = value
    return opts


def _scenarios(text: str) -> list:
    text = str(text).strip().lower()
    if text == "all":
        return list(SCENARIOS)
    if text == "gaussian":
        return list(GAUSSIAN_SCENARIOS)
    if text == "rayleigh":
        return list(RAYLEIGH_SCENARIOS)
    ids = [s.strip().upper() for s in text.split(",") if s.strip()]
    for s in ids:
        if s not in SCENARIOS:
            raise ConfigError(f"unknown scenario {s!r}; choose from {sorted(SCENARIOS)}")
    return ids


def _algorithms(text: str) -> list:
    algos = [a.strip() for a in str(text).split(",") if a.strip()]
    for a in algos:
        if a not in ALGORITHMS[:4]:
            raise ConfigError(f"unknown algorithm {a!r}")
    return algos


def _overrides(opts: dict) -> dict:
    out = {}
    for key, target in _OVERRIDES.items():
        if key in opts:
            value = opts[key]
            out[target] = None if value == "auto" else value
    return out


def _cmd_experiments(opts: dict, grid: bool) -> int:
    from .experiment import summary_csv, sweep

    scenarios = _scenarios(opts["scenario"] or ("gaussian" if grid else "1"))
    if not grid and len(scenarios) != 1:
        raise ConfigError("'run' takes a single scenario; use 'sweep' for several")
    algos = _algorithms(opts["algo"])
    results = sweep(scenarios, algos, overrides=_overrides(opts), seed=int(opts["seed"]),
                    source=opts["image"], out_dir=opts["out_dir"],
                    jobs=int(opts["jobs"]) if grid else 1)
    sys.stdout.write(summary_csv(results))
    if any(r.status == "diverged" for r in results):
        return EXIT_DIVERGED
    return EXIT_OK


def _cmd_check(opts: dict) -> int:
    from .checks import theory_suite

    report = theory_suite(seed=int(opts["seed"]))
    text = report.to_text()
    print(text)
    if opts["out_dir"]:
        d = Path(opts["out_dir"])
        d.mkdir(parents=True, exist_ok=True)
        (d / "theory_report.txt").write_text(text + "\n")
        report["conditions"].data["report"].to_csv(d / "conditions.csv")
    return EXIT_OK if report.all_passed else EXIT_CHECK_FAILED


def _cmd_bench(args) -> int:
    from .checks import format_bench, prox_bench

    res = prox_bench(n=args.n, grid_step=args.grid_step, seed=args.seed)
    print(format_bench(res))
    return EXIT_OK if res["passed"] else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    from ..solvers import DivergenceError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "prox-bench":
            return _cmd_bench(args)
        opts = resolve(args)
        if args.command == "check":
            return _cmd_check(opts)
        return _cmd_experiments(opts, grid=args.command == "sweep")
    except DivergenceError as exc:
        print(f"error: solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ConfigurationError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
