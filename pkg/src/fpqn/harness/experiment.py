"""Scenario runs, algorithm comparisons and artifact emission."""

from __future__ import annotations

import csv
import io
import logging
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..metrics import psnr
from ..solvers import (
    PD_ALGORITHMS,
    QN_ALGORITHMS,
    ConvergenceTrace,
    DivergenceError,
    LambdaBoundWarning,
    Problem,
    SolverConfig,
    resolve_lambda,
    run,
)
from .pgm import read_pgm, write_pgm, write_raw
from .phantom import phantom
from .scenarios import DEFAULT_PARAMS, Scenario, degrade, get_scenario, make_fidelity, make_Q

__all__ = [
    "ExperimentResult",
    "SUMMARY_HEADER",
    "TIMING_COLUMNS",
    "load_truth",
    "build_config",
    "run_experiment",
    "sweep",
    "summary_csv",
]

log = logging.getLogger(__name__)

SUMMARY_HEADER = (
    "scenario", "image", "algorithm", "psnr_db", "iterations", "seconds",
    "degraded_psnr_db", "status",
)
TIMING_COLUMNS = ("seconds",)

_OVERRIDE_KEYS = {
    "mu", "lam", "gamma", "kappa", "epsilon", "beta", "tol", "max_iter",
    "allow_lambda_violation",
}


@dataclass
class ExperimentResult:
    scenario: str
    image: str
    algorithm: str
    psnr_db: float
    iterations: int
    wall_seconds: float
    degraded_psnr_db: float
    status: str
    trace: ConvergenceTrace
    restored: Optional[np.ndarray]
    lam: float

    def summary_row(self):
        return (
            self.scenario, self.image, self.algorithm, f"{self.psnr_db:.6f}",
            self.iterations, f"{self.wall_seconds:.4f}", f"{self.degraded_psnr_db:.6f}",
            self.status,
        )


def load_truth(source: str = "phantom", size: int = 256):
    """Return ``(name, image)`` for a built-in phantom or a PGM path.

    ``source`` is ``"phantom"``, ``"phantom:<size>"`` or a file path.
    """
    if source == "phantom" or source.startswith("phantom:"):
        if ":" in source:
            size = int(source.split(":", 1)[1])
        return f"phantom{size}", phantom(size)
    img = read_pgm(source)
    return Path(source).stem, img


def build_config(scenario: Scenario, algorithm: str, overrides: Optional[dict] = None):
    """Default parameters for ``scenario``/``algorithm`` with ``overrides`` applied.

    Returns ``(SolverConfig, epsilon, beta)``; ``epsilon``/``beta`` only
    matter for the QN schemes.
    """
    overrides = dict(overrides or {})
    unknown = set(overrides) - _OVERRIDE_KEYS
    if unknown:
        raise ValueError(f"unknown override(s): {sorted(unknown)}")
    family = "qn" if algorithm in QN_ALGORITHMS else "pd"
    params = dict(DEFAULT_PARAMS[scenario.noise][family])
    params["mu"] = scenario.mu
    params.update(overrides)
    epsilon = params.pop("epsilon", 0.1)
    beta = params.pop("beta", 1.0)
    if algorithm in PD_ALGORITHMS and "gamma" not in params:
        params["gamma"] = 1.8
    cfg_fields = {k: v for k, v in params.items() if k in SolverConfig.__dataclass_fields__}
    return SolverConfig(algorithm=algorithm, **cfg_fields), epsilon, beta


def _job(scenario: Scenario, algorithm: str, overrides, seed: int, source: str,
         out_dir, keep_image: bool = True) -> ExperimentResult:
    name, truth = load_truth(source, scenario.size)
    b = degrade(truth, scenario, seed)
    return _solve(scenario, algorithm, overrides, name, truth, b, out_dir, keep_image)


def _solve(scenario, algorithm, overrides, name, truth, b, out_dir, keep_image=True):
    cfg, epsilon, beta = build_config(scenario, algorithm, overrides)
    F = make_fidelity(scenario, b)
    Q = make_Q(scenario, F.K, epsilon, beta) if algorithm in QN_ALGORITHMS else None
    problem = Problem(F, Q=Q, u_true=truth)
    cfg = resolve_lambda(problem, cfg)
    status = "ok"
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            # the bound was already checked (and warned about) above
            warnings.simplefilter("ignore", LambdaBoundWarning)
            state, trace = run(problem, cfg)
        restored = state.u
        if trace.max_iter_reached:
            status = "max_iter"
    except DivergenceError as exc:
        trace = exc.trace or ConvergenceTrace(diverged=True)
        restored = exc.state.u if exc.state is not None else np.full_like(b, np.nan)
        status = "diverged"
    seconds = time.perf_counter() - t0
    result = ExperimentResult(
        scenario=scenario.id, image=name, algorithm=algorithm,
        psnr_db=psnr(restored, truth) if status != "diverged" else float("nan"),
        iterations=len(trace), wall_seconds=seconds, degraded_psnr_db=psnr(b, truth),
        status=status, trace=trace, restored=restored if keep_image else None, lam=cfg.lam,
    )
    log.info("scenario %s %s %s: psnr=%.2f iter=%d (%.2fs)", scenario.id, name, algorithm,
             result.psnr_db, result.iterations, seconds)
    if out_dir is not None:
        _emit(Path(out_dir), result, restored, b)
    return result


def _emit(out_dir: Path, result: ExperimentResult, restored, b):
    d = out_dir / f"scenario_{result.scenario}_{result.image}"
    d.mkdir(parents=True, exist_ok=True)
    degraded = d / "degraded.pgm"
    if not degraded.exists():
        write_pgm(degraded, b)
    stem = d / result.algorithm
    write_pgm(stem.with_suffix(".pgm"), restored)
    h, w = restored.shape
    write_raw(d / f"{result.algorithm}_{h}x{w}.f64", restored)
    result.trace.to_csv(d / f"{result.algorithm}_trace.csv")


def run_experiment(scenario, algorithms=("fp2o_qn", "pdfp2o"), overrides=None, seed: int = 0,
                   source: Optional[str] = None, out_dir=None) -> list:
    """Run each algorithm on one shared degraded image of ``scenario``."""
    if not isinstance(scenario, Scenario):
        scenario = get_scenario(scenario)
    name, truth = load_truth(source or scenario.source, scenario.size)
    b = degrade(truth, scenario, seed)
    return [_solve(scenario, alg, overrides, name, truth, b, out_dir) for alg in algorithms]


def sweep(scenarios=("1", "2", "3", "4"), algorithms=("fp2o_qn", "pdfp2o"), overrides=None,
          seed: int = 0, source: Optional[str] = None, out_dir=None, jobs: int = 1) -> list:
    """Run the scenario x algorithm grid; ``jobs > 1`` uses worker processes.

    Each job regenerates its degraded input from the seed, so results do not
    depend on scheduling.  If ``out_dir`` is given a ``summary.csv`` is written.
    """
    grid = [(get_scenario(s) if not isinstance(s, Scenario) else s, a)
            for s in scenarios for a in algorithms]
    args = [(sc, alg, overrides, seed, source or sc.source, out_dir, False) for sc, alg in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(args), os.cpu_count() or 1)) as ex:
            results = list(ex.map(_job, *zip(*args)))
    else:
        results = [_job(*a) for a in args]
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        summary_csv(results, Path(out_dir) / "summary.csv")
    return results


def summary_csv(results, path=None, include_timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keep = [i for i, c in enumerate(SUMMARY_HEADER) if include_timing or c not in TIMING_COLUMNS]
    w.writerow([SUMMARY_HEADER[i] for i in keep])
    for r in results:
        row = r.summary_row()
        w.writerow([row[i] for i in keep])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
