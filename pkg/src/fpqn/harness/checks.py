"""Desk-scale verification: oracle agreement, theory checks and prox bench."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..analysis import (
    JointPoint,
    WeightedNorms,
    conditions_check,
    lemma1_check,
    operator_T,
    trajectory_diagnostics,
)
from ..fidelity import GaussianFidelity, estimate_beta
from ..operators import blur_operator, box_kernel, build_Q
from ..prox import prox_oracle_1d, prox_tv_isotropic, residual_prox
from ..solvers import Problem, SolverConfig, objective, run
from .phantom import phantom
from .rng import box_muller_normal, make_rng

__all__ = [
    "DeskInstance",
    "desk_instance",
    "desk_solve",
    "CheckResult",
    "TheoryReport",
    "contraction_suite",
    "monotone_suite",
    "prox_identity_suite",
    "theory_suite",
    "prox_bench",
    "format_bench",
    "fixed_point",
    "conditions_suite",
]

DESK_SIZE = 16
DESK_SIGMA = 2.0
DESK_MU = 1.0
DESK_EPSILON = 0.5
DESK_QN_LAM = 0.5
DESK_PD_LAM = 0.125
DESK_PD_GAMMA = 1.8


@dataclass(frozen=True)
class DeskInstance:
    truth: np.ndarray
    fidelity: GaussianFidelity
    Q: object
    mu: float
    qn_lam: float
    pd_lam: float
    gamma: float

    @property
    def beta(self) -> float:
        return estimate_beta(self.fidelity)

    def problem(self, with_q: bool = True) -> Problem:
        return Problem(self.fidelity, Q=self.Q if with_q else None, u_true=self.truth)

    def config(self, algorithm: str, tol: float = 1e-10, max_iter: int = 100000,
               kappa: float = 0.0) -> SolverConfig:
        if algorithm.startswith("fp2o"):
            return SolverConfig(algorithm=algorithm, lam=self.qn_lam, kappa=kappa, mu=self.mu,
                                tol=tol, max_iter=max_iter)
        return SolverConfig(algorithm=algorithm, lam=self.pd_lam, kappa=kappa, gamma=self.gamma,
                            mu=self.mu, tol=tol, max_iter=max_iter)


def desk_instance(seed: int = 0) -> DeskInstance:
    """16x16 phantom, 3x3 box blur, Gaussian noise of std 2, ``Q = K^T K + 0.5 B^T B``.

    With this ``Q`` both convergence hypotheses hold: ``||Q^-1|| ~ 1.06 < 2 beta = 2``
    and ``lam = 0.5`` sits just under ``1 / lambda_max(B Q^-1 B^T)``.
    """
    truth = phantom(DESK_SIZE)
    K = blur_operator(box_kernel(3), truth.shape)
    b = K.apply(truth) + DESK_SIGMA * box_muller_normal(make_rng(seed, "desk"), truth.shape)
    F = GaussianFidelity(K, b)
    Q = build_Q("gaussian", K, DESK_EPSILON)
    return DeskInstance(truth, F, Q, DESK_MU, DESK_QN_LAM, DESK_PD_LAM, DESK_PD_GAMMA)


def desk_solve(inst: DeskInstance, algorithm: str, tol: float = 1e-10,
               max_iter: int = 100000, kappa: float = 0.0):
    """Run one scheme on the desk instance; returns ``(state, trace, objective)``."""
    cfg = inst.config(algorithm, tol=tol, max_iter=max_iter, kappa=kappa)
    state, trace = run(inst.problem(with_q=algorithm.startswith("fp2o")), cfg)
    return state, trace, objective(inst.fidelity, state.u, inst.mu)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class TheoryReport:
    checks: list

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def _random_point(rng, shape, t: float) -> JointPoint:
    u = rng.uniform(0.0, 255.0, size=shape)
    v = t * rng.standard_normal((2,) + shape)
    return JointPoint(v, u)


def conditions_suite(inst: DeskInstance) -> CheckResult:
    rep = conditions_check(inst.Q, inst.fidelity, inst.qn_lam)
    return CheckResult("conditions", rep.all_passed, rep.to_text().replace("\n", "; "),
                       {"report": rep})


def contraction_suite(inst: DeskInstance, n_pairs: int = 500, seed: int = 0) -> CheckResult:
    """One-step contraction inequality on random pairs, plus plain non-expansiveness."""
    rng = make_rng(seed, "contraction")
    norms = WeightedNorms(inst.qn_lam, inst.Q)
    t = inst.mu / inst.qn_lam
    beta = inst.beta
    shape = inst.truth.shape
    reports = []
    for _ in range(n_pairs):
        w1 = _random_point(rng, shape, t)
        w2 = _random_point(rng, shape, t)
        reports.append(lemma1_check(w1, w2, inst.fidelity, norms, beta, inst.mu))
    applicable = all(r.applicable for r in reports)
    ok = applicable and all(r.passed for r in reports)
    nonexp = all(r.nonexpansive for r in reports)
    min_gap = min(r.gap / r.base for r in reports)
    n_unscaled_fail = sum(r.gap_unscaled < -1e-9 * r.base for r in reports)
    detail = (f"{n_pairs} pairs, min relative gap {min_gap:.3e}, non-expansive={nonexp}, "
              f"unscaled-form violations={n_unscaled_fail}")
    return CheckResult("contraction", ok and nonexp, detail,
                       {"min_gap": min_gap, "nonexpansive": nonexp,
                        "unscaled_violations": n_unscaled_fail})


def fixed_point(inst: DeskInstance, n_iter: int = 20000) -> JointPoint:
    """Reference fixed point of the QN map from a long Picard run."""
    w = JointPoint(np.zeros((2,) + inst.truth.shape), np.array(inst.fidelity.b))
    t = inst.mu / inst.qn_lam
    for _ in range(n_iter):
        w = operator_T(w, inst.fidelity, inst.Q, inst.qn_lam, t)
    return w


def monotone_suite(inst: DeskInstance, n_iter: int = 2000, slack: float = 1e-9,
                   w_star: JointPoint | None = None) -> list:
    """Distance-to-fixed-point monotonicity and the summability signature."""
    if w_star is None:
        w_star = fixed_point(inst)
    w0 = JointPoint(np.zeros((2,) + inst.truth.shape), np.array(inst.fidelity.b))
    diag = trajectory_diagnostics(inst.fidelity, inst.Q, inst.qn_lam, inst.mu, w0, w_star, n_iter)
    dist = diag["dist"]
    worst = float(np.max(np.diff(dist)))
    mono = CheckResult(
        "monotone_distance", worst <= slack,
        f"{n_iter} steps, largest increase {worst:.3e} (slack {slack:g}), "
        f"distance {dist[0]:.4g} -> {dist[-1]:.3e}",
        {"dist": dist},
    )
    dec = max(n_iter // 10, 1)
    ratios = {}
    for key in ("dv", "du_Q"):
        seq = diag[key]
        first = float(np.mean(seq[:dec]))
        last = float(np.mean(seq[-dec:]))
        ratios[key] = last / first if first > 0 else 0.0
    summ = CheckResult(
        "summability", all(r <= 0.1 for r in ratios.values()),
        ", ".join(f"{k} last/first decile {r:.3e}" for k, r in ratios.items()),
        ratios,
    )
    return [mono, summ]


def prox_identity_suite(n_evals: int = 100, shape=(16, 16), tol: float = 1e-10,
                        seed: int = 0) -> CheckResult:
    """Subdifferential characterisation of the prox, pixel by pixel."""
    rng = make_rng(seed, "prox-identity")
    worst = 0.0
    for _ in range(n_evals):
        t = float(rng.uniform(0.0, 3.0))
        v = rng.standard_normal((2,) + tuple(shape)) * rng.uniform(0.1, 5.0)
        p = prox_tv_isotropic(v, t)
        d = v - p
        pn = np.sqrt(np.sum(p * p, axis=0))
        dn = np.sqrt(np.sum(d * d, axis=0))
        nz = pn > 0
        err_nz = np.abs(d[:, nz] - t * p[:, nz] / pn[nz]).max(initial=0.0)
        err_z = np.maximum(dn[~nz] - t, 0.0).max(initial=0.0)
        worst = max(worst, float(err_nz), float(err_z))
    return CheckResult("prox_subdifferential", worst <= tol,
                       f"{n_evals} evaluations, worst violation {worst:.3e}", {"worst": worst})


def theory_suite(seed: int = 0, n_pairs: int = 500, n_iter: int = 2000) -> TheoryReport:
    inst = desk_instance(seed)
    checks = [conditions_suite(inst), contraction_suite(inst, n_pairs, seed)]
    checks += monotone_suite(inst, n_iter)
    checks.append(prox_identity_suite(seed=seed))
    return TheoryReport(checks)


def prox_bench(n: int = 100, grid_step: float = 1e-4, seed: int = 0) -> dict:
    """Closed-form prox against the brute-force ray oracle on random pixel pairs."""
    rng = make_rng(seed, "prox-bench")
    worst = 0.0
    t_closed = t_oracle = 0.0
    for _ in range(n):
        v = rng.uniform(-5.0, 5.0, size=2)
        t = float(rng.uniform(0.0, 4.0))
        s = time.perf_counter()
        p = prox_tv_isotropic(v.reshape(2, 1, 1), t).reshape(2)
        t_closed += time.perf_counter() - s
        s = time.perf_counter()
        q = prox_oracle_1d(v, t, grid_step)
        t_oracle += time.perf_counter() - s
        worst = max(worst, float(np.max(np.abs(p - q))))
        # complement consistency
        r = residual_prox(v.reshape(2, 1, 1), t).reshape(2)
        worst = max(worst, float(np.max(np.abs(p + r - v))))
    return {
        "n": n, "grid_step": grid_step, "max_abs_error": worst,
        "bound": 2 * grid_step, "passed": worst <= 2 * grid_step,
        "closed_seconds": t_closed, "oracle_seconds": t_oracle,
    }


def format_bench(res: dict) -> str:
    status = "PASS" if res["passed"] else "FAIL"
    return (f"prox bench: n={res['n']} grid_step={res['grid_step']:g} "
            f"max_abs_error={res['max_abs_error']:.3e} bound={res['bound']:.1e} [{status}]\n"
            f"closed form {res['closed_seconds'] * 1e3:.2f} ms, "
            f"oracle {res['oracle_seconds'] * 1e3:.2f} ms")

