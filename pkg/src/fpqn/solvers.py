"""Fixed-point iterations for ``min_u mu * TV(u) + f2(u)``.

Schemes
-------
``fp2o_qn``
    Quasi-Newton fixed-point iteration with a fixed spectral preconditioner
    ``Q``::

        u_half = u - Q^{-1} grad f2(u)
        v_new  = (I - prox_{t})(B u_half + (I - lam B Q^{-1} B^T) v),  t = mu / lam
        u_new  = u_half - lam Q^{-1} B^T v_new

``fp2o_kappa_qn``
    The same candidate followed by ``w_new = kappa w + (1 - kappa) w_cand``.
``pdfp2o`` / ``pdfp2o_kappa``
    Primal-dual fixed-point iteration with a plain gradient step of size
    ``gamma`` and TV threshold ``gamma * mu / lam``, optionally averaged.
``fp2o_inner``
    Dual fixed-point iteration computing ``prox_{mu TV}(x)`` (denoising).

``u`` is an ``(H, W)`` image and ``v`` a ``(2, H, W)`` dual field.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .metrics import psnr
from .operators import (
    SpectralOperator,
    grad,
    grad_adjoint,
    identity_operator,
    spectral_lambda_max_BQinvBT,
)
from .prox import residual_prox, tv_isotropic

__all__ = [
    "ALGORITHMS",
    "QN_ALGORITHMS",
    "PD_ALGORITHMS",
    "ConfigurationError",
    "DivergenceError",
    "LambdaBoundWarning",
    "SolverConfig",
    "SolverState",
    "Problem",
    "ConvergenceTrace",
    "qn_map",
    "fp2o_qn_step",
    "fp2o_kappa_qn_step",
    "pdfp2o_step",
    "pdfp2o_kappa_step",
    "fp2o_inner_step",
    "prox_tv_composite",
    "objective",
    "lambda_bound",
    "resolve_lambda",
    "run",
]

QN_ALGORITHMS = ("fp2o_qn", "fp2o_kappa_qn")
PD_ALGORITHMS = ("pdfp2o", "pdfp2o_kappa")
ALGORITHMS = QN_ALGORITHMS + PD_ALGORITHMS + ("fp2o_inner",)

# a single step that changes u by more than this factor is treated as a blow-up
BLOWUP_RATIO = 1e3

TRACE_HEADER = ("iter", "rel_change", "objective", "psnr", "fp_residual")


class ConfigurationError(ValueError):
    """Inconsistent problem/solver parameters."""


class DivergenceError(RuntimeError):
    """An iterate became non-finite.  Carries the partial trace and last good state."""

    def __init__(self, message, trace=None, state=None):
        super().__init__(message)
        self.trace = trace
        self.state = state


class LambdaBoundWarning(UserWarning):
    """The dual step exceeds the range covered by the convergence theory."""


@dataclass(frozen=True)
class SolverConfig:
    """Algorithm choice and parameters.

    ``lam=None`` selects the largest step admitted by the convergence
    theory (``1/lambda_max(B Q^{-1} B^T)`` for the QN schemes,
    ``1/lambda_max(B B^T)`` for the primal-dual ones).
    """

    algorithm: str = "fp2o_qn"
    lam: Optional[float] = 0.125
    kappa: float = 0.0
    gamma: float = 1.8
    mu: float = 0.06
    tol: float = 5e-4
    max_iter: int = 5000
    seed: int = 0
    allow_lambda_violation: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}")
        if self.lam is not None and not self.lam > 0:
            raise ConfigurationError("lam must be positive")
        if not 0.0 <= self.kappa < 1.0:
            raise ConfigurationError("kappa must lie in [0, 1)")
        if not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")
        if not self.mu >= 0:
            raise ConfigurationError("mu must be nonnegative")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ConfigurationError("max_iter must be a positive integer")

    @property
    def threshold(self) -> float:
        """Effective TV shrinkage radius passed to the prox."""
        if self.lam is None:
            raise ConfigurationError("lam is unresolved; call resolve_lambda first")
        if self.algorithm in PD_ALGORITHMS:
            return self.gamma * self.mu / self.lam
        return self.mu / self.lam


@dataclass
class SolverState:
    u: np.ndarray
    v: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.v.shape != (2,) + self.u.shape:
            raise ValueError(f"dual shape {self.v.shape} inconsistent with image {self.u.shape}")


@dataclass(frozen=True)
class Problem:
    """A deblurring instance: smooth term, optional preconditioner and ground truth."""

    fidelity: object
    Q: Optional[SpectralOperator] = None
    u_true: Optional[np.ndarray] = None
    u0: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.fidelity.K.shape


@dataclass
class ConvergenceTrace:
    rel_change: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    psnr: list = field(default_factory=list)
    fp_residual: list = field(default_factory=list)
    converged: bool = False
    max_iter_reached: bool = False
    diverged: bool = False

    def __len__(self):
        return len(self.rel_change)

    def append(self, rel_change, objective, psnr, fp_residual):
        self.rel_change.append(float(rel_change))
        self.objective.append(float(objective))
        self.psnr.append(float(psnr))
        self.fp_residual.append(float(fp_residual))

    def rows(self):
        for k in range(len(self)):
            yield (k + 1, self.rel_change[k], self.objective[k], self.psnr[k], self.fp_residual[k])

    def to_csv(self, path=None) -> str:
        """Write the trace as CSV; returns the text (and writes ``path`` if given)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for it, rc, obj, ps, fp in self.rows():
            w.writerow((it, repr(rc), repr(obj), repr(ps), repr(fp)))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DivergenceError("non-finite values in iterate")


def qn_map(u, v, fidelity, Q: SpectralOperator, lam: float, t: float):
    """One unrelaxed quasi-Newton fixed-point update; returns ``(v_new, u_new)``."""
    u_half = u - Q.solve(fidelity.gradient(u))
    w = grad(u_half) + v - lam * grad(Q.solve(grad_adjoint(v)))
    v_new = residual_prox(w, t)
    u_new = u_half - lam * Q.solve(grad_adjoint(v_new))
    return v_new, u_new


def _pd_map(u, v, fidelity, gamma: float, lam: float, t: float):
    u_half = u - gamma * fidelity.gradient(u)
    w = grad(u_half) + v - lam * grad(grad_adjoint(v))
    v_new = residual_prox(w, t)
    u_new = u_half - lam * grad_adjoint(v_new)
    return v_new, u_new


def _average(state: SolverState, v_hat, u_hat, kappa: float) -> SolverState:
    if kappa == 0.0:
        v_new, u_new = v_hat, u_hat
    else:
        v_new = kappa * state.v + (1.0 - kappa) * v_hat
        u_new = kappa * state.u + (1.0 - kappa) * u_hat
    _check_finite(u_new, v_new)
    return SolverState(u_new, v_new, state.iteration + 1)


def fp2o_qn_step(state: SolverState, fidelity, Q: SpectralOperator, cfg: SolverConfig) -> SolverState:
    v_new, u_new = qn_map(state.u, state.v, fidelity, Q, cfg.lam, cfg.mu / cfg.lam)
    _check_finite(u_new, v_new)
    return SolverState(u_new, v_new, state.iteration + 1)


def fp2o_kappa_qn_step(state: SolverState, fidelity, Q: SpectralOperator, cfg: SolverConfig) -> SolverState:
    # The relaxed u-candidate uses the candidate dual v_hat, so kappa = 0
    # reproduces fp2o_qn_step exactly.
    v_hat, u_hat = qn_map(state.u, state.v, fidelity, Q, cfg.lam, cfg.mu / cfg.lam)
    return _average(state, v_hat, u_hat, cfg.kappa)


def pdfp2o_step(state: SolverState, fidelity, cfg: SolverConfig) -> SolverState:
    t = cfg.gamma * cfg.mu / cfg.lam
    v_new, u_new = _pd_map(state.u, state.v, fidelity, cfg.gamma, cfg.lam, t)
    _check_finite(u_new, v_new)
    return SolverState(u_new, v_new, state.iteration + 1)


def pdfp2o_kappa_step(state: SolverState, fidelity, cfg: SolverConfig) -> SolverState:
    t = cfg.gamma * cfg.mu / cfg.lam
    v_hat, u_hat = _pd_map(state.u, state.v, fidelity, cfg.gamma, cfg.lam, t)
    return _average(state, v_hat, u_hat, cfg.kappa)


def fp2o_inner_step(v, x, lam: float, t: float, kappa: float = 0.0):
    """One step ``v <- S_kappa(v)`` of the dual iteration for ``prox_{f1 o B}(x)``.

    ``S(v) = (I - prox_t)(B x + (I - lam B B^T) v)``; at the fixed point
    ``v*``, ``x - lam B^T v*`` is the prox of ``lam * t * ||B .||_{1,2}`` at ``x``.
    """
    s = residual_prox(grad(x) + v - lam * grad(grad_adjoint(v)), t)
    if kappa:
        return kappa * v + (1.0 - kappa) * s
    return s


def prox_tv_composite(x, mu: float, lam: float = 0.125, kappa: float = 0.0,
                      tol: float = 1e-10, max_iter: int = 100000):
    """``argmin_u mu ||B u||_{1,2} + 0.5 ||u - x||^2`` by the dual fixed-point iteration.

    Returns ``(u, v, iterations)``.  Stops when
    ``||v_new - v|| <= tol * max(1, ||v||)``.
    """
    bound = 2.0 / spectral_lambda_max_BQinvBT(identity_operator(np.shape(x)))
    if not 0 < lam < bound:
        raise ConfigurationError(f"lam must lie in (0, {bound:g})")
    x = np.asarray(x, dtype=float)
    v = np.zeros((2,) + x.shape)
    t = mu / lam
    k = 0
    for k in range(1, max_iter + 1):
        v_new = fp2o_inner_step(v, x, lam, t, kappa)
        done = np.linalg.norm(v_new - v) <= tol * max(1.0, np.linalg.norm(v))
        v = v_new
        if done:
            break
    return x - lam * grad_adjoint(v), v, k


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def objective(fidelity, u, mu: float) -> float:
    """``mu * TV_iso(u) + f2(u)``."""
    return mu * tv_isotropic(grad(u)) + fidelity.value(u)


def lambda_bound(problem: Problem, cfg: SolverConfig) -> float:
    """Largest dual step covered by the convergence theory for this scheme."""
    if cfg.algorithm in PD_ALGORITHMS or cfg.algorithm == "fp2o_inner":
        return 1.0 / spectral_lambda_max_BQinvBT(identity_operator(problem.shape))
    if problem.Q is None:
        raise ConfigurationError(f"{cfg.algorithm} requires a preconditioner Q")
    return 1.0 / spectral_lambda_max_BQinvBT(problem.Q)


def resolve_lambda(problem: Problem, cfg: SolverConfig) -> SolverConfig:
    """Fill in an automatic ``lam`` and enforce the step-size bound."""
    bound = lambda_bound(problem, cfg)
    if cfg.algorithm == "fp2o_inner":
        bound *= 2.0
    if cfg.lam is None:
        return replace(cfg, lam=bound)
    if cfg.lam > bound * (1.0 + 1e-12):
        msg = f"lam={cfg.lam:g} exceeds the admissible bound {bound:g} for {cfg.algorithm}"
        if not cfg.allow_lambda_violation:
            raise ConfigurationError(msg)
        warnings.warn(msg, LambdaBoundWarning, stacklevel=3)
    return cfg


def _weighted_sq(problem: Problem, cfg: SolverConfig, du, dv) -> float:
    if cfg.algorithm in PD_ALGORITHMS:
        # PDFP2O(gamma, lam) is the QN map with Q = I/gamma and step lam/gamma.
        return (float(np.vdot(du, du)) + cfg.lam * float(np.vdot(dv, dv))) / cfg.gamma
    if cfg.algorithm == "fp2o_inner":
        return cfg.lam * float(np.vdot(dv, dv))
    Qdu = problem.Q.apply(du)
    return float(np.vdot(du, Qdu)) + cfg.lam * float(np.vdot(dv, dv))


def _step_fn(problem: Problem, cfg: SolverConfig):
    F = problem.fidelity
    alg = cfg.algorithm
    if alg == "fp2o_qn":
        return lambda s: fp2o_qn_step(s, F, problem.Q, cfg)
    if alg == "fp2o_kappa_qn":
        return lambda s: fp2o_kappa_qn_step(s, F, problem.Q, cfg)
    if alg == "pdfp2o":
        return lambda s: pdfp2o_step(s, F, cfg)
    if alg == "pdfp2o_kappa":
        return lambda s: pdfp2o_kappa_step(s, F, cfg)

    K = F.K
    if getattr(F, "mode", None) != "gaussian" or not np.allclose(K.transfer, 1.0, atol=1e-12):
        raise ConfigurationError("fp2o_inner solves denoising only (Gaussian fidelity, K = I)")
    x = F.b
    t = cfg.mu / cfg.lam

    def inner(s):
        v_new = fp2o_inner_step(s.v, x, cfg.lam, t, cfg.kappa)
        u_new = x - cfg.lam * grad_adjoint(v_new)
        _check_finite(u_new, v_new)
        return SolverState(u_new, v_new, s.iteration + 1)

    return inner


def run(problem: Problem, cfg: SolverConfig, state: Optional[SolverState] = None):
    """Iterate the configured scheme until the relative change drops below ``tol``.

    Starts from ``u = problem.u0`` (default: the observed image) and
    ``v = 0`` unless ``state`` is given.  Returns ``(state, trace)``.  On a
    non-finite iterate, or a step with relative change above ``BLOWUP_RATIO``,
    a :class:`DivergenceError` carrying the partial trace is raised.
    """
    cfg = resolve_lambda(problem, cfg)
    F = problem.fidelity
    if state is None:
        u0 = F.b if problem.u0 is None else problem.u0
        state = SolverState(np.array(u0, dtype=float), np.zeros((2,) + problem.shape))
    step = _step_fn(problem, cfg)
    relax = 1.0 - cfg.kappa
    trace = ConvergenceTrace()
    for _ in range(int(cfg.max_iter)):
        try:
            new = step(state)
        except DivergenceError as exc:
            trace.diverged = True
            raise DivergenceError(str(exc), trace=trace, state=state) from None
        du = new.u - state.u
        nu = float(np.linalg.norm(state.u))
        rc = float(np.linalg.norm(du)) / nu if nu > 0 else math.inf
        fp = math.sqrt(max(_weighted_sq(problem, cfg, du, new.v - state.v), 0.0)) / relax
        ps = psnr(new.u, problem.u_true) if problem.u_true is not None else math.nan
        trace.append(rc, objective(F, new.u, cfg.mu), ps, fp)
        # rc is infinite only when starting from u = 0, which is not a blow-up
        if math.isfinite(rc) and rc > BLOWUP_RATIO:
            trace.diverged = True
            raise DivergenceError(f"relative change {rc:.3g} at iteration {len(trace)}",
                                  trace=trace, state=new)
        state = new
        if rc < cfg.tol:
            trace.converged = True
            break
    else:
        trace.max_iter_reached = True
    return state, trace
