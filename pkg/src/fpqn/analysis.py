"""Runtime checks of the convergence theory for the quasi-Newton iteration.

The iteration is the Picard sequence ``w_{k+1} = T(w_k)`` of the joint map
``T(v, u) = (T1(v, u), T2(v, u))`` on ``w = (v, u)``.  It is non-expansive
in the norm ``||w||_{lam,Q}^2 = u^T Q u + lam ||v||^2`` when
``||Q^{-1}||_2 < 2 beta`` and ``lam <= 1 / lambda_max(B Q^{-1} B^T)``.

Every weighted norm here is evaluated through operator applications, never
through dense matrices.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .fidelity import GaussianFidelity, estimate_beta
from .operators import SpectralOperator, grad, grad_adjoint, spectral_lambda_max_BQinvBT
from .solvers import qn_map

__all__ = [
    "JointPoint",
    "WeightedNorms",
    "operator_T",
    "norm_lambda_Q",
    "Lemma1Report",
    "lemma1_check",
    "Condition",
    "ConditionsReport",
    "conditions_check",
    "trajectory_diagnostics",
]


@dataclass(frozen=True)
class JointPoint:
    v: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        if np.shape(self.v) != (2,) + np.shape(self.u):
            raise ValueError("dual and primal shapes are inconsistent")

    def __sub__(self, other: "JointPoint") -> "JointPoint":
        return JointPoint(self.v - other.v, self.u - other.u)

    def __mul__(self, c: float) -> "JointPoint":
        return JointPoint(c * self.v, c * self.u)

    __rmul__ = __mul__


@dataclass(frozen=True)
class WeightedNorms:
    """Norms induced by ``Q`` and ``M = I - lam B Q^{-1} B^T``."""

    lam: float
    Q: SpectralOperator

    def sq_Q(self, u) -> float:
        return float(np.vdot(u, self.Q.apply(u)))

    def sq_Qinv(self, u) -> float:
        return float(np.vdot(u, self.Q.solve(u)))

    def sq_I_minus_M(self, v) -> float:
        """``v^T (lam B Q^{-1} B^T) v``."""
        return self.lam * self.sq_Qinv(grad_adjoint(v))

    def sq_M(self, v) -> float:
        return float(np.vdot(v, v)) - self.sq_I_minus_M(v)

    def sq_2beta_minus_Qinv(self, g, beta: float) -> float:
        return 2.0 * beta * float(np.vdot(g, g)) - self.sq_Qinv(g)

    def sq(self, w: JointPoint) -> float:
        return self.sq_Q(w.u) + self.lam * float(np.vdot(w.v, w.v))

    def norm(self, w: JointPoint) -> float:
        return math.sqrt(max(self.sq(w), 0.0))

    def apply_M(self, v):
        return v - self.lam * grad(self.Q.solve(grad_adjoint(v)))

    def min_M_rayleigh(self, n_probes: int = 100, seed: int = 0) -> float:
        """Smallest ``p^T M p / p^T p`` over random probes (PSD check)."""
        rng = np.random.default_rng(seed)
        worst = math.inf
        for _ in range(n_probes):
            p = rng.standard_normal((2,) + self.Q.shape)
            worst = min(worst, self.sq_M(p) / float(np.vdot(p, p)))
        return worst


def operator_T(w: JointPoint, fidelity, Q: SpectralOperator, lam: float, t: float) -> JointPoint:
    """Joint fixed-point map; identical to one ``fp2o_qn_step`` with threshold ``t``."""
    v_new, u_new = qn_map(w.u, w.v, fidelity, Q, lam, t)
    return JointPoint(v_new, u_new)


def norm_lambda_Q(w: JointPoint, norms: WeightedNorms) -> float:
    return norms.norm(w)


@dataclass(frozen=True)
class Lemma1Report:
    """Both sides of the non-expansiveness inequality for one pair of points.

    ``rhs`` uses the deficit ``lam * ||v1 - v2||^2_{I-M}``, which is what the
    derivation delivers; ``rhs_unscaled`` drops the factor ``lam`` on that
    term and is reported for comparison only.
    """

    lhs: float
    base: float
    grad_deficit: float
    dual_deficit: float
    residual_deficit: float
    rhs: float
    rhs_unscaled: float
    applicable: bool
    passed: bool
    lhs_norm: float
    base_norm: float

    @property
    def gap(self) -> float:
        return self.rhs - self.lhs

    @property
    def gap_unscaled(self) -> float:
        return self.rhs_unscaled - self.lhs

    @property
    def nonexpansive(self) -> bool:
        return self.lhs_norm <= self.base_norm * (1 + 1e-12) + 1e-12


def lemma1_check(w1: JointPoint, w2: JointPoint, fidelity, norms: WeightedNorms,
                 beta: float, mu: float, rtol: float = 1e-9) -> Lemma1Report:
    """Evaluate the one-step contraction inequality for ``T`` at ``(w1, w2)``.

    ``||T w1 - T w2||^2 <= ||w1 - w2||^2 - ||dg||^2_{2 beta - Q^{-1}}
    - lam ||dv||^2_{I-M} - lam ||dT1 - dv||^2_M`` with norms in
    ``||.||_{lam,Q}``.  ``passed`` allows a slack of ``rtol`` relative to
    ``||w1 - w2||^2``.  The check is marked inapplicable (and never fails)
    when ``||Q^{-1}||_2 >= 2 beta``.
    """
    lam, Q = norms.lam, norms.Q
    t = mu / lam
    Tw1 = operator_T(w1, fidelity, Q, lam, t)
    Tw2 = operator_T(w2, fidelity, Q, lam, t)
    dw = w1 - w2
    dT = Tw1 - Tw2
    dg = fidelity.gradient(w1.u) - fidelity.gradient(w2.u)

    lhs = norms.sq(dT)
    base = norms.sq(dw)
    grad_def = norms.sq_2beta_minus_Qinv(dg, beta)
    dual_def_raw = norms.sq_I_minus_M(dw.v)
    resid_def = lam * norms.sq_M(dT.v - dw.v)
    rhs = base - grad_def - lam * dual_def_raw - resid_def
    rhs_unscaled = base - grad_def - dual_def_raw - resid_def

    applicable = (1.0 / Q.min_real()) < 2.0 * beta
    slack = rtol * max(base, np.finfo(float).tiny)
    passed = (lhs <= rhs + slack) if applicable else True
    return Lemma1Report(
        lhs=lhs, base=base, grad_deficit=grad_def, dual_deficit=lam * dual_def_raw,
        residual_deficit=resid_def, rhs=rhs, rhs_unscaled=rhs_unscaled,
        applicable=bool(applicable), passed=bool(passed),
        lhs_norm=math.sqrt(max(lhs, 0.0)), base_norm=math.sqrt(max(base, 0.0)),
    )


@dataclass(frozen=True)
class Condition:
    name: str
    value: float
    threshold: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.threshold - self.value


@dataclass
class ConditionsReport:
    conditions: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        lines = []
        for c in self.conditions:
            status = "PASS" if c.passed else "FAIL"
            lines.append(
                f"{c.name}: value={c.value:.6g} threshold={c.threshold:.6g} "
                f"margin={c.margin:.6g} [{status}]"
            )
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("condition", "value", "threshold", "pass", "margin"))
        for c in self.conditions:
            w.writerow((c.name, repr(c.value), repr(c.threshold), int(c.passed), repr(c.margin)))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def conditions_check(Q: SpectralOperator, fidelity, lam: float,
                     box: tuple = (0.0, 255.0)) -> ConditionsReport:
    """Report the two hypotheses of the convergence theorems with margins."""
    qinv = 1.0 / Q.min_real()
    beta = estimate_beta(fidelity, box)
    lmax = spectral_lambda_max_BQinvBT(Q)
    report = ConditionsReport()
    report.conditions.append(Condition("qinv_norm_lt_2beta", qinv, 2.0 * beta, qinv < 2.0 * beta))
    report.conditions.append(Condition("lambda_le_inv_lambda_max", lam, 1.0 / lmax,
                                       lam <= (1.0 / lmax) * (1 + 1e-12)))
    report.notes.append(f"lambda_max(B Q^-1 B^T)={lmax:.6g} beta={beta:.6g}")
    if not isinstance(fidelity, GaussianFidelity):
        report.notes.append("non-Gaussian fidelity: beta is an estimate; report is informational")
    return report


def trajectory_diagnostics(fidelity, Q: SpectralOperator, lam: float, mu: float,
                           w0: JointPoint, w_star: JointPoint, n_iter: int) -> dict:
    """Run ``n_iter`` Picard steps of ``T`` from ``w0`` and collect distances.

    Returns arrays ``dist`` (``||w_k - w*||_{lam,Q}``, length ``n_iter + 1``),
    ``dv`` (``||v_{k+1} - v_k||_2``) and ``du_Q`` (``||u_{k+1} - u_k||_Q``).
    """
    norms = WeightedNorms(lam, Q)
    t = mu / lam
    w = w0
    dist = [norms.norm(w - w_star)]
    dv, duq = [], []
    for _ in range(n_iter):
        w_new = operator_T(w, fidelity, Q, lam, t)
        dv.append(float(np.linalg.norm(w_new.v - w.v)))
        duq.append(math.sqrt(max(norms.sq_Q(w_new.u - w.u), 0.0)))
        w = w_new
        dist.append(norms.norm(w - w_star))
    return {"dist": np.array(dist), "dv": np.array(dv), "du_Q": np.array(duq), "final": w}
