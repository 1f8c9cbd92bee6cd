"""Convex-QP problem container and solver.

The solver contract is defined by KKT residuals: stationarity, primal
feasibility and complementary slackness all below tolerance.  Equality-only
problems go through a direct KKT solve; box/inequality problems go through
the interior-point solver from cvxopt followed by an active-set polish.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import cvxopt

cvxopt.solvers.options["show_progress"] = False


@dataclass
class QpProblem:
    """min 1/2 x^T Q x + c^T x  s.t.  A x = b,  G x <= h."""

    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b: np.ndarray = field(default_factory=lambda: np.zeros(0))
    G: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    h: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        n = self.Q.shape[0]
        if self.Q.shape != (n, n) or self.c.shape != (n,):
            raise ValueError("inconsistent objective dimensions")
        if self.A.size == 0:
            self.A = np.zeros((0, n))
        if self.G.size == 0:
            self.G = np.zeros((0, n))
        if self.A.shape[1] != n or self.G.shape[1] != n:
            raise ValueError("inconsistent constraint dimensions")
        if self.A.shape[0] != self.b.shape[0] or self.G.shape[0] != self.h.shape[0]:
            raise ValueError("constraint right-hand sides do not match")
        scale = max(float(np.abs(self.Q).max()), 1.0)
        if not np.allclose(self.Q, self.Q.T, atol=1e-9 * scale):
            raise ValueError("Q must be symmetric")

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.c @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.Q @ x + self.c


@dataclass
class QpSolution:
    status: str                      # optimal | infeasible | max_iter
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    stationarity: float = float("inf")
    primal_violation: float = float("inf")
    comp_slackness: float = float("inf")
    iterations: int = 0
    diagnostics: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _kkt_solve(qp: QpProblem, extra_rows: np.ndarray, extra_rhs: np.ndarray
               ) -> Optional[np.ndarray]:
    """Solve the equality-constrained KKT system; None when singular."""
    n = qp.n
    rows = np.vstack([qp.A, extra_rows]) if extra_rows.size else qp.A
    rhs = np.concatenate([qp.b, extra_rhs]) if extra_rows.size else qp.b
    m = rows.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = qp.Q
    kkt[:n, n:] = rows.T
    kkt[n:, :n] = rows
    full = np.concatenate([-qp.c, rhs])
    try:
        sol = np.linalg.solve(kkt, full)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    return sol


def _residuals(qp: QpProblem, x: np.ndarray, lam: Optional[np.ndarray] = None,
               nu: Optional[np.ndarray] = None) -> tuple[float, float, float]:
    grad = qp.gradient(x)
    if nu is not None and qp.A.shape[0]:
        grad = grad + qp.A.T @ nu
    if lam is not None and qp.G.shape[0]:
        grad = grad + qp.G.T @ lam
    stat = float(np.max(np.abs(grad))) if grad.size else 0.0
    viol = 0.0
    if qp.A.shape[0]:
        viol = max(viol, float(np.max(np.abs(qp.A @ x - qp.b))))
    slack = np.zeros(0)
    if qp.G.shape[0]:
        slack = qp.h - qp.G @ x
        viol = max(viol, float(max(0.0, -slack.min())))
    comp = 0.0
    if lam is not None and slack.size:
        comp = float(np.max(np.abs(lam * slack)))
    return stat, viol, comp


def solve_qp(qp: QpProblem, tol: float = 1e-7) -> QpSolution:
    """Solve to KKT residuals below 1e-6 or report infeasibility."""
    if qp.G.shape[0] == 0:
        sol = _kkt_solve(qp, np.zeros((0, qp.n)), np.zeros(0))
        if sol is None:
            return QpSolution(status="max_iter", diagnostics="singular KKT system")
        x = sol[:qp.n]
        nu = sol[qp.n:]
        stat, viol, comp = _residuals(qp, x, nu=nu if nu.size else None)
        return QpSolution(status="optimal", x=x, objective=qp.objective(x),
                          stationarity=stat, primal_violation=viol,
                          comp_slackness=comp)

    # roomy corridors rarely activate any inequality: the pure equality
    # optimum is then exact (zero multipliers satisfy all KKT conditions)
    sol = _kkt_solve(qp, np.zeros((0, qp.n)), np.zeros(0))
    if sol is not None:
        x = sol[:qp.n]
        if np.all(qp.G @ x <= qp.h + 1e-9):
            nu = sol[qp.n:]
            stat, viol, comp = _residuals(qp, x, lam=np.zeros(qp.G.shape[0]),
                                          nu=nu if nu.size else None)
            return QpSolution(status="optimal", x=x, objective=qp.objective(x),
                              stationarity=stat, primal_violation=viol,
                              comp_slackness=comp)

    # objective scaling keeps the interior point well conditioned when
    # short segments blow up the jerk Gram entries; argmin is unchanged
    scale = max(float(np.abs(qp.Q).max()), float(np.abs(qp.c).max()) if qp.c.size else 0.0, 1.0)
    P = cvxopt.matrix(qp.Q / scale)
    q = cvxopt.matrix(qp.c / scale)
    G = cvxopt.matrix(qp.G)
    h = cvxopt.matrix(qp.h)
    kwargs = {}
    if qp.A.shape[0]:
        kwargs["A"] = cvxopt.matrix(qp.A)
        kwargs["b"] = cvxopt.matrix(qp.b)
    opts = {"show_progress": False, "abstol": 1e-10, "reltol": 1e-10,
            "feastol": 1e-9, "maxiters": 200}
    try:
        res = cvxopt.solvers.qp(P, q, G, h, options=opts, **kwargs)
    except (ValueError, ArithmeticError) as exc:
        return QpSolution(status="infeasible", diagnostics=f"solver error: {exc}")
    status = res["status"]
    if status in ("primal infeasible", "dual infeasible"):
        return QpSolution(status="infeasible", diagnostics=status,
                          iterations=res.get("iterations", 0))
    x = np.asarray(res["x"]).ravel()
    lam = np.asarray(res["z"]).ravel() * scale
    nu = (np.asarray(res["y"]).ravel() * scale) if qp.A.shape[0] else np.zeros(0)

    polished = _polish(qp, x, lam)
    if polished is not None:
        x, lam, nu = polished
    stat, viol, comp = _residuals(qp, x, lam=lam, nu=nu if nu.size else None)
    if status != "optimal" and (stat > tol or viol > tol):
        return QpSolution(status="max_iter", x=x, objective=qp.objective(x),
                          stationarity=stat, primal_violation=viol,
                          comp_slackness=comp,
                          iterations=res.get("iterations", 0),
                          diagnostics=f"interior point stopped: {status}")
    return QpSolution(status="optimal", x=x, objective=qp.objective(x),
                      stationarity=stat, primal_violation=viol,
                      comp_slackness=comp, iterations=res.get("iterations", 0))


def _polish(qp: QpProblem, x: np.ndarray, lam: np.ndarray
            ) -> Optional[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Re-solve on the active set for near-exact KKT residuals."""
    slack = qp.h - qp.G @ x
    active = (slack < 1e-6) | (lam > 1e-6)
    if not active.any():
        sol = _kkt_solve(qp, np.zeros((0, qp.n)), np.zeros(0))
        if sol is None:
            return None
        x_new = sol[:qp.n]
        if np.all(qp.G @ x_new <= qp.h + 1e-9):
            nu = sol[qp.n:]
            return x_new, np.zeros_like(lam), nu
        return None
    g_act = qp.G[active]
    h_act = qp.h[active]
    sol = _kkt_solve(qp, g_act, h_act)
    if sol is None:
        return None
    x_new = sol[:qp.n]
    m_eq = qp.A.shape[0]
    nu = sol[qp.n:qp.n + m_eq]
    lam_act = sol[qp.n + m_eq:]
    if np.any(lam_act < -1e-8):
        return None
    if not np.all(qp.G @ x_new <= qp.h + 1e-9):
        return None
    lam_new = np.zeros_like(lam)
    lam_new[active] = np.maximum(lam_act, 0.0)
    return x_new, lam_new, nu
