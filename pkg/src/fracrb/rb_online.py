"""Online stage: dense reduced optimality system and lifting."""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
import scipy.linalg as la

from .caputo_l1 import L1Scheme
from .fom_solver import SolverError, build_alignment, relative_residual

if TYPE_CHECKING:
    from .rb_offline import RbOperators, RbSpace


@dataclass(frozen=True, eq=False)
class RbSolution:
    y_N: np.ndarray  # K x N
    p_bar_N: np.ndarray  # K x N
    mu: float
    J_N: float
    residual: float = 0.0
    lifted: Optional[tuple] = None  # (y, p_bar) in FE coordinates, K x n_dof each


def assemble_rb(rb_ops: RbOperators, scheme: L1Scheme, mu: float, gamma: float):
    """Dense reduced KKT matrix and right-hand side, same block layout as the FOM."""
    K = scheme.K
    D = scheme.D if isinstance(scheme.D, np.ndarray) else scheme.D.toarray()
    eye = np.eye(K)
    I_b = build_alignment(K).toarray()
    state = np.kron(D, rb_ops.M_N) + mu * np.kron(eye, rb_ops.A_N)
    adjoint = np.kron(D.T, rb_ops.Mp_N) + mu * np.kron(eye, rb_ops.Ap_N)
    couple_p = np.kron(I_b, rb_ops.B_N) / gamma
    couple_y = -np.kron(I_b.T, rb_ops.Bp_N)
    mat = np.block([[state, couple_p], [couple_y, adjoint]])
    rhs = np.concatenate([np.zeros(K * rb_ops.N), -rb_ops.Yd_N.ravel()])
    return mat, rhs


def reduced_cost(rb_ops: RbOperators, y_N, p_bar_N, tau: float, gamma: float) -> float:
    u_N = np.zeros_like(p_bar_N)
    u_N[:-1] = p_bar_N[1:] / gamma
    track = (
        np.sum(y_N * (y_N @ rb_ops.M_N.T))
        - 2.0 * np.sum(y_N * rb_ops.yd_state)
        + np.sum(rb_ops.yd_sq)
    )
    reg = np.sum(u_N * (u_N @ rb_ops.Mp_N.T))
    return 0.5 * tau * track + 0.5 * gamma * tau * reg


def solve_rb(rb_ops: RbOperators, scheme: L1Scheme, mu: float, gamma: float, tol: float = 1e-10) -> RbSolution:
    if rb_ops.N == 0:
        raise ValueError("reduced space is empty (N = 0)")
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    mat, rhs = assemble_rb(rb_ops, scheme, mu, gamma)
    try:
        x = la.solve(mat, rhs, check_finite=False)
    except la.LinAlgError as exc:
        raise SolverError(f"reduced system singular at mu={mu}") from exc
    res = relative_residual(mat, x, rhs)
    if not np.all(np.isfinite(x)) or res > tol:
        raise SolverError(f"reduced solve at mu={mu} left relative residual {res:.3e}")
    K, N = scheme.K, rb_ops.N
    y_N = x[: K * N].reshape(K, N)
    p_N = x[K * N :].reshape(K, N)
    J_N = reduced_cost(rb_ops, y_N, p_N, scheme.tau, gamma)
    return RbSolution(y_N=y_N, p_bar_N=p_N, mu=float(mu), J_N=J_N, residual=res)


def lift(space: RbSpace, sol: RbSolution):
    """FE trajectories ``(y, p_bar)``, each ``K x n_dof``."""
    if sol.y_N.shape[1] != space.N:
        raise ValueError(f"coefficients have {sol.y_N.shape[1]} columns, space has N={space.N}")
    return sol.y_N @ space.Z_y.T, sol.p_bar_N @ space.Z_p.T


def _xnorms(E, X):
    return np.sqrt(np.maximum(np.sum(E * (X @ E.T).T, axis=1), 0.0))


def compare(fom, lifted, X, M) -> dict:
    """Per-step errors between a FOM solution and a lifted RB solution.

    ``lifted`` is a ``(y, p_bar)`` pair. Returns X-norm and L2 errors per
    time step for state and adjoint, plus their max and time sums.
    """
    y, p = lifted
    if y.shape != fom.y.shape or p.shape != fom.p_bar.shape:
        raise ValueError(f"shape mismatch: FOM {fom.y.shape}, RB {y.shape}")
    ey, ep = fom.y - y, fom.p_bar - p
    table = {
        "state_X": _xnorms(ey, X),
        "adjoint_X": _xnorms(ep, X),
        "state_L2": _xnorms(ey, M),
        "adjoint_L2": _xnorms(ep, M),
    }
    summary = {}
    for key, col in table.items():
        summary[f"{key}_max"] = float(col.max())
        summary[f"{key}_sum"] = float(col.sum())
    table["summary"] = summary
    return table
