"""Residual dual norms and accumulated a posteriori error bounds.

Residuals are assembled with the same sign convention as the KKT system so
they vanish on the full-order solution. Dual norms are exact over the FE
space: ``sqrt(r^T X^{-1} r)`` with one Cholesky factor of ``X`` reused for
every residual.
"""
import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .fom_solver import FomOperators, apply_adjoint_operator, apply_state_operator


def coercivity_lower_bound(mu: float) -> float:
    """Exact coercivity constant under the H1-seminorm: ``alpha(mu) = mu``."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return float(mu)


class RieszMap:
    """Dual norms with respect to the Gram matrix ``X`` (tridiagonal SPD)."""

    def __init__(self, X):
        X = X.tocsr() if hasattr(X, "tocsr") else np.asarray(X)
        n = X.shape[0]
        if hasattr(X, "tocoo"):
            coo = X.tocoo()
            wide = np.abs(coo.row - coo.col) > 1
            if np.any(coo.data[wide] != 0):
                raise ValueError("X must be tridiagonal")
        elif np.any(np.triu(X, 2)) or np.any(np.tril(X, -2)):
            raise ValueError("X must be tridiagonal")
        diag = np.asarray(X.diagonal(), dtype=float)
        upper = np.asarray(X.diagonal(1), dtype=float) if n > 1 else np.zeros(0)
        banded = np.zeros((2, n))
        banded[0, 1:] = upper
        banded[1] = diag
        self._banded = la.cholesky_banded(banded, lower=False)

    def solve(self, r):
        """Riesz representatives of the rows of ``r`` (or of a single vector)."""
        r = np.asarray(r, dtype=float)
        return la.cho_solve_banded((self._banded, False), r.T).T

    def dual_norm(self, r):
        r = np.asarray(r, dtype=float)
        z = self.solve(r)
        return np.sqrt(np.maximum(np.sum(r * z, axis=-1), 0.0))


@dataclass(frozen=True, eq=False)
class ErrorBoundSeries:
    """Residual dual norms and accumulated bounds for one parameter.

    ``delta_pr``/``delta_du`` bound the energy norm
    ``(a(e, e; mu) + (e, e))**0.5``; ``delta_pr_X``/``delta_du_X`` are the
    same bounds expressed in the X-norm, i.e. divided by ``sqrt(alpha_mu)``.
    """

    eps_pr: np.ndarray  # k = 1..K
    eps_du: np.ndarray  # k = 0..K-1
    delta_pr: np.ndarray
    delta_du: np.ndarray
    alpha_mu: float
    mu: float

    @property
    def delta_pr_X(self) -> np.ndarray:
        return self.delta_pr / np.sqrt(self.alpha_mu)

    @property
    def delta_du_X(self) -> np.ndarray:
        return self.delta_du / np.sqrt(self.alpha_mu)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["j", "state_time_index", "eps_pr", "delta_pr", "delta_pr_X",
                    "adjoint_time_index", "eps_du", "delta_du", "delta_du_X"])
        dpx, ddx = self.delta_pr_X, self.delta_du_X
        for j in range(self.eps_pr.size):
            # primal quantities at t_{j+1}, dual ones at T - t_j
            w.writerow([j, j + 1, repr(float(self.eps_pr[j])), repr(float(self.delta_pr[j])),
                        repr(float(dpx[j])), j, repr(float(self.eps_du[j])),
                        repr(float(self.delta_du[j])), repr(float(ddx[j]))])
        return out.getvalue()


def energy_norms(E, ops: FomOperators, mu: float) -> np.ndarray:
    """Per-row ``(mu e^T A e + e^T M e)**0.5``, the norm the bounds control."""
    E = np.asarray(E, dtype=float)
    a = np.sum(E * (ops.fem.A_unit @ E.T).T, axis=1)
    m = np.sum(E * (ops.fem.M @ E.T).T, axis=1)
    return np.sqrt(np.maximum(mu * a + m, 0.0))


def _check_index(k, lo, hi):
    if not lo <= k <= hi:
        raise IndexError(f"time index {k} outside [{lo}, {hi}]")


def primal_residuals(y, u, ops: FomOperators, mu: float) -> np.ndarray:
    """Residuals of the state equation at ``t_1..t_K`` (rows), given a control."""
    return -(apply_state_operator(ops, mu, y) + (ops.fem.M @ np.asarray(u).T).T)


def dual_residuals(p_bar, y, ops: FomOperators, mu: float) -> np.ndarray:
    """Residuals of the adjoint equation at ``T-t_0..T-t_{K-1}`` given a state.

    ``y`` holds ``y(t_1)..y(t_K)``; the adjoint row for ``T-t_k`` uses
    ``y(t_k)`` with ``y(t_0) = 0``.
    """
    y = np.asarray(y)
    y_shift = np.zeros_like(y)
    y_shift[1:] = y[:-1]
    return -ops.loads + (ops.fem.M @ y_shift.T).T - apply_adjoint_operator(ops, mu, p_bar)


def primal_residual_norm(y, u, ops: FomOperators, mu: float, k: int, riesz: RieszMap = None) -> float:
    """Dual norm of the state residual at ``t_k``, ``1 <= k <= K``."""
    _check_index(k, 1, ops.K)
    riesz = riesz or RieszMap(ops.fem.X)
    return float(riesz.dual_norm(primal_residuals(y, u, ops, mu)[k - 1]))


def dual_residual_norm(p_bar, y, ops: FomOperators, mu: float, k: int, riesz: RieszMap = None) -> float:
    """Dual norm of the adjoint residual at ``T - t_k``, ``0 <= k <= K-1``."""
    _check_index(k, 0, ops.K - 1)
    riesz = riesz or RieszMap(ops.fem.X)
    return float(riesz.dual_norm(dual_residuals(p_bar, y, ops, mu)[k]))


def primal_error_bound(eps_pr, alpha_mu: float) -> np.ndarray:
    """Accumulated primal bound at every ``t_k``.

    ``bound_k**2 = e_k/alpha + sum_{k'<k} Delta_{k'}`` with
    ``Delta_{k'} = sum_{k''<=k'} e_{k''}/alpha`` and ``e = eps**2``.
    """
    if not alpha_mu > 0:
        raise ValueError("alpha_mu must be positive")
    e = np.asarray(eps_pr, dtype=float) ** 2 / alpha_mu
    delta = np.cumsum(e)
    history = np.concatenate([[0.0], np.cumsum(delta)[:-1]])
    return np.sqrt(e + history)


def dual_error_bound(eps_du, alpha_mu: float) -> np.ndarray:
    """Accumulated dual bound at ``T - t_k`` for ``k = 0..K-1`` (backward in time).

    The terminal residual at ``T - t_K`` is zero because ``p(T - t_K) = 0``
    is imposed, so the accumulation is the primal one run on the reversed
    sequence with a zero appended.
    """
    if not alpha_mu > 0:
        raise ValueError("alpha_mu must be positive")
    e = np.asarray(eps_du, dtype=float) ** 2 / alpha_mu
    e_ext = np.append(e, 0.0)  # index K
    # Delta_{k'} = sum_{k''=k'}^{K} e_{k''}
    delta = np.cumsum(e_ext[::-1])[::-1]
    # sum_{k'=k+1}^{K} Delta_{k'}
    tail = np.append(np.cumsum(delta[::-1])[::-1][1:], 0.0)
    return np.sqrt(e + tail[: e.size])


def bound_series(y, p_bar, u, y_couple, ops: FomOperators, mu: float, riesz: RieszMap = None) -> ErrorBoundSeries:
    """Residual norms and accumulated bounds for a candidate trajectory pair.

    ``u`` is the control driving the state residual and ``y_couple`` the
    state entering the adjoint residual. With the full-order control and
    state these residuals make the bounds certify the error of ``(y, p_bar)``
    against the full-order optimum. With the reduced ones (the cheap online
    choice) the bounds ignore the coupling error and serve only as an
    indicator.
    """
    riesz = riesz or RieszMap(ops.fem.X)
    alpha_mu = coercivity_lower_bound(mu)
    eps_pr = riesz.dual_norm(primal_residuals(y, u, ops, mu))
    eps_du = riesz.dual_norm(dual_residuals(p_bar, y_couple, ops, mu))
    return ErrorBoundSeries(
        eps_pr=eps_pr,
        eps_du=eps_du,
        delta_pr=primal_error_bound(eps_pr, alpha_mu),
        delta_du=dual_error_bound(eps_du, alpha_mu),
        alpha_mu=alpha_mu,
        mu=float(mu),
    )
