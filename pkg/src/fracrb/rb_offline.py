"""Offline stage: snapshots, POD, Gram-Schmidt and greedy parameter selection."""
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from . import rb_online
from .error_bounds import RieszMap, bound_series
from .fom_solver import FomOperators, ProblemSpec, build_operators, recover_control, solve_fom

log = logging.getLogger(__name__)

DEPENDENCE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class RbSpace:
    Z_y: np.ndarray  # n_dof x N
    Z_p: np.ndarray  # n_dof x N
    S_N: tuple = ()

    @property
    def N(self) -> int:
        return self.Z_y.shape[1]

    @classmethod
    def empty(cls, n_dof: int):
        return cls(np.zeros((n_dof, 0)), np.zeros((n_dof, 0)), ())


@dataclass(frozen=True, eq=False)
class RbOperators:
    M_N: np.ndarray
    A_N: np.ndarray
    B_N: np.ndarray  # Z_y^T M Z_p
    Mp_N: np.ndarray
    Ap_N: np.ndarray
    Bp_N: np.ndarray  # Z_p^T M Z_y
    Yd_N: np.ndarray  # K x N, Z_p^T (y_d(t_k), phi), k = 0..K-1
    yd_state: np.ndarray  # K x N, Z_y^T M y_d(t_k), k = 1..K
    yd_sq: np.ndarray  # K, y_d(t_k)^T M y_d(t_k)

    @property
    def N(self) -> int:
        return self.M_N.shape[0]


@dataclass
class GreedyRecord:
    iteration: int
    mu: float
    indicator: float  # max indicator that selected mu (inf for the seed)
    N: int
    seconds: float


@dataclass
class GreedyReport:
    records: list = field(default_factory=list)
    status: str = "max-iterations"
    final_indicator: float = np.inf
    indicator_mode: str = "true-error"
    eps: float = 0.0

    @property
    def selected(self):
        return [r.mu for r in self.records]

    def to_text(self) -> str:
        lines = [f"# greedy report: mode={self.indicator_mode} eps={self.eps!r} status={self.status}",
                 "iteration,mu,indicator,N,seconds"]
        for r in self.records:
            lines.append(f"{r.iteration},{r.mu!r},{r.indicator!r},{r.N},{r.seconds:.6f}")
        lines.append(f"# final max indicator {self.final_indicator!r}")
        return "\n".join(lines) + "\n"


def generate_snapshots(spec: ProblemSpec, mu: float, ops: FomOperators = None):
    """State columns ``y(t_1..t_K)`` and adjoint columns ``p(T-t_0..T-t_{K-1})``."""
    sol = solve_fom(spec, mu, ops)
    return sol.y.T.copy(), sol.p_bar.T.copy()


def _dense(X):
    return X.toarray() if hasattr(X, "toarray") else np.asarray(X)


def pod_modes(snapshots, X):
    """All X-orthonormal POD modes with their singular values (descending)."""
    S = np.asarray(snapshots, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    R = la.cholesky(_dense(X), lower=False)  # X = R^T R
    U, sigma, _ = la.svd(R @ S, full_matrices=False)
    modes = la.solve_triangular(R, U, lower=False)
    return modes, sigma


def pod(snapshots, X, tol: float = 1e-10, max_modes: int = None):
    """Leading X-orthonormal POD basis by the energy criterion.

    Keeps the smallest ``r`` whose discarded energy fraction is at most
    ``tol**2``. A zero snapshot set gives an empty basis.
    """
    modes, sigma = pod_modes(snapshots, X)
    return modes[:, : energy_rank(sigma, tol, max_modes)]


def energy_rank(sigma, tol, max_modes=None) -> int:
    energy = np.asarray(sigma, dtype=float) ** 2
    total = energy.sum()
    if total == 0.0:
        return 0
    # tail[r] = energy discarded when keeping r modes; summed from the small end
    tail = np.append(np.cumsum(energy[::-1])[::-1], 0.0)
    r = int(np.argmax(tail <= tol**2 * total))
    if max_modes is not None:
        r = min(r, max_modes)
    return r


def gram_schmidt(new_vectors, existing, X, max_new: int = None):
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Returns only the accepted new columns, X-orthonormal and X-orthogonal to
    ``existing``. A vector whose norm drops below ``DEPENDENCE_TOL`` times its
    input norm is treated as dependent and dropped.
    """
    V = np.asarray(new_vectors, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    Q = [q for q in np.asarray(existing, dtype=float).reshape(V.shape[0], -1).T]
    XQ = [X @ q for q in Q]
    accepted = []
    for v in V.T:
        if max_new is not None and len(accepted) >= max_new:
            break
        w = v.copy()
        pre = np.sqrt(max(w @ (X @ w), 0.0))
        if pre == 0.0:
            continue
        for _ in range(2):
            for q, xq in zip(Q, XQ):
                w -= (xq @ w) * q
        xw = X @ w
        post = np.sqrt(max(w @ xw, 0.0))
        if post < DEPENDENCE_TOL * pre:
            continue
        w /= post
        Q.append(w)
        XQ.append(xw / post)
        accepted.append(w)
    if not accepted:
        return np.zeros((V.shape[0], 0))
    return np.column_stack(accepted)


def enrich(space: RbSpace, y_snap, p_snap, X, mu, pod_tol=1e-10, max_modes=None) -> RbSpace:
    """Append POD modes of one parameter's snapshots to both spaces.

    Both sides receive the same number of new vectors: the shorter side is
    padded with its next POD modes and, if those are exhausted, the longer
    side is cut back.
    """
    cap = max_modes or y_snap.shape[1]
    modes_y, sig_y = pod_modes(y_snap, X)
    modes_p, sig_p = pod_modes(p_snap, X)
    target = max(energy_rank(sig_y, pod_tol, cap), energy_rank(sig_p, pod_tol, cap))

    def candidates(modes, sigma):
        if sigma.size == 0 or sigma[0] == 0.0:
            return modes[:, :0]
        return modes[:, sigma > 1e-14 * sigma[0]][:, :cap]

    new_y = gram_schmidt(candidates(modes_y, sig_y), space.Z_y, X, max_new=target)
    new_p = gram_schmidt(candidates(modes_p, sig_p), space.Z_p, X, max_new=target)
    m = min(new_y.shape[1], new_p.shape[1])
    if new_y.shape[1] != new_p.shape[1]:
        log.info("trimming enrichment at mu=%g to %d vectors (state %d, adjoint %d)",
                 mu, m, new_y.shape[1], new_p.shape[1])
    return RbSpace(
        Z_y=np.hstack([space.Z_y, new_y[:, :m]]),
        Z_p=np.hstack([space.Z_p, new_p[:, :m]]),
        S_N=tuple(space.S_N) + (float(mu),),
    )


def project_operators(space: RbSpace, ops: FomOperators, spec: ProblemSpec = None) -> RbOperators:
    M, A = ops.fem.M, ops.fem.A_unit
    Zy, Zp = space.Z_y, space.Z_p
    MZy, MZp = M @ Zy, M @ Zp
    AZy, AZp = A @ Zy, A @ Zp
    return RbOperators(
        M_N=Zy.T @ MZy,
        A_N=Zy.T @ AZy,
        B_N=Zy.T @ MZp,
        Mp_N=Zp.T @ MZp,
        Ap_N=Zp.T @ AZp,
        Bp_N=Zp.T @ MZy,
        Yd_N=ops.loads @ Zp,
        yd_state=ops.yd_nodal @ MZy,
        yd_sq=np.sum(ops.yd_nodal * (M @ ops.yd_nodal.T).T, axis=1),
    )


def xnorm_rows(E, X):
    return np.sqrt(np.maximum(np.sum(E * (X @ E.T).T, axis=1), 0.0))


def true_error_indicator(fom, lifted, X) -> float:
    y, p = lifted
    return float(xnorm_rows(fom.y - y, X).sum() + xnorm_rows(fom.p_bar - p, X).sum())


def bound_indicator(space, sol, ops, mu, gamma, riesz) -> float:
    """Primal bound at ``t_K`` plus dual bound at ``T - t_0``, fully reduced coupling."""
    y, p = rb_online.lift(space, sol)
    series = bound_series(y, p, recover_control(p, gamma), y, ops, mu, riesz)
    return float(series.delta_pr[-1] + series.delta_du[0])


def greedy_train(spec: ProblemSpec, D_train, eps: float, N_max: int, indicator: str = "true-error",
                 pod_tol: float = 1e-10, mu_init: float = None, ops: FomOperators = None):
    """Greedy selection of parameters from ``D_train``.

    ``N_max`` caps the number of selected parameters. Returns the space,
    the projected operators and a :class:`GreedyReport`.
    """
    D_train = [float(m) for m in D_train]
    if not D_train:
        raise ValueError("D_train must be nonempty")
    if not eps > 0:
        raise ValueError("eps must be positive")
    if N_max < 1:
        raise ValueError("N_max must be >= 1")
    if indicator not in ("true-error", "bound"):
        raise ValueError(f"unknown indicator mode {indicator!r}")
    ops = ops or build_operators(spec)
    X = ops.fem.X
    riesz = RieszMap(X)
    fom_cache = {}

    def fom(mu):
        if mu not in fom_cache:
            fom_cache[mu] = solve_fom(spec, mu, ops)
        return fom_cache[mu]

    def indicators(space, rb_ops):
        values = np.empty(len(D_train))
        for i, mu in enumerate(D_train):
            if space.N == 0:
                # empty space: the reduced solution is identically zero
                zero = np.zeros((ops.K, ops.n_dof))
                if indicator == "true-error":
                    values[i] = true_error_indicator(fom(mu), (zero, zero), X)
                else:
                    series = bound_series(zero, zero, zero, zero, ops, mu, riesz)
                    values[i] = series.delta_pr[-1] + series.delta_du[0]
                continue
            sol = rb_online.solve_rb(rb_ops, ops.scheme, mu, spec.gamma)
            if indicator == "true-error":
                values[i] = true_error_indicator(fom(mu), rb_online.lift(space, sol), X)
            else:
                values[i] = bound_indicator(space, sol, ops, mu, spec.gamma, riesz)
        return values

    report = GreedyReport(indicator_mode=indicator, eps=float(eps))
    space = RbSpace.empty(ops.n_dof)
    mu_star = D_train[0] if mu_init is None else float(mu_init)
    selected_indicator = np.inf
    while True:
        start = time.perf_counter()
        sol = fom(mu_star)
        space = enrich(space, sol.y.T, sol.p_bar.T, X, mu_star, pod_tol)
        rb_ops = project_operators(space, ops, spec)
        report.records.append(GreedyRecord(len(report.records) + 1, mu_star, selected_indicator,
                                           space.N, 0.0))
        values = indicators(space, rb_ops)
        report.records[-1].seconds = time.perf_counter() - start
        report.final_indicator = float(values.max())
        log.info("greedy iteration %d: mu=%g N=%d max indicator %.3e", len(report.records),
                 mu_star, space.N, report.final_indicator)
        if report.final_indicator <= eps:
            report.status = "converged"
            break
        if len(report.records) >= N_max:
            report.status = "max-iterations"
            break
        chosen = set(space.S_N)
        order = np.lexsort((np.array(D_train), -values))  # largest value, then smallest mu
        candidates = [i for i in order if D_train[i] not in chosen]
        if not candidates:
            report.status = "max-iterations"
            break
        i = candidates[0]
        mu_star, selected_indicator = D_train[i], float(values[i])
    return space, rb_ops, report
