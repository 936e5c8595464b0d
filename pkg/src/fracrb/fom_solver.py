"""Full-order space-time optimality system.

Unknowns are stacked time-major: ``vec(y) = [y(t_1); ...; y(t_K)]`` and
``vec(p) = [p(T-t_0); ...; p(T-t_{K-1})]`` where ``p`` is the time-reversed
adjoint. Both block rows are written with positive definite diagonal blocks:

    [D (x) M + mu I (x) A]  y + (1/gamma) [I_b (x) M] p = 0
   -[I_b^T (x) M]           y + [D^T (x) M + mu I (x) A] p = -Y_d
"""
import hashlib
import json
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .caputo_l1 import L1Scheme, l1_coefficients
from .fem1d import FemMatrices, Mesh1D, assemble_fem, assemble_load
from .problems import desired_state


REFINE_STEPS = 3


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    alpha: float
    gamma: float
    T: float
    K: int
    mesh: Mesh1D
    mu_domain: tuple
    problem: str = "example1"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be an integer >= 1, got {self.K}")
        lo, hi = self.mu_domain
        if not 0 < lo <= hi:
            raise ValueError(f"mu_domain must satisfy 0 < mu_min <= mu_max, got {self.mu_domain}")

    @cached_property
    def y_d(self):
        """Desired state as ``f(x, t)``."""
        f = desired_state(self.problem)
        gamma = self.gamma
        return lambda x, t: f(x, t, gamma)

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "gamma": self.gamma,
            "T": self.T,
            "K": int(self.K),
            "a": self.mesh.a,
            "b": self.mesh.b,
            "n_el": self.mesh.n_el,
            "mu_domain": [float(m) for m in self.mu_domain],
            "problem": self.problem,
        }

    def digest(self) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class FomOperators:
    fem: FemMatrices
    scheme: L1Scheme
    D_mat: np.ndarray
    I_b: sp.csr_matrix
    loads: np.ndarray = field(repr=False)  # K x n: (y_d(t_k), phi_j), k = 0..K-1
    yd_nodal: np.ndarray = field(repr=False)  # K x n: y_d at interior nodes, t_1..t_K

    @property
    def K(self) -> int:
        return self.scheme.K

    @property
    def n_dof(self) -> int:
        return self.fem.M.shape[0]


@dataclass(frozen=True, eq=False)
class FomSolution:
    y: np.ndarray  # K x n, y(t_1)..y(t_K)
    p_bar: np.ndarray  # K x n, p(T-t_0)..p(T-t_{K-1})
    u: np.ndarray  # K x n, u(t_1)..u(t_K)
    J: float
    mu: float
    residual: float = 0.0
    seconds: float = 0.0


def build_alignment(K: int) -> sp.csr_matrix:
    """0/1 matrix pairing the state row for ``t_k`` with stored ``p(T-t_k)``.

    Stored adjoint slot ``j`` holds ``p(T-t_j)``, so state row ``k-1`` (time
    ``t_k``) picks slot ``k``; the last row would need ``p(T-t_K) = 0`` and
    stays empty. The transpose pairs adjoint slot ``k`` with ``y(t_k)``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    rows = np.arange(K - 1)
    return sp.csr_matrix((np.ones(K - 1), (rows, rows + 1)), shape=(K, K))


def desired_loads(spec: ProblemSpec, mesh: Mesh1D = None) -> np.ndarray:
    """``(y_d(t_k), phi_j)`` for ``k = 0..K-1`` as a ``K x n_dof`` array."""
    mesh = mesh or spec.mesh
    t = spec.T / spec.K * np.arange(spec.K)
    return np.array([assemble_load(lambda x, tk=tk: spec.y_d(x, tk), mesh) for tk in t])


def desired_nodal(spec: ProblemSpec) -> np.ndarray:
    """Nodal interpolant of ``y_d`` at the state times ``t_1..t_K``."""
    t = spec.T / spec.K * np.arange(1, spec.K + 1)
    x = spec.mesh.nodes
    return spec.y_d(x[None, :], t[:, None]) + np.zeros((spec.K, x.size))


def build_operators(spec: ProblemSpec) -> FomOperators:
    scheme = l1_coefficients(spec.alpha, spec.T, spec.K)
    loads = desired_loads(spec)
    nodal = desired_nodal(spec)
    loads.setflags(write=False)
    nodal.setflags(write=False)
    return FomOperators(
        fem=assemble_fem(spec.mesh),
        scheme=scheme,
        D_mat=scheme.D,
        I_b=build_alignment(spec.K),
        loads=loads,
        yd_nodal=nodal,
    )


def assemble_kkt(ops: FomOperators, mu: float, gamma: float, y_d_loads: np.ndarray):
    """Sparse KKT matrix (CSC) and right-hand side over ``(vec(y), vec(p))``."""
    if not mu > 0:
        raise ValueError(f"mu must be positive for coercivity, got {mu}")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    M, A = ops.fem.M, ops.fem.A_unit
    K = ops.K
    D = sp.csr_matrix(ops.D_mat)
    eye = sp.identity(K, format="csr")
    state = sp.kron(D, M) + mu * sp.kron(eye, A)
    adjoint = sp.kron(D.T, M) + mu * sp.kron(eye, A)
    couple_p = sp.kron(ops.I_b, M) / gamma
    couple_y = -sp.kron(ops.I_b.T, M)
    kkt = sp.bmat([[state, couple_p], [couple_y, adjoint]], format="csc")
    rhs = np.concatenate([np.zeros(K * M.shape[0]), -np.asarray(y_d_loads).ravel()])
    return kkt, rhs


def recover_control(p_bar: np.ndarray, gamma: float) -> np.ndarray:
    """``u(t_k) = p(T-t_k) / gamma``; ``u(t_K)`` refers to ``p(T-t_K) = 0``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    u = np.zeros_like(p_bar)
    u[:-1] = p_bar[1:] / gamma
    return u


def cost(y, u, yd_nodal, M, tau, gamma) -> float:
    """Left-rectangle time rule, mass-matrix norm in space."""
    e = y - yd_nodal
    track = np.sum(e * (M @ e.T).T)
    reg = np.sum(u * (M @ u.T).T)
    return 0.5 * tau * track + 0.5 * gamma * tau * reg


def evaluate_cost(sol: FomSolution, spec: ProblemSpec, ops: FomOperators = None) -> float:
    if ops is None:
        M = assemble_fem(spec.mesh).M
        nodal = desired_nodal(spec)
    else:
        M, nodal = ops.fem.M, ops.yd_nodal
    if sol.y.shape != nodal.shape:
        raise ValueError(f"solution shape {sol.y.shape} does not match spec {nodal.shape}")
    return cost(sol.y, sol.u, nodal, M, spec.T / spec.K, spec.gamma)


def relative_residual(A, x, b) -> float:
    """Normwise backward error ``|b - Ax| / (|A| |x| + |b|)`` in the inf-norm."""
    r = np.abs(A @ x - b).max(initial=0.0)
    a_norm = abs(A).sum(axis=1).max() if A.shape[0] else 0.0
    scale = float(a_norm) * np.abs(x).max(initial=0.0) + np.abs(b).max(initial=0.0)
    if scale == 0.0:
        return float(r)
    return float(r / scale)


def solve_fom(spec: ProblemSpec, mu: float, ops: FomOperators = None, tol: float = 1e-10) -> FomSolution:
    start = time.perf_counter()
    ops = ops or build_operators(spec)
    kkt, rhs = assemble_kkt(ops, mu, spec.gamma, ops.loads)
    try:
        lu = spla.splu(kkt, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SolverError(f"factorization of the KKT system failed at mu={mu}: {exc}") from exc
    x = lu.solve(rhs)
    res = relative_residual(kkt, x, rhs)
    # iterative refinement; the 1/gamma coupling makes the system ill-conditioned
    for _ in range(REFINE_STEPS):
        if res <= 0.01 * tol:
            break
        x = x + lu.solve(rhs - kkt @ x)
        res = relative_residual(kkt, x, rhs)
    if not np.all(np.isfinite(x)) or res > tol:
        raise SolverError(f"KKT solve at mu={mu} left relative residual {res:.3e}")
    K, n = ops.K, ops.n_dof
    y = x[: K * n].reshape(K, n)
    p_bar = x[K * n :].reshape(K, n)
    u = recover_control(p_bar, spec.gamma)
    J = cost(y, u, ops.yd_nodal, ops.fem.M, ops.scheme.tau, spec.gamma)
    return FomSolution(y=y, p_bar=p_bar, u=u, J=J, mu=float(mu), residual=res,
                       seconds=time.perf_counter() - start)


def apply_state_operator(ops: FomOperators, mu: float, y: np.ndarray) -> np.ndarray:
    """``[D (x) M + mu I (x) A] vec(y)`` reshaped to ``K x n``."""
    M, A = ops.fem.M, ops.fem.A_unit
    return (M @ (ops.D_mat @ y).T).T + mu * (A @ y.T).T


def apply_adjoint_operator(ops: FomOperators, mu: float, p: np.ndarray) -> np.ndarray:
    """``[D^T (x) M + mu I (x) A] vec(p)`` reshaped to ``K x n``."""
    M, A = ops.fem.M, ops.fem.A_unit
    return (M @ (ops.D_mat.T @ p).T).T + mu * (A @ p.T).T
