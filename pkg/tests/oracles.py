"""Independent reference computations used by the tests.

Nothing here calls the assembly or solver code of the package; matrices are
rebuilt element by element and systems are solved in plain loops.
"""
import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn


def element_matrices_dense(a, b, n_el, order=4):
    """Mass and stiffness matrices by element loops with Gauss-Legendre quadrature."""
    h = (b - a) / n_el
    xi, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (xi + 1.0)  # reference coordinate in [0, 1]
    shapes = np.array([1.0 - s, s])
    grads = np.array([-1.0, 1.0]) / h
    M = np.zeros((n_el + 1, n_el + 1))
    A = np.zeros_like(M)
    for e in range(n_el):
        idx = [e, e + 1]
        for i in range(2):
            for j in range(2):
                M[idx[i], idx[j]] += 0.5 * h * np.sum(w * shapes[i] * shapes[j])
                A[idx[i], idx[j]] += h * grads[i] * grads[j]
    return M[1:-1, 1:-1], A[1:-1, 1:-1]


def hat_integral(f, a, b, n_el, i, order=12):
    """``int f * phi_i`` for interior node ``i`` (1-based).

    A 12-point Gauss rule on each half of the support is exact for
    polynomial ``f`` up to degree 22.
    """
    h = (b - a) / n_el
    xi = a + i * h
    s, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (s + 1.0)
    left = xi - h + h * s
    right = xi + h * s
    return 0.5 * h * (np.sum(w * f(left) * s) + np.sum(w * f(right) * (1.0 - s)))


def caputo_quadrature(p, alpha, t):
    """Caputo derivative of ``t**p`` straight from its defining integral."""
    if t == 0.0:
        return 0.0
    # int_0^t p s^(p-1) (t - s)^(-alpha) ds / Gamma(1 - alpha)
    val, _ = integrate.quad(lambda s: p * s ** (p - 1), 0.0, t, weight="alg", wvar=(0.0, -alpha),
                            epsabs=1e-14, epsrel=1e-13)
    return val / gamma_fn(1.0 - alpha)


def l1_weights(alpha, K):
    m = np.arange(K + 1, dtype=float)
    return np.array([(k + 1) ** (1 - alpha) - (k ** (1 - alpha) if k > 0 else 0.0) for k in m])


def l1_matrix_loops(alpha, T, K):
    """Lower-triangular L1 matrix acting on ``g(t_1..t_K)`` with ``g(t_0) = 0``."""
    tau = T / K
    c = tau ** (-alpha) / gamma_fn(2.0 - alpha)
    b = l1_weights(alpha, K)
    D = np.zeros((K, K))
    for n in range(1, K + 1):
        # c * sum_{j=1}^{n} b_{n-j} (g_j - g_{j-1})
        for j in range(1, n + 1):
            D[n - 1, j - 1] += c * b[n - j]
            if j - 1 >= 1:
                D[n - 1, j - 2] -= c * b[n - j]
    return D


def kkt_loops(D, M, A, mu, gamma, loads):
    """Dense KKT system assembled block by block in time.

    Unknowns: y(t_1..t_K) then p(t_0..t_{K-1}) with p(t_K) = 0 and y(t_0) = 0.
    State row for t_k couples p(t_k); adjoint row for t_k couples y(t_k).
    """
    K = D.shape[0]
    n = M.shape[0]
    N = 2 * K * n
    S = np.zeros((N, N))
    rhs = np.zeros(N)

    def yb(k):  # y(t_k), k = 1..K
        return slice((k - 1) * n, k * n)

    def pb(k):  # p(t_k), k = 0..K-1
        return slice(K * n + k * n, K * n + (k + 1) * n)

    for k in range(1, K + 1):
        for j in range(1, K + 1):
            if D[k - 1, j - 1] != 0.0:
                S[yb(k), yb(j)] += D[k - 1, j - 1] * M
        S[yb(k), yb(k)] += mu * A
        if k < K:
            S[yb(k), pb(k)] += M / gamma
    for k in range(K):
        # adjoint in reversed time: the slot order makes D appear transposed
        for j in range(K):
            if D[j, k] != 0.0:
                S[pb(k), pb(j)] += D[j, k] * M
        S[pb(k), pb(k)] += mu * A
        if k >= 1:
            S[pb(k), yb(k)] -= M
        rhs[pb(k)] = -loads[k]
    return S, rhs


def backward_euler_kkt(M, A, mu, gamma, tau, loads):
    """Classical parabolic optimality system, implicit Euler, written from scratch.

    State:   M (y_k - y_{k-1}) / tau + mu A y_k + M p_k / gamma = 0, k = 1..K
    Adjoint: M (p_k - p_{k+1}) / tau + mu A p_k - M y_k = -l_k,   k = 0..K-1
    with y_0 = 0 and p_K = 0.
    """
    K = loads.shape[0]
    n = M.shape[0]
    S = np.zeros((2 * K * n, 2 * K * n))
    rhs = np.zeros(2 * K * n)
    Y = lambda k: slice((k - 1) * n, k * n)  # noqa: E731
    P = lambda k: slice(K * n + k * n, K * n + (k + 1) * n)  # noqa: E731
    for k in range(1, K + 1):
        S[Y(k), Y(k)] += M / tau + mu * A
        if k > 1:
            S[Y(k), Y(k - 1)] -= M / tau
        if k < K:
            S[Y(k), P(k)] += M / gamma
    for k in range(K):
        S[P(k), P(k)] += M / tau + mu * A
        if k + 1 < K:
            S[P(k), P(k + 1)] -= M / tau
        if k > 0:
            S[P(k), Y(k)] -= M
        rhs[P(k)] = -loads[k]
    return S, rhs


def block_gauss_seidel(D, M, A, mu, gamma, loads, tol=1e-12, max_iter=500):
    """Alternate a forward state sweep and a backward adjoint sweep.

    Returns ``(y, p, iterations)`` with ``y`` rows ``t_1..t_K`` and ``p`` rows
    ``t_0..t_{K-1}``. Raises if the iteration does not contract.
    """
    K = D.shape[0]
    n = M.shape[0]
    y = np.zeros((K, n))
    p = np.zeros((K, n))
    for it in range(1, max_iter + 1):
        y_old, p_old = y.copy(), p.copy()
        for k in range(K):  # state at t_{k+1}, driven by p(t_{k+1})
            r = -(M @ p[k + 1]) / gamma if k + 1 < K else np.zeros(n)
            for j in range(k):
                r -= D[k, j] * (M @ y[j])
            y[k] = np.linalg.solve(D[k, k] * M + mu * A, r)
        for k in reversed(range(K)):  # adjoint at t_k, driven by y(t_k)
            r = -loads[k] + (M @ y[k - 1] if k >= 1 else 0.0)
            for j in range(k + 1, K):
                r -= D[j, k] * (M @ p[j])
            p[k] = np.linalg.solve(D[k, k] * M + mu * A, r)
        change = np.linalg.norm(np.concatenate([(y - y_old).ravel(), (p - p_old).ravel()]))
        size = np.linalg.norm(np.concatenate([y.ravel(), p.ravel()]))
        if not np.isfinite(change) or change > 1e100:
            raise ArithmeticError("block Gauss-Seidel diverged")
        if change <= tol * max(size, 1e-300):
            return y, p, it
    raise ArithmeticError(f"block Gauss-Seidel did not reach {tol} in {max_iter} sweeps")


def random_sup(r, X, samples=10_000, seed=0):
    """Lower estimate of ``sup_v |r.v| / |v|_X`` over random directions."""
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((samples, r.size))
    num = np.abs(V @ r)
    den = np.sqrt(np.einsum("ij,jk,ik->i", V, X, V))
    return float(np.max(num / den))


def xnorm(v, X):
    v = np.asarray(v).ravel()
    return float(np.sqrt(v @ (X @ v)))


def stacked_xnorm(E, X):
    """``(sum_k |e_k|_X^2)^(1/2)`` for ``K x n`` arrays."""
    E = np.asarray(E)
    return float(np.sqrt(sum(e @ (X @ e) for e in E)))
