"""L1 discretization of the left-sided Caputo derivative on a uniform grid."""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.special import gamma as gamma_fn

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class TimeGrid:
    T: float
    K: int

    @property
    def tau(self) -> float:
        return self.T / self.K

    @property
    def nodes(self) -> np.ndarray:
        t = self.tau * np.arange(self.K + 1)
        t[-1] = self.T
        return t


@dataclass(frozen=True, eq=False)
class L1Scheme:
    """Coefficients of the L1 formula for order ``alpha`` with ``K`` steps.

    ``b[m] = (m+1)**(1-alpha) - m**(1-alpha)`` for ``m = 0..K-1`` and
    ``c = tau**(-alpha) / Gamma(2 - alpha)``.
    """

    alpha: float
    T: float
    K: int
    b: np.ndarray = field(repr=False)
    c: float

    @property
    def tau(self) -> float:
        return self.T / self.K

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.K)

    @cached_property
    def D(self):
        return build_D(self)


def l1_coefficients(alpha: float, T: float, K: int) -> L1Scheme:
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if int(K) != K or K < 1:
        raise ValueError(f"K must be an integer >= 1, got {K}")
    K = int(K)
    powers = np.power(np.arange(K + 1, dtype=float), 1.0 - alpha)
    powers[0] = 0.0  # 0**0 is 1 in floating point, the formula needs 0
    b = powers[1:] - powers[:-1]
    b.setflags(write=False)
    tau = T / K
    c = tau ** (-alpha) / gamma_fn(2.0 - alpha)
    return L1Scheme(alpha=float(alpha), T=float(T), K=K, b=b, c=float(c))


def _band(scheme: L1Scheme) -> np.ndarray:
    """First column of D: ``c*b_0`` then ``c*(b_j - b_{j-1})``."""
    col = np.empty(scheme.K)
    col[0] = scheme.b[0]
    col[1:] = np.diff(scheme.b)
    return scheme.c * col


def build_D(scheme: L1Scheme):
    """Lower-triangular Toeplitz matrix of the L1 formula with zero start value.

    Dense ``ndarray`` up to ``DENSE_LIMIT`` steps, sparse CSC beyond.
    """
    K = scheme.K
    col = _band(scheme)
    if K <= DENSE_LIMIT:
        idx = np.subtract.outer(np.arange(K), np.arange(K))
        D = np.where(idx >= 0, col[np.clip(idx, 0, None)], 0.0)
        D.setflags(write=False)
        return D
    return sp.diags([np.full(K - j, col[j]) for j in range(K)], [-j for j in range(K)], format="csc")


def caputo_apply(scheme: L1Scheme, samples) -> float:
    """L1 approximation of the Caputo derivative at ``t_n``.

    ``samples`` holds ``g(t_0), ..., g(t_n)``; ``n`` is inferred from its length.
    """
    g = np.asarray(samples, dtype=float)
    n = g.shape[0] - 1
    if n < 1:
        raise ValueError("need at least g(t_0) and g(t_1)")
    if n > scheme.K:
        raise ValueError(f"history length {n} exceeds K={scheme.K}")
    b = scheme.b
    m = np.arange(1, n)
    history = np.dot(b[n - m - 1] - b[n - m], g[1:n])
    return scheme.c * (b[0] * g[n] - history - b[n - 1] * g[0])


def caputo_reference(p: int, alpha: float, t):
    """Exact Caputo derivative of ``t**p`` (zero for ``p == 0``)."""
    if p == 0:
        return np.zeros_like(np.asarray(t, dtype=float))
    if p < 0:
        raise ValueError(f"p must be a non-negative integer, got {p}")
    t = np.asarray(t, dtype=float)
    return gamma_fn(p + 1) / gamma_fn(p + 1 - alpha) * t ** (p - alpha)


def max_error_monomial(alpha: float, K: int, p: int = 3, T: float = 1.0) -> float:
    """Max over ``t_1..t_K`` of the L1 error for ``g(t) = t**p``."""
    scheme = l1_coefficients(alpha, T, K)
    t = scheme.grid.nodes
    g = t**p
    approx = np.array([caputo_apply(scheme, g[: n + 1]) for n in range(1, K + 1)])
    return float(np.max(np.abs(approx - caputo_reference(p, alpha, t[1:]))))


def fitted_order(steps, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(tau)``."""
    tau = 1.0 / np.asarray(steps, dtype=float)
    slope, _ = np.polyfit(np.log(tau), np.log(np.asarray(errors, dtype=float)), 1)
    return float(slope)


def convergence_study(alphas=(0.3, 0.5, 0.7), steps=(16, 32, 64, 128), p: int = 3):
    """Rows ``(alpha, K, max_error, fitted_order)`` for the monomial ``t**p``."""
    rows = []
    for alpha in alphas:
        errors = [max_error_monomial(alpha, K, p) for K in steps]
        order = fitted_order(steps, errors)
        rows.extend((alpha, K, err, order) for K, err in zip(steps, errors))
    return rows
