"""Piecewise-linear finite elements on a uniform 1D mesh.

Only interior nodes carry degrees of freedom (homogeneous Dirichlet data).
The stiffness matrix is returned for unit diffusion; callers scale it by
the parameter ``mu``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# 3-point Gauss-Legendre rule on [-1, 1]
_GAUSS_POINTS = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 9.0


@dataclass(frozen=True)
class Mesh1D:
    a: float
    b: float
    n_el: int

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_el

    @property
    def n_dof(self) -> int:
        return self.n_el - 1

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates ``a + i*h`` for ``i = 1..n_dof``."""
        return self.a + self.h * np.arange(1, self.n_el)


@dataclass(frozen=True, eq=False)
class FemMatrices:
    """Mass, unit stiffness and Y-inner-product Gram matrices (all CSC)."""

    M: sp.csc_matrix
    A_unit: sp.csc_matrix
    X: sp.csc_matrix


def build_mesh(a: float, b: float, n_el: int) -> Mesh1D:
    if not b > a:
        raise ValueError(f"need b > a, got a={a}, b={b}")
    if int(n_el) != n_el or n_el < 2:
        raise ValueError(f"n_el must be an integer >= 2, got {n_el}")
    return Mesh1D(float(a), float(b), int(n_el))


def _tridiag(n, diag, off):
    return sp.diags(
        [np.full(n - 1, off), np.full(n, diag), np.full(n - 1, off)],
        [-1, 0, 1],
        format="csc",
    )


def assemble_mass(mesh: Mesh1D) -> sp.csc_matrix:
    h = mesh.h
    return _tridiag(mesh.n_dof, 2.0 * h / 3.0, h / 6.0)


def assemble_stiffness(mesh: Mesh1D) -> sp.csc_matrix:
    h = mesh.h
    return _tridiag(mesh.n_dof, 2.0 / h, -1.0 / h)


def assemble_load(f, mesh: Mesh1D) -> np.ndarray:
    """Entries ``(f, phi_j)`` by 3-point Gauss quadrature on every element.

    ``f`` must accept a numpy array of coordinates.
    """
    h = mesh.h
    left = mesh.a + h * np.arange(mesh.n_el)
    xq = left[:, None] + 0.5 * h * (_GAUSS_POINTS + 1.0)[None, :]
    fq = np.broadcast_to(np.asarray(f(xq), dtype=float), xq.shape)
    w = 0.5 * h * _GAUSS_WEIGHTS
    s = (xq - left[:, None]) / h  # local coordinate in [0, 1]
    # element e contributes to its left node (hat 1 - s) and right node (hat s)
    to_left = (fq * (1.0 - s)) @ w
    to_right = (fq * s) @ w
    load = np.zeros(mesh.n_el + 1)
    np.add.at(load, np.arange(mesh.n_el), to_left)
    np.add.at(load, np.arange(1, mesh.n_el + 1), to_right)
    return load[1:-1]


def assemble_fem(mesh: Mesh1D) -> FemMatrices:
    M = assemble_mass(mesh)
    A = assemble_stiffness(mesh)
    # Y-norm is the H1 seminorm, so the Gram matrix is the unit stiffness
    return FemMatrices(M=M, A_unit=A, X=A)


def interpolate(f, mesh: Mesh1D) -> np.ndarray:
    return np.asarray(f(mesh.nodes), dtype=float) * np.ones(mesh.n_dof)
