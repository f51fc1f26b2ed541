"""Reference-element basis functions and Gauss-Legendre quadrature.

Reference cell is [-1, 1] in 1D and [-1, 1]^2 in 2D. 2D bases are tensor
products of 1D Lagrange bases with local index ``ix + (k + 1) * iy``.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

LAGRANGE = "lagrange"
HERMITE = "hermite-cubic"

_TOL = 1e-12


@dataclass(frozen=True)
class BasisFamily:
    kind: str = LAGRANGE
    order: int = 1
    dim: int = 1

    def __post_init__(self):
        if self.kind not in (LAGRANGE, HERMITE):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.order < 0:
            raise ValueError(f"order must be >= 0, got {self.order}")
        if self.kind == HERMITE and (self.order != 3 or self.dim != 1):
            raise ValueError("hermite-cubic is only defined for order 3 in 1D")

    @property
    def n1d(self) -> int:
        return 4 if self.kind == HERMITE else self.order + 1

    @property
    def nbasis(self) -> int:
        return self.n1d ** self.dim

    @property
    def label(self) -> str:
        if self.kind == HERMITE:
            return "H3"
        return ("P" if self.dim == 1 else "Q") + str(self.order)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (npts, dim)
    weights: np.ndarray  # (npts,)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)


def gauss_rule(npoints: int, dim: int = 1) -> QuadratureRule:
    """Tensor Gauss-Legendre rule, exact to degree 2*npoints - 1 per axis."""
    if npoints < 1:
        raise ValueError(f"npoints must be >= 1, got {npoints}")
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    x, w = np.polynomial.legendre.leggauss(npoints)
    if dim == 1:
        return QuadratureRule(x[:, None], w)
    X, Y = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return QuadratureRule(pts, W.ravel())


def default_npoints(order: int) -> int:
    """Points per axis integrating a cubic-in-coefficients integrand of order ``order``."""
    return max(1, math.ceil((3 * order + 2) / 2))


def lagrange_nodes(order: int) -> np.ndarray:
    if order == 0:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, order + 1)


@lru_cache(maxsize=None)
def _lagrange_coeffs(order: int) -> np.ndarray:
    # column j holds the monomial coefficients (ascending) of the j-th nodal function
    nodes = lagrange_nodes(order)
    V = np.vander(nodes, order + 1, increasing=True)
    return np.linalg.solve(V, np.eye(order + 1))


def _hermite_coeffs() -> np.ndarray:
    # reference DOFs: value(-1), d/dxi(-1), value(1), d/dxi(1)
    nodes = np.array([-1.0, 1.0])
    rows = []
    for x in nodes:
        rows.append([1.0, x, x**2, x**3])
        rows.append([0.0, 1.0, 2 * x, 3 * x**2])
    A = np.array([rows[0], rows[1], rows[2], rows[3]])
    return np.linalg.solve(A, np.eye(4))


_HERMITE = _hermite_coeffs()


def _tabulate_1d(kind: str, order: int, x: np.ndarray, deriv: int) -> np.ndarray:
    """Values (npts, nbasis) of the 1D basis or its deriv-th derivative."""
    C = _HERMITE if kind == HERMITE else _lagrange_coeffs(order)
    deg = C.shape[0] - 1
    powers = np.arange(deg + 1)
    # d^m/dx^m x^j = j!/(j-m)! x^(j-m)
    fac = np.ones(deg + 1)
    for m in range(deriv):
        fac = fac * np.clip(powers - m, 0, None)
    expo = np.clip(powers - deriv, 0, None)
    P = fac[None, :] * x[:, None] ** expo[None, :]
    return P @ C


def tabulate(family: BasisFamily, points, deriv: int = 0) -> np.ndarray:
    """Vectorised evaluation at reference points.

    1D: returns (npts, nbasis). 2D: deriv=0 gives (npts, nbasis), deriv=1 gives
    (npts, nbasis, 2) with the reference gradient in the last axis.
    """
    pts = np.asarray(points, dtype=float)
    if family.dim == 1:
        x = pts.reshape(-1)
        return _tabulate_1d(family.kind, family.order, x, deriv)
    pts = pts.reshape(-1, 2)
    if deriv > 1:
        raise ValueError("2D tabulation supports deriv <= 1")
    vx = _tabulate_1d(family.kind, family.order, pts[:, 0], 0)
    vy = _tabulate_1d(family.kind, family.order, pts[:, 1], 0)
    val = (vy[:, :, None] * vx[:, None, :]).reshape(len(pts), -1)
    if deriv == 0:
        return val
    dx = _tabulate_1d(family.kind, family.order, pts[:, 0], 1)
    dy = _tabulate_1d(family.kind, family.order, pts[:, 1], 1)
    gx = (vy[:, :, None] * dx[:, None, :]).reshape(len(pts), -1)
    gy = (dy[:, :, None] * vx[:, None, :]).reshape(len(pts), -1)
    return np.stack([gx, gy], axis=-1)


def eval_basis(family: BasisFamily, point, deriv: int = 0) -> np.ndarray:
    """All basis functions (or derivatives) at one reference point, by local DOF."""
    if deriv < 0 or deriv > 2:
        raise ValueError(f"deriv must be 0, 1 or 2, got {deriv}")
    p =np.atleast_1d(np.asarray(point, dtype=float))
    if p.size != family.dim:
        raise ValueError(f"point has {p.size} coordinates, expected {family.dim}")
    if np.any(np.abs(p) > 1.0 + _TOL):
        raise ValueError(f"point {p} lies outside the reference element")
    return tabulate(family, p[None, :], deriv)[0]
