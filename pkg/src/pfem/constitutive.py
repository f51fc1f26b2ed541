"""Discrete Hamiltonians and their gradients (co-energy variables).

Two kinds are supported:

* ``quadratic``: H = 1/2 (x - c)^T Q (x - c) + g0^T (x - c) + h0 directly in
  tilde coordinates (linear wave/beam models, linearized SWE);
* ``swe``: H = 1/2 a_q^T G a_q + kin/2 * sum_i a_q[i] a_p^T T_i a_p in
  coefficient space, with T_i = int w phi_q,i Phi_p Phi_p^T precomputed once.

State vectors are always tilde coordinates x = [L_q^T a_q, L_p^T a_p].
"""
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import _cell_rule, _eval_weight, _npoints, _same_mesh
from .basis import gauss_rule
from .mesh import FESpace

QUADRATIC = "quadratic"
SWE = "swe"


@dataclass(frozen=True, eq=False)
class ConstitutiveTensors:
    """Sparse third-order tensor T[i, j, k] = int weight phi_q,i phi_p,j phi_p,k (COO)."""

    I: np.ndarray
    J: np.ndarray
    K: np.ndarray
    V: np.ndarray
    nq: int
    np_: int

    def matrix(self, i: int) -> sp.csr_matrix:
        m = self.I == i
        return sp.csr_matrix((self.V[m], (self.J[m], self.K[m])), shape=(self.np_, self.np_))

    def contract_q(self, a_q: np.ndarray) -> sp.csr_matrix:
        """sum_i a_q[i] T_i."""
        return sp.csr_matrix((self.V * a_q[self.I], (self.J, self.K)), shape=(self.np_, self.np_))

    def contract_p(self, a_p: np.ndarray) -> sp.csr_matrix:
        """Matrix with rows (T_i a_p)^T, shape (nq, np)."""
        return sp.csr_matrix((self.V * a_p[self.K], (self.I, self.J)), shape=(self.nq, self.np_))

    def quad_p(self, a_p: np.ndarray) -> np.ndarray:
        """w_i = a_p^T T_i a_p."""
        return np.bincount(self.I, self.V * a_p[self.J] * a_p[self.K], minlength=self.nq)


def precompute_tensors(space_q: FESpace, space_p: FESpace, weight=None,
                       npoints=None) -> ConstitutiveTensors:
    """T_i for every q-basis function, including the geometric measure factor."""
    _same_mesh(space_q, space_p)
    mesh = space_q.mesh
    n = npoints if npoints is not None else _npoints([space_q, space_p], None)
    rule = gauss_rule(n, mesh.dim)
    Is, Js, Ks, Vs = [], [], [], []
    for c in range(mesh.ncells):
        x, wq = _cell_rule(space_q, c, rule)
        w = wq * _eval_weight(weight, x) * mesh.measure_weight(x)
        pq = space_q.tabulate_cell(c, rule.points)
        pp = space_p.tabulate_cell(c, rule.points)
        Te = np.einsum("g,gi,gj,gk->ijk", w, pq, pp, pp)
        dq = space_q.cell_dofs[c]
        for comp in range(space_p.components):
            dp = space_p.component_dofs(comp)[c]
            ii, jj, kk = np.meshgrid(dq, dp, dp, indexing="ij")
            Is.append(ii.ravel())
            Js.append(jj.ravel())
            Ks.append(kk.ravel())
            Vs.append(Te.ravel())
    I, J, K, V = (np.concatenate(a) for a in (Is, Js, Ks, Vs))
    # merge duplicates deterministically
    key = (I * space_p.ndofs + J) * space_p.ndofs + K
    uk, inv = np.unique(key, return_inverse=True)
    Vm = np.bincount(inv, V, minlength=len(uk))
    Ku = uk % space_p.ndofs
    Ju = (uk // space_p.ndofs) % space_p.ndofs
    Iu = uk // (space_p.ndofs * space_p.ndofs)
    return ConstitutiveTensors(Iu, Ju, Ku, Vm, space_q.ndofs, space_p.ndofs)


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    kind: str
    nq: int
    np_: int
    # quadratic kind (tilde coordinates)
    Q: np.ndarray = None
    center: np.ndarray = None
    grad0: np.ndarray = None
    h0: float = 0.0
    # swe kind (coefficient space)
    G: sp.csr_matrix = None
    tensors: ConstitutiveTensors = None
    kin: float = 1.0
    L_q: np.ndarray = None
    L_p: np.ndarray = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == QUADRATIC:
            Q = np.asarray(self.Q, dtype=float)
            n = self.nq + self.np_
            if Q.shape != (n, n):
                raise ValueError(f"Q has shape {Q.shape}, expected {(n, n)}")
            if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
                raise ValueError("Q must be symmetric")
            object.__setattr__(self, "Q", Q)
        elif self.kind != SWE:
            raise ValueError(f"unknown Hamiltonian kind {self.kind!r}")

    @property
    def n(self) -> int:
        return self.nq + self.np_

    def with_factors(self, L_q, L_p) -> "HamiltonianModel":
        return replace(self, L_q=L_q, L_p=L_p)

    # coefficient <-> tilde conversions (swe kind)
    def _need_factors(self):
        if self.L_q is None or self.L_p is None:
            raise ValueError("model has no Cholesky factors attached; reduce() it first")

    def untilde(self, x):
        self._need_factors()
        xq, xp = x[: self.nq], x[self.nq:]
        a_q = sla.solve_triangular(self.L_q, xq, lower=True, trans="T", check_finite=False)
        a_p = sla.solve_triangular(self.L_p, xp, lower=True, trans="T", check_finite=False)
        return a_q, a_p

    def tilde(self, a_q, a_p):
        self._need_factors()
        return np.concatenate([self.L_q.T @ a_q, self.L_p.T @ a_p])


def quadratic_model(Q, nq: int, center=None, grad0=None, h0: float = 0.0) -> HamiltonianModel:
    return HamiltonianModel(QUADRATIC, nq, np.shape(Q)[0] - nq, Q=Q, center=center,
                            grad0=grad0, h0=h0)


def swe_model(G, tensors: ConstitutiveTensors, kin: float, **params) -> HamiltonianModel:
    return HamiltonianModel(SWE, tensors.nq, tensors.np_, G=sp.csr_matrix(G), tensors=tensors,
                            kin=float(kin), params=dict(params))


def _check(model: HamiltonianModel, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({model.n},)")
    return x


def hamiltonian(model: HamiltonianModel, x) -> float:
    x = _check(model, x)
    if model.kind == QUADRATIC:
        d = x if model.center is None else x - model.center
        H = 0.5 * d @ (model.Q @ d) + model.h0
        if model.grad0 is not None:
            H += model.grad0 @ d
        return float(H)
    a_q, a_p = model.untilde(x)
    pot = 0.5 * a_q @ (model.G @ a_q)
    kin = 0.5 * model.kin * a_q @ model.tensors.quad_p(a_p)
    return float(pot + kin)


def coefficient_gradient(model: HamiltonianModel, a_q, a_p):
    """dH/da_q and dH/da_p in coefficient space (swe kind)."""
    T = model.tensors
    g_q = model.G @ a_q + 0.5 * model.kin * T.quad_p(a_p)
    g_p = model.kin * np.bincount(T.J, T.V * a_q[T.I] * a_p[T.K], minlength=T.np_)
    return g_q, g_p


def gradient(model: HamiltonianModel, x) -> np.ndarray:
    """Co-energy variables [e~_q, e~_p] = dH/dx in tilde coordinates."""
    x = _check(model, x)
    if model.kind == QUADRATIC:
        d = x if model.center is None else x - model.center
        g = model.Q @ d
        return g if model.grad0 is None else g + model.grad0
    a_q, a_p = model.untilde(x)
    g_q, g_p = coefficient_gradient(model, a_q, a_p)
    return np.concatenate([sla.solve_triangular(model.L_q, g_q, lower=True, check_finite=False),
                           sla.solve_triangular(model.L_p, g_p, lower=True, check_finite=False)])


def _sandwich(L1, A, L2):
    """L1^{-1} A L2^{-T} for dense lower-triangular factors."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    X = sla.solve_triangular(L1, A, lower=True, check_finite=False)
    return sla.solve_triangular(L2, X.T, lower=True, check_finite=False).T


def hessian(model: HamiltonianModel, x) -> np.ndarray:
    """Dense Hessian in tilde coordinates."""
    x = _check(model, x)
    if model.kind == QUADRATIC:
        return model.Q.copy()
    a_q, a_p = model.untilde(x)
    T = model.tensors
    Hqq = _sandwich(model.L_q, model.G, model.L_q)
    Hqp = _sandwich(model.L_q, model.kin * T.contract_p(a_p), model.L_p)
    Hpp = _sandwich(model.L_p, model.kin * T.contract_q(a_q), model.L_p)
    H = np.block([[Hqq, Hqp], [Hqp.T, Hpp]])
    return 0.5 * (H + H.T)


def linearize(model: HamiltonianModel, x0, tol: float = 1e-10) -> np.ndarray:
    """Hessian at a stationary state (zero flow, uniform pressure)."""
    x0 = _check(model, x0)
    if model.kind == QUADRATIC:
        return model.Q.copy()
    a_q, a_p = model.untilde(x0)
    g_q, g_p = coefficient_gradient(model, a_q, a_p)
    e_p = sla.cho_solve((model.L_p, True), g_p, check_finite=False)
    e_q = sla.cho_solve((model.L_q, True), g_q, check_finite=False)
    scale = max(np.abs(e_q).max(), 1e-300)
    if np.abs(e_p).max() > tol * max(1.0, np.abs(a_p).max() + np.abs(a_q).max()) or \
            e_q.max() - e_q.min() > tol * scale:
        raise ValueError("linearization point is not a stationary state")
    return hessian(model, x0)


def linearized_model(model: HamiltonianModel, x0) -> HamiltonianModel:
    """Quadratic model tangent to ``model`` at x0 (same value and gradient)."""
    Q = linearize(model, x0)
    return quadratic_model(Q, model.nq, center=np.array(x0, dtype=float),
                           grad0=gradient(model, x0), h0=hamiltonian(model, x0))
