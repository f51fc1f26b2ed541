"""Explicit finite-dimensional port-Hamiltonian system in Cholesky (tilde) coordinates.

With M_q = L_q L_q^T and M_p = L_p L_p^T the dynamics read

    d/dt x_q =  J e_p + B~ u          J = L_q^{-1} D L_p^{-T}
    d/dt x_p = -J^T e_q               B~ = L_q^{-1} B
    y = B~^T e_q,  y_hat = M_psi^{-1} y

(for the momentum partition the input enters the p block instead).
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import constitutive as cst
from .assembly import AssembledOperators

DENSE_LIMIT = 2000


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


def _cholesky(M, name):
    A = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    try:
        return sla.cholesky(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite: {exc}") from None


@dataclass(frozen=True, eq=False)
class ReducedPHS:
    ops: AssembledOperators
    model: cst.HamiltonianModel
    L_q: np.ndarray
    L_p: np.ndarray
    Bt: np.ndarray  # L^{-1} B for the block carrying the input
    J: np.ndarray  # dense J~, or None above DENSE_LIMIT
    M_psi_lu: tuple

    @property
    def nq(self) -> int:
        return self.L_q.shape[0]

    @property
    def np_(self) -> int:
        return self.L_p.shape[0]

    @property
    def n(self) -> int:
        return self.nq + self.np_

    @property
    def nb(self) -> int:
        return self.Bt.shape[1]

    @property
    def input_on(self) -> str:
        return self.ops.input_on

    def J_apply(self, v):
        if self.J is not None:
            return self.J @ v
        w = sla.solve_triangular(self.L_p, v, lower=True, trans="T", check_finite=False)
        return sla.solve_triangular(self.L_q, self.ops.D @ w, lower=True, check_finite=False)

    def JT_apply(self, v):
        if self.J is not None:
            return self.J.T @ v
        w = sla.solve_triangular(self.L_q, v, lower=True, trans="T", check_finite=False)
        return sla.solve_triangular(self.L_p, self.ops.D.T @ w, lower=True, check_finite=False)

    def J_dense(self) -> np.ndarray:
        if self.J is not None:
            return self.J
        return cst._sandwich(self.L_q, self.ops.D, self.L_p)

    def structure_matrix(self) -> np.ndarray:
        """Dense [[0, J], [-J^T, 0]]."""
        J = self.J_dense()
        Z = np.zeros
        return np.block([[Z((self.nq, self.nq)), J], [-J.T, Z((self.np_, self.np_))]])

    def volume_weights(self) -> np.ndarray:
        """c with V = c . x_q (integral of the q field)."""
        return self.L_q.T @ np.ones(self.nq)

    def volume(self, x) -> float:
        return float(self.volume_weights() @ np.asarray(x)[: self.nq])


def reduce(ops: AssembledOperators, model: cst.HamiltonianModel) -> ReducedPHS:
    L_q = _cholesky(ops.M_q, "M_q")
    L_p = _cholesky(ops.M_p, "M_p")
    nq, np_ = L_q.shape[0], L_p.shape[0]
    if ops.D.shape != (nq, np_):
        raise ValueError(f"D has shape {ops.D.shape}, expected {(nq, np_)}")
    if (model.nq, model.np_) != (nq, np_):
        raise ValueError("Hamiltonian dimensions do not match the operators")
    Bd = ops.B.toarray() if sp.issparse(ops.B) else np.asarray(ops.B, dtype=float)
    Lb = L_q if ops.input_on == "q" else L_p
    if Bd.shape[0] != Lb.shape[0]:
        raise ValueError(f"B has {Bd.shape[0]} rows, expected {Lb.shape[0]}")
    Bt = sla.solve_triangular(Lb, Bd, lower=True, check_finite=False)
    J = cst._sandwich(L_q, ops.D, L_p) if nq + np_ <= DENSE_LIMIT else None
    Mpsi = ops.M_psi.toarray() if sp.issparse(ops.M_psi) else np.asarray(ops.M_psi, dtype=float)
    if Mpsi.shape != (Bd.shape[1],) * 2:
        raise ValueError("M_psi does not match the number of boundary inputs")
    lu = sla.lu_factor(Mpsi)
    if model.kind == cst.SWE:
        model = model.with_factors(L_q, L_p)
    return ReducedPHS(ops, model, L_q, L_p, Bt, J, lu)


def _split(sys, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({sys.n},)")
    return x


def _input(sys, u):
    if u is None:
        return np.zeros(sys.nb)
    u = np.asarray(u, dtype=float)
    if u.shape != (sys.nb,):
        raise ValueError(f"input has shape {u.shape}, expected ({sys.nb},)")
    return u


def hamiltonian(sys: ReducedPHS, x) -> float:
    return cst.hamiltonian(sys.model, _split(sys, x))


def gradient(sys: ReducedPHS, x) -> np.ndarray:
    return cst.gradient(sys.model, _split(sys, x))


def rhs_from_effort(sys: ReducedPHS, e, u=None) -> np.ndarray:
    """Structure applied to a given effort vector (linear in e and u)."""
    u = _input(sys, u)
    e_q, e_p = e[: sys.nq], e[sys.nq:]
    fq = sys.J_apply(e_p)
    fp = -sys.JT_apply(e_q)
    if sys.input_on == "q":
        fq = fq + sys.Bt @ u
    else:
        fp = fp + sys.Bt @ u
    return np.concatenate([fq, fp])


def rhs(sys: ReducedPHS, x, u=None) -> np.ndarray:
    return rhs_from_effort(sys, gradient(sys, x), u)


def output_from_effort(sys: ReducedPHS, e):
    eb = e[: sys.nq] if sys.input_on == "q" else e[sys.nq:]
    y = sys.Bt.T @ eb
    return y, sla.lu_solve(sys.M_psi_lu, y)


def output(sys: ReducedPHS, x):
    """(y, y_hat): integrated and pointwise boundary outputs."""
    return output_from_effort(sys, gradient(sys, _split(sys, x)))


def power_residual(sys: ReducedPHS, x, u=None) -> float:
    """dH/dt - y^T u, zero up to rounding for any state and input."""
    u = _input(sys, u)
    e = gradient(sys, _split(sys, x))
    y, _ = output_from_effort(sys, e)
    return float(e @ rhs_from_effort(sys, e, u) - y @ u)


def jacobian(sys: ReducedPHS, x) -> np.ndarray:
    """d rhs / dx = S Hess(H) (dense), independent of the input."""
    Hs = cst.hessian(sys.model, _split(sys, x))
    J = sys.J_dense()
    return np.vstack([J @ Hs[sys.nq:], -J.T @ Hs[: sys.nq]])
