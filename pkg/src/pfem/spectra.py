"""Eigenfrequencies of the linearized closed system and convergence studies.

For a block-diagonal Hessian Q = diag(Q_q, Q_p) with Q_q = C_q C_q^T and
Q_p = C_p C_p^T, the generator S Q is similar to the skew matrix with
off-diagonal block F = C_q^T J C_p, so its eigenvalues are +-i times the
singular values of F. The SVD route keeps the frequencies real and sorted
without pairing complex eigenvalues.
"""
from dataclasses import dataclass, replace
import csv
import math

import numpy as np
import scipy.linalg as sla

from . import constitutive as cst
from .models import ModelConfig, build, reference_omega
from .phcore import ReducedPHS

ZERO_TOL = 1e-8


@dataclass(frozen=True)
class SpectrumResult:
    omegas: np.ndarray  # ascending positive angular frequencies
    omega_ref: float
    dofs: int
    label: str
    n_zero: int  # discarded (near-)zero eigenvalues of S Q

    @property
    def omega1(self) -> float:
        return float(self.omegas[0])

    @property
    def rel_errors(self) -> np.ndarray:
        if self.omega_ref is None or not np.isfinite(self.omega_ref):
            return np.full(len(self.omegas), np.nan)
        return np.abs(self.omegas - self.omega_ref) / self.omega_ref


def generator_eigenvalues(sys: ReducedPHS, Q) -> np.ndarray:
    """All eigenvalues of S Q by a dense nonsymmetric solve (diagnostic route)."""
    return sla.eigvals(sys.structure_matrix() @ np.asarray(Q))


def frequencies(sys: ReducedPHS, Q, zero_tol: float = ZERO_TOL):
    """(ascending nonzero frequencies, number of discarded zero eigenvalues)."""
    Q = np.asarray(Q, dtype=float)
    nq = sys.nq
    Qqp = Q[:nq, nq:]
    if np.abs(Qqp).max(initial=0.0) > 1e-12 * np.abs(Q).max():
        lam = generator_eigenvalues(sys, Q)
        w = np.abs(lam.imag)
        keep = np.abs(lam) >= zero_tol * np.abs(lam).max()
        w = np.sort(w[keep & (lam.imag > 0)])
        return w, len(lam) - 2 * len(w)
    try:
        Cq = sla.cholesky(Q[:nq, :nq], lower=True)
        Cp = sla.cholesky(Q[nq:, nq:], lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"linearized Hessian is not positive definite: {exc}") from None
    F = Cq.T @ sys.J_dense() @ Cp
    try:
        s = sla.svd(F, compute_uv=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        s = sla.svd(F, compute_uv=False, lapack_driver="gesvd")
    if s.size == 0 or s.max() == 0:
        return np.zeros(0), sys.n
    w = np.sort(s[s >= zero_tol * s.max()])
    return w, sys.n - 2 * len(w)


def eigenfrequencies(sys: ReducedPHS, Q, count: int = None, omega_ref: float = None,
                     label: str = "") -> SpectrumResult:
    w, nz = frequencies(sys, Q)
    if count is not None:
        w = w[:count]
    return SpectrumResult(w, omega_ref, sys.n, label, nz)


def spectrum_for(cfg: ModelConfig, count: int = None) -> SpectrumResult:
    """Assemble, reduce, linearize at rest and compute the spectrum."""
    prob = build(cfg)
    x0 = prob.flat_state()
    Q = cst.linearize(prob.model, x0)
    try:
        ref = reference_omega(cfg)
    except ValueError:
        ref = None
    return eigenfrequencies(prob.sys, Q, count, ref, cfg.label)


@dataclass(frozen=True)
class ConvergenceRow:
    label: str
    level: int
    dofs: int
    omega1: float
    ref: float
    rel_error: float
    emp_order: float  # nan on the coarsest level


def _with_level(cfg: ModelConfig, level: int) -> ModelConfig:
    if cfg.model == "swe2d":
        return replace(cfg, nx=level, ny=level)
    if cfg.model == "swe2d-polar":
        return replace(cfg, nr=level, ntheta=2 * level)
    return replace(cfg, n=level)


def convergence_study(base: ModelConfig, pairs, levels) -> list:
    """Relative error of omega_1 for each basis pair over refinement levels.

    ``pairs`` holds (q_order, p_order) or (q_order, p_order, p_continuity).
    """
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("a convergence study needs at least 2 refinement levels")
    rows = []
    for pair in pairs:
        q, p = pair[0], pair[1]
        cont = pair[2] if len(pair) > 2 else None
        prev = None
        for lev in levels:
            cfg = _with_level(replace(base, q_order=q, p_order=p, p_continuity=cont), lev)
            res = spectrum_for(cfg, count=1)
            err = float(res.rel_errors[0])
            order = math.nan
            if prev is not None and err > 0 and prev[1] > 0:
                order = math.log(prev[1] / err) / math.log(lev / prev[0])
            rows.append(ConvergenceRow(cfg.label, lev, res.dofs, res.omega1, res.omega_ref, err, order))
            prev = (lev, err)
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_convergence_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "dofs", "omega1", "ref", "rel_error", "emp_order"])
        for r in rows:
            w.writerow([r.label, r.dofs, _fmt(r.omega1), _fmt(r.ref), _fmt(r.rel_error),
                        _fmt(r.emp_order)])


def write_spectrum_csv(path, res: SpectrumResult) -> None:
    errs = res.rel_errors
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "omega", "rel_error_vs_omega1_ref"])
        for k, om in enumerate(res.omegas):
            w.writerow([k + 1, repr(float(om)), _fmt(float(errs[k])) if k == 0 else ""])
