"""Invariant suite: structure, conservation, gradient and factorization checks.

Every check compares the system under test against an independently rebuilt
reference problem. The flow of the q-equation is taken from the system under
test and the flow of the p-equation from the reference, so a corrupted
interconnection block shows up as a broken power balance instead of being
hidden by a structure matrix that is skew by construction.
"""
from dataclasses import dataclass, field, replace
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import constitutive as cst
from . import phcore
from .assembly import MASS_IBP, MOMENTUM_IBP, Width, assemble_B, assemble_D_1d
from .basis import HERMITE
from .models import ModelConfig, Problem, build

POWER_TOL = 1e-12
FD_TOL = 1e-6
CHOL_TOL = 1e-13
CONS_TOL = 1e-12
SKEW_TOL = 1e-13


def default_models() -> list:
    """Registered models: uniform and variable width 1D (both partitions), 2D, annulus, beam."""
    return [
        ModelConfig(model="swe1d", n=8),
        ModelConfig(model="swe1d-varwidth", n=8, b=[1.0, 0.5], partition=MASS_IBP),
        ModelConfig(model="swe1d-varwidth", n=8, b=[1.0, 0.5], partition=MOMENTUM_IBP, p_order=1),
        ModelConfig(model="swe2d", nx=4, ny=4),
        ModelConfig(model="swe2d-polar", nr=4, ntheta=8),
        ModelConfig(model="beam", n=8),
    ]


@dataclass
class VerifyConfig:
    seed: int = 42
    nstates: int = 100
    nfd: int = 20
    models: list = field(default_factory=default_models)


@dataclass(frozen=True)
class CheckResult:
    name: str
    model: str
    passed: bool
    value: float
    tol: float


@dataclass
class VerificationReport:
    seed: int
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def add(self, name, model, value, tol, passed=None):
        ok = bool(value <= tol) if passed is None else bool(passed)
        self.results.append(CheckResult(name, model, ok, float(value), float(tol)))

    def failures(self) -> list:
        return [r for r in self.results if not r.passed]

    def to_text(self) -> str:
        lines = [f"seed {self.seed}"]
        for r in self.results:
            lines.append(f"{'PASS' if r.passed else 'FAIL'} {r.name:<16s} {r.model:<28s} "
                         f"value={r.value:.3e} tol={r.tol:.1e}")
        lines.append(f"overall {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def to_keyvalue(self) -> str:
        lines = [f"seed={self.seed}"]
        for r in self.results:
            key = f"{r.name}.{r.model}"
            lines += [f"{key}.status={'pass' if r.passed else 'fail'}",
                      f"{key}.value={r.value!r}", f"{key}.tol={r.tol!r}"]
        lines.append(f"overall={'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"

    def write(self, outdir) -> list:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = [outdir / "verify.txt", outdir / "verify.kv"]
        paths[0].write_text(self.to_text() + "\n")
        paths[1].write_text(self.to_keyvalue())
        return paths


def model_key(cfg: ModelConfig) -> str:
    key = f"{cfg.model}-{cfg.label}"
    if cfg.model == "swe1d-varwidth":
        key += f"-{cfg.partition}"
    if cfg.hamiltonian != "swe":
        key += f"-{cfg.hamiltonian}"
    return key


def corrupt_d(prob: Problem) -> Problem:
    """Copy of ``prob`` with the sign of the largest entry of D flipped (mutation test)."""
    D = prob.ops.D.tocoo(copy=True)
    k = int(np.argmax(np.abs(D.data)))
    D.data[k] = -D.data[k]
    ops = replace(prob.ops, D=D.tocsr())
    return replace(prob, ops=ops, sys=phcore.reduce(ops, prob.model))


def random_state(prob: Problem, rng) -> np.ndarray:
    """Perturbed rest state with O(1) relative height changes and O(1 m/s) velocities."""
    sys = prob.sys
    if prob.model.kind == cst.QUADRATIC and "G" not in prob.extras:
        return rng.standard_normal(sys.n)
    cfg = prob.config
    x0 = prob.flat_state()
    if prob.model.kind == cst.QUADRATIC:
        return x0 + rng.standard_normal(sys.n)
    a_q, _ = prob.model.untilde(x0)
    a_q = a_q * (1.0 + 0.2 * rng.standard_normal(sys.nq))
    a_p = cfg.rho * cfg.h0 * rng.standard_normal(sys.np_)
    return prob.model.tilde(a_q, a_p)


def power_residuals(test: Problem, ref: Problem, rng, nstates: int) -> float:
    """max |e~^T f - y^T u| / (|H| + |y^T u|) over random states and inputs."""
    st, sr = test.sys, ref.sys
    worst = 0.0
    for _ in range(nstates):
        x = random_state(ref, rng)
        u = rng.standard_normal(st.nb)
        e = phcore.gradient(st, x)
        fq = phcore.rhs_from_effort(st, e, u)[: st.nq]
        fp = phcore.rhs_from_effort(sr, e, u)[sr.nq:]
        y, _ = phcore.output_from_effort(st, e)
        H = phcore.hamiltonian(st, x)
        res = e[: st.nq] @ fq + e[st.nq:] @ fp - y @ u
        worst = max(worst, abs(res) / (abs(H) + abs(y @ u)))
    return worst


def skew_defect(test: Problem, ref: Problem) -> float:
    """||S + S^T|| / ||S|| where S pairs the tested q-row block with the reference p-row block."""
    Dt = test.ops.D.toarray()
    Dr = ref.ops.D.toarray()
    return float(np.abs(Dt - Dr).max() / max(np.abs(Dr).max(), 1e-300))


def gradient_fd_error(prob: Problem, rng, nstates: int) -> float:
    """max relative error of the gradient against componentwise central differences."""
    sys = prob.sys
    worst = 0.0
    for _ in range(nstates):
        x = random_state(prob, rng)
        g = phcore.gradient(sys, x)
        fd = np.empty(sys.n)
        h = 1e-6 * max(1.0, np.abs(x).max())
        for i in range(sys.n):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd[i] = (phcore.hamiltonian(sys, xp) - phcore.hamiltonian(sys, xm)) / (2 * h)
        worst = max(worst, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-300))
    return worst


def conservation_defect(prob: Problem) -> float:
    """Discrete volume balance: 1^T D equals the boundary flux term (zero for the mass partition)."""
    ops = prob.ops
    one = _constant_one(prob.space_q)
    lhs = one @ ops.D
    if ops.partition == MOMENTUM_IBP:
        # D = -int phi_q (b phi_p)': the constant test function sees only the end values
        rhs = np.asarray(ops.B @ np.ones(ops.B.shape[1])).ravel()
    else:
        rhs = np.zeros(ops.D.shape[1])
    return float(np.abs(lhs - rhs).max() / max(abs(ops.D).max(), 1e-300))


def _constant_one(space) -> np.ndarray:
    """Coefficients of the constant function 1 (value dofs only for hermite spaces)."""
    if space.family.kind == HERMITE:
        one = np.zeros(space.ndofs)
        one[space.cell_dofs[:, [0, 2]].ravel()] = 1.0
        return one
    return space.interpolate(lambda x: np.ones(len(x)))


def cholesky_defect(prob: Problem) -> float:
    sys = prob.sys
    worst = 0.0
    for L, M in ((sys.L_q, prob.ops.M_q), (sys.L_p, prob.ops.M_p)):
        Md = M.toarray()
        worst = max(worst, np.abs(L @ L.T - Md).max() / np.abs(Md).max())
    return worst


def width_consistency(cfg: ModelConfig) -> float:
    """Number of entries where b(z)=b0 differs from b0 times the uniform operators (must be 0)."""
    prob = build(replace(cfg, b=1.0))
    b0 = float(np.atleast_1d(cfg.b)[0])
    sq, sp_ = prob.space_q, prob.space_p
    bad = 0
    for b in (Width([b0]), Width(b0), Width(lambda z: np.full(np.shape(z), b0), lambda z: 0 * z)):
        D = assemble_D_1d(sq, sp_, b, cfg.partition, cfg.npoints)
        Du = b0 * assemble_D_1d(sq, sp_, 1.0, cfg.partition, cfg.npoints)
        space = sq if cfg.partition == MASS_IBP else sp_
        B = assemble_B(space, model="swe1d", b=b)
        Bu = b0 * assemble_B(space, model="swe1d", b=1.0)
        bad += int((abs(D - Du) > 0).nnz) + int(np.count_nonzero(_dense(B) != _dense(Bu)))
    return float(bad)


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def check_model(report: VerificationReport, cfg: ModelConfig, rng, vcfg: VerifyConfig,
                mutate=None) -> None:
    key = model_key(cfg)
    ref = build(cfg)
    test = build(cfg) if mutate is None else mutate(build(cfg))
    report.add("skew_symmetry", key, skew_defect(test, ref), SKEW_TOL)
    report.add("power_residual", key, power_residuals(test, ref, rng, vcfg.nstates), POWER_TOL)
    report.add("gradient_fd", key, gradient_fd_error(test, rng, vcfg.nfd), FD_TOL)
    report.add("conservation", key, conservation_defect(test), CONS_TOL)
    report.add("cholesky", key, cholesky_defect(test), CHOL_TOL)
    if cfg.model == "swe1d-varwidth":
        report.add("width_b0", key, width_consistency(replace(cfg, b=2.5)), 0.0)


def run_all(config: VerifyConfig = None, mutate=None) -> VerificationReport:
    """Run every check on every registered model; failures are report entries."""
    config = config or VerifyConfig()
    rng = np.random.default_rng(config.seed)
    report = VerificationReport(config.seed)
    for cfg in config.models:
        try:
            check_model(report, cfg, rng, config, mutate)
        except (ValueError, np.linalg.LinAlgError) as exc:
            report.add(f"build:{type(exc).__name__}", model_key(cfg), math.inf, 0.0, passed=False)
    return report
