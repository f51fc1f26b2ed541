"""Model builders: mesh + spaces + operators + Hamiltonian + reduced system.

Families: swe1d, swe1d-varwidth (mass or momentum partition), swe2d (unit
square by default), swe2d-polar (annulus) and beam (Euler-Bernoulli).
"""
from dataclasses import dataclass, field, fields
import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import constitutive as cst
from . import phcore
from .assembly import (MASS_IBP, MOMENTUM_IBP, AssembledOperators, Width, assemble_B,
                       assemble_D_1d, assemble_D_2d, assemble_D_beam, assemble_mass,
                       assemble_Mpsi)
from .basis import HERMITE, LAGRANGE, BasisFamily
from .mesh import (BoundarySpace, annulus_mesh, build_space, dof_coords, interval_mesh,
                   rect_mesh)

MODELS = ("swe1d", "swe1d-varwidth", "swe2d", "swe2d-polar", "beam")


@dataclass
class ModelConfig:
    model: str = "swe1d"
    # geometry
    L: float = 1.0
    Lx: float = 1.0
    Ly: float = 1.0
    R: float = 1.0
    r_in: float = None  # default 1e-2 * R
    # resolution
    n: int = 16
    nx: int = 8
    ny: int = 8
    nr: int = 8
    ntheta: int = 16
    # bases
    q_order: int = 1
    p_order: int = None  # default: 0 in 1D, q_order in 2D, 1 for the beam x2-space
    p_continuity: str = None  # default: discontinuous (continuous for the momentum partition)
    npoints: int = None
    partition: str = MASS_IBP
    boundary_basis: str = "trace"  # or "fourier" (polar only)
    fourier_modes: int = 4
    # physics
    rho: float = 1000.0
    g: float = 9.81
    b: object = 1.0  # scalar or ascending polynomial coefficients
    h0: float = 1.0
    hamiltonian: str = "swe"  # or "quadratic": H = 1/2 |x~|^2

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.partition not in (MASS_IBP, MOMENTUM_IBP):
            raise ValueError(f"partition must be 'mass' or 'momentum', got {self.partition!r}")
        if self.partition == MOMENTUM_IBP and self.model != "swe1d-varwidth":
            raise ValueError("the momentum partition is only available for swe1d-varwidth")
        if self.hamiltonian not in ("swe", "quadratic"):
            raise ValueError(f"hamiltonian must be 'swe' or 'quadratic', got {self.hamiltonian!r}")
        for k in ("L", "Lx", "Ly", "R", "rho", "g", "h0"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if self.p_order is None:
            # 2D: equal order (Q1/Q0 carries a spurious checkerboard pressure mode)
            self.p_order = {"beam": 1, "swe2d": self.q_order, "swe2d-polar": self.q_order}.get(self.model, 0)
        if self.r_in is None:
            self.r_in = 1e-2 * self.R
        if self.p_continuity is None:
            self.p_continuity = "continuous" if self.partition == MOMENTUM_IBP else "discontinuous"
        if self.p_continuity not in ("continuous", "discontinuous"):
            raise ValueError(f"p_continuity must be continuous or discontinuous")
        if self.model != "beam" and self.q_order < 1:
            raise ValueError("q_order must be >= 1 (the q-basis is differentiated)")
        if self.p_order < 0:
            raise ValueError("p_order must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        bad = sorted(set(d) - names)
        if bad:
            raise KeyError(f"unknown model keys: {', '.join(bad)}")
        return cls(**d)

    @property
    def label(self) -> str:
        if self.model == "beam":
            return f"H3P{self.p_order}"
        if self.model.startswith("swe2d"):
            return f"Q{self.q_order}Q{self.p_order}Q{self.p_order}"
        return f"P{self.q_order}P{self.p_order}"


@dataclass(eq=False)
class Problem:
    config: ModelConfig
    mesh: object
    space_q: object
    space_p: object
    bspace: object
    ops: AssembledOperators
    model: cst.HamiltonianModel
    sys: phcore.ReducedPHS
    width: Width = None
    extras: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    def flat_state(self) -> np.ndarray:
        """Rest state: uniform pressure rho g h0, zero flow (exactly stationary)."""
        cfg = self.config
        if self.config.model == "beam" or self.model.kind == cst.QUADRATIC and "G" not in self.extras:
            return np.zeros(self.sys.n)
        G = self.extras["G"]
        Mq = self.ops.M_q
        rhs = cfg.rho * cfg.g * cfg.h0 * (Mq @ np.ones(Mq.shape[0]))
        a_q = spla.spsolve(sp.csc_matrix(G), rhs)
        a_p = np.zeros(self.sys.np_)
        return np.concatenate([self.sys.L_q.T @ a_q, self.sys.L_p.T @ a_p])

    def untilde(self, x):
        a_q = sla.solve_triangular(self.sys.L_q, x[: self.sys.nq], lower=True, trans="T", check_finite=False)
        a_p = sla.solve_triangular(self.sys.L_p, x[self.sys.nq:], lower=True, trans="T", check_finite=False)
        return a_q, a_p

    def tilde(self, a_q, a_p):
        return np.concatenate([self.sys.L_q.T @ a_q, self.sys.L_p.T @ a_p])

    def port_coords(self) -> np.ndarray:
        return self.bspace.node_coords()

    def node_coords(self) -> np.ndarray:
        return self.mesh.vertex_coords()

    def fields_at_nodes(self, x) -> np.ndarray:
        """Columns h, u[, v] at the mesh vertices (physical height and velocity)."""
        cfg = self.config
        a_q, a_p = self.untilde(np.asarray(x))
        pts = self.node_coords()
        q = evaluate(self.space_q, a_q, pts)
        comps = [evaluate(self.space_p, a_p[k * self.space_p.nscalar:(k + 1) * self.space_p.nscalar], pts)
                 for k in range(self.space_p.components)]
        if self.dim == 1:
            bz = self.width(pts[:, 0])
            h = q / bz
            if cfg.model == "swe1d-varwidth":
                u = comps[0] / (cfg.rho * bz)
            else:
                u = comps[0] / cfg.rho
            return np.column_stack([h, u])
        return np.column_stack([q] + [c / cfg.rho for c in comps])


def _locate(mesh, pts):
    """Cell index and reference coordinates of each point (structured grids)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, mesh.dim)
    idx, ref = [], []
    for ax in range(mesh.dim):
        nodes = mesh.axes[ax]
        ncell = mesh.shape[ax]
        if mesh.periodic[ax]:
            ext = np.append(nodes, nodes[0] + mesh.lengths[ax])
            v = np.mod(pts[:, ax] - nodes[0], mesh.lengths[ax]) + nodes[0]
        else:
            ext, v = nodes, pts[:, ax]
        i = np.clip(np.searchsorted(ext, v, side="right") - 1, 0, ncell - 1)
        a, b = ext[i], ext[i + 1]
        idx.append(i)
        ref.append(2 * (v - a) / (b - a) - 1)
    if mesh.dim == 1:
        cells = idx[0]
    else:
        cells = idx[0] + mesh.shape[0] * idx[1]
    return cells, np.clip(np.column_stack(ref), -1.0, 1.0)


def evaluate(space, coef, pts, deriv: int = 0) -> np.ndarray:
    """Point values of a scalar finite element field (first component layout)."""
    cells, ref = _locate(space.mesh, pts)
    out = np.empty(len(cells))
    for c in np.unique(cells):
        m = cells == c
        phi = space.tabulate_cell(int(c), ref[m], deriv)
        out[m] = phi @ coef[space.cell_dofs[c]]
    return out


def _spaces_1d(cfg, mesh):
    q = build_space(mesh, BasisFamily(LAGRANGE, cfg.q_order, 1))
    p = build_space(mesh, BasisFamily(LAGRANGE, cfg.p_order, 1), cfg.p_continuity)
    return q, p


def _finish(cfg, mesh, space_q, space_p, bspace, ops, G, tensors, kin, width=None):
    if cfg.hamiltonian == "quadratic":
        model = cst.quadratic_model(np.eye(space_q.ndofs + space_p.ndofs), space_q.ndofs)
        extras = {"G": G} if G is not None else {}
    else:
        model = cst.swe_model(G, tensors, kin, rho=cfg.rho, g=cfg.g)
        extras = {"G": G}
    sys = phcore.reduce(ops, model)
    return Problem(cfg, mesh, space_q, space_p, bspace, ops, sys.model, sys, width, extras)


def build_swe1d(cfg: ModelConfig) -> Problem:
    mesh = interval_mesh(cfg.L, cfg.n)
    space_q, space_p = _spaces_1d(cfg, mesh)
    width = Width(cfg.b)
    varwidth = cfg.model == "swe1d-varwidth"
    if not varwidth and np.ndim(cfg.b) != 0:
        raise ValueError("swe1d needs a scalar width; use swe1d-varwidth for b(z)")
    npts = cfg.npoints
    Mq = assemble_mass(space_q, npoints=npts)
    Mp = assemble_mass(space_p, npoints=npts)
    bspace = BoundarySpace(space_q, kind="points")
    if cfg.partition == MASS_IBP:
        D = assemble_D_1d(space_q, space_p, width, MASS_IBP, npts)
        B = assemble_B(space_q, model="swe1d", b=width)
        input_on = "q"
    else:
        D = assemble_D_1d(space_q, space_p, width, MOMENTUM_IBP, npts)
        B = assemble_B(space_p, model="swe1d", b=width)
        input_on = "p"
    ops = AssembledOperators(Mq, Mp, D, B, assemble_Mpsi(bspace), cfg.partition, cfg.model, input_on)
    # potential density rho g q^2 / (2b); kinetic q p^2 / (2 rho) (times 1/b^2 with p = rho b u)
    G = assemble_mass(space_q, lambda x: cfg.rho * cfg.g / width(x[:, 0]), npts)
    kweight = (lambda x: 1.0 / width(x[:, 0]) ** 2) if varwidth else None
    tensors = cst.precompute_tensors(space_q, space_p, kweight, npts)
    return _finish(cfg, mesh, space_q, space_p, bspace, ops, G, tensors, 1.0 / cfg.rho, width)


def build_swe2d(cfg: ModelConfig) -> Problem:
    if cfg.model == "swe2d":
        mesh = rect_mesh(cfg.Lx, cfg.Ly, cfg.nx, cfg.ny)
        sides = ()
        kind = "trace"
        if cfg.boundary_basis != "trace":
            raise ValueError("cartesian meshes support only the trace boundary basis")
    else:
        mesh = annulus_mesh(cfg.r_in, cfg.R, cfg.nr, cfg.ntheta)
        sides = ("outer",)
        kind = cfg.boundary_basis
    space_q = build_space(mesh, BasisFamily(LAGRANGE, cfg.q_order, 2))
    space_p = build_space(mesh, BasisFamily(LAGRANGE, cfg.p_order, 2), cfg.p_continuity, 2)
    bspace = BoundarySpace(space_q, kind=kind, sides=sides, modes=cfg.fourier_modes)
    npts = cfg.npoints
    Mq = assemble_mass(space_q, npoints=npts)
    Mp = assemble_mass(space_p, npoints=npts)
    D = assemble_D_2d(space_q, space_p, npts)
    B = assemble_B(space_q, bspace, cfg.model, npoints=npts)
    ops = AssembledOperators(Mq, Mp, D, B, assemble_Mpsi(bspace, npts), MASS_IBP, cfg.model, "q")
    G = (cfg.rho * cfg.g) * Mq
    tensors = cst.precompute_tensors(space_q, space_p, None, npts)
    return _finish(cfg, mesh, space_q, space_p, bspace, ops, G, tensors, 1.0 / cfg.rho, Width(1.0))


def build_beam(cfg: ModelConfig) -> Problem:
    mesh = interval_mesh(cfg.L, cfg.n)
    space_1 = build_space(mesh, BasisFamily(HERMITE, 3, 1))
    space_2 = build_space(mesh, BasisFamily(LAGRANGE, cfg.p_order, 1), cfg.p_continuity)
    npts = cfg.npoints
    M1 = assemble_mass(space_1, npoints=npts)
    M2 = assemble_mass(space_2, npoints=npts)
    # stored with the [[0, D], [-D^T, 0]] convention: M1 x1' = -(int phi1'' phi2^T) e2 + B u
    D = -assemble_D_beam(space_1, space_2, npts)
    B = assemble_B(space_1, model="beam")
    ops = AssembledOperators(M1, M2, D.tocsr(), B, sp.identity(4, format="csr"), MASS_IBP, "beam", "q")
    model = cst.quadratic_model(np.eye(space_1.ndofs + space_2.ndofs), space_1.ndofs)
    sys = phcore.reduce(ops, model)
    bspace = _BeamPorts(cfg.L)
    return Problem(cfg, mesh, space_1, space_2, bspace, ops, sys.model, sys, Width(1.0))


class _BeamPorts:
    """Port layout of the beam: (e2(L), e2(0), e2'(L), e2'(0))."""

    size = 4

    def __init__(self, L):
        self.L = L

    def node_coords(self):
        return np.array([[self.L], [0.0], [self.L], [0.0]])


def build(cfg) -> Problem:
    if isinstance(cfg, dict):
        cfg = ModelConfig.from_dict(cfg)
    if cfg.model in ("swe1d", "swe1d-varwidth"):
        return build_swe1d(cfg)
    if cfg.model in ("swe2d", "swe2d-polar"):
        return build_swe2d(cfg)
    return build_beam(cfg)


def reference_omega(cfg: ModelConfig) -> float:
    """Analytic first nonzero angular frequency of the linear closed system."""
    if cfg.model == "beam":
        return BEAM_BETA1 ** 2 / cfg.L ** 2
    c = math.sqrt(cfg.g * cfg.h0)
    if cfg.model == "swe2d":
        return c * math.pi / max(cfg.Lx, cfg.Ly)
    if cfg.model == "swe2d-polar":
        raise ValueError("no reference frequency implemented for the annulus")
    return c * math.pi / cfg.L


def _free_free_root() -> float:
    from scipy.optimize import brentq

    return brentq(lambda b: math.cos(b) * math.cosh(b) - 1.0, 4.0, 5.0, xtol=1e-15)


BEAM_BETA1 = _free_free_root()
