"""Assembly of the mass, interconnection and boundary matrices.

All integrals are computed element by element with tensor Gauss rules and
accumulated in a fixed cell order, so repeated assembly is bit-identical.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .basis import HERMITE, default_npoints, gauss_rule, tabulate
from .mesh import POLAR, BoundarySpace, FESpace

MASS_IBP = "mass"
MOMENTUM_IBP = "momentum"


@dataclass(frozen=True, eq=False)
class AssembledOperators:
    """Matrices of the projected Dirac structure.

    ``D`` is always stored so that the interconnection reads [[0, D], [-D^T, 0]].
    ``input_on`` says which block the input enters: 'q' (B is N_q x N_b) or 'p'.
    """

    M_q: sp.csr_matrix
    M_p: sp.csr_matrix
    D: sp.csr_matrix
    B: sp.csr_matrix
    M_psi: sp.csr_matrix
    partition: str = MASS_IBP
    model: str = ""
    input_on: str = "q"

    @property
    def shapes(self) -> dict:
        return {k: getattr(self, k).shape for k in ("M_q", "M_p", "D", "B", "M_psi")}

    def export(self, outdir) -> list:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name in ("M_q", "M_p", "D", "B", "M_psi"):
            p = outdir / f"{name}.coo"
            write_coo(p, getattr(self, name))
            paths.append(p)
        return paths


def write_coo(path, A) -> None:
    """Plain-text coordinate format: ``rows cols nnz`` then ``i j value`` lines (0-based)."""
    A = sp.coo_matrix(A)
    A.sum_duplicates()
    order = np.lexsort((A.col, A.row))
    lines = [f"{A.shape[0]} {A.shape[1]} {A.nnz}"]
    for i, j, v in zip(A.row[order], A.col[order], A.data[order]):
        lines.append(f"{i} {j} {float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        rows, cols, nnz = (int(t) for t in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    if len(data) != nnz:
        raise ValueError(f"{path}: header says {nnz} entries, found {len(data)}")
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=(rows, cols))


def _npoints(spaces, npoints):
    if npoints is not None:
        if npoints < 1:
            raise ValueError(f"npoints must be >= 1, got {npoints}")
        return int(npoints)
    return default_npoints(max(s.family.order for s in spaces))


def _same_mesh(*spaces):
    m = spaces[0].mesh
    for s in spaces[1:]:
        if s.mesh is not m:
            raise ValueError("spaces are defined on different meshes")


def _cell_rule(space: FESpace, c: int, rule):
    """Physical points and weights (Jacobian included, geometric factor excluded)."""
    mesh = space.mesh
    _, size = mesh.cell_bounds(c)
    x = mesh.to_physical(c, rule.points)
    return x, rule.weights * np.prod(size / 2)


def _eval_weight(weight, x):
    if weight is None:
        return np.ones(len(x))
    if callable(weight):
        w = np.asarray(weight(x), dtype=float)
        return np.broadcast_to(w, (len(x),)).copy()
    return np.full(len(x), float(weight))


def _to_csr(rows, cols, vals, shape):
    if rows:
        r, c, v = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        r = c = np.zeros(0, int)
        v = np.zeros(0)
    A = sp.coo_matrix((v, (r, c)), shape=shape).tocsr()
    A.sum_duplicates()
    return A


def _block_components(A: sp.spmatrix, ncomp: int) -> sp.csr_matrix:
    return sp.block_diag([A] * ncomp, format="csr") if ncomp > 1 else sp.csr_matrix(A)


def assemble_mass(space: FESpace, weight=None, npoints=None) -> sp.csr_matrix:
    """M_ij = int phi_i phi_j * weight, times the geometric measure factor (r on polar meshes).

    Vector spaces get the block-diagonal component layout.
    """
    n = _npoints([space], npoints)
    rule = gauss_rule(n, space.mesh.dim)
    rows, cols, vals = [], [], []
    for c in range(space.mesh.ncells):
        x, wq = _cell_rule(space, c, rule)
        wt = _eval_weight(weight, x)
        if np.any(wt <= 0):
            raise ValueError("mass-matrix weight must be strictly positive")
        w = wq * wt * space.mesh.measure_weight(x)
        phi = space.tabulate_cell(c, rule.points)
        Me = phi.T @ (w[:, None] * phi)
        d = space.cell_dofs[c]
        rows.append(np.repeat(d, len(d)))
        cols.append(np.tile(d, len(d)))
        vals.append(Me.ravel())
    M = _to_csr(rows, cols, vals, (space.nscalar, space.nscalar))
    return _block_components(M, space.components)


class Width:
    """Channel width b(z) with its derivative.

    Accepts a scalar, a sequence of ascending polynomial coefficients, a
    numpy Polynomial, or a callable (then ``deriv`` must be given when needed).
    """

    def __init__(self, b=1.0, deriv=None):
        if isinstance(b, Width):
            self.f, self.df = b.f, b.df
            return
        if callable(b) and not isinstance(b, np.polynomial.Polynomial):
            self.f, self.df = b, deriv
            return
        if np.isscalar(b):
            b = [float(b)]
        P = b if isinstance(b, np.polynomial.Polynomial) else np.polynomial.Polynomial(b)
        self.f, self.df = P, P.deriv()

    def __call__(self, z):
        return np.broadcast_to(np.asarray(self.f(z), dtype=float), np.shape(z)).astype(float)

    def deriv(self, z):
        if self.df is None:
            raise ValueError("width derivative required for the momentum partition")
        return np.broadcast_to(np.asarray(self.df(z), dtype=float), np.shape(z)).astype(float)


def _constant_value(width: Width, space, rule, need_deriv: bool):
    """The common value of b at every quadrature point (and node), or None."""
    mesh = space.mesh
    pts = [mesh.to_physical(c, rule.points)[:, 0] for c in range(mesh.ncells)]
    z = np.concatenate(pts + [np.array([0.0, mesh.lengths[0]])])
    bz = width(z)
    if not np.all(bz == bz[0]):
        return None
    if need_deriv and width.df is not None and np.any(width.deriv(z) != 0):
        return None
    return float(bz[0])


def assemble_D_1d(space_q: FESpace, space_p: FESpace, b=1.0, partition: str = MASS_IBP,
                  npoints=None) -> sp.csr_matrix:
    """Mass partition: int b phi_q' phi_p^T. Momentum partition: -int phi_q (b phi_p^T)'.

    A width that is constant on every quadrature point is factored out, so the
    result is exactly b0 times the unit-width matrix.
    """
    _same_mesh(space_q, space_p)
    if space_q.mesh.dim != 1:
        raise ValueError("assemble_D_1d needs 1D spaces")
    if partition not in (MASS_IBP, MOMENTUM_IBP):
        raise ValueError(f"unknown partition {partition!r}")
    if partition == MOMENTUM_IBP and space_p.family.kind != HERMITE and space_p.family.order == 0:
        raise ValueError("momentum partition differentiates the p-basis; P0 is not admissible")
    if partition == MOMENTUM_IBP and not space_p.continuous:
        raise ValueError("momentum partition needs a continuous p-space")
    if partition == MASS_IBP and space_q.family.order == 0:
        raise ValueError("mass partition differentiates the q-basis; P0 is not admissible")
    width = Width(b)
    n = _npoints([space_q, space_p], npoints)
    rule = gauss_rule(n, 1)
    b0 = _constant_value(width, space_q, rule, partition == MOMENTUM_IBP)
    if b0 is not None and b0 != 1.0:
        return (b0 * assemble_D_1d(space_q, space_p, 1.0, partition, n)).tocsr()
    rows, cols, vals = [], [], []
    for c in range(space_q.mesh.ncells):
        x, wq = _cell_rule(space_q, c, rule)
        z = x[:, 0]
        bz = np.ones_like(z) if b0 is not None else width(z)
        if partition == MASS_IBP:
            dq = space_q.tabulate_cell(c, rule.points, 1)
            pp = space_p.tabulate_cell(c, rule.points, 0)
            De = dq.T @ ((wq * bz)[:, None] * pp)
        else:
            dbz = np.zeros_like(z) if b0 is not None else width.deriv(z)
            pq = space_q.tabulate_cell(c, rule.points, 0)
            pp = space_p.tabulate_cell(c, rule.points, 0)
            dp = space_p.tabulate_cell(c, rule.points, 1)
            De = -(pq.T @ (wq[:, None] * (dbz[:, None] * pp + bz[:, None] * dp)))
        dq_, dp_ = space_q.cell_dofs[c], space_p.cell_dofs[c]
        rows.append(np.repeat(dq_, len(dp_)))
        cols.append(np.tile(dp_, len(dq_)))
        vals.append(De.ravel())
    return _to_csr(rows, cols, vals, (space_q.ndofs, space_p.ndofs))


def assemble_D_2d(space_q: FESpace, space_p: FESpace, npoints=None) -> sp.csr_matrix:
    """Cartesian: int [d_x phi_q, d_y phi_q] Phi_p^T. Polar: int [r d_r phi_q, d_theta phi_q] Phi_p^T dr dtheta."""
    _same_mesh(space_q, space_p)
    mesh = space_q.mesh
    if mesh.dim != 2:
        raise ValueError("assemble_D_2d needs 2D spaces")
    if space_p.components != 2:
        raise ValueError("2D p-space must have 2 components")
    if not space_q.continuous or space_q.family.order < 1:
        raise ValueError("2D q-space must be continuous with order >= 1")
    n = _npoints([space_q, space_p], npoints)
    rule = gauss_rule(n, 2)
    rows, cols, vals = [], [], []
    for c in range(mesh.ncells):
        x, wq = _cell_rule(space_q, c, rule)
        g = space_q.tabulate_cell(c, rule.points, 1)  # (npts, nq, 2)
        pp = space_p.tabulate_cell(c, rule.points, 0)
        if mesh.geometry == POLAR:
            fac = np.column_stack([x[:, 0], np.ones(len(x))])
        else:
            fac = np.ones((len(x), 2))
        dq_ = space_q.cell_dofs[c]
        for comp in range(2):
            De = g[:, :, comp].T @ ((wq * fac[:, comp])[:, None] * pp)
            dp_ = space_p.component_dofs(comp)[c]
            rows.append(np.repeat(dq_, len(dp_)))
            cols.append(np.tile(dp_, len(dq_)))
            vals.append(De.ravel())
    return _to_csr(rows, cols, vals, (space_q.ndofs, space_p.ndofs))


def assemble_D_beam(space_1: FESpace, space_2: FESpace, npoints=None) -> sp.csr_matrix:
    """int phi_1'' phi_2^T for a Hermite-cubic x1-space."""
    _same_mesh(space_1, space_2)
    if space_1.family.kind != HERMITE:
        raise ValueError("beam x1-space must be hermite-cubic (second derivatives needed)")
    n = _npoints([space_1, space_2], npoints)
    rule = gauss_rule(n, 1)
    rows, cols, vals = [], [], []
    for c in range(space_1.mesh.ncells):
        _, wq = _cell_rule(space_1, c, rule)
        d2 = space_1.tabulate_cell(c, rule.points, 2)
        p2 = space_2.tabulate_cell(c, rule.points, 0)
        De = d2.T @ (wq[:, None] * p2)
        d1_, d2_ = space_1.cell_dofs[c], space_2.cell_dofs[c]
        rows.append(np.repeat(d1_, len(d2_)))
        cols.append(np.tile(d2_, len(d1_)))
        vals.append(De.ravel())
    return _to_csr(rows, cols, vals, (space_1.ndofs, space_2.ndofs))


def _point_values(space: FESpace, end: str, deriv: int = 0) -> np.ndarray:
    """Global vector of basis values (or derivatives) at z=0 ('left') or z=L ('right')."""
    mesh = space.mesh
    seg = mesh.segments(end)[0]
    ref = np.array([[seg.fixed_value]])
    v = np.zeros(space.ndofs)
    v[space.cell_dofs[seg.cell]] = space.tabulate_cell(seg.cell, ref, deriv)[0]
    return v


def _edge_rule(mesh, seg, rule1):
    """Reference cell points on a boundary edge and the arc-length weights."""
    ax, val = seg.fixed_axis, seg.fixed_value
    t = rule1.points[:, 0]
    ref = np.empty((len(t), 2))
    ref[:, ax] = val
    ref[:, 1 - ax] = t
    lo, size = mesh.cell_bounds(seg.cell)
    ds = rule1.weights * size[1 - ax] / 2
    if mesh.geometry == POLAR:
        ds = ds * (lo[0] + (size[0] if val > 0 else 0.0))
    return ref, ds


def assemble_B(space: FESpace, bspace: BoundarySpace = None, model: str = "swe1d", b=1.0,
               npoints=None) -> sp.csr_matrix:
    """Boundary input matrix.

    1D SWE: [b(0) phi(0), -b(L) phi(L)] for whichever space carries the input.
    Beam: [phi_1'(L), -phi_1'(0), -phi_1(L), phi_1(0)].
    2D: int_{boundary} phi_q psi^T ds over the sides of ``bspace``.
    """
    if model == "beam":
        if space.family.kind != HERMITE:
            raise ValueError("beam B needs the hermite x1-space")
        cols = [_point_values(space, "right", 1), -_point_values(space, "left", 1),
                -_point_values(space, "right"), _point_values(space, "left")]
        return sp.csr_matrix(np.column_stack(cols))
    if space.mesh.dim == 1:
        width = Width(b)
        L = space.mesh.lengths[0]
        b0, bL = float(width(np.array([0.0]))[0]), float(width(np.array([L]))[0])
        cols = [b0 * _point_values(space, "left"), -bL * _point_values(space, "right")]
        return sp.csr_matrix(np.column_stack(cols))
    if bspace is None:
        raise ValueError("2D B needs a boundary space")
    if bspace.space is not space:
        raise ValueError("boundary space is not built on this q-space")
    mesh = space.mesh
    n = _npoints([space], npoints)
    rule1 = gauss_rule(n + (1 if mesh.geometry == POLAR else 0), 1)
    rows, cols, vals = [], [], []
    if bspace.kind == "trace":
        pos = {int(d): k for k, d in enumerate(bspace.dofs)}
    for seg in bspace.segments:
        ref, ds = _edge_rule(mesh, seg, rule1)
        phi = space.tabulate_cell(seg.cell, ref)
        d = space.cell_dofs[seg.cell]
        if bspace.kind == "trace":
            loc = space.side_local_dofs(seg.side)
            Be = phi.T @ (ds[:, None] * phi[:, loc])
            cidx = np.array([pos[int(g)] for g in d[loc]])
        else:
            th = mesh.to_physical(seg.cell, ref)[:, 1]
            psi = bspace.fourier_values(th)
            Be = phi.T @ (ds[:, None] * psi)
            cidx = np.arange(bspace.size)
        rows.append(np.repeat(d, len(cidx)))
        cols.append(np.tile(cidx, len(d)))
        vals.append(Be.ravel())
    return _to_csr(rows, cols, vals, (space.ndofs, bspace.size))


def assemble_Mpsi(bspace: BoundarySpace, npoints=None) -> sp.csr_matrix:
    """Boundary mass matrix int psi psi^T ds (identity for the two-point 1D boundary)."""
    if bspace.kind == "points":
        return sp.identity(2, format="csr")
    space, mesh = bspace.space, bspace.space.mesh
    segs = bspace.segments
    if not segs:
        raise ValueError("empty boundary")
    n = _npoints([space], npoints)
    rule1 = gauss_rule(n + (1 if mesh.geometry == POLAR else 0), 1)
    rows, cols, vals = [], [], []
    if bspace.kind == "trace":
        pos = {int(d): k for k, d in enumerate(bspace.dofs)}
    for seg in segs:
        ref, ds = _edge_rule(mesh, seg, rule1)
        if bspace.kind == "trace":
            loc = space.side_local_dofs(seg.side)
            psi = space.tabulate_cell(seg.cell, ref)[:, loc]
            idx = np.array([pos[int(g)] for g in space.cell_dofs[seg.cell][loc]])
        else:
            th = mesh.to_physical(seg.cell, ref)[:, 1]
            psi = bspace.fourier_values(th)
            idx = np.arange(bspace.size)
        Me = psi.T @ (ds[:, None] * psi)
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(Me.ravel())
    return _to_csr(rows, cols, vals, (bspace.size, bspace.size))
