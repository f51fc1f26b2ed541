"""Structured meshes and finite element spaces bound to them.

Meshes are tensor grids: an interval in 1D, a rectangle or an (r, theta)
annulus in 2D. 2D cells are numbered ``i + nx * j`` with ``i`` along the
first axis (x or r) and ``j`` along the second (y or theta).
"""
from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from .basis import BasisFamily, HERMITE, LAGRANGE, tabulate

CARTESIAN = "cartesian"
POLAR = "polar"

# reference side -> (axis held fixed, value of the fixed reference coordinate)
_SIDE_AXIS = {"left": (0, -1.0), "right": (0, 1.0), "down": (1, -1.0), "up": (1, 1.0)}


@dataclass(frozen=True)
class BoundarySegment:
    """One boundary edge (2D) or end point (1D) of a cell."""

    cell: int
    side: str  # reference side: left/right in 1D, left/right/down/up in 2D
    name: str  # physical name: left/right, up/left/down/right, inner/outer
    normal: float = 0.0  # 1D outward normal sign

    @property
    def fixed_axis(self) -> int:
        return _SIDE_AXIS[self.side][0]

    @property
    def fixed_value(self) -> float:
        return _SIDE_AXIS[self.side][1]


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    geometry: str
    axes: tuple  # node coordinates along each axis (periodic axes exclude the end node)
    periodic: tuple
    boundary: tuple  # BoundarySegment entries
    lengths: tuple  # period (for periodic axes) or extent along each axis

    @property
    def shape(self) -> tuple:
        """Cells along each axis."""
        return tuple(len(a) if p else len(a) - 1 for a, p in zip(self.axes, self.periodic))

    @property
    def ncells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def nnodes(self) -> int:
        return int(np.prod([len(a) for a in self.axes]))

    @property
    def side_names(self) -> tuple:
        seen = []
        for seg in self.boundary:
            if seg.name not in seen:
                seen.append(seg.name)
        return tuple(seen)

    def cell_index(self, c: int) -> tuple:
        if self.dim == 1:
            return (c,)
        nx = self.shape[0]
        return (c % nx, c // nx)

    def cell_bounds(self, c: int) -> tuple:
        """(lower corner, sizes) of cell ``c`` in the mesh coordinates."""
        idx = self.cell_index(c)
        lo, size = [], []
        for ax, i in enumerate(idx):
            nodes = self.axes[ax]
            a = nodes[i]
            if self.periodic[ax] and i == len(nodes) - 1:
                b = nodes[0] + self.lengths[ax]
            else:
                b = nodes[i + 1]
            lo.append(a)
            size.append(b - a)
        return np.array(lo), np.array(size)

    def to_physical(self, c: int, ref) -> np.ndarray:
        lo, size = self.cell_bounds(c)
        ref = np.asarray(ref, dtype=float).reshape(-1, self.dim)
        return lo[None, :] + 0.5 * (ref + 1.0) * size[None, :]

    def measure_weight(self, coords: np.ndarray) -> np.ndarray:
        """Geometric measure factor at mesh coordinates (r for polar, else 1)."""
        coords = np.asarray(coords).reshape(-1, self.dim)
        if self.geometry == POLAR:
            return coords[:, 0].copy()
        return np.ones(len(coords))

    def cell_measure(self, c: int, npoints: int = 2) -> float:
        from .basis import gauss_rule

        rule = gauss_rule(npoints, self.dim)
        _, size = self.cell_bounds(c)
        x = self.to_physical(c, rule.points)
        return float(np.sum(rule.weights * self.measure_weight(x)) * np.prod(size / 2))

    def segments(self, names=None) -> list:
        if names is None:
            return list(self.boundary)
        names = {names} if isinstance(names, str) else set(names)
        return [s for s in self.boundary if s.name in names]

    def segment_length(self, seg: BoundarySegment) -> float:
        """Arc length of a boundary edge (1 for a 1D end point: counting measure)."""
        if self.dim == 1:
            return 1.0
        lo, size = self.cell_bounds(seg.cell)
        along = 1 - seg.fixed_axis
        if self.geometry == POLAR:
            r = lo[0] + (size[0] if seg.fixed_value > 0 else 0.0)
            return r * size[1]
        return size[along]

    def vertex_coords(self) -> np.ndarray:
        """All grid nodes, first axis fastest."""
        if self.dim == 1:
            return self.axes[0][:, None].copy()
        A, Bm = np.meshgrid(self.axes[0], self.axes[1], indexing="xy")
        return np.column_stack([A.ravel(), Bm.ravel()])


def interval_mesh(L: float, n: int) -> Mesh:
    if not L > 0:
        raise ValueError(f"length must be positive, got {L}")
    if int(n) != n or n < 1:
        raise ValueError(f"element count must be a positive integer, got {n}")
    n = int(n)
    z = np.linspace(0.0, L, n + 1)
    bnd = (BoundarySegment(0, "left", "left", -1.0), BoundarySegment(n - 1, "right", "right", 1.0))
    return Mesh(1, CARTESIAN, (z,), (False,), bnd, (float(L),))


def rect_mesh(Lx: float, Ly: float, nx: int, ny: int) -> Mesh:
    if not (Lx > 0 and Ly > 0):
        raise ValueError(f"rectangle sides must be positive, got {Lx}, {Ly}")
    for k in (nx, ny):
        if int(k) != k or k < 1:
            raise ValueError(f"element counts must be positive integers, got {nx}, {ny}")
    nx, ny = int(nx), int(ny)
    x = np.linspace(0.0, Lx, nx + 1)
    y = np.linspace(0.0, Ly, ny + 1)
    bnd = []
    # counter-clockwise walk: down, right, up, left
    for i in range(nx):
        bnd.append(BoundarySegment(i, "down", "down"))
    for j in range(ny):
        bnd.append(BoundarySegment(nx - 1 + nx * j, "right", "right"))
    for i in reversed(range(nx)):
        bnd.append(BoundarySegment(i + nx * (ny - 1), "up", "up"))
    for j in reversed(range(ny)):
        bnd.append(BoundarySegment(nx * j, "left", "left"))
    return Mesh(2, CARTESIAN, (x, y), (False, False), tuple(bnd), (float(Lx), float(Ly)))


def annulus_mesh(r_in: float, R: float, nr: int, ntheta: int) -> Mesh:
    """Structured (r, theta) annulus, periodic in theta. The centre r=0 is not meshed."""
    if not r_in > 0:
        raise ValueError(f"inner radius must be positive, got {r_in}")
    if not R > r_in:
        raise ValueError(f"outer radius {R} must exceed inner radius {r_in}")
    if int(nr) != nr or nr < 1:
        raise ValueError(f"nr must be a positive integer, got {nr}")
    if int(ntheta) != ntheta or ntheta < 3:
        raise ValueError(f"ntheta must be an integer >= 3, got {ntheta}")
    nr, ntheta = int(nr), int(ntheta)
    r = np.linspace(r_in, R, nr + 1)
    th = np.linspace(0.0, 2 * math.pi, ntheta + 1)[:-1]
    bnd = []
    for j in range(ntheta):
        bnd.append(BoundarySegment(nr - 1 + nr * j, "right", "outer"))
    for j in range(ntheta):
        bnd.append(BoundarySegment(nr * j, "left", "inner"))
    return Mesh(2, POLAR, (r, th), (False, True), tuple(bnd), (float(R - r_in), 2 * math.pi))


@dataclass(frozen=True, eq=False)
class FESpace:
    """A basis family bound to a mesh, with global DOF numbering."""

    mesh: Mesh
    family: BasisFamily
    continuous: bool = True
    components: int = 1

    def __post_init__(self):
        fam, mesh = self.family, self.mesh
        if fam.dim != mesh.dim:
            raise ValueError(f"basis dim {fam.dim} does not match mesh dim {mesh.dim}")
        if fam.kind == HERMITE:
            if mesh.dim != 1 or not self.continuous:
                raise ValueError("hermite-cubic spaces are continuous and 1D only")
        if self.continuous and fam.kind == LAGRANGE and fam.order == 0:
            raise ValueError("order-0 Lagrange space must be discontinuous")
        if self.components not in (1, 2):
            raise ValueError(f"components must be 1 or 2, got {self.components}")

    @property
    def nloc(self) -> int:
        return self.family.nbasis

    @cached_property
    def _scalar_map(self) -> tuple:
        mesh, fam = self.mesh, self.family
        nloc = fam.nbasis
        if fam.kind == HERMITE:
            n = mesh.ncells
            cd = np.array([[2 * c, 2 * c + 1, 2 * c + 2, 2 * c + 3] for c in range(n)])
            return cd, 2 * (n + 1)
        k = fam.order
        if not self.continuous:
            cd = np.arange(mesh.ncells * nloc).reshape(mesh.ncells, nloc)
            return cd, mesh.ncells * nloc
        if mesh.dim == 1:
            n = mesh.ncells
            cd = np.array([[c * k + a for a in range(k + 1)] for c in range(n)])
            return cd, n * k + 1
        nx, ny = mesh.shape
        gx = nx * k + 1
        gy = ny * k if mesh.periodic[1] else ny * k + 1
        cd = np.empty((mesh.ncells, nloc), dtype=int)
        for c in range(mesh.ncells):
            i, j = mesh.cell_index(c)
            for iy in range(k + 1):
                for ix in range(k + 1):
                    g = (i * k + ix) + gx * ((j * k + iy) % gy)
                    cd[c, ix + (k + 1) * iy] = g
        return cd, gx * gy

    @property
    def cell_dofs(self) -> np.ndarray:
        """(ncells, nloc) global indices of the scalar (first component) space."""
        return self._scalar_map[0]

    @property
    def nscalar(self) -> int:
        return self._scalar_map[1]

    @property
    def ndofs(self) -> int:
        return self.components * self.nscalar

    def component_dofs(self, comp: int) -> np.ndarray:
        return self.cell_dofs + comp * self.nscalar

    def local_scale(self, c: int) -> np.ndarray:
        """Per-local-DOF factors mapping reference to physical basis functions."""
        s = np.ones(self.nloc)
        if self.family.kind == HERMITE:
            _, size = self.mesh.cell_bounds(c)
            s[[1, 3]] = size[0] / 2
        return s

    def tabulate_cell(self, c: int, ref_points, deriv: int = 0) -> np.ndarray:
        """Physical basis values/derivatives at reference points of cell ``c``.

        1D: (npts, nloc) for the deriv-th derivative in the physical coordinate.
        2D: deriv=0 (npts, nloc); deriv=1 (npts, nloc, 2) with derivatives in the
        mesh coordinates (x, y) or (r, theta).
        """
        _, size = self.mesh.cell_bounds(c)
        vals = tabulate(self.family, ref_points, deriv)
        if self.mesh.dim == 1:
            vals = vals * (2.0 / size[0]) ** deriv
        elif deriv == 1:
            vals = vals * (2.0 / size)[None, None, :]
        return vals * self.local_scale(c)[None, :] if vals.ndim == 2 else vals

    def side_local_dofs(self, side: str) -> np.ndarray:
        """Local scalar DOFs whose basis functions do not vanish on a reference side."""
        fam = self.family
        if self.mesh.dim == 1:
            if fam.kind == HERMITE:
                return np.array([0, 1]) if side == "left" else np.array([2, 3])
            if fam.order == 0:
                return np.array([0])
            return np.array([0]) if side == "left" else np.array([fam.order])
        k = fam.order
        n = k + 1
        if k == 0:
            return np.array([0])
        if side == "down":
            return np.arange(n)
        if side == "up":
            return np.arange(n) + n * k
        if side == "left":
            return np.arange(n) * n
        return np.arange(n) * n + k

    def boundary_dofs(self, names=None) -> np.ndarray:
        """Sorted scalar global DOFs carried by the named boundary sides."""
        out = []
        for seg in self.mesh.segments(names):
            out.extend(self.cell_dofs[seg.cell, self.side_local_dofs(seg.side)])
        return np.unique(np.array(out, dtype=int))

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant coefficients of a scalar function of mesh coordinates."""
        fam = self.family
        if fam.kind == HERMITE:
            raise ValueError("nodal interpolation is not defined for hermite spaces")
        from .basis import lagrange_nodes

        nodes = lagrange_nodes(fam.order)
        if self.mesh.dim == 1:
            ref = nodes[:, None]
        else:
            X, Y = np.meshgrid(nodes, nodes, indexing="xy")
            ref = np.column_stack([X.ravel(), Y.ravel()])
        coef = np.zeros(self.nscalar)
        for c in range(self.mesh.ncells):
            x = self.mesh.to_physical(c, ref)
            coef[self.cell_dofs[c]] = func(x)
        return coef


def build_space(mesh: Mesh, family: BasisFamily, continuity: str = "continuous",
                components: int = 1) -> FESpace:
    if continuity not in ("continuous", "discontinuous"):
        raise ValueError(f"continuity must be 'continuous' or 'discontinuous', got {continuity!r}")
    return FESpace(mesh, family, continuity == "continuous", components)


@dataclass(frozen=True, eq=False)
class BoundarySpace:
    """Boundary input/output space on a set of named sides.

    ``kind='trace'`` uses the trace of a continuous q-space (N_boundary = boundary
    DOF count); ``kind='fourier'`` uses 1, cos(m theta), sin(m theta) on a circle;
    ``kind='points'`` is the 1D two-point boundary with counting measure.
    """

    space: FESpace
    kind: str = "trace"
    sides: tuple = ()
    modes: int = 0
    dofs: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.kind == "trace":
            if not self.space.continuous and self.space.mesh.dim == 2:
                raise ValueError("trace boundary space needs a continuous q-space")
            d = self.space.boundary_dofs(self.sides or None)
            if len(d) == 0:
                raise ValueError(f"no boundary DOFs on sides {self.sides}")
            object.__setattr__(self, "dofs", d)
        elif self.kind == "fourier":
            if self.space.mesh.geometry != POLAR:
                raise ValueError("fourier boundary space requires a polar mesh")
            if self.modes < 0:
                raise ValueError("modes must be >= 0")
        elif self.kind != "points":
            raise ValueError(f"unknown boundary space kind {self.kind!r}")

    @property
    def size(self) -> int:
        if self.kind == "points":
            return 2
        if self.kind == "fourier":
            return 2 * self.modes + 1
        return len(self.dofs)

    @property
    def segments(self) -> list:
        return self.space.mesh.segments(self.sides or None)

    def fourier_values(self, theta: np.ndarray) -> np.ndarray:
        cols = [np.ones_like(theta)]
        for m in range(1, self.modes + 1):
            cols.append(np.cos(m * theta))
            cols.append(np.sin(m * theta))
        return np.column_stack(cols)

    def node_coords(self) -> np.ndarray:
        """Mesh coordinates of trace DOFs (for signal evaluation and output reports)."""
        if self.kind == "points":
            L = self.space.mesh.lengths[0]
            return np.array([[0.0], [L]])
        if self.kind == "fourier":
            raise ValueError("fourier boundary space has no nodes")
        return dof_coords(self.space)[self.dofs]


def dof_coords(space: FESpace) -> np.ndarray:
    """Mesh coordinates of each scalar Lagrange DOF (first component)."""
    from .basis import lagrange_nodes

    fam = space.family
    if fam.kind == HERMITE:
        z = space.mesh.axes[0]
        return np.repeat(z, 2)[:, None]
    nodes = lagrange_nodes(fam.order)
    if space.mesh.dim == 1:
        ref = nodes[:, None]
    else:
        X, Y = np.meshgrid(nodes, nodes, indexing="xy")
        ref = np.column_stack([X.ravel(), Y.ravel()])
    out = np.zeros((space.nscalar, space.mesh.dim))
    for c in range(space.mesh.ncells):
        x = space.mesh.to_physical(c, ref)
        out[space.cell_dofs[c]] = x
    return out
