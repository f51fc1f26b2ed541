import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pfem.assembly import (MASS_IBP, MOMENTUM_IBP, assemble_B, assemble_D_1d, assemble_D_2d,
                           assemble_D_beam, assemble_mass, assemble_Mpsi, read_coo, write_coo)
from pfem.basis import HERMITE, LAGRANGE, BasisFamily
from pfem.mesh import BoundarySpace, annulus_mesh, build_space, interval_mesh, rect_mesh


def P(order, mesh, cont="continuous", comps=1):
    return build_space(mesh, BasisFamily(LAGRANGE, order, mesh.dim), cont, comps)


def test_p1_element_mass():
    h = 0.37
    M = assemble_mass(P(1, interval_mesh(h, 1))).toarray()
    assert np.allclose(M, h / 6 * np.array([[2, 1], [1, 2]]), rtol=1e-14)


def test_p0_element_mass():
    assert np.allclose(assemble_mass(P(0, interval_mesh(0.6, 1), "discontinuous")).toarray(), [[0.6]])


def test_annulus_mass_sums_to_area():
    m = annulus_mesh(0.2, 1.5, 3, 10)
    M = assemble_mass(P(0, m, "discontinuous"))
    assert abs(M.sum() - math.pi * (1.5 ** 2 - 0.2 ** 2)) < 1e-12


@settings(max_examples=20, deadline=None)
@given(order=st.integers(1, 3), n=st.integers(1, 5))
def test_mass_symmetric_positive(order, n):
    M = assemble_mass(P(order, rect_mesh(1, 2, n, n))).toarray()
    assert np.allclose(M, M.T, atol=1e-16)
    assert np.linalg.eigvalsh(M).min() > 0
    assert abs(M.sum() - 2.0) < 1e-12


def test_mass_rejects_nonpositive_weight():
    with pytest.raises(ValueError):
        assemble_mass(P(1, interval_mesh(1, 2)), lambda x: x[:, 0] - 0.5)


def test_D_single_element_column():
    m = interval_mesh(0.5, 1)
    D = assemble_D_1d(P(1, m), P(0, m, "discontinuous")).toarray()
    assert np.allclose(D, [[-1.0], [1.0]])


def test_D_constant_width_is_scaled_uniform_bitwise():
    m = interval_mesh(1.3, 7)
    q, p = P(2, m), P(1, m, "discontinuous")
    D1 = assemble_D_1d(q, p, 1.0)
    for b in (2.5, [2.5], lambda z: np.full(np.shape(z), 2.5)):
        assert (assemble_D_1d(q, p, b) != 2.5 * D1).nnz == 0


def test_D_momentum_partition_rejects_p0():
    m = interval_mesh(1, 3)
    with pytest.raises(ValueError, match="P0"):
        assemble_D_1d(P(1, m), P(0, m, "discontinuous"), 1.0, MOMENTUM_IBP)


@settings(max_examples=20, deadline=None)
@given(b1=st.floats(0.0, 2.0), qo=st.integers(1, 3), po=st.integers(1, 3), n=st.integers(1, 6))
def test_discrete_integration_by_parts_1d(b1, qo, po, n):
    # int b phi_q' phi_p + int phi_q (b phi_p)' = [b phi_q phi_p]_0^L
    m = interval_mesh(1.0, n)
    q, p = P(qo, m), P(po, m)
    b = [1.0, b1]
    Dm = assemble_D_1d(q, p, b, MASS_IBP).toarray()
    Dt = assemble_D_1d(q, p, b, MOMENTUM_IBP).toarray()
    Bq = assemble_B(q, b=b).toarray()
    Bp = assemble_B(p, b=b).toarray()
    # boundary term: -(b phi_q phi_p^T)(0) + (b phi_q phi_p^T)(L) expressed with the B columns
    bnd = -np.outer(Bq[:, 0], Bp[:, 0]) / 1.0 + np.outer(Bq[:, 1], Bp[:, 1]) / (1.0 + b1)
    assert np.allclose(Dm - Dt, bnd, atol=1e-12)


def test_D_row_sum_vanishes_for_mass_partition():
    m = interval_mesh(2.0, 5)
    D = assemble_D_1d(P(3, m), P(2, m, "discontinuous"), [1.0, 0.3]).toarray()
    assert np.abs(D.sum(axis=0)).max() < 1e-13


def test_D_2d_single_element_entry():
    m = rect_mesh(1, 1, 1, 1)
    D = assemble_D_2d(P(1, m), P(0, m, "discontinuous", 2)).toarray()
    # hat of node (1, 0) is x (1 - y): int d_x = 1/2, int d_y = -1/2
    assert np.allclose(D[1], [0.5, -0.5])


def test_D_2d_divergence_theorem():
    # f = x y interpolated exactly; constant flux (1, 0): int grad f . c = int_{x=1} y dy = 1/2
    m = rect_mesh(1, 1, 3, 4)
    q, p = P(1, m), P(0, m, "discontinuous", 2)
    f = q.interpolate(lambda x: x[:, 0] * x[:, 1])
    c = np.concatenate([np.ones(p.nscalar), np.zeros(p.nscalar)])
    assert abs(f @ assemble_D_2d(q, p) @ c - 0.5) < 1e-14


def test_D_polar_closed_form():
    # f = r^2 (exact in Q2): int r d_r f dr dtheta = 2 pi * 2 (R^3 - r0^3) / 3
    r0, R = 0.3, 1.2
    m = annulus_mesh(r0, R, 3, 8)
    q, p = P(2, m), P(0, m, "discontinuous", 2)
    f = q.interpolate(lambda x: x[:, 0] ** 2)
    c = np.concatenate([np.ones(p.nscalar), np.zeros(p.nscalar)])
    assert abs(f @ assemble_D_2d(q, p) @ c - 4 * math.pi * (R ** 3 - r0 ** 3) / 3) < 1e-12


def test_D_beam_single_element_row():
    m = interval_mesh(0.8, 1)
    x1 = build_space(m, BasisFamily(HERMITE, 3, 1))
    x2 = P(0, m, "discontinuous")
    D = assemble_D_beam(x1, x2).toarray()
    assert np.allclose(D.ravel(), [0, -1, 0, 1], atol=1e-14)
    m2 = interval_mesh(1.0, 2)
    x1 = build_space(m2, BasisFamily(HERMITE, 3, 1))
    assert assemble_D_beam(x1, P(0, m2, "discontinuous")).shape == (6, 2)


def test_B_1d_two_nonzeros():
    n = 6
    B = assemble_B(P(1, interval_mesh(1, n))).tocoo()
    assert sorted(zip(B.row, B.col, B.data)) == [(0, 0, 1.0), (n, 1, -1.0)]


def test_B_beam_single_element_is_signed_permutation():
    x1 = build_space(interval_mesh(1.0, 1), BasisFamily(HERMITE, 3, 1))
    B = assemble_B(x1, model="beam").toarray()
    assert np.allclose(np.abs(B).sum(axis=0), 1) and np.allclose(np.abs(B).sum(axis=1), 1)


def test_B_boundary_rows_equal_Mpsi_on_square():
    q = P(2, rect_mesh(1, 1, 3, 2))
    bs = BoundarySpace(q)
    B = assemble_B(q, bs, "swe2d").toarray()
    assert np.array_equal(B[bs.dofs], assemble_Mpsi(bs).toarray())
    assert np.abs(np.delete(B, bs.dofs, axis=0)).max() == 0


def test_Mpsi_square_perimeter_p1():
    n = 4
    Mpsi = assemble_Mpsi(BoundarySpace(P(1, rect_mesh(1, 1, n, n)))).toarray()
    ell = 1 / n
    assert np.allclose(Mpsi.sum(axis=1), ell)
    assert np.allclose(np.diag(Mpsi), 2 * ell / 3)
    assert abs(Mpsi.sum() - 4) < 1e-14


def test_Mpsi_1d_identity():
    bs = BoundarySpace(P(1, interval_mesh(1, 3)), kind="points")
    assert np.array_equal(assemble_Mpsi(bs).toarray(), np.eye(2))


def test_Mpsi_circle_fourier_is_diagonal():
    R = 1.3
    q = P(1, annulus_mesh(0.1, R, 2, 24))
    bs = BoundarySpace(q, "fourier", ("outer",), modes=2)
    M = assemble_Mpsi(bs).toarray()
    # exact for trigonometric polynomials of low degree on the polygonal parametrization by theta
    assert np.allclose(M, np.diag([2 * math.pi * R] + [math.pi * R] * 4), atol=1e-12)


def test_coo_roundtrip(tmp_path):
    A = assemble_mass(P(2, rect_mesh(1, 1, 2, 2)))
    write_coo(tmp_path / "A.coo", A)
    B = read_coo(tmp_path / "A.coo")
    assert (A != B).nnz == 0
    head = (tmp_path / "A.coo").read_text().splitlines()[0].split()
    assert head == [str(A.shape[0]), str(A.shape[1]), str(A.nnz)]
