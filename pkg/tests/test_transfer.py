import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from igatwo.assembly import assemble_mass, evaluate_solution
from igatwo.exceptions import ParameterError
from igatwo.spline_core import SplineSpace2D, collocation_matrix, make_open_uniform_knots
from igatwo.transfer import (
    TransferPair,
    compose_aggressive,
    degree_restriction,
    lumped_mass_diagonal,
    mesh_prolongation,
    mesh_prolongation_1d,
    space_mesh_transfer,
)


@pytest.mark.parametrize("p, p_low", [(2, 1), (3, 1), (5, 2), (8, 1)])
def test_degree_pair_adjoint_structure(p, p_low, square):
    fine, coarse = SplineSpace2D.uniform(p, 8), SplineSpace2D.uniform(p_low, 8)
    tp = degree_restriction(fine, coarse, square)
    M = assemble_mass(coarse, fine, square)
    D = lumped_mass_diagonal(coarse, square)
    assert abs(tp.prolongation - M.T @ sp.diags(1 / D)).max() <= 1e-12
    assert abs(tp.restriction - sp.diags(1 / D) @ M).max() <= 1e-12
    assert tp.restriction.shape == (coarse.dim, fine.dim)
    assert tp.kind == "degree"


@pytest.mark.parametrize("geom_name", ["square", "annulus"])
@pytest.mark.parametrize("p, p_low", [(3, 1), (4, 2)])
def test_degree_restriction_preserves_constants_unconstrained(p, p_low, geom_name, request):
    geom = request.getfixturevalue(geom_name)
    if geom_name == "annulus" and p_low < 2:
        p_low = 2
    fine = SplineSpace2D.uniform(p, 6, constrained=False)
    coarse = SplineSpace2D.uniform(p_low, 6, constrained=False)
    R = degree_restriction(fine, coarse, geom).restriction
    np.testing.assert_allclose(R @ np.ones(fine.dim), 1.0, atol=1e-12)


def test_degree_restriction_exact_mass_identity(square):
    s = SplineSpace2D.uniform(3, 6)
    R = degree_restriction(s, s, square, lumped=False).restriction
    assert abs(R - sp.identity(s.dim)).max() < 1e-12


def test_degree_restriction_errors(square):
    with pytest.raises(ParameterError):
        degree_restriction(SplineSpace2D.uniform(1, 4), SplineSpace2D.uniform(2, 4), square)
    with pytest.raises(ParameterError):
        degree_restriction(SplineSpace2D.uniform(3, 8), SplineSpace2D.uniform(1, 4), square)


@pytest.mark.parametrize("p, p_low", [(3, 1), (6, 2)])
def test_degree_restriction_row_support(p, p_low, square):
    fine, coarse = SplineSpace2D.uniform(p, 12), SplineSpace2D.uniform(p_low, 12)
    R = degree_restriction(fine, coarse, square).restriction
    nf = fine.shape[1]
    for row in range(coarse.dim):
        cols = R.indices[R.indptr[row] : R.indptr[row + 1]]
        ix, iy = np.divmod(cols, nf)
        assert np.ptp(ix) + 1 <= p + p_low + 1 and np.ptp(iy) + 1 <= p + p_low + 1


def test_projection_accuracy_against_dense_l2_projection(square):
    # smooth vanishing function: restriction then prolongation stays O(h^2) close
    p, m = 3, 8
    fine, coarse = SplineSpace2D.uniform(p, m), SplineSpace2D.uniform(1, m)
    tp = degree_restriction(fine, coarse, square)
    Mf = assemble_mass(fine, fine, square).tocsc()
    from igatwo.assembly import assemble_load

    u = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
    c = spla.spsolve(Mf, assemble_load(fine, square, u))
    back = tp.prolongation @ (tp.restriction @ c)
    err = np.abs(back - c).max()
    assert err <= 10.0 * (1 / m) ** 2
    # the exact-mass projection is at least as accurate
    tpe = degree_restriction(fine, coarse, square, lumped=False)
    assert np.isfinite(tpe.restriction.sum())


def test_mesh_prolongation_column_weights():
    T1 = mesh_prolongation_1d(1, 4, constrained=False)
    np.testing.assert_allclose(T1[3:6, 2], [0.5, 1.0, 0.5])
    T2 = mesh_prolongation_1d(2, 8, constrained=False)
    col = T2[:, 4]
    np.testing.assert_allclose(col[np.abs(col) > 0], [0.25, 0.75, 0.75, 0.25])


@pytest.mark.parametrize("p", [1, 2, 3, 5])
def test_mesh_prolongation_is_exact_embedding(p, rng):
    cm = 5
    T = mesh_prolongation_1d(p, cm, constrained=False)
    c = rng.standard_normal(p + cm)
    x = rng.random(100)
    kc, kf = make_open_uniform_knots(p, cm), make_open_uniform_knots(p, 2 * cm)
    np.testing.assert_allclose(collocation_matrix(kc, x)[0] @ c, collocation_matrix(kf, x)[0] @ (T @ c), atol=1e-12)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_mesh_restriction_preserves_constants(p):
    tp = mesh_prolongation(p, 8, constrained=False)
    np.testing.assert_allclose(tp.restriction @ np.ones(tp.n_fine), 1.0, atol=1e-12)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_mesh_restriction_is_quarter_transpose_in_interior(p):
    cm = 8
    tp = mesh_prolongation(p, cm, constrained=False)
    D = tp.restriction - 0.25 * tp.prolongation.T
    rows = np.abs(D).max(axis=1).toarray().reshape(p + cm, p + cm)
    assert rows[p:cm, p:cm].max() <= 1e-14
    # constrained rows are the same rows with the boundary columns removed
    con = mesh_prolongation(p, cm)
    assert abs(con.restriction - 0.25 * con.prolongation.T).max() <= 0.25


def test_mesh_prolongation_dimensions():
    tp = mesh_prolongation(2, 8)
    assert tp.prolongation.shape == ((2 + 16 - 2) ** 2, (2 + 8 - 2) ** 2)
    with pytest.raises(ParameterError):
        mesh_prolongation(2, 0)


def test_space_mesh_transfer_square_equals_knot_insertion(square):
    a = space_mesh_transfer(SplineSpace2D.uniform(3, 8), square)
    b = mesh_prolongation(3, 4)
    assert abs(a.prolongation - b.prolongation).max() == 0
    with pytest.raises(ParameterError):
        space_mesh_transfer(SplineSpace2D.uniform(3, 7), square)


@pytest.mark.parametrize("p", [2, 3])
def test_space_mesh_transfer_annulus_nested(p, annulus, rng):
    fine, coarse = SplineSpace2D.uniform(p, 8), SplineSpace2D.uniform(p, 4)
    P = space_mesh_transfer(fine, annulus).prolongation
    c = rng.standard_normal(coarse.dim)
    xi, eta = rng.random(9), rng.random(9)
    np.testing.assert_allclose(
        evaluate_solution(coarse, annulus, c, xi, eta), evaluate_solution(fine, annulus, P @ c, xi, eta), atol=1e-12
    )


def test_compose_aggressive(square):
    p, p_low, m = 3, 1, 16
    fine, low = SplineSpace2D.uniform(p, m), SplineSpace2D.uniform(p_low, m)
    deg = degree_restriction(fine, low, square)
    mesh = mesh_prolongation(p_low, m // 2)
    comp = compose_aggressive(deg, mesh)
    assert comp.restriction.shape == ((p_low + m // 2 - 2) ** 2, (p + m - 2) ** 2)
    assert abs(comp.restriction - mesh.restriction @ deg.restriction).max() == 0
    assert abs(comp.prolongation - deg.prolongation @ mesh.prolongation).max() == 0
    with pytest.raises(ParameterError):
        compose_aggressive(deg, mesh_prolongation(p_low, m // 4))


def test_compose_with_identity_degree_pair_is_mesh_pair():
    mesh = mesh_prolongation(2, 4)
    I = sp.identity(mesh.n_fine, format="csr")
    comp = compose_aggressive(TransferPair(I, I, "degree"), mesh)
    assert abs(comp.restriction - mesh.restriction).max() == 0
    assert abs(comp.prolongation - mesh.prolongation).max() == 0


@pytest.mark.parametrize("geom_name", ["square", "annulus"])
def test_composed_restriction_preserves_constants(geom_name, request):
    geom = request.getfixturevalue(geom_name)
    fine = SplineSpace2D.uniform(4, 8, constrained=False)
    low = SplineSpace2D.uniform(2, 8, constrained=False)
    comp = compose_aggressive(degree_restriction(fine, low, geom), space_mesh_transfer(low, geom))
    np.testing.assert_allclose(comp.restriction @ np.ones(fine.dim), 1.0, atol=1e-12)
