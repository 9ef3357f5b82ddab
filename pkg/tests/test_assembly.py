import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from igatwo.assembly import (
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    dump_matrix_market,
    evaluate_solution,
    gauss_rule,
    l2_error,
    mass_1d,
    solution_weights,
    stiffness_1d,
)
from igatwo.cli import annulus_exact, annulus_rhs, square_exact, square_rhs
from igatwo.exceptions import GeometryError, ParameterError
from igatwo.spline_core import GeometryMap, SplineSpace2D, make_open_uniform_knots, refine_geometry

ANNULUS_AREA = np.pi / 4 * (0.5**2 - 0.3**2)


def bilinear_fe_matrix(m):
    """Classical Q1 stiffness on the unit square with interior nodes only."""
    ke = np.array([[4, -1, -2, -1], [-1, 4, -1, -2], [-2, -1, 4, -1], [-1, -2, -1, 4]]) / 6.0
    n = m + 1
    K = np.zeros((n * n, n * n))
    for ex in range(m):
        for ey in range(m):
            nodes = [ex * n + ey, (ex + 1) * n + ey, (ex + 1) * n + ey + 1, ex * n + ey + 1]
            K[np.ix_(nodes, nodes)] += ke
    inner = [i * n + j for i in range(1, m) for j in range(1, m)]
    return K[np.ix_(inner, inner)]


def test_gauss_rule_points_inside_spans():
    r = gauss_rule(4, 3)
    assert np.all(r.weights > 0)
    left = np.arange(4)[:, None] / 4
    assert np.all((r.points > left) & (r.points < left + 0.25))
    assert r.weights.sum() == pytest.approx(1.0)


def test_linear_1d_stiffness_rows():
    K = stiffness_1d(make_open_uniform_knots(1, 4)).toarray()
    np.testing.assert_allclose(K[2, 1:4], [-4.0, 8.0, -4.0], atol=1e-13)


def test_linear_1d_mass_rows():
    h = 0.25
    M = mass_1d(make_open_uniform_knots(1, 4)).toarray()
    np.testing.assert_allclose(M[2, 1:4], [h / 6, 4 * h / 6, h / 6], atol=1e-15)


@pytest.mark.parametrize("m", [3, 6])
def test_bilinear_stiffness_matches_classical_fe(square, m):
    A = assemble_stiffness(SplineSpace2D.uniform(1, m), square).toarray()
    np.testing.assert_allclose(A, bilinear_fe_matrix(m), atol=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_unconstrained_stiffness_kills_constants(p, square, annulus):
    space = SplineSpace2D.uniform(p if p >= 2 else 2, 5, constrained=False)
    for geom in (square, annulus):
        A = assemble_stiffness(space, geom)
        assert np.abs(A @ np.ones(space.dim)).max() < 1e-12


@pytest.mark.parametrize("p, m", [(2, 8), (3, 6), (5, 4)])
def test_stiffness_symmetric_positive_definite(p, m, square, annulus):
    for geom in (square, annulus):
        A = assemble_stiffness(SplineSpace2D.uniform(p, m), geom)
        assert abs(A - A.T).max() <= 1e-12
        assert np.linalg.eigvalsh(A.toarray()).min() > 0


@pytest.mark.parametrize("p", [2, 3, 4])
def test_general_loop_matches_kronecker_path(p, square):
    space = SplineSpace2D.uniform(p, 5)
    low = SplineSpace2D.uniform(1, 5)
    A0 = assemble_stiffness(space, square)
    A1 = assemble_stiffness(space, square, general=True)
    assert abs(A0 - A1).max() < 1e-13
    M0 = assemble_mass(low, space, square)
    M1 = assemble_mass(low, space, square, general=True)
    assert abs(M0 - M1).max() < 1e-14


def test_cross_mass_against_dense_quadrature(square, rng):
    from igatwo.spline_core import collocation_matrix

    kl, kh = make_open_uniform_knots(1, 4), make_open_uniform_knots(3, 4)
    x = np.linspace(0, 1, 4001)
    w = np.full(x.size, x[1] - x[0])
    w[[0, -1]] *= 0.5
    ref = collocation_matrix(kl, x)[0].T @ (w[:, None] * collocation_matrix(kh, x)[0])
    np.testing.assert_allclose(mass_1d(kl, kh).toarray(), ref, atol=1e-7)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_mass_total_is_area_square(p, square):
    full = SplineSpace2D.uniform(p, 4, constrained=False)
    M = assemble_mass(full, full, square)
    assert M.sum() == pytest.approx(1.0, rel=1e-13)
    assert abs(M - M.T).max() <= 1e-12


@pytest.mark.parametrize("p", [2, 3])
def test_mass_total_is_area_annulus(p, annulus):
    # Gauss quadrature of rational integrands is accurate, not exact
    full = SplineSpace2D.uniform(p, 8, constrained=False)
    M = assemble_mass(full, full, annulus)
    assert M.sum() == pytest.approx(ANNULUS_AREA, rel=1e-10)
    assert abs(M - M.T).max() <= 1e-12


def test_cross_mass_shape_and_degree_order(square):
    lo, hi = SplineSpace2D.uniform(1, 6), SplineSpace2D.uniform(3, 6)
    assert assemble_mass(lo, hi, square).shape == (lo.dim, hi.dim)
    with pytest.raises(ParameterError):
        assemble_mass(hi, lo, square)
    with pytest.raises(ParameterError):
        assemble_mass(lo, SplineSpace2D.uniform(3, 8), square)


def test_load_zero_and_one(square, annulus):
    for geom, area in ((square, 1.0), (annulus, ANNULUS_AREA)):
        full = SplineSpace2D.uniform(3, 6, constrained=False)
        assert np.all(assemble_load(full, geom, lambda x, y: 0.0 * x) == 0)
        assert assemble_load(full, geom, lambda x, y: np.ones_like(x)).sum() == pytest.approx(area, rel=1e-12)


def test_quadrature_sufficiency_square(square):
    space = SplineSpace2D.uniform(3, 6)
    A = assemble_stiffness(space, square)
    A2 = assemble_stiffness(space, square, npts=8)
    assert abs(A - A2).max() <= 1e-12


def test_quadrature_sufficiency_annulus(annulus):
    space = SplineSpace2D.uniform(3, 16)
    A = assemble_stiffness(space, annulus)
    A2 = assemble_stiffness(space, annulus, npts=2 * (space.degree + 2))
    assert abs(A - A2).max() <= 1e-8


def test_singular_geometry_raises():
    kv = make_open_uniform_knots(1, 1)
    cp = np.array([[[0.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [0.0, 1.0]]])  # collapsed in x
    g = GeometryMap("nurbs", kv, kv, cp, np.ones((2, 2)))
    with pytest.raises(GeometryError, match="span"):
        assemble_stiffness(SplineSpace2D.uniform(2, 2), g)


def test_solution_weights(annulus, square):
    space = SplineSpace2D.uniform(3, 4, constrained=False)
    assert np.all(solution_weights(space, square) == 1)
    w = solution_weights(space, annulus)
    assert np.all(w > 0)
    with pytest.raises(ParameterError):
        solution_weights(SplineSpace2D.uniform(1, 4, constrained=False), annulus)


def test_annulus_space_reproduces_geometry_weights(annulus):
    # on the geometry's own mesh and degree the solution weights are the geometry's
    w = solution_weights(SplineSpace2D.uniform(2, 1, constrained=False), annulus)
    np.testing.assert_allclose(w, annulus.weights, atol=1e-12)
    fine = refine_geometry(annulus, 4)
    np.testing.assert_allclose(solution_weights(SplineSpace2D.uniform(2, 4, constrained=False), annulus), fine.weights, atol=1e-12)


def _galerkin_error(p, m, geom, rhs, exact):
    space = SplineSpace2D.uniform(p, m)
    A = assemble_stiffness(space, geom)
    u = spla.spsolve(A.tocsc(), assemble_load(space, geom, rhs))
    return l2_error(space, geom, u, exact)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_square_convergence_order(p, square):
    e16 = _galerkin_error(p, 16, square, square_rhs, square_exact)
    e32 = _galerkin_error(p, 32, square, square_rhs, square_exact)
    assert np.log2(e16 / e32) >= p + 0.9


def test_square_p2_error_scales_like_h_cubed(square):
    e = _galerkin_error(2, 16, square, square_rhs, square_exact)
    assert e <= 2.0 * (1 / 16) ** 3


@pytest.mark.parametrize("p", [3, 4])
def test_annulus_convergence(p, annulus):
    e8 = _galerkin_error(p, 8, annulus, annulus_rhs, annulus_exact)
    e16 = _galerkin_error(p, 16, annulus, annulus_rhs, annulus_exact)
    assert np.log2(e8 / e16) >= p + 0.5


def test_annulus_rhs_is_minus_laplacian():
    x, y, h = 0.31, 0.22, 1e-4
    lap = (
        annulus_exact(x + h, y) + annulus_exact(x - h, y) + annulus_exact(x, y + h) + annulus_exact(x, y - h)
        - 4 * annulus_exact(x, y)
    ) / h**2
    assert annulus_rhs(x, y) == pytest.approx(-lap, rel=1e-6)


def test_evaluate_solution_interpolates_constant_in_full_space(annulus):
    space = SplineSpace2D.uniform(3, 4, constrained=False)
    # all-ones coefficients give sum_k w_k N_k / W = W / W
    vals = evaluate_solution(space, annulus, np.ones(space.dim), np.linspace(0, 1, 5), np.linspace(0, 1, 5))
    np.testing.assert_allclose(vals, 1.0, atol=1e-12)


def test_matrix_market_dump_round_trip(tmp_path, square):
    A = assemble_stiffness(SplineSpace2D.uniform(2, 4), square)
    path = tmp_path / "a.mtx"
    dump_matrix_market(A, path, comment="stiffness p=2 m=4")
    B = sp.csr_matrix(scipy.io.mmread(str(path)))
    assert abs(A - B).max() < 1e-14
