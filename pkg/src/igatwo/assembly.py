"""Galerkin assembly of stiffness, (cross-degree) mass and load vectors.

Operators are returned as ``scipy.sparse.csr_matrix`` with sorted indices.
Rows and columns follow the tensor numbering of :class:`SplineSpace2D`
(``i * ny + j``), restricted to the constrained indices when the space is
constrained.

On the identity square the 2D matrices are Kronecker products of exact 1D
matrices. On a NURBS geometry a sum-factorized element loop integrates the
pulled-back forms; the discrete space is then the NURBS space
``{w_ij N_ij / W}`` whose weight function ``W`` is the geometry's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.io
import scipy.sparse as sp

from .exceptions import GeometryError, ParameterError
from .spline_core import GeometryMap, KnotVector, SplineSpace2D, basis_ders, collocation_matrix

__all__ = [
    "QuadratureRule",
    "gauss_rule",
    "stiffness_1d",
    "mass_1d",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load",
    "solution_weights",
    "evaluate_solution",
    "l2_error",
    "dump_matrix_market",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre points per knot span of a uniform mesh.

    ``points`` and ``weights`` have shape ``(m, npts)``; ``points[e]`` lie
    strictly inside span ``e``.
    """

    points: np.ndarray
    weights: np.ndarray

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def npts(self) -> int:
        return self.points.shape[1]


def gauss_rule(m: int, npts: int) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(npts)
    h = 1.0 / m
    left = np.arange(m)[:, None] * h
    pts = left + 0.5 * h * (x[None, :] + 1.0)
    wts = np.broadcast_to(0.5 * h * w, (m, npts)).copy()
    return QuadratureRule(pts, wts)


def _check_uniform(kv: KnotVector):
    m = kv.m
    if not np.allclose(kv.breakpoints, np.arange(m + 1) / m, rtol=0, atol=1e-14):
        raise ParameterError("assembly expects uniform open knot vectors")


def _tables(kv: KnotVector, rule: QuadratureRule):
    """Basis values/derivatives ``(m, npts, 2, p + 1)`` for element-local functions.

    On a uniform open knot vector, element ``e`` carries the functions with
    full indices ``e .. e + p``.
    """
    _check_uniform(kv)
    spans, d = basis_ders(kv, rule.points.ravel(), 1)
    p = kv.degree
    expected = np.repeat(np.arange(rule.m) + p, rule.npts)
    if not np.array_equal(spans, expected):
        raise ParameterError("quadrature points do not match the knot spans")
    tab = d.reshape(rule.m, rule.npts, d.shape[1], p + 1)
    if tab.shape[2] == 1:  # degree 0: no derivative row
        tab = np.concatenate([tab, np.zeros_like(tab)], axis=2)
    return tab


def _default_npts(*degrees, rational=False):
    # p + 1 points are exact for polynomial integrands; rational ones get one more
    return max(degrees) + (2 if rational else 1)


def _matrix_1d(kv_row: KnotVector, kv_col: KnotVector, dr: int, dc: int, npts=None):
    if kv_row.m != kv_col.m:
        raise ParameterError("row and column spaces live on different meshes")
    m = kv_row.m
    npts = npts or _default_npts(kv_row.degree, kv_col.degree)
    rule = gauss_rule(m, npts)
    tr = _tables(kv_row, rule)[:, :, dr]
    tc = _tables(kv_col, rule)[:, :, dc]
    loc = np.einsum("eg,ega,egb->eab", rule.weights, tr, tc)
    qr, qc = kv_row.degree, kv_col.degree
    e = np.arange(m)[:, None, None]
    rows = np.broadcast_to(e + np.arange(qr + 1)[None, :, None], loc.shape)
    cols = np.broadcast_to(e + np.arange(qc + 1)[None, None, :], loc.shape)
    A = sp.coo_matrix(
        (loc.ravel(), (rows.ravel(), cols.ravel())), shape=(kv_row.n_basis, kv_col.n_basis)
    )
    return A.tocsr()


def stiffness_1d(kv: KnotVector, npts=None) -> sp.csr_matrix:
    """Unconstrained 1D matrix of ``int N_i' N_j'``."""
    return _matrix_1d(kv, kv, 1, 1, npts)


def mass_1d(kv_row: KnotVector, kv_col: KnotVector | None = None, npts=None) -> sp.csr_matrix:
    """Unconstrained 1D matrix of ``int N_i N_j`` (possibly across degrees)."""
    return _matrix_1d(kv_row, kv_col or kv_row, 0, 0, npts)


def _restrict(A, row_space: SplineSpace2D, col_space: SplineSpace2D):
    def idx(space):
        sx, sy = space.space_x, space.space_y
        return (sx.indices[:, None] * sy.full_dim + sy.indices[None, :]).ravel()

    A = A.tocsr()[idx(row_space)][:, idx(col_space)]
    A.sort_indices()
    return A


@nb.njit(cache=True)
def _element_loop(xr, xc, yr, yc, coef, active, mx, my, nq, band):
    """Accumulate ``sum_q coef[q, c, d] u_c(row) u_d(col)`` over all elements.

    ``xr[c]`` etc. hold per-component 1D factor tables ``(m, nq, q + 1)``;
    component ``c`` of a tensor function is ``xr[c] (x) yr[c]``. ``band`` has
    shape ``(nrx, nry, qx + px + 1, qy + py + 1)``; column offset ``k - i + qx``.
    """
    ncomp = xr.shape[0]
    qx1 = xr.shape[3]
    px1 = xc.shape[3]
    qy1 = yr.shape[3]
    py1 = yc.shape[3]
    tmp = np.zeros((nq, qy1, py1))
    loc = np.zeros((qx1, qy1, px1, py1))
    for ex in range(mx):
        for ey in range(my):
            loc[:] = 0.0
            for c in range(ncomp):
                for d in range(ncomp):
                    if not active[c, d]:
                        continue
                    tmp[:] = 0.0
                    for gx in range(nq):
                        for gy in range(nq):
                            w = coef[ex * nq + gx, ey * nq + gy, c, d]
                            for b in range(qy1):
                                yv = w * yr[c, ey, gy, b]
                                for s in range(py1):
                                    tmp[gx, b, s] += yv * yc[d, ey, gy, s]
                    for gx in range(nq):
                        for a in range(qx1):
                            xv = xr[c, ex, gx, a]
                            for k in range(px1):
                                xk = xv * xc[d, ex, gx, k]
                                for b in range(qy1):
                                    for s in range(py1):
                                        loc[a, b, k, s] += xk * tmp[gx, b, s]
            for a in range(qx1):
                for b in range(qy1):
                    for k in range(px1):
                        for s in range(py1):
                            band[ex + a, ey + b, k - a + qx1 - 1, s - b + qy1 - 1] += loc[a, b, k, s]


def _band_to_csr(band, qx, qy, ncx, ncy):
    nrx, nry, wx, wy = band.shape
    i = np.arange(nrx)[:, None, None, None]
    j = np.arange(nry)[None, :, None, None]
    k = i - qx + np.arange(wx)[None, None, :, None]
    l = j - qy + np.arange(wy)[None, None, None, :]
    shape = band.shape
    i, j, k, l = (np.broadcast_to(a, shape) for a in (i, j, k, l))
    mask = (k >= 0) & (k < ncx) & (l >= 0) & (l < ncy) & (band != 0.0)
    rows = i[mask] * nry + j[mask]
    cols = k[mask] * ncy + l[mask]
    A = sp.csr_matrix((band[mask], (rows, cols)), shape=(nrx * nry, ncx * ncy))
    A.sort_indices()
    return A


class _GeometryData:
    """Geometry quantities at the tensor quadrature grid of a uniform mesh."""

    def __init__(self, geom: GeometryMap, m: int, npts: int):
        self.rule = gauss_rule(m, npts)
        pts = self.rule.points.ravel()
        F, J, W, dW = geom.eval_grid(pts, pts)
        det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        bad = ~(det > 0)
        if np.any(bad):
            a, b = np.argwhere(bad)[0]
            raise GeometryError(
                f"non-positive Jacobian determinant {det[a, b]:.3e} in span "
                f"({a // npts}, {b // npts}) at (xi, eta) = ({pts[a]:.6f}, {pts[b]:.6f})"
            )
        w = self.rule.weights.ravel()
        self.points = pts
        self.F, self.J, self.W, self.dW = F, J, W, dW
        self.det = det
        self.wdet = w[:, None] * w[None, :] * det


def _component_tables(tab, rational):
    """Per-component factor tables: (d/dxi, d/deta[, value]) in one direction."""
    val, der = tab[:, :, 0], tab[:, :, 1]
    if rational:
        return np.stack([der, val, val]), np.stack([val, der, val])
    return np.stack([der, val]), np.stack([val, der])


def _check_spaces(row: SplineSpace2D, col: SplineSpace2D):
    if row.space_x.m != col.space_x.m or row.space_y.m != col.space_y.m:
        raise ParameterError("row and column spaces must share the mesh")
    for s in (row, col):
        if s.space_x.degree != s.space_y.degree:
            raise ParameterError("equal degrees in both directions are required")
        _check_uniform(s.space_x.knot_vector)
        _check_uniform(s.space_y.knot_vector)


def _is_rational(geom):
    return geom is not None and not geom.is_identity


def solution_weights(space: SplineSpace2D, geom: GeometryMap) -> np.ndarray:
    """Weights ``w_ij`` of the NURBS discretization space on ``geom``.

    They are the coefficients of the geometry weight function in the full
    degree ``p`` tensor basis, obtained by an L2 projection that is exact
    whenever the space contains the geometry's spline space. Returns a
    ``(full_nx, full_ny)`` array; all ones on the identity square.
    """
    kx = space.space_x.knot_vector
    ky = space.space_y.knot_vector
    if not _is_rational(geom):
        return np.ones((kx.n_basis, ky.n_basis))
    if kx.degree < geom.knots_x.degree or ky.degree < geom.knots_y.degree:
        raise ParameterError("the discrete space degree is below the geometry degree")
    npts = max(kx.degree, geom.knots_x.degree) + 2
    gd = _GeometryData(geom, kx.m, npts)
    cx = collocation_matrix(kx, gd.points)[0]
    cy = collocation_matrix(ky, gd.points)[0]
    w = gd.rule.weights.ravel()
    rhs = cx.T @ (w[:, None] * gd.W * w[None, :]) @ cy
    Mx = mass_1d(kx, npts=npts).toarray()
    My = mass_1d(ky, npts=npts).toarray()
    out = np.linalg.solve(Mx, np.linalg.solve(My, rhs.T).T)
    resid = cx @ out @ cy.T - gd.W
    if np.abs(resid).max() > 1e-10:
        raise ParameterError("geometry weight function is not representable in this space")
    return out


def _general_matrix(row: SplineSpace2D, col: SplineSpace2D, geom, kind, npts):
    """Element-loop assembly on the full (unconstrained) spaces."""
    kxr, kyr = row.space_x.knot_vector, row.space_y.knot_vector
    kxc, kyc = col.space_x.knot_vector, col.space_y.knot_vector
    m = kxr.m
    npts = npts or _default_npts(kxr.degree, kxc.degree, rational=_is_rational(geom))
    gd = _GeometryData(geom, m, npts)
    rational = _is_rational(geom)
    xr = _component_tables(_tables(kxr, gd.rule), rational)[0]
    xc = _component_tables(_tables(kxc, gd.rule), rational)[0]
    yr = _component_tables(_tables(kyr, gd.rule), rational)[1]
    yc = _component_tables(_tables(kyc, gd.rule), rational)[1]
    shape = gd.W.shape
    if kind == "stiffness":
        # grad_x phi = J^{-T} grad_xi phi
        Jinv = np.linalg.inv(gd.J)
        C = np.einsum("...ak,...bk->...ab", Jinv, Jinv) * gd.wdet[..., None, None]
        if rational:
            L = np.zeros(shape + (2, 3))
            L[..., 0, 0] = 1.0 / gd.W
            L[..., 1, 1] = 1.0 / gd.W
            L[..., :, 2] = -gd.dW / gd.W[..., None] ** 2
            coef = np.einsum("...ka,...kl,...lb->...ab", L, C, L)
        else:
            coef = C
    elif kind == "mass":
        xr, xc, yr, yc = (
            _tables(kv, gd.rule)[None, :, :, 0] for kv in (kxr, kxc, kyr, kyc)
        )
        coef = (gd.wdet / gd.W**2)[..., None, None]
    else:
        raise ParameterError(f"unknown form {kind!r}")
    active = np.any(coef != 0.0, axis=(0, 1))
    qx, px = kxr.degree, kxc.degree
    qy, py = kyr.degree, kyc.degree
    band = np.zeros((kxr.n_basis, kyr.n_basis, qx + px + 1, qy + py + 1))
    _element_loop(
        np.ascontiguousarray(xr),
        np.ascontiguousarray(xc),
        np.ascontiguousarray(yr),
        np.ascontiguousarray(yc),
        np.ascontiguousarray(coef),
        active,
        m,
        m,
        npts,
        band,
    )
    A = _band_to_csr(band, qx, qy, kxc.n_basis, kyc.n_basis)
    if rational:
        wr = solution_weights(row.with_constraint(False), geom).ravel()
        wc = solution_weights(col.with_constraint(False), geom).ravel()
        A = sp.diags(wr) @ A @ sp.diags(wc)
    return A.tocsr()


def assemble_stiffness(
    space: SplineSpace2D, geom: GeometryMap, npts: int | None = None, general: bool = False
) -> sp.csr_matrix:
    """Stiffness matrix ``a(phi_j, phi_i) = int grad phi_j . grad phi_i``.

    ``general=True`` forces the element loop even on the identity square.
    """
    _check_spaces(space, space)
    if geom.is_identity and not general:
        kx, ky = space.space_x.knot_vector, space.space_y.knot_vector
        Kx, Mx = stiffness_1d(kx, npts), mass_1d(kx, npts=npts)
        Ky, My = stiffness_1d(ky, npts), mass_1d(ky, npts=npts)
        A = sp.kron(Kx, My) + sp.kron(Mx, Ky)
    else:
        A = _general_matrix(space, space, geom, "stiffness", npts)
    return _restrict(A, space, space)


def assemble_mass(
    row_space: SplineSpace2D,
    col_space: SplineSpace2D,
    geom: GeometryMap,
    npts: int | None = None,
    general: bool = False,
) -> sp.csr_matrix:
    """Mass matrix ``int phi_i^row phi_j^col`` between spaces on the same mesh."""
    _check_spaces(row_space, col_space)
    if row_space.degree > col_space.degree:
        raise ParameterError("row space degree must not exceed column space degree")
    if geom.is_identity and not general:
        M = sp.kron(
            mass_1d(row_space.space_x.knot_vector, col_space.space_x.knot_vector, npts),
            mass_1d(row_space.space_y.knot_vector, col_space.space_y.knot_vector, npts),
        )
    else:
        M = _general_matrix(row_space, col_space, geom, "mass", npts)
    return _restrict(M, row_space, col_space)


def _basis_at_points(space: SplineSpace2D, geom, gd):
    kx, ky = space.space_x.knot_vector, space.space_y.knot_vector
    cx = collocation_matrix(kx, gd.points)[0]
    cy = collocation_matrix(ky, gd.points)[0]
    return cx, cy, solution_weights(space.with_constraint(False), geom)


def assemble_load(space: SplineSpace2D, geom: GeometryMap, f, npts: int | None = None) -> np.ndarray:
    """Load vector ``(f, phi_i)``; ``f(x, y)`` is evaluated at physical points."""
    _check_spaces(space, space)
    gd = _GeometryData(geom, space.m, npts or _default_npts(space.degree, rational=_is_rational(geom)))
    cx, cy, w = _basis_at_points(space, geom, gd)
    fv = np.asarray(f(gd.F[..., 0], gd.F[..., 1]), dtype=float)
    fv = np.broadcast_to(fv, gd.W.shape)
    b = (cx.T @ (gd.wdet * fv / gd.W) @ cy) * w
    sx, sy = space.space_x, space.space_y
    return b[np.ix_(sx.indices, sy.indices)].ravel()


def _full_coefficients(space: SplineSpace2D, coeffs):
    sx, sy = space.space_x, space.space_y
    full = np.zeros((sx.full_dim, sy.full_dim))
    full[np.ix_(sx.indices, sy.indices)] = np.asarray(coeffs).reshape(space.shape)
    return full


def evaluate_solution(space: SplineSpace2D, geom: GeometryMap, coeffs, xi, eta) -> np.ndarray:
    """Discrete function on the parameter grid ``xi x eta``."""
    kx, ky = space.space_x.knot_vector, space.space_y.knot_vector
    cx = collocation_matrix(kx, xi)[0]
    cy = collocation_matrix(ky, eta)[0]
    w = solution_weights(space.with_constraint(False), geom)
    _, _, W, _ = geom.eval_grid(xi, eta)
    return cx @ (_full_coefficients(space, coeffs) * w) @ cy.T / W


def l2_error(space: SplineSpace2D, geom: GeometryMap, coeffs, u_exact, npts=None) -> float:
    """``||u_h - u||_{L2(Omega)}`` by Gauss quadrature with ``p + 2`` points."""
    gd = _GeometryData(geom, space.m, npts or space.degree + 2)
    cx, cy, w = _basis_at_points(space, geom, gd)
    uh = cx @ (_full_coefficients(space, coeffs) * w) @ cy.T / gd.W
    u = u_exact(gd.F[..., 0], gd.F[..., 1])
    return float(np.sqrt(np.sum(gd.wdet * (uh - u) ** 2)))


def dump_matrix_market(A, path, comment: str = "") -> None:
    """Write a sparse operator in Matrix Market coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)
