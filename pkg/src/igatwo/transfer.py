"""Transfers between degrees (same mesh) and between meshes (same degree).

Degree transfers come from an L2 projection whose coarse mass matrix is
replaced by its row-sum lumped diagonal ``D``::

    restriction  = D^{-1} M        (M = mass(coarse rows, fine columns))
    prolongation = M^T D^{-1}

Mesh transfers use the exact knot-insertion embedding ``P`` of the coarse
spline space into the fine one. The restriction is ``P^T`` with every row
divided by the matching column sum of the unconstrained ``P``: that is
``P^T / 4`` away from the boundary and maps constants to constants up to
the boundary rows as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import _default_npts, _is_rational, assemble_mass, solution_weights
from .exceptions import ParameterError
from .spline_core import GeometryMap, SplineSpace2D, make_open_uniform_knots, refinement_matrix

__all__ = [
    "TransferPair",
    "lumped_mass_diagonal",
    "degree_restriction",
    "mesh_prolongation_1d",
    "mesh_prolongation",
    "space_mesh_transfer",
    "compose_aggressive",
]


@dataclass(frozen=True, eq=False)
class TransferPair:
    restriction: sp.csr_matrix  # coarse x fine
    prolongation: sp.csr_matrix  # fine x coarse
    kind: str

    @property
    def n_fine(self) -> int:
        return self.restriction.shape[1]

    @property
    def n_coarse(self) -> int:
        return self.restriction.shape[0]


def lumped_mass_diagonal(space: SplineSpace2D, geom: GeometryMap, npts: int | None = None) -> np.ndarray:
    """Row sums of the unconstrained mass matrix, kept at ``space``'s indices."""
    full = space.with_constraint(False)
    d = np.asarray(assemble_mass(full, full, geom, npts).sum(axis=1)).ravel()
    return d[_kept(space)]


def degree_restriction(
    fine: SplineSpace2D, coarse: SplineSpace2D, geom: GeometryMap, lumped: bool = True
) -> TransferPair:
    """L2-projection transfer from degree ``p`` to ``p_low`` on the same mesh.

    ``lumped=False`` uses the exact coarse mass inverse instead of the
    lumped diagonal; with equal degrees the restriction is then the identity.
    """
    if coarse.degree > fine.degree:
        raise ParameterError(f"coarse degree {coarse.degree} exceeds fine degree {fine.degree}")
    if coarse.m != fine.m:
        raise ParameterError("degree transfer needs the same mesh on both levels")
    M = assemble_mass(coarse, fine, geom)
    if lumped:
        # same rule as M, so that row sums of M and D agree on rational geometry too
        npts = _default_npts(fine.degree, rational=_is_rational(geom))
        dinv = sp.diags(1.0 / lumped_mass_diagonal(coarse, geom, npts))
        R = (dinv @ M).tocsr()
        P = (M.T @ dinv).tocsr()
    else:
        Mc = assemble_mass(coarse, coarse, geom).tocsc()
        R = sp.csr_matrix(spla.spsolve(Mc, M.tocsc()))
        R.data[np.abs(R.data) < 1e-14] = 0.0
        R.eliminate_zeros()
        P = R.T.tocsr()
    R.sort_indices()
    P.sort_indices()
    return TransferPair(R, P, "degree")


def mesh_prolongation_1d(p: int, coarse_m: int, constrained: bool = True) -> np.ndarray:
    """Dense 1D knot-insertion embedding from ``coarse_m`` to ``2 coarse_m`` spans."""
    T = refinement_matrix(make_open_uniform_knots(p, coarse_m), make_open_uniform_knots(p, 2 * coarse_m))
    if constrained:
        T = T[1:-1, 1:-1]
    return T


def mesh_prolongation(p: int, coarse_m: int, constrained: bool = True) -> TransferPair:
    """Transfer between ``S^p_{2h}`` and ``S^p_h`` (``h = 1 / (2 coarse_m)``)."""
    if coarse_m < 1 or int(coarse_m) != coarse_m:
        raise ParameterError(f"invalid coarse subinterval count {coarse_m}")
    T = sp.csr_matrix(mesh_prolongation_1d(p, coarse_m, constrained=False))
    T.eliminate_zeros()
    P = sp.kron(T, T, format="csr")
    if constrained:
        fine, coarse = SplineSpace2D.uniform(p, 2 * coarse_m), SplineSpace2D.uniform(p, coarse_m)
        return _mesh_pair(P, _kept(fine), _kept(coarse))
    return _mesh_pair(P)


def space_mesh_transfer(fine: SplineSpace2D, geom: GeometryMap) -> TransferPair:
    """Mesh transfer for the discrete space on ``geom`` (fine mesh ``fine.m``).

    On a NURBS geometry the basis functions are ``w_k N_k / W``, so the
    embedding picks up the solution weights:
    ``P = diag(1 / w_fine) (T x T) diag(w_coarse)``. On the identity square
    this is :func:`mesh_prolongation`.
    """
    if fine.m % 2:
        raise ParameterError(f"odd fine subinterval count {fine.m}")
    p, cm = fine.degree, fine.m // 2
    if geom is None or geom.is_identity:
        return mesh_prolongation(p, cm, fine.constrained)
    coarse = SplineSpace2D.uniform(p, cm, fine.constrained)
    wc = solution_weights(coarse, geom).ravel()
    wf = solution_weights(fine, geom).ravel()
    T = sp.csr_matrix(mesh_prolongation_1d(p, cm, constrained=False))
    T.eliminate_zeros()
    P = sp.csr_matrix(sp.diags(1.0 / wf) @ sp.kron(T, T) @ sp.diags(wc))
    if fine.constrained:
        return _mesh_pair(P, _kept(fine), _kept(coarse))
    return _mesh_pair(P)


def _mesh_pair(P_full: sp.csr_matrix, keep_f=None, keep_c=None) -> TransferPair:
    """Restrict ``P_full`` to kept indices; row-normalized transpose as restriction."""
    colsum = np.asarray(P_full.sum(axis=0)).ravel()
    P = P_full
    if keep_f is not None:
        P = P_full[keep_f][:, keep_c]
        colsum = colsum[keep_c]
    P = sp.csr_matrix(P)
    P.sort_indices()
    R = (sp.diags(1.0 / colsum) @ P.T).tocsr()
    R.sort_indices()
    return TransferPair(R, P, "mesh")


def _kept(space: SplineSpace2D) -> np.ndarray:
    sx, sy = space.space_x, space.space_y
    return (sx.indices[:, None] * sy.full_dim + sy.indices[None, :]).ravel()


def compose_aggressive(degree_pair: TransferPair, mesh_pair: TransferPair) -> TransferPair:
    """Degree transfer on mesh ``h`` followed by mesh transfer at the coarse degree."""
    if degree_pair.n_coarse != mesh_pair.n_fine:
        raise ParameterError(
            f"inner dimensions differ: {degree_pair.n_coarse} vs {mesh_pair.n_fine}"
        )
    R = (mesh_pair.restriction @ degree_pair.restriction).tocsr()
    P = (degree_pair.prolongation @ mesh_pair.prolongation).tocsr()
    R.sort_indices()
    P.sort_indices()
    return TransferPair(R, P, "composed")
