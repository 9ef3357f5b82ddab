"""B-spline and NURBS bases on open knot vectors, and the geometry map.

Indices are 0-based throughout. A degree ``p`` space on ``m`` uniform
subintervals has ``m + p`` basis functions; the homogeneous Dirichlet
(constrained) space drops the first and the last one, leaving ``m + p - 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .exceptions import GeometryError, ParameterError

__all__ = [
    "KnotVector",
    "make_open_uniform_knots",
    "find_span",
    "eval_basis",
    "eval_basis_derivative",
    "nonzero_span",
    "basis_ders",
    "collocation_matrix",
    "SplineSpace1D",
    "SplineSpace2D",
    "GeometryMap",
    "identity_square",
    "preset_quarter_annulus",
    "eval_nurbs_basis_2d",
    "geometry_eval",
    "geometry_jacobian",
    "insert_knot_matrix",
    "refinement_matrix",
    "refine_geometry",
]


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open knot vector of a given degree.

    ``knots`` holds ``p + 1`` zeros, the interior breakpoints, and ``p + 1``
    ones. Uniform vectors come from :func:`make_open_uniform_knots`; knot
    insertion may produce non-uniform intermediate vectors.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", k)
        p = self.degree
        if p < 0 or k.ndim != 1 or k.size < 2 * p + 2:
            raise ParameterError(f"invalid knot vector for degree {p}")
        if np.any(np.diff(k) < 0):
            raise ParameterError("knots must be non-decreasing")
        if np.any(k[: p + 1] != k[0]) or np.any(k[-p - 1 :] != k[-1]):
            raise ParameterError("knot vector is not open")

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @cached_property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    @property
    def m(self) -> int:
        """Number of non-empty knot spans."""
        return self.breakpoints.size - 1

    @cached_property
    def element_spans(self) -> np.ndarray:
        """Knot-span index ``s`` (``knots[s] < knots[s+1]``) of every element."""
        k = self.knots
        return np.nonzero(k[1:] > k[:-1])[0]

    def __len__(self):
        return self.knots.size

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, m={self.m})"


def make_open_uniform_knots(p: int, m: int) -> KnotVector:
    """Open knot vector of degree ``p`` with ``m`` uniform subintervals."""
    if not (isinstance(p, (int, np.integer)) and isinstance(m, (int, np.integer))):
        raise ParameterError("degree and subinterval count must be integers")
    if p < 0 or m < 1:
        raise ParameterError(f"need p >= 0 and m >= 1, got p={p}, m={m}")
    interior = np.arange(m + 1) / m
    knots = np.concatenate([np.zeros(p), interior, np.ones(p)])
    return KnotVector(int(p), knots)


def find_span(kv: KnotVector, x):
    """Index ``s`` with ``knots[s] <= x < knots[s+1]``; ``x = 1`` maps to the last span."""
    k = kv.knots
    p = kv.degree
    x = np.asarray(x, dtype=float)
    s = np.searchsorted(k, x, side="right") - 1
    s = np.clip(s, p, kv.n_basis - 1)
    return s if s.ndim else int(s)


def _check_param(x):
    if not (0.0 <= x <= 1.0):
        raise ParameterError(f"parameter {x} outside [0, 1]")


def eval_basis(kv: KnotVector, i: int, k: int, x: float) -> float:
    """Value of ``N_i^k(x)`` by the plain Cox-de Boor recursion.

    Fractions 0/0 count as zero. The last non-empty span is closed on the
    right so that the basis is defined on all of ``[0, 1]``. This is the slow
    reference evaluation; assembly uses :func:`basis_ders`.
    """
    p = kv.degree
    t = kv.knots
    if not 0 <= k <= p:
        raise ParameterError(f"degree {k} outside [0, {p}]")
    if not 0 <= i < t.size - k - 1:
        raise ParameterError(f"basis index {i} out of range for degree {k}")
    _check_param(x)
    last = kv.element_spans[-1]

    def rec(i, k):
        if k == 0:
            if t[i] <= x < t[i + 1]:
                return 1.0
            return 1.0 if (x == t[-1] and i == last) else 0.0
        val = 0.0
        d1 = t[i + k] - t[i]
        if d1 > 0:
            val += (x - t[i]) / d1 * rec(i, k - 1)
        d2 = t[i + k + 1] - t[i + 1]
        if d2 > 0:
            val += (t[i + k + 1] - x) / d2 * rec(i + 1, k - 1)
        return val

    return rec(i, k)


def eval_basis_derivative(kv: KnotVector, i: int, x: float) -> float:
    """First derivative of ``N_i^p`` through the degree ``p - 1`` functions."""
    p = kv.degree
    t = kv.knots
    if p == 0:
        raise ParameterError("derivative of a degree 0 basis is not supported")
    if not 0 <= i < kv.n_basis:
        raise ParameterError(f"basis index {i} out of range")
    val = 0.0
    d1 = t[i + p] - t[i]
    if d1 > 0:
        val += p / d1 * eval_basis(kv, i, p - 1, x)
    d2 = t[i + p + 1] - t[i + 1]
    if d2 > 0:
        val -= p / d2 * eval_basis(kv, i + 1, p - 1, x)
    return val


def nonzero_span(kv: KnotVector, x: float) -> tuple[int, list[int]]:
    """Knot span containing ``x`` and the ``p + 1`` basis indices alive there."""
    _check_param(x)
    s = find_span(kv, x)
    return s, list(range(s - kv.degree, s + 1))


def basis_ders(kv: KnotVector, x, nders: int = 1):
    """Vectorized values and derivatives of the nonzero basis functions.

    Parameters
    ----------
    kv : KnotVector
    x : array_like
        Parameter values in ``[0, 1]``.
    nders : int
        Highest derivative order wanted (at most ``p``).

    Returns
    -------
    spans : ndarray of int, shape (npts,)
        Knot span of every point; function ``spans - p + r`` owns column ``r``.
    ders : ndarray, shape (npts, nders + 1, p + 1)
        ``ders[q, k, r]`` is the ``k``-th derivative of that function.
    """
    t = kv.knots
    p = kv.degree
    x = np.atleast_1d(np.asarray(x, dtype=float))
    npts = x.size
    s = find_span(kv, x)
    nders = min(nders, p)

    ndu = np.zeros((p + 1, p + 1, npts))
    ndu[0, 0] = 1.0
    left = np.zeros((p + 1, npts))
    right = np.zeros((p + 1, npts))
    for j in range(1, p + 1):
        left[j] = x - t[s + 1 - j]
        right[j] = t[s + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nders + 1, p + 1, npts))
    ders[0] = ndu[:, p]
    a = np.zeros((2, p + 1, npts))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nders + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d = d + a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d = d + a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, nders + 1):
        ders[k] *= fac
        fac *= p - k
    return s, np.moveaxis(ders, 2, 0)


def collocation_matrix(kv: KnotVector, x, nders: int = 0) -> np.ndarray:
    """Dense ``(nders + 1, npts, n_basis)`` array of all basis derivatives at ``x``."""
    p = kv.degree
    spans, d = basis_ders(kv, x, nders)
    out = np.zeros((nders + 1, spans.size, kv.n_basis))
    rows = np.arange(spans.size)[:, None]
    cols = spans[:, None] - p + np.arange(p + 1)
    for k in range(min(nders, p) + 1):
        out[k, rows, cols] = d[:, k]
    return out


@dataclass(frozen=True, eq=False)
class SplineSpace1D:
    knot_vector: KnotVector
    constrained: bool = True

    @classmethod
    def uniform(cls, p: int, m: int, constrained: bool = True) -> SplineSpace1D:
        return cls(make_open_uniform_knots(p, m), constrained)

    @property
    def degree(self) -> int:
        return self.knot_vector.degree

    @property
    def m(self) -> int:
        return self.knot_vector.m

    @property
    def full_dim(self) -> int:
        return self.knot_vector.n_basis

    @property
    def dim(self) -> int:
        return self.full_dim - 2 if self.constrained else self.full_dim

    @property
    def indices(self) -> np.ndarray:
        """Full-basis indices of the retained functions."""
        n = self.full_dim
        return np.arange(1, n - 1) if self.constrained else np.arange(n)

    def __repr__(self):
        return f"SplineSpace1D(p={self.degree}, m={self.m}, constrained={self.constrained})"


@dataclass(frozen=True, eq=False)
class SplineSpace2D:
    """Tensor-product space; unknown ``(i, j)`` is stored at ``i * ny + j``."""

    space_x: SplineSpace1D
    space_y: SplineSpace1D

    @classmethod
    def uniform(cls, p: int, m: int, constrained: bool = True) -> SplineSpace2D:
        s = SplineSpace1D.uniform(p, m, constrained)
        return cls(s, s)

    @property
    def degree(self) -> int:
        return self.space_x.degree

    @property
    def m(self) -> int:
        return self.space_x.m

    @property
    def shape(self) -> tuple[int, int]:
        return self.space_x.dim, self.space_y.dim

    @property
    def dim(self) -> int:
        return self.space_x.dim * self.space_y.dim

    @property
    def constrained(self) -> bool:
        return self.space_x.constrained

    def with_constraint(self, constrained: bool) -> SplineSpace2D:
        return SplineSpace2D(
            SplineSpace1D(self.space_x.knot_vector, constrained),
            SplineSpace1D(self.space_y.knot_vector, constrained),
        )

    def __repr__(self):
        return f"SplineSpace2D(p={self.degree}, m={self.m}, shape={self.shape})"


@dataclass(frozen=True, eq=False)
class GeometryMap:
    """Parametrization ``F: [0, 1]^2 -> Omega``.

    ``kind`` is ``"identity"`` (the unit square) or ``"nurbs"``. For NURBS,
    ``control_points`` has shape ``(nx, ny, 2)`` and ``weights`` ``(nx, ny)``,
    both indexed like the tensor basis of ``knots_x`` and ``knots_y``.
    """

    kind: str
    knots_x: KnotVector | None = None
    knots_y: KnotVector | None = None
    control_points: np.ndarray | None = None
    weights: np.ndarray | None = None
    label: str = field(default="")

    def __post_init__(self):
        if self.kind == "identity":
            return
        if self.kind != "nurbs":
            raise ParameterError(f"unknown geometry kind {self.kind!r}")
        cp = np.asarray(self.control_points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "control_points", cp)
        object.__setattr__(self, "weights", w)
        shape = (self.knots_x.n_basis, self.knots_y.n_basis)
        if cp.shape != shape + (2,) or w.shape != shape:
            raise ParameterError("control net does not match the knot vectors")
        if np.any(w <= 0):
            raise GeometryError("NURBS weights must be strictly positive")

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def _tensor(self, xs, ys):
        """Homogeneous sums on the tensor grid ``xs x ys``.

        Returns the values ``(nx, ny, 3)`` of ``(w x, w y, w)`` and their
        parameter derivatives with a trailing axis ``(d/dxi, d/deta)``.
        """
        cx = collocation_matrix(self.knots_x, xs, 1)
        cy = collocation_matrix(self.knots_y, ys, 1)
        w = self.weights
        hom = np.concatenate([self.control_points * w[..., None], w[..., None]], axis=-1)
        hx = np.einsum("ai,ijc->ajc", cx[0], hom)
        dhx = np.einsum("ai,ijc->ajc", cx[1], hom)
        val = np.einsum("ajc,bj->abc", hx, cy[0])
        dxi = np.einsum("ajc,bj->abc", dhx, cy[0])
        deta = np.einsum("ajc,bj->abc", hx, cy[1])
        return val, np.stack([dxi, deta], axis=-1)

    def eval_grid(self, xs, ys):
        """Points, Jacobians and weight function on the tensor grid ``xs x ys``.

        Returns
        -------
        F : ndarray (nx, ny, 2)
        J : ndarray (nx, ny, 2, 2), ``J[..., a, b] = dF_a / dxi_b``
        W : ndarray (nx, ny)
        dW : ndarray (nx, ny, 2)
        """
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        ys = np.atleast_1d(np.asarray(ys, dtype=float))
        if self.is_identity:
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            F = np.stack([X, Y], axis=-1)
            J = np.broadcast_to(np.eye(2), X.shape + (2, 2)).copy()
            return F, J, np.ones(X.shape), np.zeros(X.shape + (2,))
        val, dval = self._tensor(xs, ys)
        W = val[..., 2]
        dW = dval[..., 2, :]
        F = val[..., :2] / W[..., None]
        J = (dval[..., :2, :] - F[..., :, None] * dW[..., None, :]) / W[..., None, None]
        return F, J, W, dW


def identity_square() -> GeometryMap:
    return GeometryMap("identity", label="square")


def preset_quarter_annulus(r: float = 0.3, R: float = 0.5) -> GeometryMap:
    """Exact biquadratic NURBS map of ``{r^2 <= x^2 + y^2 <= R^2, x, y >= 0}``.

    ``xi`` runs along the arc from the y-axis to the x-axis and ``eta``
    radially from ``r`` to ``R``, which keeps the Jacobian determinant
    positive: ``F(0, 0) = (0, r)``, ``F(1, 0) = (r, 0)``, ``F(1, 1) = (R, 0)``.
    """
    if not 0 < r < R:
        raise ParameterError(f"need 0 < r < R, got r={r}, R={R}")
    kv = make_open_uniform_knots(2, 1)
    radii = np.array([r, 0.5 * (r + R), R])
    arc = np.array([[0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])
    cp = arc[:, None, :] * radii[None, :, None]
    w_arc = np.array([1.0, np.sqrt(0.5), 1.0])
    w = np.repeat(w_arc[:, None], 3, axis=1)
    return GeometryMap("nurbs", kv, kv, cp, w, label="annulus")


def eval_nurbs_basis_2d(geom: GeometryMap, i: int, j: int, xi: float, eta: float) -> float:
    """Value of the rational basis function ``R_{i,j}`` of the geometry."""
    if geom.kind != "nurbs":
        raise ParameterError("rational basis requires a NURBS geometry")
    _check_param(xi)
    _check_param(eta)
    kx, ky = geom.knots_x, geom.knots_y
    if not (0 <= i < kx.n_basis and 0 <= j < ky.n_basis):
        raise ParameterError(f"basis index ({i}, {j}) out of range")
    nx = np.array([eval_basis(kx, a, kx.degree, xi) for a in range(kx.n_basis)])
    ny = np.array([eval_basis(ky, b, ky.degree, eta) for b in range(ky.n_basis)])
    wn = geom.weights * np.outer(nx, ny)
    denom = wn.sum()
    if denom <= 0:
        raise GeometryError(f"non-positive NURBS denominator at ({xi}, {eta})")
    return float(wn[i, j] / denom)


def geometry_eval(geom: GeometryMap, xi: float, eta: float) -> np.ndarray:
    _check_param(xi)
    _check_param(eta)
    F, _, _, _ = geom.eval_grid([xi], [eta])
    return F[0, 0]


def geometry_jacobian(geom: GeometryMap, xi: float, eta: float) -> np.ndarray:
    _check_param(xi)
    _check_param(eta)
    _, J, _, _ = geom.eval_grid([xi], [eta])
    J = J[0, 0]
    if not np.linalg.det(J) > 0:
        raise GeometryError(f"singular or inverted Jacobian at (xi, eta) = ({xi}, {eta})")
    return J


def insert_knot_matrix(kv: KnotVector, u: float) -> tuple[KnotVector, np.ndarray]:
    """Boehm single-knot insertion.

    Returns the refined knot vector and the ``(n + 1) x n`` matrix taking old
    coefficients to new ones, so that both represent the same spline.
    """
    t = kv.knots
    p = kv.degree
    n = kv.n_basis
    if not t[0] < u < t[-1]:
        raise ParameterError(f"inserted knot {u} must be interior")
    k = int(np.searchsorted(t, u, side="right")) - 1
    Q = np.zeros((n + 1, n))
    for i in range(n + 1):
        if i <= k - p:
            Q[i, i] = 1.0
        elif i <= k:
            a = (u - t[i]) / (t[i + p] - t[i])
            Q[i, i] = a
            Q[i, i - 1] = 1.0 - a
        else:
            Q[i, i - 1] = 1.0
    new = KnotVector(p, np.insert(t, k + 1, u))
    return new, Q


def refinement_matrix(coarse: KnotVector, fine: KnotVector) -> np.ndarray:
    """Embedding matrix of the coarse spline space into a refined one.

    ``fine`` must contain every knot of ``coarse`` with at least the same
    multiplicity; the extra knots are inserted one at a time.
    """
    if coarse.degree != fine.degree:
        raise ParameterError("refinement keeps the degree fixed")
    extra = list(fine.knots)
    for u in coarse.knots:
        try:
            extra.remove(u)
        except ValueError:
            raise ParameterError("fine knot vector does not refine the coarse one") from None
    T = np.eye(coarse.n_basis)
    kv = coarse
    for u in extra:
        kv, Q = insert_knot_matrix(kv, u)
        T = Q @ T
    if not np.allclose(kv.knots, fine.knots):
        raise ParameterError("fine knot vector does not refine the coarse one")
    return T


def refine_geometry(geom: GeometryMap, m: int) -> GeometryMap:
    """Same map on ``m`` uniform spans per direction, via homogeneous knot insertion."""
    if geom.is_identity:
        return geom
    kx_new = make_open_uniform_knots(geom.knots_x.degree, m)
    ky_new = make_open_uniform_knots(geom.knots_y.degree, m)
    Tx = refinement_matrix(geom.knots_x, kx_new)
    Ty = refinement_matrix(geom.knots_y, ky_new)
    w = geom.weights
    hom = np.concatenate([geom.control_points * w[..., None], w[..., None]], axis=-1)
    hom = np.einsum("ia,jb,abc->ijc", Tx, Ty, hom)
    w_new = hom[..., 2]
    cp_new = hom[..., :2] / w_new[..., None]
    return GeometryMap("nurbs", kx_new, ky_new, cp_new, w_new, label=geom.label)
