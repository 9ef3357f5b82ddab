"""Local Fourier analysis on a doubly periodic grid.

Every operator of the method is rebuilt on an ``n x n`` torus from the
translation-invariant interior rows of the assembled operators: stiffness
stencils, the cross-degree mass stencil (with its lumped diagonal), and the
knot-insertion column weights. The multiplicative Schwarz sweep runs with
wrapped blocks in the same order as on the bounded grid. The convergence
factor is the spectral radius of the error-propagation operator on the
complement of the constants, obtained by power iteration.

Coarse inverses are applied with FFTs; the zero frequency (the constants)
is projected out.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_mass, assemble_stiffness, mass_1d
from .exceptions import ParameterError
from .smoothers import BlockPlan, build_block_plan, rb_gs_sweep, rb_order, schwarz_sweep
from .spline_core import SplineSpace2D, identity_square, make_open_uniform_knots
from .transfer import mesh_prolongation_1d

__all__ = [
    "Stencil",
    "VARIANTS",
    "interior_stencil",
    "cross_mass_stencil",
    "mesh_prolongation_weights",
    "periodic_operator",
    "TorusProblem",
    "LfaReport",
    "build_torus_problem",
    "spectral_factor",
    "sweep_table",
]

VARIANTS = ("two-grid", "three-grid", "two-grid-aggressive")


@dataclass(frozen=True, eq=False)
class Stencil:
    """Square array of coefficients; ``values[a, b]`` sits at offset ``(a - origin, b - origin)``."""

    values: np.ndarray
    origin: int
    degree: int

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.values.shape[0]) - self.origin


def _stencil_mesh(p: int) -> int:
    return 4 * p + 4


@lru_cache(maxsize=None)
def _interior_stencil(p: int, m: int) -> Stencil:
    if m < _stencil_mesh(p):
        raise ParameterError(f"m={m} is too small for a full interior row at p={p}")
    space = SplineSpace2D.uniform(p, m)
    A = assemble_stiffness(space, identity_square())
    n = space.shape[0]
    c = n // 2
    row = A.getrow(c * n + c).toarray().reshape(n, n)
    vals = row[c - p : c + p + 1, c - p : c + p + 1].copy()
    return Stencil(vals, p, p)


def interior_stencil(p: int, m: int | None = None) -> Stencil:
    """Interior ``(2p + 1)^2`` stiffness stencil of degree ``p`` on the unit square."""
    return _interior_stencil(p, m or _stencil_mesh(p))


@lru_cache(maxsize=None)
def cross_mass_stencil(p: int, p_low: int) -> Stencil:
    """Interior row of the mass matrix between degree ``p_low`` (rows) and ``p`` (columns).

    Entry at offset ``k`` couples row function ``i`` with column ``i + k``,
    ``-p_low <= k <= p``. Returned values are for mesh size 1.
    """
    m = _stencil_mesh(p)
    kl = make_open_uniform_knots(p_low, m)
    kh = make_open_uniform_knots(p, m)
    M = mass_1d(kl, kh).toarray() * m  # rescale to h = 1
    c = m // 2
    row = M[c, c - p_low : c + p + 1]
    return Stencil(np.outer(row, row), p_low, p)


def mesh_prolongation_weights(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets ``r - 2J`` and weights of an interior column of the 1D embedding."""
    cm = 2 * p + 4
    T = mesh_prolongation_1d(p, cm, constrained=False)
    J = cm // 2
    rows = np.nonzero(np.abs(T[:, J]) > 1e-15)[0]
    return rows - 2 * J, T[rows, J]


def periodic_operator(stencil: Stencil, n_rows: int, n_cols: int | None = None) -> sp.csr_matrix:
    """Circulant operator on ``n x n`` (rows) torus from a same-grid stencil."""
    n_cols = n_cols or n_rows
    if n_cols != n_rows:
        raise ParameterError("same-grid stencils need equal torus sizes")
    n = n_rows
    off = stencil.offsets
    i, j = np.divmod(np.arange(n * n), n)
    rows, cols, vals = [], [], []
    for a, da in enumerate(off):
        for b, db in enumerate(off):
            v = stencil.values[a, b]
            if v == 0.0:
                continue
            rows.append(i * n + j)
            cols.append(((i + da) % n) * n + (j + db) % n)
            vals.append(np.full(n * n, v))
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * n, n * n)
    )
    A.sum_duplicates()
    A.sort_indices()
    return A


def _periodic_prolongation(p: int, n_coarse: int) -> sp.csr_matrix:
    off, w = mesh_prolongation_weights(p)
    n = 2 * n_coarse
    J = np.arange(n_coarse)
    rows = ((2 * J[:, None] + off[None, :]) % n).ravel()
    cols = np.repeat(J, off.size)
    T = sp.csr_matrix((np.tile(w, n_coarse), (rows, cols)), shape=(n, n_coarse))
    return sp.kron(T, T, format="csr")


class _FourierSolver:
    """Pseudo-inverse of a circulant operator given by a stencil."""

    def __init__(self, stencil: Stencil, n: int, scale: float = 1.0, singular: bool = True):
        k = 2.0 * np.pi * np.fft.fftfreq(n)
        off = stencil.offsets
        ph = np.exp(1j * np.outer(k, off))  # (n, width)
        symbol = np.einsum("ka,ab,lb->kl", ph, stencil.values, ph).real * scale
        if singular:
            symbol[0, 0] = np.inf
        if np.min(np.abs(symbol)) < 1e-12:
            raise ParameterError("periodic operator has a nontrivial kernel")
        self.symbol = symbol
        self.n = n

    def solve(self, b: np.ndarray) -> np.ndarray:
        bh = np.fft.fft2(b.reshape(self.n, self.n))
        return np.fft.ifft2(bh / self.symbol).real.ravel()


def _periodic_cross(stencil: Stencil, n: int) -> sp.csr_matrix:
    """Torus version of a rectangular (cross-degree) stencil on one grid."""
    off = stencil.offsets
    i, j = np.divmod(np.arange(n * n), n)
    rows, cols, vals = [], [], []
    for a, da in enumerate(off):
        for b, db in enumerate(off):
            rows.append(i * n + j)
            cols.append(((i + da) % n) * n + (j + db) % n)
            vals.append(np.full(n * n, stencil.values[a, b]))
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * n, n * n)
    )
    M.sum_duplicates()
    M.sort_indices()
    return M


class _DegreeTransfer:
    """``R = Mc^{-1} M`` and ``P = M^T Mc^{-1}`` with ``Mc`` lumped or exact."""

    def __init__(self, p: int, p_low: int, n: int, lumped: bool):
        st = cross_mass_stencil(p, p_low)
        self.M = _periodic_cross(st, n)
        self.MT = self.M.T.tocsr()
        # lumped coarse mass at mesh size 1: the row sum of the interior row
        self.lump = cross_mass_stencil(p_low, p_low).values.sum()
        self.exact = None if lumped else _FourierSolver(cross_mass_stencil(p_low, p_low), n, singular=False)

    def restrict(self, d):
        y = self.M @ d
        return y / self.lump if self.exact is None else self.exact.solve(y)

    def prolong(self, e):
        y = e / self.lump if self.exact is None else self.exact.solve(e)
        return self.MT @ y


@dataclass(eq=False)
class TorusProblem:
    """Error propagation of one method variant on an ``n x n`` torus.

    Mesh transfers use ``P`` and ``P^T / 4``; the coarse-mesh operator is
    scaled by ``1/4`` accordingly (``(h / H)^2``).
    """

    variant: str
    p: int
    p_low: int
    block_size: int
    n: int
    colouring: str
    nu1: int
    nu2: int
    A: sp.csr_matrix
    plan: BlockPlan
    degree_transfer: _DegreeTransfer
    coarse_solver: _FourierSolver
    A_low: sp.csr_matrix | None = None
    mesh_prolongation: sp.csr_matrix | None = None
    rb_order: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.n * self.n

    @property
    def coarse_dim(self) -> int:
        return self.dim if self.variant == "two-grid" else self.dim // 4

    def smooth(self, e: np.ndarray, steps: int | None = None) -> np.ndarray:
        zero = np.zeros_like(e)
        for _ in range(self.nu1 if steps is None else steps):
            schwarz_sweep(self.plan, self.A, e, zero)
        return e

    def _low_correction(self, d_low: np.ndarray) -> np.ndarray:
        if self.variant == "two-grid":
            return self.coarse_solver.solve(d_low)
        P = self.mesh_prolongation
        if self.variant == "two-grid-aggressive":
            return P @ self.coarse_solver.solve(0.25 * (P.T @ d_low))
        # three-grid: one V(1,1) cycle for A_low e = d_low from a zero guess
        shape = (self.n, self.n)
        e = np.zeros_like(d_low)
        rb_gs_sweep(self.A_low, e, d_low, shape, self.rb_order)
        r = d_low - self.A_low @ e
        e += P @ self.coarse_solver.solve(0.25 * (P.T @ r))
        rb_gs_sweep(self.A_low, e, d_low, shape, self.rb_order)
        return e

    def coarse_correction(self, e: np.ndarray) -> np.ndarray:
        """``e - P A_c^{-1} R A e`` for the variant's coarse level (copies ``e``)."""
        dt = self.degree_transfer
        return e - dt.prolong(self._low_correction(dt.restrict(self.A @ e)))

    def apply(self, e: np.ndarray) -> np.ndarray:
        """One application of the error-propagation operator (copies ``e``)."""
        e = self.coarse_correction(self.smooth(e.copy()))
        return self.smooth(e, self.nu2)


def build_torus_problem(
    p: int,
    p_low: int,
    block_size: int,
    variant: str = "two-grid",
    n: int = 48,
    nu1: int = 1,
    nu2: int = 0,
    colouring: str = "lex",
    lumped: bool = True,
) -> TorusProblem:
    """Periodic error-propagation operator of one variant of the method.

    ``variant="two-grid"`` uses an exact coarse solve on the same mesh;
    ``"three-grid"`` replaces it by one V(1,1) red-black Gauss-Seidel cycle
    with an exact solve on mesh ``2h``; ``"two-grid-aggressive"`` coarsens
    degree and mesh at once with an exact coarse solve.
    """
    if variant not in VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}")
    if n % 6 or n < 6 * (2 * p + 1):
        raise ParameterError(f"torus extent n={n} must be a multiple of 6 and at least {6 * (2 * p + 1)}")
    if p_low > p:
        raise ParameterError("coarse degree exceeds fine degree")
    A = periodic_operator(interior_stencil(p), n)
    plan = build_block_plan(A, (n, n), block_size, colouring, periodic=True)
    dt = _DegreeTransfer(p, p_low, n, lumped)
    low = interior_stencil(p_low)
    extra = {}
    if variant == "two-grid":
        solver = _FourierSolver(low, n)
    else:
        solver = _FourierSolver(low, n // 2, scale=0.25)
        extra["mesh_prolongation"] = _periodic_prolongation(p_low, n // 2)
        if variant == "three-grid":
            extra["A_low"] = periodic_operator(low, n)
            extra["rb_order"] = rb_order((n, n))
    return TorusProblem(variant, p, p_low, block_size, n, colouring, nu1, nu2, A, plan, dt, solver, **extra)


@dataclass
class LfaReport:
    """Estimated spectral radius of one torus error-propagation operator."""

    variant: str
    p: int
    p_low: int
    block_size: int
    radius: float
    n: int
    residual: float
    converged: bool = True
    iterations: int = 0


def _deflate(v: np.ndarray) -> np.ndarray:
    return v - v.mean()


def _subspace_radius(tp: TorusProblem, tol: float, rng, max_iter: int):
    """Largest |eigenvalue| by implicitly restarted Arnoldi on the deflated operator."""
    from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

    def mv(v):
        if np.iscomplexobj(v):
            return mv(v.real) + 1j * mv(v.imag)
        return _deflate(tp.apply(_deflate(v)))

    op = LinearOperator((tp.dim, tp.dim), matvec=mv, dtype=float)
    v0 = _deflate(rng.standard_normal(tp.dim))
    try:
        # a few extra Ritz pairs: near-degenerate dominant clusters are common
        vals, vecs = eigs(op, k=8, which="LM", v0=v0, tol=tol, maxiter=max_iter, ncv=50)
    except ArpackNoConvergence as exc:
        if exc.eigenvalues.size == 0:
            return np.nan, np.inf, False
        vals, vecs = exc.eigenvalues, exc.eigenvectors
        ok = False
    else:
        ok = True
    k = int(np.argmax(np.abs(vals)))
    x = vecs[:, k]
    res = np.linalg.norm(mv(x) - vals[k] * x) / max(np.linalg.norm(x), 1e-300)
    return float(abs(vals[k])), float(res), ok


def spectral_factor(
    tp: TorusProblem,
    tol: float = 1e-4,
    max_iter: int = 100,
    restart: int = 50,
    seed: int = 0,
) -> LfaReport:
    """Spectral radius of ``tp`` on the complement of the constants.

    Power iteration with the mean removed after every application; the
    iterate is perturbed every ``restart`` steps so that a start vector
    orthogonal to the dominant mode cannot stall. The estimate is accepted
    once successive norm ratios differ by less than ``tol`` and the
    eigen-residual ``|T v - lam v|`` is below ``0.01 lam``. Otherwise (a
    dominant complex pair or a tight cluster of dominant eigenvalues) an
    Arnoldi eigensolver takes over. ``residual`` holds the final
    eigen-residual.
    """
    rng = np.random.default_rng(seed)
    v = _deflate(rng.standard_normal(tp.dim))
    v /= np.linalg.norm(v)
    prev = np.inf
    for it in range(1, max_iter + 1):
        w = _deflate(tp.apply(v))
        lam = float(np.linalg.norm(w))
        if lam < 1e-14:
            return LfaReport(tp.variant, tp.p, tp.p_low, tp.block_size, lam, tp.n, 0.0, True, it)
        v_new = w / lam
        if abs(lam - prev) < tol and it > 5:
            res = float(np.linalg.norm(_deflate(tp.apply(v_new)) - lam * v_new))
            if res < 0.01 * lam:
                return LfaReport(tp.variant, tp.p, tp.p_low, tp.block_size, lam, tp.n, res, True, it)
        prev = lam
        v = v_new
        if it % restart == 0:
            v = _deflate(v + 1e-3 * rng.standard_normal(tp.dim))
            v /= np.linalg.norm(v)
    radius, res, ok = _subspace_radius(tp, tol, rng, 20 * max_iter)
    return LfaReport(tp.variant, tp.p, tp.p_low, tp.block_size, radius, tp.n, res, ok, max_iter)


def sweep_table(
    variant: str,
    degrees=range(2, 9),
    block_sizes=(9, 25, 49),
    p_low: int = 1,
    n: int = 48,
    tol: float = 1e-4,
    **kwargs,
) -> list[LfaReport]:
    """One report per ``(p, block_size)``, degree-major.

    ``n`` is raised to the smallest admissible torus extent when a degree
    needs more room. Cells that fail are reported with ``converged=False``
    and a NaN radius.
    """
    out = []
    for p in degrees:
        n_p = max(n, 6 * (2 * p + 1))
        for bs in block_sizes:
            try:
                tp = build_torus_problem(p, p_low, bs, variant, n=n_p, **kwargs)
                out.append(spectral_factor(tp, tol))
            except (ParameterError, ArithmeticError, np.linalg.LinAlgError):
                out.append(LfaReport(variant, p, p_low, bs, float("nan"), n_p, float("nan"), False))
    return out
