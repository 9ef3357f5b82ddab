"""Overlapping multiplicative Schwarz and red-black Gauss-Seidel sweeps.

Unknowns live on an ``(nx, ny)`` grid numbered ``i * ny + j``. A Schwarz
block is the ``(2w + 1) x (2w + 1)`` window around one grid point, clipped
at the boundary (or wrapped, on a periodic grid). Every grid point centres
exactly one block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.sparse as sp

from .exceptions import NumericalError, ParameterError

__all__ = [
    "BLOCK_HALF_WIDTH",
    "COLOURINGS",
    "BlockPlan",
    "SweepStats",
    "build_block_plan",
    "schwarz_sweep",
    "rb_gs_sweep",
    "rb_order",
]

BLOCK_HALF_WIDTH = {1: 0, 9: 1, 25: 2, 49: 3}
COLOURINGS = ("lex", "three-colour", "three-colour-sum")


def _colour(i, j, colouring):
    if colouring == "lex":
        return np.zeros_like(i)
    if colouring == "three-colour":
        return (i - j) % 3
    if colouring == "three-colour-sum":
        return (i + j) % 3
    raise ParameterError(f"unknown colouring {colouring!r}")


def sweep_order(nx: int, ny: int, colouring: str) -> np.ndarray:
    """Grid points in sweep order: ascending colour, lexicographic inside a colour."""
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    i, j = i.ravel(), j.ravel()
    col = _colour(i, j, colouring)
    return np.lexsort((j, i, col))


@dataclass(frozen=True, eq=False)
class BlockPlan:
    """Blocks of one Schwarz sweep, stored in sweep order.

    Block ``t`` (the ``t``-th to be processed) is centred at grid point
    ``centers[t]`` and owns the unknowns ``idx[ptr[t]:ptr[t + 1]]``; its
    inverse is ``inverses[keys[t]]`` (top-left ``n x n`` corner).
    """

    shape: tuple[int, int]
    half_width: int
    colouring: str
    periodic: bool
    centers: np.ndarray
    colours: np.ndarray
    ptr: np.ndarray
    idx: np.ndarray
    keys: np.ndarray
    inverses: np.ndarray

    @property
    def n_blocks(self) -> int:
        return self.centers.size

    @property
    def block_size(self) -> int:
        return (2 * self.half_width + 1) ** 2

    @property
    def n_factorizations(self) -> int:
        return self.inverses.shape[0]

    def block(self, t: int) -> np.ndarray:
        return self.idx[self.ptr[t] : self.ptr[t + 1]]

    def blocks_of(self, unknown: int) -> np.ndarray:
        """Sweep positions of every block containing ``unknown``."""
        owner = np.repeat(np.arange(self.n_blocks), np.diff(self.ptr))
        return np.unique(owner[self.idx == unknown])


@dataclass
class SweepStats:
    residual_before: float
    residual_after: float


def _window_1d(c, w, n, periodic):
    if periodic:
        return (c + np.arange(-w, w + 1)) % n
    return np.arange(max(c - w, 0), min(c + w, n - 1) + 1)


def _key_1d(c, w, n, interior):
    """Class of a 1D window: identical classes give identical block matrices."""
    lo, hi = interior
    if c - w >= lo and c + w <= hi:
        return ("int",)
    if c - w < lo:
        return ("lo", c)
    return ("hi", n - 1 - c)


@nb.njit(cache=True)
def _extract_inverses(indptr, indices, data, ptr, idx, reps, bmax):
    out = np.zeros((reps.size, bmax, bmax))
    pos = np.full(indptr.size - 1, -1, dtype=np.int64)
    for r in range(reps.size):
        t = reps[r]
        s0 = ptr[t]
        nb_ = ptr[t + 1] - s0
        for a in range(nb_):
            pos[idx[s0 + a]] = a
        blk = np.zeros((nb_, nb_))
        for a in range(nb_):
            row = idx[s0 + a]
            for k in range(indptr[row], indptr[row + 1]):
                c = pos[indices[k]]
                if c >= 0:
                    blk[a, c] += data[k]
        for a in range(nb_):
            pos[idx[s0 + a]] = -1
        out[r, :nb_, :nb_] = np.linalg.inv(blk)
    return out


def build_block_plan(
    A: sp.csr_matrix,
    shape: tuple[int, int],
    block_size: int,
    colouring: str = "three-colour",
    *,
    periodic: bool = False,
    interior: tuple[tuple[int, int], tuple[int, int]] | None = None,
) -> BlockPlan:
    """Blocks, sweep order and block inverses for ``A`` on an ``shape`` grid.

    Parameters
    ----------
    A : csr_matrix
        Operator on the ``nx * ny`` unknowns.
    shape : (nx, ny)
    block_size : {1, 9, 25, 49}
        Unknowns per (unclipped) block; 1 gives pointwise Gauss-Seidel.
    colouring : {"lex", "three-colour", "three-colour-sum"}
        ``"three-colour"`` colours centre ``(i, j)`` by ``(i - j) mod 3``,
        ``"three-colour-sum"`` by ``(i + j) mod 3``; colours are swept in
        ascending order, lexicographically inside each colour.
    periodic : bool
        Wrap windows around the grid instead of clipping (torus analysis).
    interior : ((lo_x, hi_x), (lo_y, hi_y)), optional
        Index ranges on which ``A`` is translation invariant. When given,
        blocks whose window lies inside share one inverse, and boundary
        blocks are shared by clipping pattern. Without it every block is
        factorized on its own. Periodic grids always share one inverse.
    """
    if block_size not in BLOCK_HALF_WIDTH:
        raise ParameterError(f"block size must be one of {sorted(BLOCK_HALF_WIDTH)}")
    w = BLOCK_HALF_WIDTH[block_size]
    nx, ny = shape
    if nx * ny != A.shape[0] or A.shape[0] != A.shape[1]:
        raise ParameterError("operator does not match the grid shape")
    if nx < 2 * w + 1 or ny < 2 * w + 1:
        raise ParameterError(f"grid {shape} is smaller than a {block_size}-point block")
    if periodic and (nx == 2 * w + 1 or ny == 2 * w + 1):
        raise ParameterError("periodic blocks would cover the whole torus")

    order = sweep_order(nx, ny, colouring)
    ci, cj = np.divmod(order, ny)
    colours = _colour(ci, cj, colouring)
    wins_x = [_window_1d(c, w, nx, periodic) for c in range(nx)]
    wins_y = [_window_1d(c, w, ny, periodic) for c in range(ny)]
    sizes = np.array([wins_x[a].size * wins_y[b].size for a, b in zip(ci, cj)])
    ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    idx = np.concatenate(
        [(wins_x[a][:, None] * ny + wins_y[b][None, :]).ravel() for a, b in zip(ci, cj)]
    ).astype(np.int64)

    if periodic:
        keys = np.zeros(order.size, dtype=np.int64)
        reps = np.array([0], dtype=np.int64)
    elif interior is not None:
        table: dict = {}
        keys = np.empty(order.size, dtype=np.int64)
        reps_list = []
        for t, (a, b) in enumerate(zip(ci, cj)):
            key = (_key_1d(a, w, nx, interior[0]), _key_1d(b, w, ny, interior[1]))
            if key not in table:
                table[key] = len(reps_list)
                reps_list.append(t)
            keys[t] = table[key]
        reps = np.array(reps_list, dtype=np.int64)
    else:
        keys = np.arange(order.size, dtype=np.int64)
        reps = keys.copy()

    A = sp.csr_matrix(A)
    try:
        inverses = _extract_inverses(A.indptr, A.indices, A.data, ptr, idx, reps, (2 * w + 1) ** 2)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular Schwarz block matrix") from exc
    if not np.all(np.isfinite(inverses)):
        raise NumericalError("non-finite Schwarz block inverse")
    return BlockPlan((nx, ny), w, colouring, periodic, order, colours, ptr, idx, keys, inverses)


@nb.njit(cache=True)
def _schwarz_kernel(indptr, indices, data, x, b, ptr, idx, keys, inverses):
    bmax = inverses.shape[1]
    r = np.empty(bmax)
    for t in range(ptr.size - 1):
        s0 = ptr[t]
        nb_ = ptr[t + 1] - s0
        for a in range(nb_):
            row = idx[s0 + a]
            acc = b[row]
            for k in range(indptr[row], indptr[row + 1]):
                acc -= data[k] * x[indices[k]]
            r[a] = acc
        inv = inverses[keys[t]]
        for a in range(nb_):
            acc = 0.0
            for c in range(nb_):
                acc += inv[a, c] * r[c]
            x[idx[s0 + a]] += acc


def _csr_arrays(A):
    if not sp.isspmatrix_csr(A):
        A = sp.csr_matrix(A)
    return A.indptr, A.indices, A.data


def schwarz_sweep(plan: BlockPlan, A, x, b, *, stats: bool = False):
    """One multiplicative Schwarz sweep; updates ``x`` in place and returns it.

    For every block in sweep order: ``x <- x + V^T (V A V^T)^{-1} V (b - A x)``,
    always with the current iterate. With ``stats=True`` returns
    ``(x, SweepStats)``.
    """
    indptr, indices, data = _csr_arrays(A)
    if stats:
        before = float(np.linalg.norm(b - A @ x))
    _schwarz_kernel(indptr, indices, data, x, b, plan.ptr, plan.idx, plan.keys, plan.inverses)
    if stats:
        return x, SweepStats(before, float(np.linalg.norm(b - A @ x)))
    return x


def rb_order(shape: tuple[int, int]) -> np.ndarray:
    """Red points ``(i + j)`` even first, then black; lexicographic within a colour."""
    nx, ny = shape
    i, j = np.divmod(np.arange(nx * ny), ny)
    return np.lexsort((j, i, (i + j) % 2))


@nb.njit(cache=True)
def _gs_kernel(indptr, indices, data, diag, x, b, order):
    for t in range(order.size):
        row = order[t]
        acc = b[row]
        for k in range(indptr[row], indptr[row + 1]):
            acc -= data[k] * x[indices[k]]
        x[row] += acc / diag[row]


def rb_gs_sweep(A, x, b, shape: tuple[int, int], order: np.ndarray | None = None):
    """One red-black Gauss-Seidel sweep on an ``shape`` grid (in place)."""
    diag = A.diagonal()
    if np.any(diag == 0):
        raise NumericalError("zero diagonal entry in Gauss-Seidel")
    if order is None:
        order = rb_order(shape)
    indptr, indices, data = _csr_arrays(A)
    _gs_kernel(indptr, indices, data, diag, x, b, order.astype(np.int64))
    return x
