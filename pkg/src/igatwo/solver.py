"""Two-level solver: Schwarz smoothing at degree ``p``, correction at ``p_low``.

One cycle applies ``nu1`` multiplicative Schwarz sweeps, restricts the
defect to the low-degree space, approximately or exactly solves there, and
prolongates the correction. The low-degree problem is treated by one of

``direct``
    sparse LU of ``A_{p_low}`` on the fine mesh;
``vcycle``
    one V(1,1) cycle with red-black Gauss-Seidel on a mesh chain;
``aggressive+vcycle`` / ``aggressive+direct``
    the same on mesh ``2h``, reached by coarsening degree and mesh at once.

Mesh corrections are applied as ``P A_c^{-1} P^T`` with the rediscretized
coarse operator ``A_c``, which is the Galerkin correction whenever the
rediscretization is exact (always on the square). This equals using the
restriction ``P^T / 4`` with ``A_c / 4``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_stiffness
from .exceptions import NumericalError, ParameterError
from .smoothers import BlockPlan, build_block_plan, rb_gs_sweep, rb_order, schwarz_sweep
from .spline_core import GeometryMap, SplineSpace2D, identity_square
from .transfer import TransferPair, degree_restriction, space_mesh_transfer

__all__ = [
    "STRATEGIES",
    "default_block_size",
    "TwoLevelConfig",
    "Level",
    "Hierarchy",
    "SolveReport",
    "build_hierarchy",
    "two_level_cycle",
    "solve",
    "estimate_asymptotic_rate",
]

STRATEGIES = ("direct", "vcycle", "aggressive+vcycle", "aggressive+direct")


def default_block_size(p: int) -> int:
    """Schwarz block size used for degree ``p``: 9 up to p=4, 25 for p=5,6, else 49."""
    if p <= 4:
        return 9
    if p <= 6:
        return 25
    return 49


@dataclass(frozen=True)
class TwoLevelConfig:
    """Parameters of the two-level method.

    ``block_size=None`` picks :func:`default_block_size`. ``lumped=False``
    replaces the lumped coarse mass in the degree transfer by the exact one
    (with ``p_low == p`` and ``direct`` this makes the cycle an exact solver).
    """

    p: int
    p_low: int = 1
    block_size: int | None = None
    nu1: int = 1
    nu2: int = 0
    coarse_strategy: str = "direct"
    colouring: str = "three-colour"
    tolerance: float = 1e-8
    max_iterations: int = 100
    seed: int = 0
    coarsest_m: int = 8
    lumped: bool = True

    def __post_init__(self):
        if self.block_size is None:
            object.__setattr__(self, "block_size", default_block_size(self.p))
        if not 1 <= self.p_low <= self.p:
            raise ParameterError(f"need 1 <= p_low <= p, got p={self.p}, p_low={self.p_low}")
        if self.coarse_strategy not in STRATEGIES:
            raise ParameterError(f"coarse_strategy must be one of {STRATEGIES}")
        if self.nu1 < 0 or self.nu2 < 0 or self.nu1 + self.nu2 == 0:
            raise ParameterError("need nu1, nu2 >= 0 and at least one smoothing step")
        if not 0 < self.tolerance < 1:
            raise ParameterError("tolerance must lie in (0, 1)")
        if self.max_iterations < 1 or self.coarsest_m < 1:
            raise ParameterError("max_iterations and coarsest_m must be positive")

    @property
    def aggressive(self) -> bool:
        return self.coarse_strategy.startswith("aggressive")

    @property
    def uses_vcycle(self) -> bool:
        return self.coarse_strategy.endswith("vcycle")


@dataclass(eq=False)
class Level:
    """One degree-``p_low`` mesh level; ``prolongation`` embeds the next coarser one."""

    m: int
    A: sp.csr_matrix
    shape: tuple[int, int]
    order: np.ndarray = field(repr=False)
    prolongation: sp.csr_matrix | None = None


@dataclass(eq=False)
class Hierarchy:
    """Operators of the method; ``restriction``/``prolongation`` link ``A`` and ``levels[0]``."""

    config: TwoLevelConfig
    space: SplineSpace2D
    geom: GeometryMap
    A: sp.csr_matrix
    plan: BlockPlan
    transfer: TransferPair
    restriction: sp.csr_matrix
    prolongation: sp.csr_matrix
    levels: list[Level]
    coarsest_solve: object = field(repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def coarse_dim(self) -> int:
        return self.levels[0].A.shape[0]


@dataclass
class SolveReport:
    iterations: int
    residuals: list[float]
    rate: float
    wall_time: float
    converged: bool
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def relative_residual(self) -> float:
        return self.residuals[-1] / self.residuals[0] if self.residuals[0] > 0 else 0.0


def _interior_range(space: SplineSpace2D):
    # constrained indices whose basis functions have uniform knots
    lo, hi = space.degree - 1, space.m - 2
    return ((lo, hi), (lo, hi))


def _factorize(A: sp.csr_matrix):
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise NumericalError(f"coarse factorization failed: {exc}") from exc
    return lu.solve


def build_hierarchy(cfg: TwoLevelConfig, space: SplineSpace2D, geom: GeometryMap | None = None) -> Hierarchy:
    """Assemble operators, transfers, the Schwarz plan and the coarsest factorization."""
    geom = geom or identity_square()
    if space.degree != cfg.p:
        raise ParameterError(f"space degree {space.degree} does not match cfg.p={cfg.p}")
    if not space.constrained:
        raise ParameterError("the solver works on the constrained (Dirichlet) space")
    m = space.m
    halvings = 0
    if cfg.uses_vcycle or cfg.aggressive:
        mm = m // 2 if cfg.aggressive else m
        if cfg.aggressive and m % 2:
            raise ParameterError(f"aggressive coarsening needs an even mesh, got m={m}")
        if cfg.uses_vcycle:
            while mm > cfg.coarsest_m:
                if mm % 2:
                    raise ParameterError(f"mesh m={m} cannot be halved down to {cfg.coarsest_m}")
                mm //= 2
                halvings += 1

    A = assemble_stiffness(space, geom)
    interior = _interior_range(space) if geom.is_identity else None
    plan = build_block_plan(A, space.shape, cfg.block_size, cfg.colouring, interior=interior)

    low = SplineSpace2D.uniform(cfg.p_low, m)
    transfer = degree_restriction(space, low, geom, lumped=cfg.lumped)
    R, P = transfer.restriction, transfer.prolongation
    if cfg.aggressive:
        Pm = space_mesh_transfer(low, geom).prolongation
        R, P = (Pm.T @ R).tocsr(), (P @ Pm).tocsr()
        low = SplineSpace2D.uniform(cfg.p_low, m // 2)

    levels = []
    for k in range(halvings + 1):
        Pl = space_mesh_transfer(low, geom).prolongation if k < halvings else None
        levels.append(Level(low.m, assemble_stiffness(low, geom), low.shape, rb_order(low.shape), Pl))
        if k < halvings:
            low = SplineSpace2D.uniform(cfg.p_low, low.m // 2)
    coarsest = _factorize(levels[-1].A)
    return Hierarchy(cfg, space, geom, A, plan, transfer, R, P, levels, coarsest)


def _vcycle(hier: Hierarchy, k: int, b: np.ndarray) -> np.ndarray:
    """One V(1,1) red-black Gauss-Seidel cycle for level ``k`` from a zero guess."""
    lev = hier.levels[k]
    if k == len(hier.levels) - 1:
        return hier.coarsest_solve(b)
    x = np.zeros_like(b)
    rb_gs_sweep(lev.A, x, b, lev.shape, lev.order)
    r = b - lev.A @ x
    x += lev.prolongation @ _vcycle(hier, k + 1, lev.prolongation.T @ r)
    rb_gs_sweep(lev.A, x, b, lev.shape, lev.order)
    return x


def two_level_cycle(hier: Hierarchy, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One cycle of the method; updates ``x`` in place and returns it."""
    cfg = hier.config
    for _ in range(cfg.nu1):
        schwarz_sweep(hier.plan, hier.A, x, b)
    d = hier.restriction @ (b - hier.A @ x)
    x += hier.prolongation @ _vcycle(hier, 0, d)
    for _ in range(cfg.nu2):
        schwarz_sweep(hier.plan, hier.A, x, b)
    return x


def _initial_guess(cfg: TwoLevelConfig, n: int) -> np.ndarray:
    return np.random.default_rng(cfg.seed).random(n)


def _tail_rate(ratios, count: int = 10) -> float:
    tail = np.asarray(ratios[-count:], dtype=float)
    if tail.size == 0:
        return float("nan")
    if np.any(tail <= 0):
        return 0.0
    return float(np.exp(np.mean(np.log(tail))))


def solve(hier: Hierarchy, b: np.ndarray, x0: np.ndarray | None = None, cfg: TwoLevelConfig | None = None) -> SolveReport:
    """Iterate cycles until ``|r_k| <= tol |r_0|`` (Euclidean) or the iteration cap.

    The initial guess is uniform on ``[0, 1)`` from ``cfg.seed`` unless ``x0``
    is given. ``rate`` is the geometric mean of the residual reduction
    factors of the run.
    """
    cfg = cfg or hier.config
    b = np.asarray(b, dtype=float)
    if b.shape != (hier.n,):
        raise ParameterError(f"right-hand side has shape {b.shape}, expected ({hier.n},)")
    t0 = time.perf_counter()
    x = _initial_guess(cfg, hier.n) if x0 is None else np.array(x0, dtype=float)
    res = [float(np.linalg.norm(b - hier.A @ x))]
    target = cfg.tolerance * res[0]
    it = 0
    while res[-1] > target and it < cfg.max_iterations:
        two_level_cycle(hier, x, b)
        it += 1
        r = float(np.linalg.norm(b - hier.A @ x))
        if not np.isfinite(r):
            raise NumericalError(f"non-finite residual after {it} cycles")
        res.append(r)
    converged = res[-1] <= target
    rate = (res[-1] / res[0]) ** (1.0 / it) if it and res[0] > 0 else 0.0
    return SolveReport(it, res, float(rate), time.perf_counter() - t0, converged, x)


def estimate_asymptotic_rate(
    hier: Hierarchy,
    sweeps: int = 40,
    seed: int | None = None,
    rtol: float | None = None,
    max_sweeps: int = 2000,
) -> float:
    """Measured convergence factor for ``A x = 0`` from a random start.

    The iterate is renormalized after every cycle and the result is the
    geometric mean of the last ten residual ratios after ``sweeps`` cycles.
    With ``rtol`` set, cycling continues until two consecutive ten-cycle
    means agree to ``rtol`` (relative) or ``max_sweeps`` is hit, which
    approaches the spectral radius. Lexicographic sweeps on a bounded grid
    are far from normal, so the two can differ markedly.
    """
    if sweeps < 30:
        raise ParameterError("at least 30 cycles are needed for a rate estimate")
    cfg = hier.config if seed is None else replace(hier.config, seed=seed)
    x = _initial_guess(cfg, hier.n)
    b = np.zeros(hier.n)
    r0 = float(np.linalg.norm(hier.A @ x))
    if r0 == 0:
        return 0.0
    x /= r0
    ratios = []
    cap = sweeps if rtol is None else max(sweeps, max_sweeps)
    while len(ratios) < cap:
        two_level_cycle(hier, x, b)
        r = float(np.linalg.norm(hier.A @ x))
        if not np.isfinite(r):
            raise NumericalError("non-finite residual in rate estimate")
        ratios.append(r)
        if r < 1e-300:
            break
        x /= r
        if rtol is not None and len(ratios) >= sweeps and len(ratios) % 10 == 0:
            now, before = _tail_rate(ratios), _tail_rate(ratios[:-10])
            if abs(now - before) <= rtol * now:
                break
    return _tail_rate(ratios)
