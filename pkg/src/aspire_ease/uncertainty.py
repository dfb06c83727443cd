"""Budgeted weighted-l1 ambiguity set, plane generation, and active-set upkeep.

The set is a ball around the prior q: |p_j - q_j| <= ptilde_j per coordinate,
sum_j |p_j - q_j| / ptilde_j <= gamma overall, intersected with the simplex.
Plane generation maximizes a linear functional of p over that set. With equal
half-widths the optimum is reached by greedily moving mass from low-loss to
high-loss workers; the heterogeneous case goes through an LP solve.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import CapacityError, InputError

log = logging.getLogger(__name__)

VIOLATION_TOL = 1e-9


@dataclass(frozen=True)
class CDNormSet:
    """Prior q, half-widths ptilde, budget gamma, nominal weight p_bar."""

    q: np.ndarray
    p_tilde: np.ndarray
    gamma: float
    p_bar: float

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        pt = np.asarray(self.p_tilde, dtype=np.float64)
        if q.ndim != 1 or q.shape != pt.shape:
            raise InputError("q and p_tilde must be vectors of equal length")
        if abs(q.sum() - 1.0) > 1e-12 or np.any(q < 0):
            raise InputError("prior must be a probability vector")
        if np.any(pt <= 0):
            raise InputError("half-widths must be strictly positive")
        # p_tilde <= q keeps every p_j nonnegative anywhere in the set
        if np.any(pt > q + 1e-15):
            raise InputError("half-widths may not exceed the prior entries")
        if self.gamma < 0:
            raise InputError("budget gamma must be nonnegative")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p_tilde", pt)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "p_bar", float(self.p_bar))

    @property
    def size(self) -> int:
        return self.q.shape[0]

    @staticmethod
    def uniform(n: int, gamma: float, half_width_frac: float = 0.5,
                p_bar: float | None = None) -> "CDNormSet":
        q = np.full(n, 1.0 / n)
        return CDNormSet(q, half_width_frac * q, gamma, 1.0 / n if p_bar is None else p_bar)

    @staticmethod
    def from_prior(q, gamma: float, half_width_frac: float = 0.5,
                   p_bar: float | None = None) -> "CDNormSet":
        q = np.asarray(q, dtype=np.float64)
        return CDNormSet(q, half_width_frac * q, gamma,
                         1.0 / q.size if p_bar is None else p_bar)

    def contains(self, p: np.ndarray, bound_tol: float = 1e-12,
                 budget_tol: float = 1e-9, sum_tol: float = 1e-12) -> bool:
        u = np.asarray(p, dtype=np.float64) - self.q
        if np.any(np.abs(u) > self.p_tilde + bound_tol):
            return False
        if np.abs(u / self.p_tilde).sum() > self.gamma + budget_tol:
            return False
        return abs(np.sum(self.q + u) - 1.0) <= sum_tol


@dataclass
class CuttingPlane:
    """Plane coefficients a = p* - p_bar with the paired dual variable."""

    a: np.ndarray
    dual: float = 0.0
    prev_dual: float = 0.0
    birth_iteration: int = 0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)

    def objective(self, losses: np.ndarray) -> float:
        return float(self.a @ losses)


class CuttingPlaneSet:
    """Ordered planes with paired duals, bounded by ``max_planes``.

    Pruning may legally empty the set; with ``n_workers`` known the empty
    coefficient matrix keeps its (0, N) shape so downstream products reduce
    to zero contributions instead of shape errors.
    """

    def __init__(self, max_planes: int, n_workers: int | None = None, planes=None):
        if max_planes < 1:
            raise InputError("max_planes must be >= 1")
        self.max_planes = int(max_planes)
        self.n_workers = n_workers
        self.planes: list[CuttingPlane] = list(planes or [])
        if len(self.planes) > self.max_planes:
            raise InputError("initial plane list exceeds capacity")

    def __len__(self):
        return len(self.planes)

    def __iter__(self):
        return iter(self.planes)

    def coefficients(self) -> np.ndarray:
        """(L, N) matrix of plane coefficients."""
        if not self.planes:
            return np.zeros((0, self.n_workers or 0))
        return np.stack([p.a for p in self.planes])

    def duals(self) -> np.ndarray:
        return np.array([p.dual for p in self.planes])

    def set_duals(self, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(self.planes),):
            raise InputError("dual vector length must match plane count")
        for plane, v in zip(self.planes, values):
            plane.dual = float(v)

    def snapshot_prev_duals(self) -> None:
        for plane in self.planes:
            plane.prev_dual = plane.dual

    def add_plane(self, plane: CuttingPlane) -> None:
        if len(self.planes) >= self.max_planes:
            raise CapacityError(
                f"plane set already holds the maximum of {self.max_planes} planes"
            )
        self.planes.append(plane)

    def prune_inactive(self, eligible: int | None = None) -> list[int]:
        """Drop planes whose dual was exactly zero two iterations running.

        Only the first ``eligible`` planes are candidates (a plane appended
        this iteration is not). Returns the removed indices.
        """
        if eligible is None:
            eligible = len(self.planes)
        removed = [
            i for i, p in enumerate(self.planes[:eligible])
            if p.dual == 0.0 and p.prev_dual == 0.0
        ]
        if removed:
            self.planes = [p for i, p in enumerate(self.planes) if i not in set(removed)]
        return removed


def solve_cutting_plane_lp(losses: np.ndarray, cd: CDNormSet) -> np.ndarray:
    """Maximize sum_j (p_j - p_bar) * losses_j over the ambiguity set.

    Returns a feasible vertex p*. Uniform half-widths take the sort-and-greedy
    path; the general case solves the split LP with linprog and polishes the
    result back onto exact vertex coordinates.
    """
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape != (cd.size,):
        raise InputError("losses must have one entry per worker")
    if not np.all(np.isfinite(losses)):
        raise InputError("losses must be finite")
    if cd.gamma == 0.0:
        return cd.q.copy()
    if np.all(cd.p_tilde == cd.p_tilde[0]):
        u = _greedy_uniform(losses, cd)
    else:
        u = _linprog_general(losses, cd)
    return cd.q + u


def make_plane(p_star: np.ndarray, cd: CDNormSet, birth_iteration: int = 0) -> CuttingPlane:
    """Turn an ambiguity-set vertex into a plane: a = p* - p_bar."""
    p_star = np.asarray(p_star, dtype=np.float64)
    if not cd.contains(p_star):
        raise InputError("p_star is not feasible for the ambiguity set")
    return CuttingPlane(p_star - cd.p_bar, dual=0.0, prev_dual=0.0,
                        birth_iteration=birth_iteration)


def violates(candidate: CuttingPlane, losses: np.ndarray, planes: CuttingPlaneSet,
             tol: float = VIOLATION_TOL) -> bool:
    """True iff the candidate strictly beats every retained plane's objective."""
    losses = np.asarray(losses, dtype=np.float64)
    if not np.all(np.isfinite(losses)):
        raise InputError("losses must be finite")
    cand = candidate.objective(losses)
    if len(planes) == 0:
        return cand > -np.inf
    best = max(p.objective(losses) for p in planes)
    return cand > best + tol


def _greedy_uniform(losses, cd):
    """Two-pointer transfer over workers sorted by loss, ties to low index."""
    n = cd.size
    width = float(cd.p_tilde[0])
    order = np.lexsort((np.arange(n), -losses))
    u = np.zeros(n)
    # each unit of moved mass costs 2/width of budget
    mass_budget = cd.gamma * width / 2.0
    i, k = 0, n - 1
    while i < k and mass_budget > 0.0:
        recv, donor = order[i], order[k]
        if losses[recv] <= losses[donor]:
            break
        move = min(width - u[recv], width + u[donor], mass_budget)
        u[recv] += move
        u[donor] -= move
        mass_budget -= move
        if u[recv] >= width:
            u[recv] = width
            i += 1
        if u[donor] <= -width:
            u[donor] = -width
            k -= 1
    return u


def _linprog_general(losses, cd):
    """Split u = u+ - u- and solve the budgeted LP exactly via HiGHS."""
    n = cd.size
    pt = cd.p_tilde
    cost = np.concatenate([-losses, losses])
    a_ub = np.concatenate([1.0 / pt, 1.0 / pt])[None, :]
    a_eq = np.concatenate([np.ones(n), -np.ones(n)])[None, :]
    bounds = [(0.0, float(w)) for w in pt] * 2
    res = linprog(
        cost, A_ub=a_ub, b_ub=[cd.gamma], A_eq=a_eq, b_eq=[0.0], bounds=bounds,
        method="highs",
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    if not res.success:  # the set always contains u = 0
        raise InputError(f"plane generation LP failed: {res.message}")
    u = res.x[:n] - res.x[n:]
    return _polish_vertex(u, cd)


def _polish_vertex(u, cd, snap=1e-7):
    """Snap solver output onto exact bound values and rebalance the residual.

    A vertex has at most two coordinates strictly inside their bounds; the
    simplex equality (and tight budget, if any) pins those, so distributing
    the tiny equality residual over them restores sum(p) = 1 to machine
    precision without leaving the feasible box.
    """
    pt = cd.p_tilde
    u = np.where(np.abs(u - pt) < snap, pt, u)
    u = np.where(np.abs(u + pt) < snap, -pt, u)
    u = np.where(np.abs(u) < snap, 0.0, u)
    residual = u.sum()
    if residual != 0.0:
        free = np.flatnonzero((np.abs(u) > 0) & (np.abs(u) < pt))
        if free.size == 0:
            # fall back to the coordinate with the most room
            free = np.array([int(np.argmax(pt - np.abs(u)))])
        share = residual / free.size
        u[free] -= share
    return np.clip(u, -pt, pt)
