"""Augmented Lagrangian of the plane-approximated problem and its updates.

The saddle function couples per-worker losses f_j(w_j) through the plane
constraints (duals lambda), the epigraph scalar h, and consensus z = w_j
(duals phi_j, quadratic penalty kappa1). All variables live in boxes and
every update is one projected-gradient step. The dual-regularized variant
subtracts c1/2 * lambda^2 and c2/2 * |phi|^2 terms; its w/z/h gradients
coincide with the unregularized ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .uncertainty import CuttingPlaneSet

BLOCKS = ("w", "z", "h", "lambda", "phi")


@dataclass(frozen=True)
class BoxBounds:
    """Box radii for the five variable families plus the penalty weight."""

    alpha1: float = 10.0   # |w|_inf, |z|_inf
    alpha2: float = 50.0   # h in [0, alpha2]
    alpha3: float = 5.0    # lambda_l in [0, alpha3]
    alpha4: float = 5.0    # |phi_j|_inf
    kappa1: float = 1.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "alpha3", "alpha4", "kappa1"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class Schedules:
    """Step sizes and dual regularizers indexed by the master iteration.

    mode "constant" keeps eta and the c's fixed; mode "paper" decays the c's
    as 1/(rho*(t+1)^(1/6)) down to their value at t_max and derives eta from
    the smoothness-based formula, which needs a user-supplied curvature
    estimate (it is not observable for neural models).
    """

    mode: str = "constant"
    eta_w0: float = 0.05
    eta_z0: float = 0.05
    eta_h0: float = 0.05
    rho1: float = 0.05
    rho2: float = 0.05
    c1_const: float = 0.0
    c2_const: float = 0.0
    t1: int = 10**9
    t_max: int = 10**9
    max_planes: int = 1
    n_workers: int = 1
    lipschitz: float = 1.0
    curvature: float = 1.0

    def __post_init__(self):
        if self.mode not in ("constant", "paper"):
            raise InputError(f"unknown schedule mode {self.mode!r}")
        if min(self.eta_w0, self.eta_z0, self.eta_h0, self.rho1, self.rho2) <= 0:
            raise InputError("step sizes must be strictly positive")
        if self.c1_const < 0 or self.c2_const < 0:
            raise InputError("regularizers must be nonnegative")

    def c1(self, t: int) -> float:
        if self.mode == "constant":
            return self.c1_const
        return max(self._c_decay(t, self.rho1), self.c1_floor)

    def c2(self, t: int) -> float:
        if self.mode == "constant":
            return self.c2_const
        return max(self._c_decay(t, self.rho2), self.c2_floor)

    @staticmethod
    def _c_decay(t, rho):
        return 1.0 / (rho * (t + 1) ** (1.0 / 6.0))

    @property
    def c1_floor(self) -> float:
        return self._c_decay(self.t_max, self.rho1)

    @property
    def c2_floor(self) -> float:
        return self._c_decay(self.t_max, self.rho2)

    def _eta_formula(self, plane_count, c1, c2):
        lip, gam = self.lipschitz, self.curvature
        lsq = lip * lip
        denom = (
            lip
            + self.rho1 * plane_count * lsq
            + self.rho2 * self.n_workers * lsq
            + 8.0 * (plane_count * gam * lsq / (self.rho1 * c1 * c1)
                     + self.n_workers * gam * lsq / (self.rho2 * c2 * c2))
        )
        return 2.0 / denom

    def eta_w(self, t: int, plane_count: int | None = None) -> float:
        if self.mode == "constant":
            return self.eta_w0
        if t >= self.t1:
            return self.eta_floor
        return self._eta_formula(plane_count if plane_count is not None else 1,
                                 self.c1(t), self.c2(t))

    def eta_z(self, t: int, plane_count: int | None = None) -> float:
        return self.eta_w(t, plane_count) if self.mode == "paper" else self.eta_z0

    def eta_h(self, t: int, plane_count: int | None = None) -> float:
        return self.eta_w(t, plane_count) if self.mode == "paper" else self.eta_h0

    @property
    def eta_floor(self) -> float:
        if self.mode == "constant":
            return self.eta_w0
        return self._eta_formula(self.max_planes, self.c1_floor, self.c2_floor)

    def alpha_w(self, t_stale: int, plane_count: int | None = None) -> float:
        """Worker step size indexed by the worker's last active iteration."""
        if t_stale >= self.t1:
            return self.eta_floor
        return self.eta_w(t_stale, plane_count)


@dataclass
class SystemState:
    """Master-side view of all primal and dual variables at iteration t."""

    w: np.ndarray            # (N, p) per-worker parameters
    z: np.ndarray            # (p,) consensus
    h: float
    planes: CuttingPlaneSet
    phi: np.ndarray          # (N, p) consensus duals
    t: int = 0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.z = np.asarray(self.z, dtype=np.float64)
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.w.ndim != 2 or self.phi.shape != self.w.shape:
            raise InputError("w and phi must both be (N, p)")
        if self.z.shape != (self.w.shape[1],):
            raise InputError("z must match the parameter dimension")

    @property
    def n_workers(self) -> int:
        return self.w.shape[0]


def project_box(v, radius: float, lower_zero: bool = False):
    """Clamp to [-radius, radius], or [0, radius] when lower_zero."""
    if radius <= 0:
        raise InputError("radius must be positive")
    lo = 0.0 if lower_zero else -radius
    return np.clip(v, lo, radius)


def plane_weights(planes: CuttingPlaneSet, p_bar: float) -> np.ndarray:
    """Per-worker effective weights: sum_l lambda_l * (p_bar + a_{l,j})."""
    if len(planes) == 0:
        return None
    return planes.duals() @ (planes.coefficients() + p_bar)


def lagrangian_value(state: SystemState, losses, p_bar: float,
                     bounds: BoxBounds) -> float:
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape != (state.n_workers,):
        raise InputError("need one loss per worker")
    coeff = state.planes.coefficients()
    duals = state.planes.duals()
    plane_terms = duals @ ((coeff + p_bar) @ losses - state.h) if len(duals) else 0.0
    diff = state.z[None, :] - state.w
    return float(
        state.h
        + plane_terms
        + np.sum(state.phi * diff)
        + 0.5 * bounds.kappa1 * np.sum(diff * diff)
    )


def regularized_value(state: SystemState, losses, p_bar: float, bounds: BoxBounds,
                      c1: float, c2: float) -> float:
    duals = state.planes.duals()
    return (
        lagrangian_value(state, losses, p_bar, bounds)
        - 0.5 * c1 * float(duals @ duals)
        - 0.5 * c2 * float(np.sum(state.phi * state.phi))
    )


def grad_w_worker(weight_j: float, grad_f_j, phi_j, z, w_j, kappa1: float):
    """weight_j = sum_l lambda_l (p_bar + a_{l,j}); same for both Lagrangians."""
    return weight_j * grad_f_j - phi_j - kappa1 * (z - w_j)


def grad_z(state: SystemState, kappa1: float):
    return state.phi.sum(axis=0) + kappa1 * (
        state.n_workers * state.z - state.w.sum(axis=0)
    )


def grad_h(duals) -> float:
    return 1.0 - float(np.sum(duals))


def grad_lambda(state: SystemState, losses, p_bar: float, c1: float = 0.0):
    """Constraint slacks per plane, minus the regularizer pull when c1 > 0."""
    coeff = state.planes.coefficients()
    duals = state.planes.duals()
    losses = np.asarray(losses, dtype=np.float64)
    return (coeff + p_bar) @ losses - state.h - c1 * duals


def grad_phi(state: SystemState, c2: float = 0.0):
    return (state.z[None, :] - state.w) - c2 * state.phi


def block_gradient(block: str, state: SystemState, losses=None, grads=None,
                   p_bar: float = 0.0, bounds: BoxBounds | None = None,
                   regularized: bool = False, c1: float = 0.0, c2: float = 0.0,
                   worker: int | None = None):
    """Dispatch one analytic block gradient; mirrors the update directions."""
    bounds = bounds or BoxBounds()
    if block == "w":
        if worker is None or grads is None:
            raise InputError("w block needs a worker index and its loss gradient")
        weights = plane_weights(state.planes, p_bar)
        wt = float(weights[worker]) if weights is not None else 0.0
        return grad_w_worker(wt, grads[worker], state.phi[worker], state.z,
                             state.w[worker], bounds.kappa1)
    if block == "z":
        return grad_z(state, bounds.kappa1)
    if block == "h":
        return grad_h(state.planes.duals())
    if block == "lambda":
        return grad_lambda(state, losses, p_bar, c1 if regularized else 0.0)
    if block == "phi":
        return grad_phi(state, c2 if regularized else 0.0)
    raise InputError(f"unknown block {block!r}; expected one of {BLOCKS}")


def worker_update(w_j, phi_j, z, weight_j: float, grad_f_j, step: float,
                  bounds: BoxBounds):
    """One projected descent step on the local parameters."""
    g = grad_w_worker(weight_j, grad_f_j, phi_j, z, w_j, bounds.kappa1)
    return project_box(w_j - step * g, bounds.alpha1)


def master_update(state: SystemState, losses, p_bar: float, bounds: BoxBounds,
                  sched: Schedules, t: int) -> None:
    """Sequential z, h, lambda steps; each later block sees the fresh values.

    Mutates ``state``. Copies each dual into prev_dual just before the dual
    step so the two-zero prune rule compares consecutive projected values.
    """
    planes = len(state.planes)
    state.z = project_box(
        state.z - sched.eta_z(t, planes) * grad_z(state, bounds.kappa1),
        bounds.alpha1,
    )
    state.h = float(project_box(
        state.h - sched.eta_h(t, planes) * grad_h(state.planes.duals()),
        bounds.alpha2, lower_zero=True,
    ))
    state.planes.snapshot_prev_duals()
    slack = grad_lambda(state, losses, p_bar, c1=sched.c1(t))
    new_duals = project_box(state.planes.duals() + sched.rho1 * slack,
                            bounds.alpha3, lower_zero=True)
    state.planes.set_duals(new_duals)


def phi_update(phi_j, z_new, w_j_new, rho2: float, c2: float, bounds: BoxBounds):
    """Projected ascent on a worker's consensus dual, with fresh z."""
    g = (z_new - w_j_new) - c2 * phi_j
    return project_box(phi_j + rho2 * g, bounds.alpha4)
