"""Stationarity gap, worst-case statistics, and attack measurements.

The gap concatenates projected-gradient residuals of every variable block of
the unregularized Lagrangian (the c-regularizers never enter here) and takes
the Euclidean norm. A point is epsilon-stationary when the gap drops to eps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .lagrangian import (
    BoxBounds,
    SystemState,
    grad_h,
    grad_lambda,
    grad_phi,
    grad_w_worker,
    grad_z,
    plane_weights,
    project_box,
)
from .models import ModelSpec, predict

METRIC_COLUMNS = (
    "t", "vtime", "gap", "worst_loss", "worst_acc", "acc_std",
    "planes", "sum_lambda", "mal_weight",
)


@dataclass(frozen=True)
class GapSteps:
    """Step sizes entering the projected-residual blocks."""

    alpha_w: float
    eta_z: float
    eta_h: float
    rho1: float
    rho2: float


def _residual(x, step, grad, radius, lower_zero=False, ascent=False):
    shifted = x + step * grad if ascent else x - step * grad
    return (x - project_box(shifted, radius, lower_zero)) / step


def stationarity_gap(state: SystemState, grads: np.ndarray, losses: np.ndarray,
                     p_bar: float, bounds: BoxBounds, steps: GapSteps) -> float:
    """Norm of all projected-gradient residuals at the current point.

    ``grads`` holds full-batch loss gradients per worker, ``losses`` the
    full-batch loss values; both must match the state's worker count.
    """
    grads = np.asarray(grads, dtype=np.float64)
    losses = np.asarray(losses, dtype=np.float64)
    n = state.n_workers
    if grads.shape != state.w.shape or losses.shape != (n,):
        raise InputError("gradients/losses do not match the state dimensions")

    weights = plane_weights(state.planes, p_bar)
    total = 0.0
    for j in range(n):
        wt = float(weights[j]) if weights is not None else 0.0
        g = grad_w_worker(wt, grads[j], state.phi[j], state.z, state.w[j],
                          bounds.kappa1)
        r = _residual(state.w[j], steps.alpha_w, g, bounds.alpha1)
        total += float(r @ r)

    r = _residual(state.z, steps.eta_z, grad_z(state, bounds.kappa1), bounds.alpha1)
    total += float(r @ r)

    r = _residual(state.h, steps.eta_h, grad_h(state.planes.duals()),
                  bounds.alpha2, lower_zero=True)
    total += float(r * r)

    if len(state.planes):
        duals = state.planes.duals()
        slack = grad_lambda(state, losses, p_bar, c1=0.0)
        r = _residual(duals, steps.rho1, slack, bounds.alpha3,
                      lower_zero=True, ascent=True)
        total += float(r @ r)

    r = _residual(state.phi, steps.rho2, grad_phi(state, c2=0.0), bounds.alpha4,
                  ascent=True)
    total += float(np.sum(r * r))
    return float(np.sqrt(total))


def centralized_gap(w, h: float, planes, grads_f: np.ndarray, losses: np.ndarray,
                    p_bar: float, bounds: BoxBounds, steps: GapSteps) -> float:
    """Gap for the single-model variant: w, h, and dual blocks only."""
    coeff = planes.coefficients()
    duals = planes.duals()
    weights = duals @ (coeff + p_bar) if len(duals) else np.zeros(len(losses))
    gw = weights @ grads_f
    total = 0.0
    r = _residual(w, steps.alpha_w, gw, bounds.alpha1)
    total += float(r @ r)
    r = _residual(h, steps.eta_h, grad_h(duals), bounds.alpha2, lower_zero=True)
    total += float(r * r)
    if len(duals):
        slack = (coeff + p_bar) @ losses - h
        r = _residual(duals, steps.rho1, slack, bounds.alpha3,
                      lower_zero=True, ascent=True)
        total += float(r @ r)
    return float(np.sqrt(total))


def is_eps_stationary(gap: float, eps: float) -> bool:
    if eps < 0:
        raise InputError("eps must be nonnegative")
    return gap <= eps


def worst_case_stats(losses, accuracies):
    """(max loss, min accuracy, population std of accuracies)."""
    losses = np.asarray(losses, dtype=np.float64)
    accuracies = np.asarray(accuracies, dtype=np.float64)
    if losses.size < 1 or accuracies.size < 1:
        raise InputError("need at least one worker")
    return float(losses.max()), float(accuracies.min()), float(accuracies.std())


def malicious_weight_share(planes, p_bar: float, malicious) -> float:
    """Dual-weighted mass on malicious workers: sum_l lambda_l (p_bar + a_{l,mal})
    over sum_l lambda_l."""
    malicious = list(malicious)
    if not malicious or len(planes) == 0:
        return 0.0
    duals = planes.duals()
    denom = float(duals.sum())
    if denom == 0.0:
        return 0.0
    coeff = planes.coefficients()
    mal = float(duals @ (coeff[:, malicious] + p_bar).sum(axis=1))
    return mal / denom


def attack_success_rate(values, spec: ModelSpec, backdoor_features: np.ndarray,
                        target: int) -> float:
    """Fraction of triggered samples the model classifies as the target."""
    backdoor_features = np.asarray(backdoor_features, dtype=np.float64)
    if backdoor_features.ndim != 2 or backdoor_features.shape[0] == 0:
        raise InputError("backdoor test set is empty")
    preds = predict(values, spec, backdoor_features)
    return float(np.mean(preds == target))


def build_backdoor_testset(datasets, backdoor) -> np.ndarray:
    """Trigger applied to every clean sample whose label is not the target."""
    rows = []
    for ds in datasets:
        keep = ds.labels != backdoor.target
        feats = ds.features[keep].copy()
        feats[:, backdoor.feature] = backdoor.value
        rows.append(feats)
    stacked = np.concatenate(rows, axis=0)
    if stacked.shape[0] == 0:
        raise InputError("no samples with a non-target label to trigger")
    return stacked
