"""Independent reference implementations used only by the tests.

These deliberately avoid the library's solution paths: the LP oracle
enumerates basic feasible points from the constraint geometry, and the
derivative oracle is plain central finite differences.
"""
from __future__ import annotations

from itertools import combinations, product

import numpy as np


_COMBO_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _facet_combos(n_facets: int, size: int) -> np.ndarray:
    key = (n_facets, size)
    if key not in _COMBO_CACHE:
        _COMBO_CACHE[key] = np.array(
            list(combinations(range(n_facets), size)), dtype=np.intp
        )
    return _COMBO_CACHE[key]


def lp_basic_oracle(losses, q, p_tilde, gamma, p_bar):
    """Exhaustive basic-solution sweep of the plane-generation LP.

    Works in u = p - q space. Writing the problem with split variables
    u = a - b (0 <= a_j, b_j <= pt_j) leaves two equality-like rows (simplex
    sum and the budget with slack), so a basic solution has at most two
    coordinates strictly between their bounds. Enumerate every assignment of
    the remaining coordinates to {-pt_j, 0, +pt_j}: zero free coordinates,
    one solved from the simplex equality, or two solved from equality plus a
    tight budget under each sign pair. Keep the feasible candidates and
    return the best objective with its p.
    """
    losses = np.asarray(losses, dtype=float)
    q = np.asarray(q, dtype=float)
    pt = np.asarray(p_tilde, dtype=float)
    n = q.size

    cands = [np.zeros((1, n))]
    states = np.array(list(product((-1.0, 0.0, 1.0), repeat=n)))

    cands.append(states * pt)  # no free coordinate

    sub_states = np.array(list(product((-1.0, 0.0, 1.0), repeat=n - 1)))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        u = np.zeros((len(sub_states), n))
        u[:, others] = sub_states * pt[others]
        u[:, i] = -u[:, others].sum(axis=1)
        cands.append(u)

    if n >= 2:
        sub2 = np.array(list(product((-1.0, 0.0, 1.0), repeat=n - 2))) \
            if n > 2 else np.zeros((1, 0))
        for i, k in combinations(range(n), 2):
            others = [j for j in range(n) if j not in (i, k)]
            base = np.zeros((len(sub2), n))
            if others:
                base[:, others] = sub2 * pt[others]
            rhs_eq = -base.sum(axis=1)
            rhs_bud = gamma - np.abs(sub2).sum(axis=1) if others else \
                np.full(len(base), gamma)
            for si, sk in product((-1.0, 1.0), repeat=2):
                det = si / pt[i] - sk / pt[k]
                if abs(det) < 1e-14:
                    continue
                # solve: si u_i/pt_i + sk u_k/pt_k = rhs_bud; u_i + u_k = rhs_eq
                ui = (rhs_bud - sk / pt[k] * rhs_eq) / det
                uk = rhs_eq - ui
                ok = (si * ui >= -1e-12) & (sk * uk >= -1e-12)
                u = base.copy()
                u[:, i] = ui
                u[:, k] = uk
                cands.append(u[ok])

    u = np.concatenate(cands, axis=0)
    feasible = (
        np.all(np.abs(u) <= pt + 1e-9, axis=1)
        & (np.abs(u / pt).sum(axis=1) <= gamma + 1e-9)
        & (np.abs(u.sum(axis=1)) <= 1e-9)
    )
    u = u[feasible]
    objs = (q + u - p_bar) @ losses
    best = int(np.argmax(objs))
    return float(objs[best]), q + u[best]


def lp_facet_oracle(losses, q, p_tilde, gamma, p_bar):
    """Brute-force optimum of the plane-generation LP by vertex enumeration.

    Works in u = p - q space. The feasible polytope is cut out by the simplex
    equality sum(u) = 0, the box |u_j| <= pt_j, and the budget ball
    sum_j |u_j|/pt_j <= gamma whose linearization contributes one facet per
    sign vector. Every vertex solves n active constraints, one of which is
    always the equality; enumerate the rest (batched), filter by feasibility,
    and take the best objective sum_j (q_j + u_j - p_bar) * f_j.

    Returns (objective, p). Slow beyond n = 4; use lp_basic_oracle there.
    """
    losses = np.asarray(losses, dtype=float)
    q = np.asarray(q, dtype=float)
    pt = np.asarray(p_tilde, dtype=float)
    n = q.size

    # facet rows: row @ u = rhs
    signs = np.array(list(product((-1.0, 1.0), repeat=n)))
    rows = np.concatenate([signs / pt, np.eye(n), -np.eye(n)], axis=0)
    rhs = np.concatenate([np.full(len(signs), gamma), pt, pt])

    combos = _facet_combos(len(rows), n - 1)
    a = np.empty((len(combos), n, n))
    a[:, 0, :] = 1.0
    a[:, 1:, :] = rows[combos]
    b = np.zeros((len(combos), n))
    b[:, 1:] = rhs[combos]

    dets = np.linalg.det(a)
    keep = np.abs(dets) > 1e-10
    u = np.linalg.solve(a[keep], b[keep][..., None])[..., 0]
    u = np.concatenate([np.zeros((1, n)), u], axis=0)

    feasible = (
        np.all(np.abs(u) <= pt + 1e-9, axis=1)
        & (np.abs(u / pt).sum(axis=1) <= gamma + 1e-9)
    )
    u = u[feasible]
    objs = (q + u - p_bar) @ losses
    best = int(np.argmax(objs))
    return float(objs[best]), q + u[best]


def finite_difference(fn, x, step=1e-5):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (fn(hi) - fn(lo)) / (2 * step)
    return grad


def rel_err(a, b, floor=1.0):
    """Per-coordinate relative error with a unit floor on the denominator."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def random_cd_instance(rng, n, uniform_widths=False):
    """Random valid ambiguity set parameters and a loss vector."""
    q = rng.dirichlet(np.ones(n) * 2.0)
    if uniform_widths:
        pt = np.full(n, float(q.min()) * rng.uniform(0.2, 1.0))
    else:
        pt = q * rng.uniform(0.2, 1.0, size=n)
    gamma = float(rng.uniform(0.0, n + 0.5))
    losses = rng.normal(1.0, 1.0, size=n)
    return q, pt, gamma, losses


# ---- random saddle states and flat-vector views for gradient checks

def random_saddle_state(rng, spec=None, n=3, n_planes=2, samples=5):
    """Random state, model spec, and datasets for the coupled saddle function."""
    from aspire_ease.lagrangian import SystemState
    from aspire_ease.models import LabeledDataset, ModelSpec
    from aspire_ease.uncertainty import CuttingPlane, CuttingPlaneSet

    spec = spec or ModelSpec("logistic", 3, 2)
    p = spec.param_count
    datasets = [
        LabeledDataset(rng.normal(size=(samples, spec.input_dim)),
                       rng.integers(0, spec.classes, size=samples), worker_id=j)
        for j in range(n)
    ]
    planes = CuttingPlaneSet(8, n_workers=n)
    for _ in range(n_planes):
        planes.add_plane(CuttingPlane(rng.uniform(-0.2, 0.2, size=n),
                                      dual=float(rng.uniform(0, 1.5))))
    state = SystemState(
        w=rng.normal(scale=0.5, size=(n, p)),
        z=rng.normal(scale=0.5, size=p),
        h=float(rng.uniform(0, 2)),
        planes=planes,
        phi=rng.normal(scale=0.3, size=(n, p)),
    )
    return state, spec, datasets


def flat_pack(state):
    return np.concatenate([
        state.w.ravel(), state.z, [state.h], state.planes.duals(),
        state.phi.ravel(),
    ])


def regval_of_flat(flat, state, spec, datasets, bounds, c1, c2, p_bar):
    """Regularized saddle value as a function of the flattened variables."""
    from aspire_ease.lagrangian import SystemState, regularized_value
    from aspire_ease.models import local_loss
    from aspire_ease.uncertainty import CuttingPlane, CuttingPlaneSet

    n, p = state.w.shape
    n_planes = len(state.planes)
    w = flat[: n * p].reshape(n, p)
    z = flat[n * p: n * p + p]
    h = float(flat[n * p + p])
    duals = flat[n * p + p + 1: n * p + p + 1 + n_planes]
    phi = flat[n * p + p + 1 + n_planes:].reshape(n, p)
    planes = CuttingPlaneSet(state.planes.max_planes, n_workers=n)
    for plane, d in zip(state.planes, duals):
        planes.add_plane(CuttingPlane(plane.a.copy(), dual=float(d)))
    trial = SystemState(w=w, z=z, h=h, planes=planes, phi=phi)
    losses = np.array([local_loss(w[j], spec, datasets[j]) for j in range(n)])
    return regularized_value(trial, losses, p_bar, bounds, c1, c2)


def analytic_flat_gradient(state, spec, datasets, bounds, c1, c2, p_bar):
    """All five analytic block gradients, concatenated in flat-vector order."""
    from aspire_ease.lagrangian import (
        grad_h, grad_lambda, grad_phi, grad_w_worker, grad_z, plane_weights,
    )
    from aspire_ease.models import local_grad, local_loss

    losses = np.array([
        local_loss(state.w[j], spec, datasets[j]) for j in range(state.n_workers)
    ])
    weights = plane_weights(state.planes, p_bar)
    parts = []
    for j in range(state.n_workers):
        gf = local_grad(state.w[j], spec, datasets[j])
        parts.append(grad_w_worker(float(weights[j]), gf, state.phi[j], state.z,
                                   state.w[j], bounds.kappa1))
    parts.append(grad_z(state, bounds.kappa1))
    parts.append(np.atleast_1d(grad_h(state.planes.duals())))
    parts.append(grad_lambda(state, losses, p_bar, c1=c1))
    parts.append(grad_phi(state, c2=c2).ravel())
    return np.concatenate(parts)


def random_centralized_state(rng, spec=None, n=3, n_planes=2, samples=5):
    """Random (w, h, planes, datasets) for the single-model saddle function."""
    from aspire_ease.models import LabeledDataset, ModelSpec
    from aspire_ease.uncertainty import CuttingPlane, CuttingPlaneSet

    spec = spec or ModelSpec("logistic", 3, 2)
    datasets = [
        LabeledDataset(rng.normal(size=(samples, spec.input_dim)),
                       rng.integers(0, spec.classes, size=samples), worker_id=j)
        for j in range(n)
    ]
    planes = CuttingPlaneSet(8, n_workers=n)
    for _ in range(n_planes):
        planes.add_plane(CuttingPlane(rng.uniform(-0.2, 0.2, size=n),
                                      dual=float(rng.uniform(0, 1.5))))
    w = rng.normal(scale=0.5, size=spec.param_count)
    h = float(rng.uniform(0, 2))
    return w, h, planes, spec, datasets


def centralized_regval(w, h, duals, planes, spec, datasets, p_bar, c1):
    """Single-model regularized saddle value evaluated from raw pieces."""
    from aspire_ease.models import local_loss

    losses = np.array([local_loss(w, spec, ds) for ds in datasets])
    coeff = planes.coefficients()
    duals = np.asarray(duals, dtype=float)
    val = h + float(duals @ ((coeff + p_bar) @ losses - h))
    return val - 0.5 * c1 * float(duals @ duals)


def centralized_flat_gradient(w, h, planes, spec, datasets, p_bar, c1):
    """Analytic (w, h, lambda) gradients of the single-model saddle."""
    from aspire_ease.models import local_grad, local_loss

    losses = np.array([local_loss(w, spec, ds) for ds in datasets])
    grads = np.stack([local_grad(w, spec, ds) for ds in datasets])
    coeff = planes.coefficients()
    duals = planes.duals()
    weights = duals @ (coeff + p_bar)
    gw = weights @ grads
    gh = 1.0 - duals.sum()
    gl = (coeff + p_bar) @ losses - h - c1 * duals
    return np.concatenate([gw, [gh], gl])
