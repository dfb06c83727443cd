"""Master/worker protocol over a virtual clock, plus the centralized variant.

Execution model: every worker continuously cycles — it captures a snapshot of
the master values it last received, computes one projected parameter step and
its full-batch loss, and the result arrives at the master after a sampled
delay. The master iterates as soon as at least S updates are queued and every
staleness-forced worker is among them, consuming all queued updates. Within
one master iteration the order is fixed: apply worker updates, z, h, dual
steps, broadcast to active workers, their consensus-dual steps, then (on the
configured period, before the plane-edit horizon) plane generation and
pruning with a broadcast to all workers.

Modes: "aspire_ease" (generate + prune), "aspire_cp" (generate only),
"sync" (all workers every iteration), "mix_even" (single nominal plane,
uniform weights, no generation), "centralized" (single model, no consensus).
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CapacityError, InputError, ProtocolError
from .lagrangian import (
    BoxBounds,
    Schedules,
    SystemState,
    master_update,
    phi_update,
    plane_weights,
    project_box,
    worker_update,
)
from .metrics import (
    GapSteps,
    centralized_gap,
    malicious_weight_share,
    stationarity_gap,
    worst_case_stats,
)
from .models import (
    LabeledDataset,
    ModelSpec,
    accuracy,
    init_params,
    local_grad,
    local_loss,
    sample_batch,
)
from .simulator import DelayModel, EventQueue, FaultSpec
from .uncertainty import (
    CDNormSet,
    CuttingPlane,
    CuttingPlaneSet,
    make_plane,
    solve_cutting_plane_lp,
    violates,
)

log = logging.getLogger(__name__)

MODES = ("aspire_ease", "aspire_cp", "sync", "mix_even", "centralized")


@dataclass(frozen=True)
class RunConfig:
    """Engine-level knobs; datasets and model spec travel separately."""

    n_workers: int
    mode: str = "aspire_ease"
    s_min: int = 1
    tau: int = 10**9
    ease_period: int = 5
    t1: int = 10**9
    max_planes: int = 10
    t_max: int = 1000
    batch_size: int | None = None
    eps: float = 0.0
    metric_cadence: int = 10
    seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not 1 <= self.s_min <= self.n_workers:
            raise InputError("need 1 <= S <= N")
        if self.tau < 1 or self.ease_period < 1 or self.max_planes < 1:
            raise InputError("tau, ease period, and max planes must be >= 1")
        if self.t1 > self.t_max:
            # plane edits stop on their own at t_max; larger t1 is harmless
            pass
        if self.t_max < 1 or self.metric_cadence < 1:
            raise InputError("t_max and metric cadence must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise InputError("batch size must be >= 1 or null for full batch")
        if self.eps < 0:
            raise InputError("eps must be nonnegative")


def enforce_staleness(last_active: dict[int, int], next_iteration: int,
                      tau: int) -> set[int]:
    """Workers whose staleness would reach tau at the next master iteration."""
    return {j for j, t in last_active.items() if next_iteration - t >= tau}


def _digest(arr) -> str:
    return hashlib.sha1(np.ascontiguousarray(arr, dtype=np.float64).tobytes()).hexdigest()[:12]


@dataclass
class _WorkerRuntime:
    w: np.ndarray
    phi: np.ndarray
    stored_z: np.ndarray
    stored_h: float
    stored_duals: np.ndarray
    stored_coeff: np.ndarray
    snapshot_t: int
    rng: np.random.Generator


@dataclass
class RunOutput:
    state: object
    trace: list
    metric_rows: list
    summary: dict


class AsyncEngine:
    """One experiment run; owns all state and the virtual clock."""

    def __init__(self, config: RunConfig, datasets: list[LabeledDataset],
                 model: ModelSpec, cd: CDNormSet, bounds: BoxBounds,
                 sched: Schedules, delay: DelayModel, faults: FaultSpec):
        if len(datasets) != config.n_workers:
            raise InputError("need one dataset per worker")
        if any(ds.n_features != model.input_dim for ds in datasets):
            raise InputError("dataset width does not match the model input")
        if config.batch_size is not None:
            if any(config.batch_size > ds.n_samples for ds in datasets):
                raise InputError("batch size exceeds a worker's sample count")
        if cd.size != config.n_workers:
            raise InputError("ambiguity set size must equal the worker count")
        if delay.kind == "per_worker" and len(delay.values) != config.n_workers:
            raise InputError("per-worker delay list must have one entry per worker")
        self.cfg = config
        self.datasets = datasets
        self.model = model
        self.cd = cd
        self.bounds = bounds
        self.sched = sched
        self.delay = delay
        self.faults = faults

        self.clock = 0.0
        self.queue = EventQueue()
        self.trace: list[dict] = []
        self.metric_rows: list[dict] = []
        self.iteration = 0          # completed master iterations
        self.t_eps: int | None = None
        self.peak_planes = 0
        self.plane_iterations = 0
        self.max_staleness = 0

        n, p = config.n_workers, model.param_count
        init_rng = np.random.default_rng([config.seed, 1])
        self.delay_rng = np.random.default_rng([config.seed, 2])
        w0 = init_params(model, init_rng, config.init_scale)
        planes = CuttingPlaneSet(config.max_planes, n_workers=n)
        self.state = SystemState(
            w=np.tile(w0, (n, 1)), z=w0.copy(), h=0.0, planes=planes,
            phi=np.zeros((n, p)), t=0,
        )
        self.reported = np.array([
            faults.inflation(j) * local_loss(self.state.w[j], model, datasets[j])
            for j in range(n)
        ])
        # seed the active set with the plane generated at the initial losses
        p0 = solve_cutting_plane_lp(self.reported, cd)
        planes.add_plane(make_plane(p0, cd, birth_iteration=0))
        self._event("plane_add", {"birth": 0, "count": len(planes)})

        self.workers = [
            _WorkerRuntime(
                w=self.state.w[j].copy(), phi=self.state.phi[j].copy(),
                stored_z=self.state.z.copy(), stored_h=self.state.h,
                stored_duals=planes.duals(), stored_coeff=planes.coefficients().copy(),
                snapshot_t=0, rng=np.random.default_rng([config.seed, 10 + j]),
            )
            for j in range(n)
        ]
        self.last_active = {j: 0 for j in range(n)}
        self.inbox: dict[int, tuple[np.ndarray, float, int]] = {}

    # ---- plumbing

    def _event(self, kind: str, payload: dict) -> None:
        self.trace.append({
            "t": self.iteration, "vtime": self.clock, "kind": kind,
            "payload": payload,
        })

    def _start_cycle(self, j: int) -> None:
        """Compute the worker's next update now; it arrives after the delay."""
        wk = self.workers[j]
        ds = self.datasets[j]
        weight = float(wk.stored_duals @ (self.cd.p_bar + wk.stored_coeff[:, j])) \
            if wk.stored_duals.size else 0.0
        if self.cfg.batch_size is None or self.cfg.batch_size >= ds.n_samples:
            grad = local_grad(wk.w, self.model, ds)
        else:
            idx = sample_batch(ds.n_samples, self.cfg.batch_size, wk.rng)
            grad = local_grad(wk.w, self.model, ds, idx)
        step = self.sched.alpha_w(wk.snapshot_t, wk.stored_duals.size)
        w_next = worker_update(wk.w, wk.phi, wk.stored_z, weight, grad, step,
                               self.bounds)
        wk.w = w_next
        loss = self.faults.inflation(j) * local_loss(w_next, self.model, ds)
        send = self.clock
        deliver = send + self.delay.sample(j, self.delay_rng)
        self.queue.push(deliver, (j, w_next, loss, wk.snapshot_t, send))

    def _ready(self) -> bool:
        if len(self.inbox) < self.cfg.s_min:
            return False
        forced = enforce_staleness(self.last_active, self.iteration + 1,
                                   self.cfg.tau)
        return forced <= self.inbox.keys()

    # ---- metrics

    def _true_losses_grads(self, with_grads=True):
        losses = np.array([
            local_loss(self.state.w[j], self.model, self.datasets[j])
            for j in range(self.cfg.n_workers)
        ])
        grads = None
        if with_grads:
            grads = np.stack([
                local_grad(self.state.w[j], self.model, self.datasets[j])
                for j in range(self.cfg.n_workers)
            ])
        return losses, grads

    def _gap_steps(self) -> GapSteps:
        t, planes = self.iteration, len(self.state.planes)
        return GapSteps(
            alpha_w=self.sched.alpha_w(t, planes),
            eta_z=self.sched.eta_z(t, planes),
            eta_h=self.sched.eta_h(t, planes),
            rho1=self.sched.rho1, rho2=self.sched.rho2,
        )

    def _metrics_row(self) -> dict:
        losses, grads = self._true_losses_grads()
        gap = stationarity_gap(self.state, grads, losses, self.cd.p_bar,
                               self.bounds, self._gap_steps())
        accs = [accuracy(self.state.w[j], self.model, self.datasets[j])
                for j in range(self.cfg.n_workers)]
        worst_loss, worst_acc, acc_std = worst_case_stats(losses, accs)
        duals = self.state.planes.duals()
        row = {
            "t": self.iteration, "vtime": self.clock, "gap": gap,
            "worst_loss": worst_loss, "worst_acc": worst_acc,
            "acc_std": acc_std, "planes": len(self.state.planes),
            "sum_lambda": float(duals.sum()),
            "mal_weight": malicious_weight_share(self.state.planes, self.cd.p_bar,
                                                 self.faults.malicious),
        }
        return row

    # ---- protocol steps

    def master_iteration(self) -> None:
        if len(self.inbox) < self.cfg.s_min:
            raise ProtocolError(
                f"master invoked with {len(self.inbox)} < S={self.cfg.s_min} updates"
            )
        i = self.iteration + 1
        t0 = self.iteration
        active = sorted(self.inbox)
        staleness = [i - self.last_active[j] for j in range(self.cfg.n_workers)]
        self.max_staleness = max(self.max_staleness, max(staleness))

        for j in active:
            w_new, loss, stale_t, send = self.inbox[j]
            self.state.w[j] = w_new
            self.reported[j] = loss
            self._event("worker_update", {
                "worker": j, "loss": loss, "stale_t": stale_t,
                "send_time": send, "deliver_time": self.clock,
            })

        master_update(self.state, self.reported, self.cd.p_bar, self.bounds,
                      self.sched, t0)

        # broadcast fresh master values to the active workers only
        duals = self.state.planes.duals()
        for j in active:
            wk = self.workers[j]
            wk.stored_z = self.state.z.copy()
            wk.stored_h = self.state.h
            wk.stored_duals = duals.copy()
        self._event("master_broadcast", {"to": active})

        c2 = self.sched.c2(t0)
        for j in active:
            wk = self.workers[j]
            wk.phi = phi_update(wk.phi, self.state.z, wk.w, self.sched.rho2,
                                c2, self.bounds)
            self.state.phi[j] = wk.phi

        self.iteration = i
        if self._plane_step_due(i):
            self._plane_step(i)
        self.peak_planes = max(self.peak_planes, len(self.state.planes))
        self.plane_iterations += len(self.state.planes)

        duals = self.state.planes.duals()
        self._event("master_iteration", {
            "active": active,
            "staleness": staleness,
            "h": self.state.h,
            "sum_lambda": float(duals.sum()),
            "planes": len(self.state.planes),
            "duals": [float(d) for d in duals],
            "w_digest": [_digest(self.state.w[j]) for j in range(self.cfg.n_workers)],
            "phi_digest": [_digest(self.state.phi[j]) for j in range(self.cfg.n_workers)],
            "z_digest": _digest(self.state.z),
            "w_max": float(np.abs(self.state.w).max()),
            "z_max": float(np.abs(self.state.z).max()),
            "phi_max": float(np.abs(self.state.phi).max()),
            "dual_max": float(duals.max()) if duals.size else 0.0,
        })

        for j in active:
            self.last_active[j] = i
            self.workers[j].snapshot_t = i
            self._start_cycle(j)
        self.inbox.clear()

        if self.iteration % self.cfg.metric_cadence == 0:
            row = self._metrics_row()
            self.metric_rows.append(row)
            self._event("metrics", dict(row))
            if self.t_eps is None and self.cfg.eps > 0 and row["gap"] <= self.cfg.eps:
                self.t_eps = self.iteration

    def _plane_step_due(self, i: int) -> bool:
        if self.cfg.mode == "mix_even":
            return False
        return i % self.cfg.ease_period == 0 and (i - 1) < self.cfg.t1

    def _plane_step(self, i: int) -> None:
        planes = self.state.planes
        pre = len(planes)
        p_star = solve_cutting_plane_lp(self.reported, self.cd)
        candidate = make_plane(p_star, self.cd, birth_iteration=i)
        edited = False
        if violates(candidate, self.reported, planes):
            try:
                planes.add_plane(candidate)
                edited = True
                self._event("plane_add", {"birth": i, "count": len(planes)})
            except CapacityError:
                log.warning("plane capacity reached at iteration %d; skipping", i)
                self._event("plane_skip_capacity", {"count": len(planes)})
        if self.cfg.mode != "aspire_cp":
            removed = planes.prune_inactive(eligible=pre)
            if removed:
                edited = True
                self._event("plane_prune", {
                    "removed": removed, "count": len(planes),
                })
        if edited:
            coeff = planes.coefficients().copy()
            duals = planes.duals()
            for wk in self.workers:
                wk.stored_coeff = coeff.copy()
                wk.stored_duals = duals.copy()
            self._event("plane_broadcast", {
                "count": len(planes),
                "digest": _digest(coeff) if coeff.size else "empty",
                "worker_digests": [
                    _digest(wk.stored_coeff) if wk.stored_coeff.size else "empty"
                    for wk in self.workers
                ],
            })

    def run(self) -> RunOutput:
        self._event("run_start", {
            "mode": self.cfg.mode, "workers": self.cfg.n_workers,
            "seed": self.cfg.seed, "s_min": self.cfg.s_min, "tau": self.cfg.tau,
        })
        for j in range(self.cfg.n_workers):
            self._start_cycle(j)
        while self.iteration < self.cfg.t_max:
            if not self.queue:
                raise ProtocolError("event queue drained with workers missing")
            time, _seq, (j, w_new, loss, stale_t, send) = self.queue.pop()
            assert time >= self.clock
            self.clock = time
            self.inbox[j] = (w_new, loss, stale_t, send)
            if self._ready():
                self.master_iteration()
                if self.t_eps is not None:
                    break
        summary = self._summary()
        self._event("run_end", dict(summary))
        return RunOutput(self.state, self.trace, self.metric_rows, summary)

    def _summary(self) -> dict:
        if self.metric_rows and self.metric_rows[-1]["t"] == self.iteration:
            final = self.metric_rows[-1]
        else:
            final = self._metrics_row()
            self.metric_rows.append(final)
            self._event("metrics", dict(final))
        return {
            "mode": self.cfg.mode,
            "iterations": self.iteration,
            "vtime": self.clock,
            "final_gap": final["gap"],
            "t_eps": self.t_eps,
            "worst_loss": final["worst_loss"],
            "worst_acc": final["worst_acc"],
            "acc_std": final["acc_std"],
            "peak_planes": self.peak_planes,
            "plane_iterations": self.plane_iterations,
            "final_planes": len(self.state.planes),
            "sum_lambda": final["sum_lambda"],
            "mal_weight": final["mal_weight"],
            "max_staleness": self.max_staleness,
        }


@dataclass
class CentralizedState:
    w: np.ndarray
    h: float
    planes: CuttingPlaneSet
    t: int = 0


def run_centralized(config: RunConfig, datasets: list[LabeledDataset],
                    model: ModelSpec, cd: CDNormSet, bounds: BoxBounds,
                    sched: Schedules, faults: FaultSpec) -> RunOutput:
    """Single-model variant: projected steps on w, h, and the plane duals."""
    n = config.n_workers
    if len(datasets) != n:
        raise InputError("need one dataset per worker")
    rng = np.random.default_rng([config.seed, 1])
    batch_rng = np.random.default_rng([config.seed, 10])
    w = init_params(model, rng, config.init_scale)
    planes = CuttingPlaneSet(config.max_planes, n_workers=n)

    def full_losses(wv):
        return np.array([local_loss(wv, model, ds) for ds in datasets])

    def reported_losses(wv):
        return np.array([
            faults.inflation(j) * local_loss(wv, model, datasets[j])
            for j in range(n)
        ])

    trace: list[dict] = []
    metric_rows: list[dict] = []

    def event(t, kind, payload):
        trace.append({"t": t, "vtime": float(t), "kind": kind, "payload": payload})

    reported = reported_losses(w)
    planes.add_plane(make_plane(solve_cutting_plane_lp(reported, cd), cd, 0))
    event(0, "plane_add", {"birth": 0, "count": len(planes)})
    h = 0.0
    t_eps = None
    peak_planes = len(planes)
    plane_iterations = 0

    def gap_row(t, wv, hv):
        losses = full_losses(wv)
        grads = np.stack([local_grad(wv, model, ds) for ds in datasets])
        steps = GapSteps(
            alpha_w=sched.alpha_w(t, len(planes)), eta_z=sched.eta_z(t, len(planes)),
            eta_h=sched.eta_h(t, len(planes)), rho1=sched.rho1, rho2=sched.rho2,
        )
        gap = centralized_gap(wv, hv, planes, grads, losses, cd.p_bar, bounds, steps)
        accs = [accuracy(wv, model, ds) for ds in datasets]
        worst_loss, worst_acc, acc_std = worst_case_stats(losses, accs)
        duals = planes.duals()
        return {
            "t": t, "vtime": float(t), "gap": gap, "worst_loss": worst_loss,
            "worst_acc": worst_acc, "acc_std": acc_std, "planes": len(planes),
            "sum_lambda": float(duals.sum()),
            "mal_weight": malicious_weight_share(planes, cd.p_bar, faults.malicious),
        }

    event(0, "run_start", {"mode": "centralized", "workers": n, "seed": config.seed})
    for t0 in range(config.t_max):
        i = t0 + 1
        coeff = planes.coefficients()
        duals = planes.duals()
        weights = duals @ (coeff + cd.p_bar)
        if config.batch_size is None:
            grads = np.stack([local_grad(w, model, ds) for ds in datasets])
        else:
            grads = np.stack([
                local_grad(w, model, ds,
                           sample_batch(ds.n_samples, min(config.batch_size, ds.n_samples), batch_rng))
                for ds in datasets
            ])
        w = project_box(w - sched.eta_w(t0, len(planes)) * (weights @ grads),
                        bounds.alpha1)
        h = float(project_box(h - sched.eta_h(t0, len(planes)) * (1.0 - duals.sum()),
                              bounds.alpha2, lower_zero=True))
        reported = reported_losses(w)
        planes.snapshot_prev_duals()
        slack = (coeff + cd.p_bar) @ reported - h - sched.c1(t0) * duals
        planes.set_duals(project_box(duals + sched.rho1 * slack, bounds.alpha3,
                                     lower_zero=True))
        if i % config.ease_period == 0 and t0 < config.t1:
            pre = len(planes)
            cand = make_plane(solve_cutting_plane_lp(reported, cd), cd, i)
            if violates(cand, reported, planes):
                try:
                    planes.add_plane(cand)
                    event(i, "plane_add", {"birth": i, "count": len(planes)})
                except CapacityError:
                    event(i, "plane_skip_capacity", {"count": len(planes)})
            removed = planes.prune_inactive(eligible=pre)
            if removed:
                event(i, "plane_prune", {"removed": removed, "count": len(planes)})
        peak_planes = max(peak_planes, len(planes))
        plane_iterations += len(planes)
        if i % config.metric_cadence == 0:
            row = gap_row(i, w, h)
            metric_rows.append(row)
            event(i, "metrics", dict(row))
            if t_eps is None and config.eps > 0 and row["gap"] <= config.eps:
                t_eps = i
                break

    final_t = metric_rows[-1]["t"] if metric_rows else 0
    if final_t != (t_eps or config.t_max) or not metric_rows:
        row = gap_row(t_eps or config.t_max, w, h)
        metric_rows.append(row)
        event(row["t"], "metrics", dict(row))
    final = metric_rows[-1]
    summary = {
        "mode": "centralized",
        "iterations": final["t"],
        "vtime": final["vtime"],
        "final_gap": final["gap"],
        "t_eps": t_eps,
        "worst_loss": final["worst_loss"],
        "worst_acc": final["worst_acc"],
        "acc_std": final["acc_std"],
        "peak_planes": peak_planes,
        "plane_iterations": plane_iterations,
        "final_planes": len(planes),
        "sum_lambda": final["sum_lambda"],
        "mal_weight": final["mal_weight"],
        "max_staleness": 0,
    }
    event(final["t"], "run_end", dict(summary))
    state = CentralizedState(w=w, h=h, planes=planes, t=final["t"])
    return RunOutput(state, trace, metric_rows, summary)


def run(config: RunConfig, datasets: list[LabeledDataset], model: ModelSpec,
        cd: CDNormSet, bounds: BoxBounds, sched: Schedules, delay: DelayModel,
        faults: FaultSpec | None = None) -> RunOutput:
    """Dispatch one run according to the configured mode."""
    faults = faults or FaultSpec()
    if config.mode == "centralized":
        return run_centralized(config, datasets, model, cd, bounds, sched, faults)
    if config.mode == "sync":
        config = replace(config, s_min=config.n_workers, tau=1)
    if config.mode == "mix_even":
        cd = CDNormSet.uniform(config.n_workers, 0.0, p_bar=cd.p_bar)
    engine = AsyncEngine(config, datasets, model, cd, bounds, sched, delay, faults)
    return engine.run()
