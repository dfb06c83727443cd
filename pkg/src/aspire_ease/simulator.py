"""Virtual-time event machinery, delay models, and fault injection.

All timing is simulated: events carry virtual timestamps and a sequence
number that breaks ties, so a run replays identically on any machine.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .models import LabeledDataset


@dataclass(frozen=True)
class DelayModel:
    """Per-message worker delay: constant, per-worker constants, or lognormal."""

    kind: str = "lognormal"
    value: float = 1.0
    values: tuple[float, ...] = ()
    mu: float = 1.0
    sigma: float = 0.4

    def __post_init__(self):
        if self.kind not in ("constant", "per_worker", "lognormal"):
            raise InputError(f"unknown delay kind {self.kind!r}")
        if self.kind == "constant" and self.value <= 0:
            raise InputError("constant delay must be positive")
        if self.kind == "per_worker":
            if not self.values or any(v <= 0 for v in self.values):
                raise InputError("per-worker delays must be positive")
        if self.kind == "lognormal" and self.sigma < 0:
            raise InputError("sigma must be nonnegative")

    def sample(self, worker: int, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "per_worker":
            if worker >= len(self.values):
                raise InputError(f"no delay configured for worker {worker}")
            return self.values[worker]
        return float(np.exp(self.mu + self.sigma * rng.standard_normal()))


def sample_delay(model: DelayModel, worker: int, rng: np.random.Generator) -> float:
    return model.sample(worker, rng)


class EventQueue:
    """Min-heap on (time, sequence); sequence numbers make pops deterministic."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0

    def push(self, time: float, payload) -> int:
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (time, seq, payload))
        return seq

    def pop(self):
        """Pop and return (time, seq, payload) for the earliest event."""
        return heapq.heappop(self._heap)

    def __len__(self):
        return len(self._heap)

    def __bool__(self):
        return bool(self._heap)


def next_event(queue: EventQueue):
    return queue.pop()


def time_ratio(t1_iters: int, t2_iters: int, s: int, delays) -> float:
    """Async/sync completion-time ratio for fixed per-worker delays.

    ratio = T1 * S / (T2 * sum_j dmax / d_j), with dmax the largest delay.
    """
    delays = np.asarray(delays, dtype=np.float64)
    if t1_iters <= 0 or t2_iters <= 0 or s <= 0 or np.any(delays <= 0):
        raise InputError("iterations, S, and delays must all be positive")
    dmax = delays.max()
    return float(t1_iters * s / (t2_iters * np.sum(dmax / delays)))


@dataclass(frozen=True)
class BackdoorSpec:
    """Tabular trigger: force one feature to a value, relabel to the target."""

    feature: int
    value: float
    target: int
    fraction: float

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise InputError("poisoned fraction must lie in [0, 1]")
        if self.feature < 0 or self.target < 0:
            raise InputError("feature index and target label must be nonnegative")


@dataclass(frozen=True)
class FaultSpec:
    """Malicious worker ids, their loss inflation, and the optional backdoor."""

    malicious: tuple[int, ...] = ()
    beta: float = 1.0
    backdoor: BackdoorSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "malicious", tuple(int(j) for j in self.malicious))
        if self.beta < 1.0:
            raise InputError("loss inflation factor must be >= 1")

    def inflation(self, worker: int) -> float:
        return self.beta if worker in self.malicious else 1.0


def inject_faults(datasets: list[LabeledDataset], spec: FaultSpec,
                  rng: np.random.Generator):
    """Apply the backdoor to malicious workers' data.

    Returns (new datasets, {worker_id: poisoned sample indices}). The count
    per worker is round(fraction * n), indices drawn from the seeded stream.
    Loss inflation is not applied here; it scales only the loss a malicious
    worker reports inside the protocol.
    """
    if any(j < 0 or j >= len(datasets) for j in spec.malicious):
        raise InputError("malicious worker id out of range")
    mask: dict[int, np.ndarray] = {}
    if spec.backdoor is None or spec.backdoor.fraction == 0.0 or not spec.malicious:
        return list(datasets), mask
    bd = spec.backdoor
    out = []
    for j, ds in enumerate(datasets):
        if j not in spec.malicious:
            out.append(ds)
            continue
        if bd.feature >= ds.n_features:
            raise InputError(
                f"trigger feature {bd.feature} out of range for d={ds.n_features}"
            )
        count = int(round(bd.fraction * ds.n_samples))
        idx = np.sort(rng.choice(ds.n_samples, size=count, replace=False))
        feats = ds.features.copy()
        labels = ds.labels.copy()
        feats[idx, bd.feature] = bd.value
        labels[idx] = bd.target
        out.append(LabeledDataset(feats, labels, worker_id=ds.worker_id))
        mask[j] = idx
    return out, mask
