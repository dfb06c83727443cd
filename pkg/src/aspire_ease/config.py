"""Experiment configuration schema and builders for the engine objects.

Pydantic models validate the JSON config surface (unknown keys rejected by
name); the builders translate a validated config into the numpy-backed
objects the engine consumes.
"""
from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .data import SyntheticSpec, generate, load_csv
from .engine import MODES, RunConfig
from .errors import ConfigError
from .lagrangian import BoxBounds, Schedules
from .models import ModelSpec
from .simulator import BackdoorSpec, DelayModel, FaultSpec
from .uncertainty import CDNormSet


class _Base(BaseModel):
    model_config = ConfigDict(extra="forbid")


class UncertaintyConfig(_Base):
    gamma: float = 1.0
    p_bar: Optional[float] = None          # defaults to 1/N
    prior: Optional[list[float]] = None    # defaults to uniform
    half_width_frac: float = 0.5           # p_tilde = frac * prior
    half_widths: Optional[list[float]] = None


class BoundsConfig(_Base):
    alpha1: float = 10.0
    alpha2: float = 50.0
    alpha3: float = 5.0
    alpha4: float = 5.0
    kappa1: float = 1.0


class ScheduleConfig(_Base):
    mode: Literal["constant", "paper"] = "constant"
    eta: float = 0.05
    eta_z: Optional[float] = None
    eta_h: Optional[float] = None
    rho1: float = 0.05
    rho2: float = 0.05
    c1: float = 0.0
    c2: float = 0.0
    lipschitz: float = 1.0
    curvature: float = 1.0


class ModelConfig(_Base):
    kind: Literal["logistic", "mlp"] = "logistic"
    hidden: list[int] = []
    classes: Optional[int] = None          # inferred from the data when omitted


class SyntheticConfig(_Base):
    workers: int = 4
    features: int = 10
    classes: int = 3
    samples_per_worker: int = 200
    alpha: float = 1.0
    shift: float = 0.5
    noise: float = 1.0
    class_sep: float = 1.0
    seed: Optional[int] = None             # defaults to the run seed


class CsvConfig(_Base):
    paths: list[str]
    label_column: int = 0
    header: bool = False
    standardize: bool = False


class DataConfig(_Base):
    synthetic: Optional[SyntheticConfig] = None
    csv: Optional[CsvConfig] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.synthetic is None) == (self.csv is None):
            raise ValueError("configure exactly one data source: synthetic or csv")
        return self


class DelayConfig(_Base):
    kind: Literal["constant", "per_worker", "lognormal"] = "lognormal"
    value: float = 1.0
    values: list[float] = []
    mu: float = 1.0
    sigma: float = 0.4


class BackdoorConfig(_Base):
    feature: int = 0
    value: float = 3.0
    target: int = 0
    fraction: float = 0.0


class FaultConfig(_Base):
    malicious: list[int] = []
    beta: float = 1.0
    backdoor: Optional[BackdoorConfig] = None


class ExperimentConfig(_Base):
    mode: Literal["aspire_ease", "aspire_cp", "sync", "centralized", "mix_even"] = "aspire_ease"
    seed: int = 0
    workers: Optional[int] = None          # inferred from the data when omitted
    s_min: int = 1
    tau: int = 10**9
    ease_period: int = 5
    t1: Optional[int] = None               # defaults to t_max
    max_planes: int = 10
    t_max: int = 1000
    batch_size: Optional[int] = None       # null = full batch
    eps: float = 0.0
    metric_cadence: int = 10
    init_scale: float = 0.1
    uncertainty: UncertaintyConfig = UncertaintyConfig()
    bounds: BoundsConfig = BoundsConfig()
    schedule: ScheduleConfig = ScheduleConfig()
    model: ModelConfig = ModelConfig()
    data: DataConfig
    delay: DelayConfig = DelayConfig()
    faults: Optional[FaultConfig] = None


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw dict, rewrapping pydantic errors as ConfigError."""
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}"
            for err in exc.errors()
        )
        raise ConfigError(details) from None


def apply_overrides(raw: dict, overrides: dict[str, str]) -> dict:
    """Apply dotted-path --key=value overrides onto the raw config dict."""
    import json

    out = json.loads(json.dumps(raw))  # deep copy, JSON types only
    for path, text in overrides.items():
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = out
        parts = path.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override through non-object key {part!r}")
        node[parts[-1]] = value
    return out


def build_datasets(cfg: ExperimentConfig):
    if cfg.data.synthetic is not None:
        s = cfg.data.synthetic
        spec = SyntheticSpec(
            workers=s.workers, features=s.features, classes=s.classes,
            samples_per_worker=s.samples_per_worker, alpha=s.alpha,
            shift=s.shift, noise=s.noise, class_sep=s.class_sep,
            seed=cfg.seed if s.seed is None else s.seed,
        )
        return generate(spec), s.classes
    loaded = [
        load_csv(path, label_column=cfg.data.csv.label_column,
                 header=cfg.data.csv.header, standardize=cfg.data.csv.standardize,
                 worker_id=i)[0]
        for i, path in enumerate(cfg.data.csv.paths)
    ]
    classes = int(max(ds.labels.max() for ds in loaded)) + 1
    return loaded, classes


def build_model_spec(cfg: ExperimentConfig, input_dim: int, classes: int) -> ModelSpec:
    return ModelSpec(
        kind=cfg.model.kind, input_dim=input_dim,
        classes=cfg.model.classes or classes, hidden=tuple(cfg.model.hidden),
    )


def build_cd_set(cfg: ExperimentConfig, n_workers: int) -> CDNormSet:
    u = cfg.uncertainty
    if u.prior is not None:
        q = np.asarray(u.prior, dtype=np.float64)
        if q.size != n_workers:
            raise ConfigError("prior length must equal the worker count")
        q = q / q.sum()
    else:
        q = np.full(n_workers, 1.0 / n_workers)
    if u.half_widths is not None:
        pt = np.asarray(u.half_widths, dtype=np.float64)
        if pt.size != n_workers:
            raise ConfigError("half_widths length must equal the worker count")
    else:
        pt = u.half_width_frac * q
    p_bar = 1.0 / n_workers if u.p_bar is None else u.p_bar
    return CDNormSet(q, pt, u.gamma, p_bar)


def build_schedules(cfg: ExperimentConfig, n_workers: int) -> Schedules:
    s = cfg.schedule
    t1 = cfg.t1 if cfg.t1 is not None else cfg.t_max
    return Schedules(
        mode=s.mode, eta_w0=s.eta, eta_z0=s.eta_z if s.eta_z is not None else s.eta,
        eta_h0=s.eta_h if s.eta_h is not None else s.eta,
        rho1=s.rho1, rho2=s.rho2, c1_const=s.c1, c2_const=s.c2,
        t1=t1, t_max=cfg.t_max, max_planes=cfg.max_planes,
        n_workers=n_workers, lipschitz=s.lipschitz, curvature=s.curvature,
    )


def build_bounds(cfg: ExperimentConfig) -> BoxBounds:
    b = cfg.bounds
    return BoxBounds(alpha1=b.alpha1, alpha2=b.alpha2, alpha3=b.alpha3,
                     alpha4=b.alpha4, kappa1=b.kappa1)


def build_delay(cfg: ExperimentConfig) -> DelayModel:
    d = cfg.delay
    return DelayModel(kind=d.kind, value=d.value, values=tuple(d.values),
                      mu=d.mu, sigma=d.sigma)


def build_faults(cfg: ExperimentConfig) -> FaultSpec:
    if cfg.faults is None:
        return FaultSpec()
    f = cfg.faults
    backdoor = None
    if f.backdoor is not None and f.backdoor.fraction > 0:
        backdoor = BackdoorSpec(feature=f.backdoor.feature, value=f.backdoor.value,
                                target=f.backdoor.target, fraction=f.backdoor.fraction)
    return FaultSpec(malicious=tuple(f.malicious), beta=f.beta, backdoor=backdoor)


def build_run_config(cfg: ExperimentConfig, n_workers: int) -> RunConfig:
    return RunConfig(
        n_workers=n_workers, mode=cfg.mode, s_min=cfg.s_min, tau=cfg.tau,
        ease_period=cfg.ease_period,
        t1=cfg.t1 if cfg.t1 is not None else cfg.t_max,
        max_planes=cfg.max_planes, t_max=cfg.t_max, batch_size=cfg.batch_size,
        eps=cfg.eps, metric_cadence=cfg.metric_cadence, seed=cfg.seed,
        init_scale=cfg.init_scale,
    )
