"""Synthetic heterogeneous data generation and CSV ingestion."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParseError
from .models import LabeledDataset


@dataclass(frozen=True)
class SyntheticSpec:
    """Per-worker Gaussian class clusters with Dirichlet label skew.

    ``alpha`` is the Dirichlet concentration of each worker's class prior
    (small = skewed), ``shift`` the norm of the worker-specific mean offset,
    ``class_sep`` scales the shared class means, ``noise`` the sample spread.
    """

    workers: int
    features: int
    classes: int
    samples_per_worker: int
    alpha: float = 1.0
    shift: float = 0.5
    noise: float = 1.0
    class_sep: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.workers, self.features, self.classes, self.samples_per_worker) < 1:
            raise InputError("counts must all be >= 1")
        if self.alpha <= 0:
            raise InputError("Dirichlet concentration must be positive")
        if self.noise < 0 or self.shift < 0:
            raise InputError("noise and shift must be nonnegative")


def generate(spec: SyntheticSpec) -> list[LabeledDataset]:
    """Deterministic per seed; sample counts match the spec exactly."""
    rng = np.random.default_rng(spec.seed)
    means = spec.class_sep * rng.standard_normal((spec.classes, spec.features))
    datasets = []
    for j in range(spec.workers):
        prior = rng.dirichlet(spec.alpha * np.ones(spec.classes))
        offset = spec.shift * rng.standard_normal(spec.features) / np.sqrt(spec.features)
        labels = rng.choice(spec.classes, size=spec.samples_per_worker, p=prior)
        feats = (
            means[labels]
            + offset
            + spec.noise * rng.standard_normal((spec.samples_per_worker, spec.features))
        )
        datasets.append(LabeledDataset(feats, labels, worker_id=j))
    return datasets


def load_csv(path, label_column: int = 0, feature_columns=None, header: bool = False,
             standardize: bool = False, worker_id: int = 0):
    """Parse a CSV file into a dataset.

    Labels are remapped to 0..c-1 in order of first appearance; the mapping
    is returned alongside the dataset. Rows must agree on column count.
    """
    rows = []
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row:
                continue
            rows.append((lineno, row))
    if not rows:
        raise ParseError("no data rows found", line=1)

    width = len(rows[0][1])
    if feature_columns is None:
        feature_columns = [i for i in range(width) if i != label_column]
    if label_column >= width or any(c >= width for c in feature_columns):
        raise ParseError("column index beyond row width", line=rows[0][0])

    label_map: dict[str, int] = {}
    feats, labels = [], []
    for lineno, row in rows:
        if len(row) != width:
            raise ParseError(
                f"expected {width} columns, found {len(row)}", line=lineno
            )
        raw = row[label_column].strip()
        if raw not in label_map:
            label_map[raw] = len(label_map)
        labels.append(label_map[raw])
        try:
            feats.append([float(row[c]) for c in feature_columns])
        except ValueError as exc:
            raise ParseError(f"non-numeric feature value ({exc})", line=lineno) from None

    features = np.asarray(feats, dtype=np.float64)
    if standardize:
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        std[std == 0] = 1.0
        features = (features - mean) / std
    dataset = LabeledDataset(features, np.asarray(labels), worker_id=worker_id)
    return dataset, label_map


def save_csv(dataset: LabeledDataset, path) -> None:
    """Write label-first rows with full-precision floats (round-trips exactly)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for label, row in zip(dataset.labels, dataset.features):
            writer.writerow([int(label), *[repr(float(v)) for v in row]])
