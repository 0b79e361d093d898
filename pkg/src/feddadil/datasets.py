"""Synthetic multi-domain benchmarks and feature-file ingestion.

Domains are Gaussian class blobs pushed through per-domain affine
shifts (plane rotations, translation, scale), which mimics feature
drift across data sites at desk scale.  One domain is the target: its
training view carries no labels, and the evaluation labels are only
reachable through an explicitly named accessor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .ot import LabeledMeasure


@dataclass(frozen=True)
class DomainSpec:
    """Generative description of one domain.

    ``rotation_deg`` is a single angle applied in every consecutive
    coordinate plane (0,1), (2,3), ... or a sequence with one angle per
    plane.  Points are mapped as ``x -> scale * R x + translation``.
    """

    n_samples: int
    n_classes: int
    class_means: np.ndarray
    cov_scale: float = 1.0
    rotation_deg: float | tuple = 0.0
    translation: np.ndarray | float = 0.0
    scale: float = 1.0
    label_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        means = np.array(self.class_means, dtype=np.float64, ndmin=2)
        if means.shape[0] != self.n_classes:
            raise ValueError("class_means must have one row per class")
        object.__setattr__(self, "class_means", means)
        if self.n_samples < self.n_classes:
            raise ValueError("need at least one sample per class")
        if self.cov_scale <= 0:
            raise ValueError("cov_scale must be positive")
        if not 0.0 <= self.label_noise < 1.0:
            raise ValueError("label_noise must lie in [0, 1)")

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]


@dataclass(eq=False)
class Benchmark:
    """Generated domains with the target's labels sequestered."""

    measures: list
    target_index: int
    _target_labels: np.ndarray = field(repr=False)

    @property
    def n_domains(self) -> int:
        return len(self.measures)

    @property
    def sources(self) -> list:
        return [m for i, m in enumerate(self.measures) if i != self.target_index]

    @property
    def target(self) -> LabeledMeasure:
        return self.measures[self.target_index]

    def target_evaluation_measure(self) -> LabeledMeasure:
        """Target features with their held-out labels, for scoring only."""
        return LabeledMeasure(self.target.features, self._target_labels)


def rotation_matrix(dim: int, angles_deg) -> np.ndarray:
    """Block-diagonal rotation acting on consecutive coordinate planes."""
    n_planes = dim // 2
    angles = np.asarray(angles_deg, dtype=np.float64)
    if angles.ndim == 0:
        angles = np.full(n_planes, float(angles))
    elif angles.size != n_planes:
        raise ValueError(f"expected {n_planes} plane angles for dimension {dim}")
    rot = np.eye(dim)
    for p, deg in enumerate(angles):
        theta = np.deg2rad(deg)
        c, s = np.cos(theta), np.sin(theta)
        i, j = 2 * p, 2 * p + 1
        rot[i, i], rot[i, j] = c, -s
        rot[j, i], rot[j, j] = s, c
    return rot


def _sample_domain(spec: DomainSpec, rng: np.random.Generator):
    n, n_c, d = spec.n_samples, spec.n_classes, spec.dim
    counts = [n // n_c] * n_c
    for i in range(n - sum(counts)):
        counts[i] += 1
    features = np.empty((n, d))
    hard = np.empty(n, dtype=np.intp)
    row = 0
    for cls, count in enumerate(counts):
        features[row : row + count] = spec.class_means[cls] + spec.cov_scale * rng.standard_normal(
            (count, d)
        )
        hard[row : row + count] = cls
        row += count

    rot = rotation_matrix(d, spec.rotation_deg)
    features = spec.scale * (features @ rot.T) + np.asarray(spec.translation, dtype=np.float64)

    if spec.label_noise > 0:
        flip = rng.random(n) < spec.label_noise
        offsets = rng.integers(1, n_c, size=n)
        hard = np.where(flip, (hard + offsets) % n_c, hard)

    order = rng.permutation(n)
    features = features[order]
    hard = hard[order]
    labels = np.zeros((n, n_c))
    labels[np.arange(n), hard] = 1.0
    return features, labels


def generate_benchmark(specs, target_index: int, seed: int = 0) -> Benchmark:
    """Generate all domains; a pure function of ``(specs, seed)``.

    The target domain's measure is returned unlabeled; its labels are
    kept aside for evaluation.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one domain spec")
    if not 0 <= target_index < len(specs):
        raise ValueError(f"target_index {target_index} out of range for {len(specs)} domains")
    dim = specs[0].dim
    n_classes = specs[0].n_classes
    for spec in specs:
        if spec.dim != dim or spec.n_classes != n_classes:
            raise ValueError("all domains must share the feature dimension and class count")

    measures = []
    target_labels = None
    for i, spec in enumerate(specs):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i, int(spec.seed)]))
        features, labels = _sample_domain(spec, rng)
        if i == target_index:
            measures.append(LabeledMeasure(features))
            target_labels = labels
        else:
            measures.append(LabeledMeasure(features, labels))
    return Benchmark(measures=measures, target_index=target_index, _target_labels=target_labels)


def default_domain_specs(
    seed: int = 0,
    n_per_domain: int = 300,
    dim: int = 16,
    n_classes: int = 5,
    rotations_deg=(0.0, 15.0, 30.0, 45.0),
    translation_step: float = 0.75,
    cov_scale: float = 1.0,
    mean_scale: float = 1.25,
) -> list[DomainSpec]:
    """Desk-scale default: shared class geometry, increasing domain shift.

    Four domains (three sources plus a target at the largest shift):
    shared Gaussian class means, per-domain plane rotations and a
    translation that grows with the domain index.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2**31 - 1]))
    means = mean_scale * rng.standard_normal((n_classes, dim))
    directions = rng.standard_normal((len(rotations_deg), dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    specs = []
    for i, deg in enumerate(rotations_deg):
        specs.append(
            DomainSpec(
                n_samples=n_per_domain,
                n_classes=n_classes,
                class_means=means,
                cov_scale=cov_scale,
                rotation_deg=float(deg),
                translation=translation_step * i * directions[i],
                seed=i,
            )
        )
    return specs


def default_benchmark(seed: int = 0, **spec_overrides) -> Benchmark:
    """Default synthetic benchmark; the last (most shifted) domain is the target."""
    specs = default_domain_specs(seed=seed, **spec_overrides)
    return generate_benchmark(specs, target_index=len(specs) - 1, seed=seed)


def save_features(measure: LabeledMeasure, path) -> None:
    """Write a measure to the feature CSV layout.

    Columns ``f0..f{d-1}``, then either a single integer ``label``
    column (when all rows are exactly one-hot) or soft columns
    ``y0..y{nc-1}``; unlabeled measures get feature columns only.
    """
    d = measure.dim
    header = [f"f{j}" for j in range(d)]
    labels = measure.labels
    hard = None
    if labels is not None:
        argmax = np.argmax(labels, axis=1)
        onehot = np.zeros_like(labels)
        onehot[np.arange(labels.shape[0]), argmax] = 1.0
        if np.array_equal(labels, onehot):
            hard = argmax
            header.append("label")
        else:
            header.extend(f"y{c}" for c in range(labels.shape[1]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(measure.n):
            row = [repr(float(v)) for v in measure.features[i]]
            if hard is not None:
                row.append(str(int(hard[i])))
            elif labels is not None:
                row.extend(repr(float(v)) for v in labels[i])
            writer.writerow(row)


def load_features(path, n_classes: int | None = None) -> LabeledMeasure:
    """Read the feature CSV layout back into a measure.

    Hard-label files need ``n_classes`` when the largest class index
    should not determine the class count.  Malformed content is
    reported with its row number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        feat_cols = [h for h in header if h.startswith("f")]
        soft_cols = [h for h in header if h.startswith("y")]
        has_hard = "label" in header
        d = len(feat_cols)
        if d == 0:
            raise ValueError(f"{path}: no feature columns found in header")
        if header[:d] != [f"f{j}" for j in range(d)]:
            raise ValueError(f"{path}: feature columns must be f0..f{d - 1} in order")
        expected_width = d + (1 if has_hard else len(soft_cols))

        features = []
        hard = []
        soft = []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != expected_width:
                raise ValueError(
                    f"{path}: row {row_num} has {len(row)} cells, expected {expected_width}"
                )
            try:
                features.append([float(v) for v in row[:d]])
            except ValueError as exc:
                raise ValueError(f"{path}: row {row_num}: non-numeric feature cell ({exc})") from None
            if has_hard:
                try:
                    hard.append(int(row[d]))
                except ValueError:
                    raise ValueError(
                        f"{path}: row {row_num}: non-integer label {row[d]!r}"
                    ) from None
            elif soft_cols:
                try:
                    soft.append([float(v) for v in row[d:]])
                except ValueError as exc:
                    raise ValueError(f"{path}: row {row_num}: non-numeric label cell ({exc})") from None

    features = np.asarray(features, dtype=np.float64)
    if has_hard:
        hard = np.asarray(hard, dtype=np.intp)
        width = int(hard.max()) + 1 if n_classes is None else int(n_classes)
        bad = np.nonzero((hard < 0) | (hard >= width))[0]
        if bad.size:
            raise ValueError(
                f"{path}: row {bad[0] + 2}: label {hard[bad[0]]} out of range for {width} classes"
            )
        labels = np.zeros((hard.size, width))
        labels[np.arange(hard.size), hard] = 1.0
        return LabeledMeasure(features, labels)
    if soft_cols:
        return LabeledMeasure(features, np.asarray(soft, dtype=np.float64))
    return LabeledMeasure(features)
