"""Synthetic mixtures and forgetting/remaining set construction.

The toy data distribution is an isotropic Gaussian mixture with one component
per class. Remaining sets are built two ways: balanced (equal counts from
every retained class) and similarity-restricted (only the classes whose means
sit closest to the forgotten class), the latter standing in for
feature-space class similarity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeError
from .rngs import as_generator


@dataclass(frozen=True)
class MixtureSpec:
    """Isotropic Gaussian mixture with one component per class.

    Attributes:
        num_classes: Number of components K, at least 2.
        means: Component centers, shape (K, input_dim), pairwise distinct.
        sigma: Shared per-coordinate standard deviation, positive.
        samples_per_class: Draw count per component.
    """

    num_classes: int
    means: np.ndarray
    sigma: float
    samples_per_class: int

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        if self.num_classes < 2:
            raise DomainError("mixture needs at least 2 classes")
        if means.ndim != 2 or means.shape[0] != self.num_classes:
            raise ShapeError(
                f"means has shape {means.shape}, expected ({self.num_classes}, dim)"
            )
        if self.sigma <= 0.0:
            raise DomainError("sigma must be positive")
        if self.samples_per_class < 1:
            raise DomainError("samples_per_class must be at least 1")
        for i in range(self.num_classes):
            for j in range(i + 1, self.num_classes):
                if np.array_equal(means[i], means[j]):
                    raise DomainError(f"class means {i} and {j} coincide")
        means = means.copy()
        means.flags.writeable = False
        object.__setattr__(self, "means", means)

    @property
    def input_dim(self) -> int:
        return int(self.means.shape[1])


@dataclass(frozen=True)
class LabeledDataset:
    """Points with integer class labels.

    Attributes:
        points: Sample coordinates, shape (n, input_dim).
        labels: Class of each sample, shape (n,), nonnegative.
    """

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if points.ndim != 2:
            raise ShapeError(f"points must be 2-D, got shape {points.shape}")
        if points.shape[0] != labels.shape[0]:
            raise ShapeError(
                f"{points.shape[0]} points but {labels.shape[0]} labels"
            )
        if labels.size and labels.min() < 0:
            raise DomainError("labels must be nonnegative")
        for arr in (points, labels):
            arr.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.points[indices], self.labels[indices])

    def class_subset(self, label: int) -> "LabeledDataset":
        return self.subset(np.flatnonzero(self.labels == label))

    def drop_class(self, label: int) -> "LabeledDataset":
        return self.subset(np.flatnonzero(self.labels != label))

    def class_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def circle_mixture(
    num_classes: int = 5,
    radius: float = 5.0,
    sigma: float = 0.3,
    samples_per_class: int = 1000,
) -> MixtureSpec:
    """Default toy layout: class means equally spaced on a circle.

    Well-separated modes (radius/sigma large) keep the oracle classifier
    near-perfect, so accuracy metrics reflect the generator, not the judge.
    """
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return MixtureSpec(
        num_classes=num_classes,
        means=means,
        sigma=sigma,
        samples_per_class=samples_per_class,
    )


def gen_mixture(spec: MixtureSpec, rng) -> LabeledDataset:
    """Draw samples_per_class points from each component, class by class.

    Deterministic per seed; class k occupies the contiguous block
    [k * samples_per_class, (k+1) * samples_per_class).
    """
    gen, _ = as_generator(rng)
    blocks = []
    for k in range(spec.num_classes):
        noise = gen.standard_normal((spec.samples_per_class, spec.input_dim))
        blocks.append(spec.means[k] + spec.sigma * noise)
    points = np.concatenate(blocks, axis=0)
    labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    return LabeledDataset(points=points, labels=labels)


def _draw_per_class(
    data: LabeledDataset, classes, per_class: int, gen: np.random.Generator
) -> LabeledDataset:
    """Sample per_class points without replacement from each listed class."""
    picked = []
    for k in classes:
        pool = np.flatnonzero(data.labels == k)
        if pool.size < per_class:
            raise DomainError(
                f"class {k} has {pool.size} samples, need {per_class}"
            )
        picked.append(gen.choice(pool, size=per_class, replace=False))
    return data.subset(np.concatenate(picked))


def balanced_remaining_set(
    data: LabeledDataset, forget_class: int, per_class: int, rng
) -> LabeledDataset:
    """Equal-sized draw from every class except the forgotten one.

    Returns per_class samples from each retained class in ascending class
    order and none from forget_class.
    """
    if per_class < 1:
        raise DomainError("per_class must be at least 1")
    classes = sorted(k for k in data.class_counts() if k != forget_class)
    if not classes:
        raise DomainError("no retained classes to sample from")
    gen, _ = as_generator(rng)
    return _draw_per_class(data, classes, per_class, gen)


def nearest_retained_classes(
    data: LabeledDataset, forget_class: int, k_nearest: int
) -> list[int]:
    """Retained classes ranked by distance between class means.

    Distance ties break toward the lower class index (sort is stable over
    ascending class order).
    """
    counts = data.class_counts()
    if forget_class not in counts:
        raise DomainError(f"class {forget_class} absent from dataset")
    retained = sorted(k for k in counts if k != forget_class)
    if k_nearest < 1 or k_nearest > len(retained):
        raise DomainError(
            f"k_nearest must lie in 1..{len(retained)}"
        )
    target_mean = data.class_subset(forget_class).points.mean(axis=0)
    dists = [
        float(np.linalg.norm(data.class_subset(k).points.mean(axis=0) - target_mean))
        for k in retained
    ]
    order = sorted(range(len(retained)), key=lambda i: (dists[i], retained[i]))
    return [retained[i] for i in order[:k_nearest]]


def similarity_restricted_set(
    data: LabeledDataset, forget_class: int, k_nearest: int, total: int, rng
) -> LabeledDataset:
    """Draw only from the classes nearest to the forgotten one.

    Returns total samples split equally across the k_nearest retained classes
    whose means lie closest to the forgotten class mean. Sized to match a
    balanced set so the two constructions compare fairly.
    """
    if total < 1:
        raise DomainError("total must be at least 1")
    if total % k_nearest != 0:
        raise DomainError(
            f"total {total} not divisible by k_nearest {k_nearest}"
        )
    classes = nearest_retained_classes(data, forget_class, k_nearest)
    gen, _ = as_generator(rng)
    return _draw_per_class(data, sorted(classes), total // k_nearest, gen)


def save_dataset(data: LabeledDataset, path) -> None:
    """Write one {"x": [...], "label": int} JSON record per line."""
    path = Path(path)
    with path.open("w") as fh:
        for x, label in zip(data.points, data.labels):
            record = {"x": [float(v) for v in x], "label": int(label)}
            fh.write(json.dumps(record) + "\n")


def load_dataset(path) -> LabeledDataset:
    """Read a dataset written by :func:`save_dataset`; floats round-trip."""
    points, labels = [], []
    with Path(path).open() as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            points.append(record["x"])
            labels.append(record["label"])
    if not points:
        raise DomainError(f"no records in {path}")
    return LabeledDataset(points=np.array(points), labels=np.array(labels))
