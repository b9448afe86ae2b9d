"""Dataset container and the simulator contract shared by all tasks."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import ValidationError
from ..params import ParamSchema, check_theta
from ..seeding import SeedLike

TASK_KINDS = ("gmm_classification", "traffic_counting")


@dataclass
class LabeledDataset:
    """``features`` is ``(N, D)``; ``labels`` is ``(N,)`` class ids or ``(N, C)`` counts."""

    features: np.ndarray
    labels: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2:
            raise ValidationError("features must be a 2-D array")
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValidationError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def label_matrix(self) -> np.ndarray:
        return self.labels.reshape(len(self), -1)

    def concat(self, other: "LabeledDataset") -> "LabeledDataset":
        return LabeledDataset(
            np.concatenate([self.features, other.features]),
            np.concatenate([self.labels, other.labels]),
            {"parts": [self.meta, other.meta]},
        )

    def to_csv(self, path: str | Path) -> Path:
        """Write ``x0..x{D-1}`` then ``y0..y{C-1}``, one row per sample."""
        path = Path(path)
        y = self.label_matrix()
        header = [f"x{j}" for j in range(self.n_features)] + [f"y{j}" for j in range(y.shape[1])]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for xi, yi in zip(self.features, y):
                w.writerow([repr(float(v)) for v in xi] + [int(v) for v in yi])
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "LabeledDataset":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        nx = sum(1 for h in header if h.startswith("x"))
        data = np.array(body, dtype=np.float64).reshape(len(body), len(header))
        labels = data[:, nx:].astype(np.int64)
        if labels.shape[1] == 1:
            labels = labels[:, 0]
        return cls(data[:, :nx], labels, {"source": str(path)})


class Simulator:
    """A black-box data generator ``G(x, y | theta)``.

    Subclasses set :attr:`schema` and :attr:`task_kind` and implement
    :meth:`_generate`. The same ``(theta, M, seed)`` must always give the same
    dataset.
    """

    schema: ParamSchema
    task_kind: str
    n_features: int

    def generate(self, theta, M: int, seed: SeedLike) -> LabeledDataset:
        theta = check_theta(self.schema, theta)
        if M < 1:
            raise ValidationError(f"dataset size M must be >= 1, got {M}")
        return self._generate(theta, int(M), seed)

    def _generate(self, theta: np.ndarray, M: int, seed: SeedLike) -> LabeledDataset:
        raise NotImplementedError


def generate(sim: Simulator, theta, M: int, seed: SeedLike) -> LabeledDataset:
    return sim.generate(theta, M, seed)
