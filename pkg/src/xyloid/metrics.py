"""Laboratory metrics: top-k accuracy and confusion matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput


def _as_arrays(predictions, labels) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(predictions, dtype=np.float64)
    truth = np.asarray(labels, dtype=np.int64)
    if probs.size == 0 or truth.size == 0:
        raise EmptyInput("no predictions to score")
    if probs.ndim != 2 or probs.shape[0] != truth.shape[0]:
        raise ValueError(f"shape mismatch: {probs.shape} predictions vs {truth.shape} labels")
    return probs, truth


def top_k_accuracy(predictions, labels, k: int = 1) -> float:
    """Fraction of items whose true label ranks among the k most probable.

    Ties at the k-th rank are broken by class index order: the lower class
    index takes the slot.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    probs, truth = _as_arrays(predictions, labels)
    # stable argsort on -p ranks equal probabilities by ascending class index
    ranked = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    hits = (ranked == truth[:, None]).any(axis=1)
    return float(hits.mean())


@dataclass
class ConfusionMatrix:
    labels: list[str]
    counts: np.ndarray  # rows = true class, columns = predicted class

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.labels)
        if self.counts.shape != (n, n):
            raise ValueError(f"counts must be {n}x{n}, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def per_class_accuracy(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        for i, label in enumerate(self.labels):
            row = self.row_sums()[i]
            out[label] = float(self.counts[i, i] / row) if row else None
        return out

    def rate(self, true_label: str, predicted_label: str) -> float:
        i = self.labels.index(true_label)
        j = self.labels.index(predicted_label)
        row = self.counts[i].sum()
        return float(self.counts[i, j] / row) if row else 0.0

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionMatrix":
        return cls(labels=list(d["labels"]), counts=np.asarray(d["counts"]))


def confusion(predictions, labels, class_labels: list[str]) -> ConfusionMatrix:
    """counts[i][j] = items of true class i predicted (argmax) as class j."""
    probs, truth = _as_arrays(predictions, labels)
    n = len(class_labels)
    if probs.shape[1] != n:
        raise ValueError(f"{probs.shape[1]} probability columns vs {n} class labels")
    predicted = probs.argmax(axis=1)  # ties resolve to the lowest class index
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (truth, predicted), 1)
    return ConfusionMatrix(labels=list(class_labels), counts=counts)
