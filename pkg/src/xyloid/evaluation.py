"""Evaluation reports: laboratory metrics, field-trial summaries, and the gap
between them.

Laboratory reports score individual images against a held-out split; field
reports aggregate operator-adjudicated specimen events. The two granularities
are labeled explicitly so they are never silently compared one-to-one; the
gap report compares like-for-like accuracies per class.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ClassListMismatch, EmptyInput
from .metrics import ConfusionMatrix, confusion, top_k_accuracy
from .records import FieldTrialRecord


@dataclass
class SimilarityTable:
    """Groups of anatomically similar classes, used to split misidentifications
    into explainable (same group) and unexplained confusions."""

    groups: list[set[str]] = field(default_factory=list)

    def same_group(self, a: str, b: str) -> bool:
        return any(a in g and b in g for g in self.groups)

    def to_dict(self) -> dict:
        return {"groups": [sorted(g) for g in self.groups]}

    @classmethod
    def from_dict(cls, d: dict) -> "SimilarityTable":
        return cls(groups=[set(g) for g in d["groups"]])

    @classmethod
    def load(cls, path: str | Path) -> "SimilarityTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_similarity() -> SimilarityTable:
    """Family-level groupings of the Ghanaian classes whose confusions a wood
    anatomist would call reasonable: the mahogany relatives, the two
    light-wooded Malvaceae, and the Sapotaceae."""
    return SimilarityTable(groups=[
        {"Khaya", "Entandrophragma"},
        {"Ceiba", "Triplochiton"},
        {"Tieghemella", "Chrysophyllum", "Manilkara"},
    ])


@dataclass
class BreakdownRow:
    total: int = 0
    correct: int = 0
    incorrect: int = 0
    unresolved: int = 0

    @property
    def adjudicated(self) -> int:
        return self.correct + self.incorrect

    @property
    def accuracy(self) -> float | None:
        return self.correct / self.adjudicated if self.adjudicated else None

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "correct": self.correct,
            "incorrect": self.incorrect,
            "unresolved": self.unresolved,
            "accuracy": self.accuracy,
        }


@dataclass
class FieldReport:
    granularity: str
    n_records: int
    n_correct: int
    n_incorrect: int
    n_unresolved: int
    accuracy: float | None
    per_class: dict[str, BreakdownRow]
    per_site: dict[str, BreakdownRow]
    per_device: dict[str, BreakdownRow]
    similar_confusions: int
    other_confusions: int
    confusion_pairs: dict[tuple[str, str], int]

    @property
    def class_list(self) -> list[str]:
        return sorted(self.per_class)

    def per_class_accuracy(self) -> dict[str, float | None]:
        return {label: row.accuracy for label, row in self.per_class.items()}

    def to_dict(self) -> dict:
        return {
            "granularity": self.granularity,
            "n_records": self.n_records,
            "n_correct": self.n_correct,
            "n_incorrect": self.n_incorrect,
            "n_unresolved": self.n_unresolved,
            "accuracy": self.accuracy,
            "per_class": {k: v.to_dict() for k, v in sorted(self.per_class.items())},
            "per_site": {k: v.to_dict() for k, v in sorted(self.per_site.items())},
            "per_device": {k: v.to_dict() for k, v in sorted(self.per_device.items())},
            "error_taxonomy": {
                "similar_confusions": self.similar_confusions,
                "other_confusions": self.other_confusions,
                "pairs": [
                    {"actual": a, "predicted": p, "count": c}
                    for (a, p), c in sorted(self.confusion_pairs.items())
                ],
            },
        }

    def render_table(self) -> str:
        lines = [
            f"field report ({self.granularity}-level): {self.n_records} records, "
            f"{self.n_correct} correct / {self.n_incorrect} incorrect / "
            f"{self.n_unresolved} unresolved",
            "overall accuracy: "
            + (f"{self.accuracy:.1%}" if self.accuracy is not None else "undefined (no adjudicated records)"),
            f"{'class':<20} {'total':>6} {'correct':>8} {'accuracy':>9}",
        ]
        for label, row in sorted(self.per_class.items()):
            acc = f"{row.accuracy:.1%}" if row.accuracy is not None else "-"
            lines.append(f"{label:<20} {row.total:>6} {row.correct:>8} {acc:>9}")
        return "\n".join(lines)


def field_summary(
    records: list[FieldTrialRecord],
    similarity: SimilarityTable | None = None,
) -> FieldReport:
    """Aggregate field-trial records into an order-independent report.

    Accuracy counts only adjudicated records (correct / (correct+incorrect));
    unresolved records are reported but excluded. Per-class rows are keyed by
    the true class: the top-1 prediction for correct records, the operator's
    actual_class for incorrect ones.
    """
    similarity = similarity or default_similarity()
    per_class: dict[str, BreakdownRow] = {}
    per_site: dict[str, BreakdownRow] = {}
    per_device: dict[str, BreakdownRow] = {}
    pairs: Counter = Counter()
    n_correct = n_incorrect = n_unresolved = 0
    similar = other = 0

    def bump(table: dict[str, BreakdownRow], key: str, verdict: str) -> None:
        row = table.setdefault(key, BreakdownRow())
        row.total += 1
        setattr(row, verdict, getattr(row, verdict) + 1)

    for record in records:
        verdict = record.operator_verdict
        if verdict == "correct":
            n_correct += 1
            true_class = record.top1_class
        elif verdict == "incorrect":
            n_incorrect += 1
            true_class = record.actual_class
            pairs[(true_class, record.top1_class)] += 1
            if similarity.same_group(true_class, record.top1_class):
                similar += 1
            else:
                other += 1
        else:
            n_unresolved += 1
            true_class = record.top1_class  # best available guess for tallying
        bump(per_class, true_class, verdict)
        bump(per_site, record.site_id, verdict)
        bump(per_device, record.device_id, verdict)

    adjudicated = n_correct + n_incorrect
    return FieldReport(
        granularity="specimen",
        n_records=len(records),
        n_correct=n_correct,
        n_incorrect=n_incorrect,
        n_unresolved=n_unresolved,
        accuracy=n_correct / adjudicated if adjudicated else None,
        per_class=per_class,
        per_site=per_site,
        per_device=per_device,
        similar_confusions=similar,
        other_confusions=other,
        confusion_pairs=dict(pairs),
    )


@dataclass
class LabReport:
    granularity: str
    n_images: int
    top1: float
    top3: float
    matrix: ConfusionMatrix

    @property
    def class_list(self) -> list[str]:
        return list(self.matrix.labels)

    @property
    def accuracy(self) -> float:
        return self.top1

    def per_class_accuracy(self) -> dict[str, float | None]:
        return self.matrix.per_class_accuracy()

    def to_dict(self) -> dict:
        return {
            "granularity": self.granularity,
            "n_images": self.n_images,
            "top1": self.top1,
            "top3": self.top3,
            "confusion": self.matrix.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabReport":
        return cls(
            granularity=d.get("granularity", "image"),
            n_images=d["n_images"],
            top1=d["top1"],
            top3=d["top3"],
            matrix=ConfusionMatrix.from_dict(d["confusion"]),
        )


def lab_report(predictions, labels, class_labels: list[str]) -> LabReport:
    """Image-level test metrics from probability vectors and true indices."""
    probs = np.asarray(predictions, dtype=np.float64)
    if probs.size == 0:
        raise EmptyInput("no predictions to score")
    k3 = min(3, len(class_labels))
    return LabReport(
        granularity="image",
        n_images=probs.shape[0],
        top1=top_k_accuracy(predictions, labels, k=1),
        top3=top_k_accuracy(predictions, labels, k=k3),
        matrix=confusion(predictions, labels, class_labels),
    )


@dataclass
class GapReport:
    overall_gap: float
    per_class_gap: dict[str, float | None]

    def ranked(self) -> list[tuple[str, float]]:
        """Classes with a defined gap, worst degradation first."""
        defined = [(label, gap) for label, gap in self.per_class_gap.items() if gap is not None]
        return sorted(defined, key=lambda item: (-item[1], item[0]))

    def to_dict(self) -> dict:
        return {
            "overall_gap": self.overall_gap,
            "per_class_gap": dict(sorted(self.per_class_gap.items())),
            "ranked": [{"class": c, "gap": g} for c, g in self.ranked()],
        }


def lab_field_gap(lab: LabReport, field_rep: FieldReport) -> GapReport:
    """Per-class and overall accuracy deltas (lab minus field).

    Both reports must cover the same class list; a class present in only one
    of them is an error, not a silent zero.
    """
    lab_classes = set(lab.class_list)
    field_classes = set(field_rep.class_list)
    if lab_classes != field_classes:
        raise ClassListMismatch(
            f"lab-only classes {sorted(lab_classes - field_classes)}, "
            f"field-only classes {sorted(field_classes - lab_classes)}"
        )
    if lab.accuracy is None or field_rep.accuracy is None:
        raise EmptyInput("both reports need a defined overall accuracy")
    lab_acc = lab.per_class_accuracy()
    field_acc = field_rep.per_class_accuracy()
    per_class = {}
    for label in sorted(lab_classes):
        a, b = lab_acc.get(label), field_acc.get(label)
        per_class[label] = (a - b) if a is not None and b is not None else None
    return GapReport(
        overall_gap=lab.accuracy - field_rep.accuracy,
        per_class_gap=per_class,
    )
