"""Specimen-exclusive stratified train/valid/test splits.

Splitting happens at the specimen level: every accepted specimen lands in
exactly one split and all of its images inherit that assignment, so no image
of one physical sample can leak across splits. Within each class, specimens
are shuffled by a seeded PCG64 generator and partitioned by a rounding rule
that keeps every split within one specimen of its exact share while
guaranteeing at least one specimen per split.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadRatios, InsufficientSpecimens
from .registry import Registry

SPLIT_NAMES = ("train", "valid", "test")
MANIFEST_SCHEMA = "split-manifest/v1"
RNG_NAME = "pcg64"


def allocate_counts(n: int, ratios: tuple[float, float, float]) -> tuple[int, ...]:
    """Partition n specimens across splits for the given ratios.

    Round-half-up on each quota, then settle the (at most one, for three
    splits) leftover or excess seat on the entry with the largest fractional
    remainder, and finally enforce a >=1 floor per split by taking from the
    largest split. For a 31-specimen class at (0.70, 0.15, 0.15) this yields
    (21, 5, 5); for 7 specimens, (5, 1, 1); for 3, (1, 1, 1).
    """
    if n < len(ratios):
        raise InsufficientSpecimens(f"cannot give {len(ratios)} splits >=1 specimen from {n}")
    quotas = [r * n for r in ratios]
    counts = [math.floor(q + 0.5) for q in quotas]
    fracs = [q - math.floor(q) for q in quotas]
    diff = n - sum(counts)
    while diff != 0:
        if diff > 0:
            candidates = [i for i in range(len(counts)) if counts[i] <= math.floor(quotas[i])]
            i = max(candidates, key=lambda i: (fracs[i], -i))
            counts[i] += 1
            diff -= 1
        else:
            candidates = [i for i in range(len(counts)) if counts[i] > math.floor(quotas[i])]
            i = max(candidates, key=lambda i: (fracs[i], -i))
            counts[i] -= 1
            diff += 1
    while any(c == 0 for c in counts):
        zero = counts.index(0)
        donor = max(range(len(counts)), key=lambda i: (counts[i], -i))
        counts[donor] -= 1
        counts[zero] += 1
    return tuple(counts)


@dataclass
class SplitManifest:
    """Immutable record of one split: who went where, and why it reproduces.

    `assignments` is kept as an ordered list of (specimen_id, split) pairs so
    that hand-edited manifests with duplicate entries can still be loaded and
    then flagged by validate_manifest.
    """

    ratios: tuple[float, float, float]
    seed: int
    assignments: list[tuple[str, str]]
    per_class_counts: dict[str, tuple[int, int, int]]
    rng: str = RNG_NAME

    def assignment_map(self) -> dict[str, str]:
        return dict(self.assignments)

    def split_of(self, specimen_id: str) -> str | None:
        return self.assignment_map().get(specimen_id)

    def specimens_in(self, split: str) -> list[str]:
        return [sid for sid, s in self.assignments if s == split]

    def to_dict(self) -> dict:
        return {
            "schema": MANIFEST_SCHEMA,
            "ratios": list(self.ratios),
            "seed": self.seed,
            "rng": self.rng,
            "assignments": [{"specimen_id": sid, "split": s} for sid, s in self.assignments],
            "per_class_counts": {
                label: dict(zip(SPLIT_NAMES, counts))
                for label, counts in self.per_class_counts.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SplitManifest":
        if data.get("schema") != MANIFEST_SCHEMA:
            raise ValueError(f"unsupported manifest schema: {data.get('schema')!r}")
        return cls(
            ratios=tuple(data["ratios"]),
            seed=data["seed"],
            rng=data.get("rng", RNG_NAME),
            assignments=[(a["specimen_id"], a["split"]) for a in data["assignments"]],
            per_class_counts={
                label: tuple(counts[s] for s in SPLIT_NAMES)
                for label, counts in data["per_class_counts"].items()
            },
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "SplitManifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def stratified_split(
    registry: Registry,
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> SplitManifest:
    """Partition accepted specimens class by class into train/valid/test.

    Pure function of (registry contents, ratios, seed): classes are visited
    in sorted label order, each class's sorted specimen ids are shuffled by a
    PCG64 generator seeded from `seed`, and counts come from allocate_counts.
    Requires every class to have at least 3 accepted specimens.
    """
    if len(ratios) != len(SPLIT_NAMES):
        raise BadRatios(f"need {len(SPLIT_NAMES)} ratios, got {len(ratios)}")
    if any(r <= 0 for r in ratios):
        raise BadRatios(f"ratios must be positive: {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must sum to 1: {ratios} (sum {sum(ratios)})")

    by_class = registry.accepted_by_class()
    short = {label: len(ids) for label, ids in by_class.items() if len(ids) < 3}
    if short:
        raise InsufficientSpecimens(
            f"classes with fewer than 3 accepted specimens: {short}"
        )

    rng = np.random.default_rng(seed)
    assignments: list[tuple[str, str]] = []
    per_class_counts: dict[str, tuple[int, int, int]] = {}
    for label in sorted(by_class):
        ids = by_class[label]
        shuffled = [ids[i] for i in rng.permutation(len(ids))]
        counts = allocate_counts(len(ids), ratios)
        per_class_counts[label] = counts
        cursor = 0
        for split, count in zip(SPLIT_NAMES, counts):
            for sid in shuffled[cursor : cursor + count]:
                assignments.append((sid, split))
            cursor += count
    return SplitManifest(
        ratios=tuple(ratios),
        seed=seed,
        assignments=assignments,
        per_class_counts=per_class_counts,
    )


@dataclass
class Violation:
    kind: str
    message: str
    specimen_id: str | None = None
    class_label: str | None = None
    split: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


def validate_manifest(manifest: SplitManifest, registry: Registry) -> ValidationReport:
    """Check a manifest against a registry, reporting every invariant violation.

    Findings cover: specimens assigned to more than one split (leakage),
    excluded or unknown specimens present, accepted specimens missing,
    class/split cells left empty, and per_class_counts that disagree with an
    independent recount of the assignments.
    """
    report = ValidationReport()
    seen: dict[str, set[str]] = {}
    for sid, split in manifest.assignments:
        seen.setdefault(sid, set()).add(split)
        if split not in SPLIT_NAMES:
            report.violations.append(
                Violation("unknown_split", f"specimen {sid!r} assigned to unknown split {split!r}",
                          specimen_id=sid, split=split)
            )
    for sid, splits in sorted(seen.items()):
        if len(splits) > 1:
            report.violations.append(
                Violation("leakage", f"specimen {sid!r} appears in splits {sorted(splits)}",
                          specimen_id=sid)
            )

    accepted = {s.specimen_id for s in registry.accepted_specimens()}
    for sid in sorted(seen):
        if sid not in registry.specimens:
            report.violations.append(
                Violation("unknown_specimen", f"specimen {sid!r} not in registry", specimen_id=sid)
            )
        elif sid not in accepted:
            report.violations.append(
                Violation("excluded_specimen",
                          f"specimen {sid!r} is not accepted but appears in the manifest",
                          specimen_id=sid)
            )
    for sid in sorted(accepted - set(seen)):
        report.violations.append(
            Violation("missing_specimen", f"accepted specimen {sid!r} has no assignment",
                      specimen_id=sid)
        )

    # Independent recount of class/split cells from the raw assignments.
    recount: dict[str, dict[str, int]] = {}
    for sid, split in manifest.assignments:
        spec = registry.specimens.get(sid)
        if spec is None or split not in SPLIT_NAMES:
            continue
        recount.setdefault(spec.class_label, {s: 0 for s in SPLIT_NAMES})[split] += 1
    for label in registry.catalog.labels:
        cells = recount.get(label, {s: 0 for s in SPLIT_NAMES})
        for split in SPLIT_NAMES:
            if cells[split] == 0:
                report.violations.append(
                    Violation("empty_cell", f"class {label!r} has no specimens in {split!r}",
                              class_label=label, split=split)
                )
        claimed = manifest.per_class_counts.get(label)
        if claimed is not None and tuple(cells[s] for s in SPLIT_NAMES) != tuple(claimed):
            report.violations.append(
                Violation(
                    "count_mismatch",
                    f"class {label!r}: manifest claims {tuple(claimed)}, recount gives "
                    f"{tuple(cells[s] for s in SPLIT_NAMES)}",
                    class_label=label,
                )
            )
    return report
