"""Field-trial records: one operator-adjudicated classification event per line.

The newline-delimited format is the interchange surface between the field
inference service and the evaluation tooling; the schema string is versioned
so old logs stay readable.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidRecord

RECORD_SCHEMA = "field-record/v1"

VERDICTS = ("correct", "incorrect", "unresolved")


@dataclass
class FieldTrialRecord:
    record_id: str
    device_id: str
    site_id: str
    timestamp: str
    predicted_top3: list[tuple[str, float]]
    operator_verdict: str
    actual_class: str | None = None
    prediction_id: str | None = None
    version: int = 1

    def __post_init__(self):
        self.predicted_top3 = [(str(c), float(p)) for c, p in self.predicted_top3]
        validate_record(self)

    @property
    def top1_class(self) -> str:
        return self.predicted_top3[0][0]

    def to_dict(self) -> dict:
        d = {
            "schema": RECORD_SCHEMA,
            "record_id": self.record_id,
            "device_id": self.device_id,
            "site_id": self.site_id,
            "timestamp": self.timestamp,
            "predicted_top3": [[c, p] for c, p in self.predicted_top3],
            "operator_verdict": self.operator_verdict,
            "actual_class": self.actual_class,
            "version": self.version,
        }
        if self.prediction_id is not None:
            d["prediction_id"] = self.prediction_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FieldTrialRecord":
        if d.get("schema") != RECORD_SCHEMA:
            raise InvalidRecord(f"unsupported record schema: {d.get('schema')!r}")
        return cls(
            record_id=d["record_id"],
            device_id=d["device_id"],
            site_id=d["site_id"],
            timestamp=d["timestamp"],
            predicted_top3=[tuple(entry) for entry in d["predicted_top3"]],
            operator_verdict=d["operator_verdict"],
            actual_class=d.get("actual_class"),
            prediction_id=d.get("prediction_id"),
            version=d.get("version", 1),
        )


def validate_record(record: FieldTrialRecord) -> None:
    if record.operator_verdict not in VERDICTS:
        raise InvalidRecord(
            f"{record.record_id}: verdict must be one of {VERDICTS}, "
            f"got {record.operator_verdict!r}"
        )
    if not record.predicted_top3:
        raise InvalidRecord(f"{record.record_id}: empty prediction list")
    confidences = [p for _, p in record.predicted_top3]
    if any(b > a for a, b in zip(confidences, confidences[1:])):
        raise InvalidRecord(f"{record.record_id}: confidences not descending: {confidences}")
    if record.operator_verdict == "incorrect":
        if not record.actual_class:
            raise InvalidRecord(f"{record.record_id}: incorrect verdict without actual_class")
        if record.actual_class == record.top1_class:
            raise InvalidRecord(
                f"{record.record_id}: verdict says incorrect but actual_class equals "
                f"the top-1 prediction {record.top1_class!r}"
            )


def write_records(records: list[FieldTrialRecord], path: str | Path, header: str | None = None) -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for record in records:
            fh.write(json.dumps(record.to_dict()) + "\n")


def read_records(path: str | Path) -> list[FieldTrialRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            records.append(FieldTrialRecord.from_dict(json.loads(line)))
    return records
