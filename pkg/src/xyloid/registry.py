"""Specimen registry: ingest, curation, and persistence.

A registry holds physical specimens (each owning one or more transverse-surface
images) labeled at the genus level via a ClassCatalog. Curation is a status
flag rather than deletion so that expert removals stay auditable. Mutation is
single-writer; split generation and training read an immutable snapshot.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from PIL import Image, UnidentifiedImageError

from .catalog import ClassCatalog
from .errors import DuplicateId, UnknownSpecimen, UnreadableImage


class CurationStatus(str, Enum):
    ACCEPTED = "accepted"
    EXCLUDED_ATYPICAL = "excluded_atypical"
    EXCLUDED_MISIDENTIFIED = "excluded_misidentified"
    PENDING = "pending"

    @property
    def is_excluded(self) -> bool:
        return self in (self.EXCLUDED_ATYPICAL, self.EXCLUDED_MISIDENTIFIED)


class RayOrientation(str, Enum):
    VERTICAL = "vertical"
    UNKNOWN = "unknown"


@dataclass
class ImageRecord:
    image_id: str
    specimen_id: str
    pixel_dims: tuple[int, int]  # (width, height)
    file_ref: str
    ray_orientation: RayOrientation = RayOrientation.VERTICAL

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "specimen_id": self.specimen_id,
            "pixel_dims": list(self.pixel_dims),
            "file_ref": self.file_ref,
            "ray_orientation": self.ray_orientation.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRecord":
        return cls(
            image_id=d["image_id"],
            specimen_id=d["specimen_id"],
            pixel_dims=tuple(d["pixel_dims"]),
            file_ref=d["file_ref"],
            ray_orientation=RayOrientation(d.get("ray_orientation", "vertical")),
        )


@dataclass
class Specimen:
    specimen_id: str
    species: str
    class_label: str
    source: str = ""
    curation_status: CurationStatus = CurationStatus.PENDING
    image_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "specimen_id": self.specimen_id,
            "species": self.species,
            "class_label": self.class_label,
            "source": self.source,
            "curation_status": self.curation_status.value,
            "image_ids": list(self.image_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Specimen":
        return cls(
            specimen_id=d["specimen_id"],
            species=d["species"],
            class_label=d["class_label"],
            source=d.get("source", ""),
            curation_status=CurationStatus(d["curation_status"]),
            image_ids=list(d["image_ids"]),
        )


@dataclass
class Registry:
    catalog: ClassCatalog
    specimens: dict[str, Specimen] = field(default_factory=dict)
    images: dict[str, ImageRecord] = field(default_factory=dict)

    def accepted_specimens(self) -> list[Specimen]:
        return [s for s in self.specimens.values() if s.curation_status == CurationStatus.ACCEPTED]

    def accepted_by_class(self) -> dict[str, list[str]]:
        """Accepted specimen ids per class label, ids sorted for determinism."""
        out: dict[str, list[str]] = {label: [] for label in self.catalog.labels}
        for s in self.accepted_specimens():
            out[s.class_label].append(s.specimen_id)
        for ids in out.values():
            ids.sort()
        return out

    def images_of(self, specimen_id: str) -> list[ImageRecord]:
        spec = self.specimens.get(specimen_id)
        if spec is None:
            raise UnknownSpecimen(specimen_id)
        return [self.images[iid] for iid in spec.image_ids]

    def snapshot(self) -> "Registry":
        """Deep copy safe to read from any thread while the original mutates."""
        return copy.deepcopy(self)


def _probe_image(file_ref: str) -> tuple[int, int]:
    """Return (width, height) after verifying the file exists and decodes."""
    path = Path(file_ref)
    if not path.is_file():
        raise UnreadableImage(f"image file not found: {file_ref}")
    try:
        with Image.open(path) as im:
            dims = im.size
            im.verify()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise UnreadableImage(f"cannot decode {file_ref}: {exc}") from exc
    return dims


def ingest(catalog: ClassCatalog, records: list[dict], *, probe_images: bool = True) -> Registry:
    """Build a Registry from specimen descriptors.

    Each record is a dict:
        {"specimen_id": str, "species": str, "source": str,
         "images": [{"image_id": str, "file": str,
                     "ray_orientation": "vertical"|"unknown"}, ...]}

    Species must appear in exactly one catalog class; the derived genus class
    becomes the specimen's label. Every image file must exist and decode
    (set probe_images=False only for pre-verified descriptors carrying
    explicit "pixel_dims"). All specimens start PENDING.
    """
    registry = Registry(catalog=catalog)
    for rec in records:
        sid = rec["specimen_id"]
        if sid in registry.specimens:
            raise DuplicateId(f"duplicate specimen_id {sid!r}")
        class_label = catalog.class_for_species(rec["species"])
        specimen = Specimen(
            specimen_id=sid,
            species=rec["species"],
            class_label=class_label,
            source=rec.get("source", ""),
        )
        for img in rec.get("images", []):
            iid = img["image_id"]
            if iid in registry.images:
                raise DuplicateId(f"duplicate image_id {iid!r}")
            if probe_images:
                dims = _probe_image(img["file"])
            else:
                dims = tuple(img["pixel_dims"])
            registry.images[iid] = ImageRecord(
                image_id=iid,
                specimen_id=sid,
                pixel_dims=dims,
                file_ref=img["file"],
                ray_orientation=RayOrientation(img.get("ray_orientation", "vertical")),
            )
            specimen.image_ids.append(iid)
        registry.specimens[sid] = specimen
    return registry


def set_curation(registry: Registry, specimen_id: str, status: CurationStatus | str) -> Registry:
    """Update one specimen's curation status (single-writer mutation).

    Excluded specimens contribute zero images to any subsequent split.
    """
    if specimen_id not in registry.specimens:
        raise UnknownSpecimen(specimen_id)
    registry.specimens[specimen_id].curation_status = CurationStatus(status)
    return registry


# --- persistence: newline-delimited records, one object per line ---

def save_registry(registry: Registry, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    registry.catalog.save(directory / "catalog.json")
    with open(directory / "specimens.jsonl", "w") as fh:
        for sid in sorted(registry.specimens):
            fh.write(json.dumps(registry.specimens[sid].to_dict()) + "\n")
    with open(directory / "images.jsonl", "w") as fh:
        for iid in sorted(registry.images):
            fh.write(json.dumps(registry.images[iid].to_dict()) + "\n")


def load_registry(directory: str | Path) -> Registry:
    directory = Path(directory)
    catalog = ClassCatalog.load(directory / "catalog.json")
    registry = Registry(catalog=catalog)
    with open(directory / "specimens.jsonl") as fh:
        for line in fh:
            if line.strip():
                s = Specimen.from_dict(json.loads(line))
                registry.specimens[s.specimen_id] = s
    with open(directory / "images.jsonl") as fh:
        for line in fh:
            if line.strip():
                r = ImageRecord.from_dict(json.loads(line))
                registry.images[r.image_id] = r
    return registry
