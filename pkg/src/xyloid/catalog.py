"""Genus-level class catalog: which botanical species map to which class label.

Identification operates at the genus level; each catalog class groups one or
more binomial species under a single label and carries an optional archetype
image reference used by operator-facing UIs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateId, UnknownSpecies


@dataclass(frozen=True)
class TaxonClass:
    """One genus-level class: a label plus its member species."""

    class_label: str
    species_members: tuple[str, ...]
    archetype_image: str | None = None

    def __post_init__(self):
        if not self.class_label:
            raise ValueError("class_label must be non-empty")
        if not self.species_members:
            raise ValueError(f"class {self.class_label!r} has no species members")


@dataclass
class ClassCatalog:
    """Ordered collection of TaxonClasses with a species -> class lookup."""

    classes: list[TaxonClass]
    _species_index: dict[str, str] = field(init=False, repr=False)

    def __post_init__(self):
        labels = [c.class_label for c in self.classes]
        if len(set(labels)) != len(labels):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            raise DuplicateId(f"duplicate class labels: {dupes}")
        index: dict[str, str] = {}
        for cls in self.classes:
            for sp in cls.species_members:
                if sp in index:
                    raise DuplicateId(
                        f"species {sp!r} appears in classes "
                        f"{index[sp]!r} and {cls.class_label!r}"
                    )
                index[sp] = cls.class_label
        self._species_index = index

    @property
    def labels(self) -> list[str]:
        return [c.class_label for c in self.classes]

    def class_for_species(self, species: str) -> str:
        try:
            return self._species_index[species]
        except KeyError:
            raise UnknownSpecies(f"species {species!r} is not in the catalog") from None

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, label: str) -> bool:
        return any(c.class_label == label for c in self.classes)

    def get(self, label: str) -> TaxonClass:
        for c in self.classes:
            if c.class_label == label:
                return c
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {
            "classes": [
                {
                    "label": c.class_label,
                    "species": list(c.species_members),
                    "archetype": c.archetype_image,
                }
                for c in self.classes
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassCatalog":
        return cls(
            classes=[
                TaxonClass(
                    class_label=entry["label"],
                    species_members=tuple(entry["species"]),
                    archetype_image=entry.get("archetype"),
                )
                for entry in data["classes"]
            ]
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "ClassCatalog":
        return cls.from_dict(json.loads(Path(path).read_text()))


# The 15 commercial Ghanaian genus-level classes and their species members.
_GHANA15_SPECIES = {
    "Albizia": ["Albizia adianthifolia", "Albizia ferruginea", "Albizia zygia"],
    "Canarium": ["Canarium schweinfurthii"],
    "Ceiba": ["Ceiba pentandra"],
    "Celtis": ["Celtis adolfi-friderici", "Celtis mildbraedii", "Celtis zenkeri"],
    "Chrysophyllum": [
        "Chrysophyllum albidum",
        "Chrysophyllum brieyi",
        "Chrysophyllum fulvum",
        "Chrysophyllum lacourtianum",
        "Chrysophyllum perpulchrum",
        "Chrysophyllum viridifolium",
    ],
    "Daniellia": ["Daniellia ogea", "Daniellia oliveri"],
    "Entandrophragma": [
        "Entandrophragma angolense",
        "Entandrophragma candollei",
        "Entandrophragma cylindricum",
        "Entandrophragma utile",
    ],
    "Khaya": ["Khaya anthotheca", "Khaya ivorensis", "Khaya senegalensis"],
    "Lophira": ["Lophira alata"],
    "Manilkara": [
        "Manilkara bidentata",
        "Manilkara elata",
        "Manilkara huberi",
        "Manilkara obovata",
        "Manilkara solimoesensis",
        "Manilkara zapotilla",
    ],
    "Milicia": ["Milicia excelsa", "Milicia regia"],
    "Nesogordonia": ["Nesogordonia papaverifera"],
    "Terminalia": ["Terminalia ivorensis", "Terminalia superba"],
    "Tieghemella": ["Tieghemella africana", "Tieghemella heckelii"],
    "Triplochiton": ["Triplochiton scleroxylon"],
}


def ghana15_catalog() -> ClassCatalog:
    """The default 15-class catalog of commercial Ghanaian timbers."""
    return ClassCatalog(
        classes=[
            TaxonClass(class_label=label, species_members=tuple(species))
            for label, species in _GHANA15_SPECIES.items()
        ]
    )
