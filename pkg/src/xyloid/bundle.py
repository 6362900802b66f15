"""Single-file deployment bundle: weights, config, class catalog, archetypes.

Layout: an 8-byte magic, a 4-byte big-endian header length, a JSON header
carrying the payload's SHA-256, then the payload (a torch-serialized dict).
The checksum makes bit corruption detectable before anything is deserialized;
loading rebuilds the exact model so predictions reproduce bitwise.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torchvision

from .catalog import ClassCatalog
from .errors import CorruptBundle, VersionMismatch
from .model import ModelConfig, WoodClassifier, predict

BUNDLE_MAGIC = b"XYLOBNDL"
BUNDLE_FORMAT_VERSION = 1


def _architecture(config: ModelConfig) -> WoodClassifier:
    """Model skeleton for weight injection; never touches pretrained files."""
    resnet = torchvision.models.resnet34(weights=None)
    backbone = nn.Sequential(*list(resnet.children())[:-2])
    return WoodClassifier(config, backbone)


@dataclass
class DeploymentBundle:
    model: WoodClassifier
    config: ModelConfig
    class_labels: list[str]
    archetypes: dict[str, bytes]
    manifest_digest: str
    format_version: int = BUNDLE_FORMAT_VERSION

    def predict(self, image: np.ndarray, eval_mode: str = "center") -> np.ndarray:
        return predict(self.model, image, eval_mode)

    def top_k(self, probs: np.ndarray, k: int = 3) -> list[tuple[str, float]]:
        """(label, confidence) for the k most likely classes, confidence
        descending with ties broken by class index."""
        order = np.argsort(-probs, kind="stable")[:k]
        return [(self.class_labels[i], float(probs[i])) for i in order]


def _load_archetype_bytes(catalog: ClassCatalog, base_dir: Path | None) -> dict[str, bytes]:
    archetypes: dict[str, bytes] = {}
    for cls in catalog.classes:
        if not cls.archetype_image:
            continue
        path = Path(cls.archetype_image)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if path.is_file():
            archetypes[cls.class_label] = path.read_bytes()
    return archetypes


def save_bundle(
    model: WoodClassifier,
    catalog: ClassCatalog,
    manifest_digest: str,
    path: str | Path,
    archetype_dir: str | Path | None = None,
) -> Path:
    """Write the single-file bundle; archetype image files referenced by the
    catalog are embedded so the field service needs nothing else on disk."""
    if len(catalog) != model.config.n_classes:
        raise VersionMismatch(
            f"catalog has {len(catalog)} classes but model head emits "
            f"{model.config.n_classes}"
        )
    payload_dict = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "class_labels": catalog.labels,
        "archetypes": _load_archetype_bytes(
            catalog, Path(archetype_dir) if archetype_dir else None
        ),
        "manifest_digest": manifest_digest,
        "state": {k: v.detach().cpu() for k, v in model.state_dict().items()},
    }
    buffer = io.BytesIO()
    torch.save(payload_dict, buffer)
    payload = buffer.getvalue()
    header = json.dumps(
        {
            "format_version": BUNDLE_FORMAT_VERSION,
            "payload_sha256": hashlib.sha256(payload).hexdigest(),
            "payload_length": len(payload),
        }
    ).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC)
        fh.write(struct.pack(">I", len(header)))
        fh.write(header)
        fh.write(payload)
    return path


def load_bundle(path: str | Path) -> DeploymentBundle:
    raw = Path(path).read_bytes()
    if len(raw) < len(BUNDLE_MAGIC) + 4 or raw[: len(BUNDLE_MAGIC)] != BUNDLE_MAGIC:
        raise CorruptBundle(f"{path}: not a deployment bundle")
    offset = len(BUNDLE_MAGIC)
    (header_len,) = struct.unpack(">I", raw[offset : offset + 4])
    offset += 4
    try:
        header = json.loads(raw[offset : offset + header_len])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptBundle(f"{path}: unreadable header: {exc}") from exc
    offset += header_len
    payload = raw[offset:]
    if len(payload) != header.get("payload_length"):
        raise CorruptBundle(f"{path}: truncated payload")
    if hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise CorruptBundle(f"{path}: payload checksum mismatch")
    if header.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: bundle format {header.get('format_version')!r}, "
            f"this build reads {BUNDLE_FORMAT_VERSION}"
        )
    data = torch.load(io.BytesIO(payload), map_location="cpu", weights_only=True)
    config = ModelConfig.from_dict(data["model_config"])
    class_labels = list(data["class_labels"])
    if len(class_labels) != config.n_classes:
        raise VersionMismatch(
            f"{path}: {len(class_labels)} classes in catalog, head emits {config.n_classes}"
        )
    model = _architecture(config)
    try:
        model.load_state_dict(data["state"])
    except RuntimeError as exc:
        raise VersionMismatch(f"{path}: weights do not fit the declared config: {exc}") from exc
    model.eval()
    return DeploymentBundle(
        model=model,
        config=config,
        class_labels=class_labels,
        archetypes=dict(data["archetypes"]),
        manifest_digest=data["manifest_digest"],
        format_version=data["format_version"],
    )


def manifest_digest(manifest_path: str | Path) -> str:
    """SHA-256 of a split manifest file, recorded in bundles for provenance."""
    return hashlib.sha256(Path(manifest_path).read_bytes()).hexdigest()
