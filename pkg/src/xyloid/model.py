"""ResNet34-backbone classifier with a pooled two-block head.

The backbone is every residual block of a ResNet34; its 512-channel feature
map is reduced by concatenated global average and max pooling into a 1024-dim
vector, then passed through two BatchNorm-Dropout-Linear blocks (ReLU after
the first, softmax after the second). Head linears are He-normal initialized
from a dedicated seed so two builds share backbone weights but differ in the
head exactly when their head seeds differ.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torchvision

from . import patches
from .errors import ImageTooSmall, MissingWeights, ShapeMismatch
from .patches import PatchSpec, SamplingMode

# Per-channel statistics of the backbone's pretraining corpus; inputs must be
# standardized with these for pretrained-weight transfer to hold.
PRETRAIN_MEAN = (0.485, 0.456, 0.406)
PRETRAIN_STD = (0.229, 0.224, 0.225)

BACKBONE_NAME = "resnet34-imagenet"
BACKBONE_CHANNELS = 512


@dataclass(frozen=True)
class ModelConfig:
    backbone: str = BACKBONE_NAME
    hidden: int = 512
    n_classes: int = 15
    dropout1: float = 0.25
    dropout2: float = 0.5
    head_seed: int = 0
    pretrained: bool = True
    weights_path: str | None = None
    input_mean: tuple[float, float, float] = PRETRAIN_MEAN
    input_std: tuple[float, float, float] = PRETRAIN_STD

    def __post_init__(self):
        if self.backbone != BACKBONE_NAME:
            raise ValueError(f"unsupported backbone {self.backbone!r}")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")

    def to_dict(self) -> dict:
        return {
            "backbone": self.backbone,
            "hidden": self.hidden,
            "n_classes": self.n_classes,
            "dropout1": self.dropout1,
            "dropout2": self.dropout2,
            "head_seed": self.head_seed,
            "pretrained": self.pretrained,
            "weights_path": self.weights_path,
            "input_mean": list(self.input_mean),
            "input_std": list(self.input_std),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["input_mean"] = tuple(d.get("input_mean", PRETRAIN_MEAN))
        d["input_std"] = tuple(d.get("input_std", PRETRAIN_STD))
        return cls(**d)


def he_normal_(linear: nn.Linear, generator: torch.Generator) -> None:
    fan_in = linear.weight.shape[1]
    std = math.sqrt(2.0 / fan_in)
    with torch.no_grad():
        linear.weight.normal_(0.0, std, generator=generator)
        linear.bias.zero_()


class ClassifierHead(nn.Module):
    """Two BatchNorm-Dropout-Linear blocks over pooled backbone features.

    Emits logits; the owning model applies softmax.
    """

    def __init__(self, in_features: int, hidden: int, n_classes: int,
                 dropout1: float = 0.25, dropout2: float = 0.5, seed: int = 0):
        super().__init__()
        self.bn1 = nn.BatchNorm1d(in_features)
        self.drop1 = nn.Dropout(dropout1)
        self.fc1 = nn.Linear(in_features, hidden)
        self.act = nn.ReLU(inplace=True)
        self.bn2 = nn.BatchNorm1d(hidden)
        self.drop2 = nn.Dropout(dropout2)
        self.fc2 = nn.Linear(hidden, n_classes)
        generator = torch.Generator().manual_seed(seed)
        he_normal_(self.fc1, generator)
        he_normal_(self.fc2, generator)

    def forward(self, pooled: torch.Tensor) -> torch.Tensor:
        x = self.fc1(self.drop1(self.bn1(pooled)))
        x = self.act(x)
        return self.fc2(self.drop2(self.bn2(x)))


class WoodClassifier(nn.Module):
    def __init__(self, config: ModelConfig, backbone: nn.Module):
        super().__init__()
        self.config = config
        self.backbone = backbone
        self.feature_dim = 2 * BACKBONE_CHANNELS
        self.head = ClassifierHead(
            self.feature_dim, config.hidden, config.n_classes,
            config.dropout1, config.dropout2, seed=config.head_seed,
        )

    def pooled_features(self, x: torch.Tensor) -> torch.Tensor:
        fmap = self.backbone(x)
        return torch.cat([fmap.mean(dim=(2, 3)), fmap.amax(dim=(2, 3))], dim=1)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.pooled_features(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Class probabilities: nonnegative, summing to 1 per row."""
        return torch.softmax(self.logits(x), dim=1)

    def freeze_backbone(self) -> None:
        for p in self.backbone.parameters():
            p.requires_grad_(False)

    def unfreeze_backbone(self) -> None:
        for p in self.backbone.parameters():
            p.requires_grad_(True)

    def backbone_digest(self) -> str:
        """SHA-256 over every backbone parameter and buffer, bitwise."""
        digest = hashlib.sha256()
        state = self.backbone.state_dict()
        for key in sorted(state):
            digest.update(key.encode())
            digest.update(state[key].detach().cpu().contiguous().numpy().tobytes())
        return digest.hexdigest()


def _locate_pretrained(config: ModelConfig) -> Path:
    if config.weights_path:
        path = Path(config.weights_path)
        if path.is_file():
            return path
        raise MissingWeights(f"weights file not found: {config.weights_path}")
    cache = Path(torch.hub.get_dir()) / "checkpoints"
    if cache.is_dir():
        for candidate in sorted(cache.glob("resnet34*.pth")):
            return candidate
    raise MissingWeights(
        "no local resnet34 pretrained weights; set ModelConfig.weights_path "
        "or place a checkpoint in the torch hub cache"
    )


def build_model(config: ModelConfig) -> WoodClassifier:
    """Assemble the classifier.

    With config.pretrained, backbone weights are loaded from a local file
    (never downloaded); otherwise the backbone keeps its default random
    initialization, which is only appropriate for tests and synthetic runs.
    """
    resnet = torchvision.models.resnet34(weights=None)
    if config.pretrained:
        path = _locate_pretrained(config)
        state = torch.load(path, map_location="cpu", weights_only=True)
        try:
            resnet.load_state_dict(state)
        except RuntimeError as exc:
            raise ShapeMismatch(f"pretrained checkpoint does not fit resnet34: {exc}") from exc
    # all residual blocks, through layer4; avgpool/fc are replaced by the head
    backbone = nn.Sequential(*list(resnet.children())[:-2])
    return WoodClassifier(config, backbone)


def normalize_image(image: np.ndarray, config: ModelConfig) -> torch.Tensor:
    """uint8 HxWx3 -> standardized float32 CxHxW tensor."""
    x = image.astype(np.float32) / 255.0
    mean = np.asarray(config.input_mean, dtype=np.float32)
    std = np.asarray(config.input_std, dtype=np.float32)
    x = (x - mean) / std
    return torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1)))


def predict(
    model: WoodClassifier,
    image: np.ndarray,
    eval_mode: str = "center",
    spec: PatchSpec | None = None,
) -> np.ndarray:
    """Deterministic class probabilities for one image.

    center: a single middle band; tiled: the mean of per-band softmax vectors,
    renormalized. Dropout is inactive and batch statistics frozen, so repeated
    calls return identical vectors.
    """
    if eval_mode not in ("center", "tiled"):
        raise ValueError(f"eval_mode must be 'center' or 'tiled', got {eval_mode!r}")
    mode = SamplingMode.CENTER if eval_mode == "center" else SamplingMode.TILED
    spec = spec or PatchSpec(sampling_mode=mode)
    if spec.sampling_mode != mode:
        spec = PatchSpec(spec.source_dims, spec.target_dims, mode)

    bands = patches.extract_patches(image, spec)
    if not bands:
        raise ImageTooSmall("no bands extracted")
    batch = torch.stack([
        normalize_image(patches.resize_patch(band, spec.target_dims), model.config)
        for band in bands
    ])
    was_training = model.training
    model.eval()
    with torch.no_grad():
        probs = model(batch).mean(dim=0)
        probs = probs / probs.sum()
    if was_training:
        model.train()
    return probs.numpy()
