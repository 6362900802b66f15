"""Patch extraction, resizing, and label-preserving augmentation.

Patches are full-width 2048x768 bands of the transverse surface so that
growth transitions stay visible, then get resized to 512x192 for the model.
Everything here is a pure function of (image bytes, spec, policy, rng seed):
replaying with the same seed reproduces byte-identical outputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import cv2
import numpy as np

from .errors import BadDims, ImageTooSmall

SOURCE_DIMS = (2048, 768)  # (width, height)
TARGET_DIMS = (512, 192)


class SamplingMode(str, Enum):
    RANDOM_OFFSET = "random_offset"
    CENTER = "center"
    TILED = "tiled"


@dataclass(frozen=True)
class PatchSpec:
    source_dims: tuple[int, int] = SOURCE_DIMS
    target_dims: tuple[int, int] = TARGET_DIMS
    sampling_mode: SamplingMode = SamplingMode.RANDOM_OFFSET

    def __post_init__(self):
        sw, sh = self.source_dims
        tw, th = self.target_dims
        # aspect ratios must match so resizing is isotropic (8:3 by default)
        if sw * th != tw * sh:
            raise BadDims(
                f"source {self.source_dims} and target {self.target_dims} "
                "aspect ratios differ"
            )


@dataclass(frozen=True)
class CutoutSpec:
    holes: int = 1
    hole_size: int = 48
    fill: str = "mean"  # per-channel mean of the patch


@dataclass(frozen=True)
class AugmentationPolicy:
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    rotation_range_deg: tuple[float, float] = (-5.0, 5.0)
    cutout: CutoutSpec = field(default_factory=CutoutSpec)
    seed: int = 0

    def __post_init__(self):
        for name, p in (("hflip_prob", self.hflip_prob), ("vflip_prob", self.vflip_prob)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        lo, hi = self.rotation_range_deg
        if lo > hi:
            raise ValueError(f"rotation range is inverted: {self.rotation_range_deg}")

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        return cls(hflip_prob=0.0, vflip_prob=0.0, rotation_range_deg=(0.0, 0.0),
                   cutout=CutoutSpec(holes=0))


def ensure_rgb(image: np.ndarray) -> np.ndarray:
    """Replicate grayscale input to 3 channels; pass 3-channel through."""
    if image.ndim == 2:
        return np.repeat(image[:, :, None], 3, axis=2)
    if image.ndim == 3 and image.shape[2] == 1:
        return np.repeat(image, 3, axis=2)
    if image.ndim == 3 and image.shape[2] == 3:
        return image
    raise BadDims(f"expected HxW or HxWx3 image, got shape {image.shape}")


def extract_patches(
    image: np.ndarray,
    spec: PatchSpec,
    rng: np.random.Generator | None = None,
) -> list[np.ndarray]:
    """Cut full-width source-size bands out of an image.

    random_offset draws the vertical (and, for wider-than-source images, the
    horizontal) offset uniformly; center takes the middle band; tiled returns
    floor(H / band_height) non-overlapping bands top to bottom, discarding the
    remainder. Returns one patch for random_offset/center, possibly several
    for tiled.
    """
    image = ensure_rgb(image)
    pw, ph = spec.source_dims
    h, w = image.shape[:2]
    if h < ph or w < pw:
        raise ImageTooSmall(f"image {w}x{h} is smaller than patch {pw}x{ph}")

    if spec.sampling_mode == SamplingMode.TILED:
        x0 = (w - pw) // 2
        return [
            image[band * ph : (band + 1) * ph, x0 : x0 + pw].copy()
            for band in range(h // ph)
        ]
    if spec.sampling_mode == SamplingMode.CENTER:
        y0, x0 = (h - ph) // 2, (w - pw) // 2
    else:
        if rng is None:
            raise ValueError("random_offset sampling requires an rng")
        y0 = int(rng.integers(0, h - ph + 1))
        x0 = int(rng.integers(0, w - pw + 1))
    return [image[y0 : y0 + ph, x0 : x0 + pw].copy()]


def resize_patch(patch: np.ndarray, target_dims: tuple[int, int] = TARGET_DIMS) -> np.ndarray:
    """Bilinear resize of a source-size patch to target dims. Deterministic."""
    h, w = patch.shape[:2]
    if (w, h) == tuple(target_dims):
        return patch.copy()
    if (w, h) != SOURCE_DIMS:
        raise BadDims(f"expected a {SOURCE_DIMS[0]}x{SOURCE_DIMS[1]} patch, got {w}x{h}")
    return cv2.resize(patch, tuple(target_dims), interpolation=cv2.INTER_LINEAR)


def augment(patch: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    """Apply hflip, vflip, rotation, cutout, in that order.

    Rotation is uniform within the policy range, reflect-padded and re-cropped
    to the input dims; cutout holes are filled with the patch's per-channel
    mean. Output dims always equal input dims. All draws are consumed in a
    fixed order whether or not the transform fires, so replay under a fixed
    seed stays aligned.
    """
    out = patch
    h, w = out.shape[:2]

    do_hflip = rng.random() < policy.hflip_prob
    do_vflip = rng.random() < policy.vflip_prob
    lo, hi = policy.rotation_range_deg
    angle = float(rng.uniform(lo, hi))
    holes = [
        (int(rng.integers(0, h)), int(rng.integers(0, w)))
        for _ in range(policy.cutout.holes)
    ]

    if do_hflip:
        out = out[:, ::-1]
    if do_vflip:
        out = out[::-1, :]
    if angle != 0.0:
        matrix = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle, 1.0)
        out = cv2.warpAffine(
            np.ascontiguousarray(out), matrix, (w, h),
            flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT,
        )
    if holes:
        out = np.ascontiguousarray(out)
        fill = out.reshape(-1, out.shape[2]).mean(axis=0)
        if np.issubdtype(out.dtype, np.integer):
            fill = np.round(fill)
        half = policy.cutout.hole_size // 2
        for cy, cx in holes:
            y0, y1 = max(0, cy - half), min(h, cy + policy.cutout.hole_size - half)
            x0, x1 = max(0, cx - half), min(w, cx + policy.cutout.hole_size - half)
            out[y0:y1, x0:x1] = fill.astype(out.dtype)
    return np.ascontiguousarray(out)


def stream_rng(global_seed: int, image_id: str, draw_index: int) -> np.random.Generator:
    """Independent per-(image, draw) generator derived from one global seed."""
    id_words = np.frombuffer(image_id.encode("utf-8").ljust(4, b"\0"), dtype=np.uint8)
    entropy = [int(global_seed), int(draw_index), *(int(b) for b in id_words)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def training_patch(
    image: np.ndarray,
    spec: PatchSpec,
    policy: AugmentationPolicy | None,
    rng: np.random.Generator,
) -> np.ndarray:
    """One extract -> resize -> augment pass; augmentation skipped when policy is None."""
    patch = extract_patches(image, spec, rng)[0]
    patch = resize_patch(patch, spec.target_dims)
    if policy is not None:
        patch = augment(patch, policy, rng)
    return patch
