"""Two-stage training: frozen-backbone head training, then full fine-tuning.

Stage 1 treats the backbone as a fixed feature extractor (parameters frozen,
batch-norm buffers untouched) and trains only the head; stage 2 starts from
the stage-1 final weights and updates everything at a much smaller peak
learning rate. Learning rate and momentum follow the one-cycle schedule at
per-step granularity, with the schedule length fixed before training starts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch
import torch.nn as nn

from .errors import DivergedLoss, NoCheckpoints, UnreadableImage
from .model import ModelConfig, WoodClassifier, normalize_image
from .patches import AugmentationPolicy, PatchSpec, SamplingMode, stream_rng, training_patch
from .registry import Registry
from .schedule import StageConfig, TrainingSchedule
from .splits import SplitManifest

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_top1: float


@dataclass
class Checkpoint:
    stage: str
    epoch: int
    val_top1: float
    val_loss: float
    train_loss: float
    state: dict[str, torch.Tensor]
    model_config: ModelConfig

    def save(self, path: str | Path) -> None:
        torch.save(
            {
                "format_version": CHECKPOINT_FORMAT_VERSION,
                "stage": self.stage,
                "epoch": self.epoch,
                "val_top1": self.val_top1,
                "val_loss": self.val_loss,
                "train_loss": self.train_loss,
                "model_config": self.model_config.to_dict(),
                "state": self.state,
            },
            path,
        )

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        data = torch.load(path, map_location="cpu", weights_only=True)
        if data.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format: {data.get('format_version')}")
        return cls(
            stage=data["stage"],
            epoch=data["epoch"],
            val_top1=data["val_top1"],
            val_loss=data["val_loss"],
            train_loss=data["train_loss"],
            state=data["state"],
            model_config=ModelConfig.from_dict(data["model_config"]),
        )


@dataclass
class StageHistory:
    stage: str
    epochs: list[EpochStats] = field(default_factory=list)
    checkpoints: list[Checkpoint] = field(default_factory=list)


def load_image(file_ref: str) -> np.ndarray:
    bgr = cv2.imread(str(file_ref), cv2.IMREAD_COLOR)
    if bgr is None:
        raise UnreadableImage(f"cannot decode {file_ref}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


class PatchBatchStream:
    """Split-aware stream of (input batch, label batch) pairs.

    Training streams shuffle image order per epoch and draw one randomly
    offset, augmented patch per image per epoch; evaluation streams walk
    images in a fixed order taking the deterministic center band with no
    augmentation. Each image's randomness comes from an independent stream
    keyed by (seed, image_id, epoch), so replay is exact and extraction
    order-independent.
    """

    def __init__(
        self,
        registry: Registry,
        manifest: SplitManifest,
        split: str,
        model_config: ModelConfig,
        *,
        train: bool,
        policy: AugmentationPolicy | None = None,
        batch_size: int = 16,
        seed: int = 0,
        image_loader=load_image,
    ):
        self.model_config = model_config
        self.train = train
        self.policy = policy if train else None
        self.batch_size = batch_size
        self.seed = seed
        self.image_loader = image_loader
        mode = SamplingMode.RANDOM_OFFSET if train else SamplingMode.CENTER
        self.spec = PatchSpec(sampling_mode=mode)
        self.class_to_index = {label: i for i, label in enumerate(registry.catalog.labels)}

        assigned = {sid for sid, s in manifest.assignments if s == split}
        accepted = {s.specimen_id for s in registry.accepted_specimens()}
        self.items: list[tuple[str, str, int]] = []  # (image_id, file_ref, class index)
        for sid in sorted(assigned & accepted):
            spec = registry.specimens[sid]
            for iid in sorted(spec.image_ids):
                rec = registry.images[iid]
                self.items.append((iid, rec.file_ref, self.class_to_index[spec.class_label]))
        if not self.items:
            raise ValueError(f"no images in split {split!r}")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.items) / self.batch_size)

    def epoch_batches(self, epoch: int):
        if self.train:
            order = np.random.default_rng(
                np.random.SeedSequence([self.seed, epoch])
            ).permutation(len(self.items))
        else:
            order = np.arange(len(self.items))
        for start in range(0, len(order), self.batch_size):
            xs, ys = [], []
            for idx in order[start : start + self.batch_size]:
                image_id, file_ref, label = self.items[idx]
                image = self.image_loader(file_ref)
                rng = stream_rng(self.seed, image_id, epoch)
                patch = training_patch(image, self.spec, self.policy, rng)
                xs.append(normalize_image(patch, self.model_config))
                ys.append(label)
            yield torch.stack(xs), torch.tensor(ys, dtype=torch.long)

    def batches(self):
        return self.epoch_batches(0)


def clone_state(model: nn.Module) -> dict[str, torch.Tensor]:
    return {k: v.detach().clone().cpu() for k, v in model.state_dict().items()}


def evaluate_stream(model: WoodClassifier, stream) -> tuple[float, float]:
    """(mean cross-entropy, top-1 accuracy) over an evaluation stream."""
    loss_fn = nn.CrossEntropyLoss(reduction="sum")
    model.eval()
    total_loss, correct, count = 0.0, 0, 0
    with torch.no_grad():
        for x, y in stream.batches():
            logits = model.logits(x)
            total_loss += loss_fn(logits, y).item()
            correct += (logits.argmax(dim=1) == y).sum().item()
            count += len(y)
    if count == 0:
        return float("nan"), float("nan")
    return total_loss / count, correct / count


def train_stage(
    model: WoodClassifier,
    train_stream,
    val_stream,
    stage: StageConfig,
    schedule: TrainingSchedule,
    stage_name: str = "stage1",
) -> tuple[WoodClassifier, StageHistory]:
    """Run one stage of the recipe, checkpointing after every epoch.

    A non-finite training loss aborts immediately with DivergedLoss carrying
    the last completed epoch's checkpoint.
    """
    torch.manual_seed(schedule.seed)
    if stage.frozen_backbone:
        model.freeze_backbone()
        params = list(model.head.parameters())
    else:
        model.unfreeze_backbone()
        params = list(model.parameters())

    total_steps = stage.epochs * train_stream.steps_per_epoch
    optimizer = torch.optim.Adam(
        params, lr=schedule.alpha_min(stage), betas=(schedule.beta_max, schedule.beta2)
    )
    loss_fn = nn.CrossEntropyLoss()
    history = StageHistory(stage=stage_name)
    last_good: Checkpoint | None = None
    step = 0
    for epoch in range(stage.epochs):
        model.train()
        if stage.frozen_backbone:
            model.backbone.eval()  # batch-norm buffers stay bitwise frozen
        running, batches = 0.0, 0
        for x, y in train_stream.epoch_batches(epoch):
            lr, momentum = schedule.at(stage, step, total_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
                group["betas"] = (momentum, schedule.beta2)
            optimizer.zero_grad()
            loss = loss_fn(model.logits(x), y)
            if not torch.isfinite(loss):
                raise DivergedLoss(
                    f"non-finite loss in {stage_name} epoch {epoch} step {step}",
                    checkpoint=last_good,
                )
            loss.backward()
            optimizer.step()
            running += loss.item()
            batches += 1
            step += 1
        val_loss, val_top1 = evaluate_stream(model, val_stream)
        stats = EpochStats(
            epoch=epoch,
            train_loss=running / max(batches, 1),
            val_loss=val_loss,
            val_top1=val_top1,
        )
        history.epochs.append(stats)
        checkpoint = Checkpoint(
            stage=stage_name,
            epoch=epoch,
            val_top1=val_top1,
            val_loss=val_loss,
            train_loss=stats.train_loss,
            state=clone_state(model),
            model_config=model.config,
        )
        history.checkpoints.append(checkpoint)
        last_good = checkpoint
    return model, history


def select_checkpoint(histories: list[StageHistory]) -> Checkpoint:
    """Best checkpoint across stages: highest validation top-1, ties broken by
    lower validation loss, then by coming earlier."""
    best: Checkpoint | None = None
    for history in histories:
        for ckpt in history.checkpoints:
            if best is None:
                best = ckpt
            elif ckpt.val_top1 > best.val_top1 or (
                ckpt.val_top1 == best.val_top1 and ckpt.val_loss < best.val_loss
            ):
                best = ckpt
    if best is None:
        raise NoCheckpoints("no completed stages")
    return best


def run_training(
    model: WoodClassifier,
    registry: Registry,
    manifest: SplitManifest,
    schedule: TrainingSchedule,
    policy: AugmentationPolicy | None = None,
    *,
    stages: tuple[str, ...] = ("stage1", "stage2"),
    image_loader=load_image,
    checkpoint_dir: str | Path | None = None,
) -> tuple[WoodClassifier, list[StageHistory], Checkpoint]:
    """Full recipe over a validated split: stage 1, then stage 2 from the
    stage-1 final weights; returns the best checkpoint across both."""
    policy = policy if policy is not None else AugmentationPolicy()
    train_stream = PatchBatchStream(
        registry, manifest, "train", model.config,
        train=True, policy=policy, batch_size=schedule.batch_size,
        seed=schedule.seed, image_loader=image_loader,
    )
    val_stream = PatchBatchStream(
        registry, manifest, "valid", model.config,
        train=False, batch_size=schedule.batch_size,
        seed=schedule.seed, image_loader=image_loader,
    )
    histories: list[StageHistory] = []
    for name in stages:
        stage = getattr(schedule, name)
        model, history = train_stage(model, train_stream, val_stream, stage, schedule, name)
        histories.append(history)
        if checkpoint_dir is not None:
            out = Path(checkpoint_dir)
            out.mkdir(parents=True, exist_ok=True)
            for ckpt in history.checkpoints:
                ckpt.save(out / f"{name}-epoch{ckpt.epoch:02d}.pt")
    return model, histories, select_checkpoint(histories)
