"""Two-stage training schedule with one-cycle learning-rate/momentum annealing.

Each stage anneals over a fixed number of optimizer steps: the learning rate
rises from alpha_min to alpha_max along a half cosine while momentum falls
from beta_max to beta_min, then both mirror back over the second half. Under
Adam, "momentum" is the first-moment decay coefficient; the second-moment
decay stays fixed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import BadStep


def cosine_interp(start: float, end: float, progress: float) -> float:
    """Half-cosine interpolation from start to end as progress goes 0 -> 1."""
    return start + (end - start) * (1.0 - math.cos(math.pi * progress)) / 2.0


def one_cycle(
    step: float,
    total_steps: int,
    alpha_max: float,
    alpha_min: float | None = None,
    beta_min: float = 0.85,
    beta_max: float = 0.95,
    final_alpha: float | None = None,
) -> tuple[float, float]:
    """Learning rate and momentum at `step` of a one-cycle schedule.

    First half: lr alpha_min -> alpha_max, momentum beta_max -> beta_min.
    Second half: lr alpha_max -> alpha_min (or final_alpha when given, for a
    lower-than-symmetric landing), momentum beta_min -> beta_max. Both halves
    are half-cosines; the cycle peaks exactly at total_steps / 2.
    """
    if alpha_min is None:
        alpha_min = alpha_max / 10.0
    if not 0 < alpha_min < alpha_max:
        raise ValueError(f"need 0 < alpha_min < alpha_max, got {alpha_min}, {alpha_max}")
    if not 0 < beta_min < beta_max < 1:
        raise ValueError(f"need 0 < beta_min < beta_max < 1, got {beta_min}, {beta_max}")
    if total_steps < 2:
        raise BadStep(f"total_steps must be >= 2, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise BadStep(f"step {step} outside [0, {total_steps}]")

    half = total_steps / 2.0
    if step <= half:
        progress = step / half
        return (
            cosine_interp(alpha_min, alpha_max, progress),
            cosine_interp(beta_max, beta_min, progress),
        )
    progress = (step - half) / half
    landing = alpha_min if final_alpha is None else final_alpha
    return (
        cosine_interp(alpha_max, landing, progress),
        cosine_interp(beta_min, beta_max, progress),
    )


@dataclass(frozen=True)
class StageConfig:
    epochs: int
    alpha_max: float
    frozen_backbone: bool

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.alpha_max <= 0:
            raise ValueError(f"alpha_max must be positive, got {self.alpha_max}")


@dataclass(frozen=True)
class TrainingSchedule:
    """All hyperparameters of the two-stage transfer-learning recipe."""

    stage1: StageConfig = field(default_factory=lambda: StageConfig(6, 2e-2, True))
    stage2: StageConfig = field(default_factory=lambda: StageConfig(8, 1e-5, False))
    alpha_min_divisor: float = 10.0
    beta_min: float = 0.85
    beta_max: float = 0.95
    beta2: float = 0.999  # Adam second-moment decay, held constant
    batch_size: int = 16
    final_alpha: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.beta_min < self.beta_max < 1:
            raise ValueError(f"need 0 < beta_min < beta_max < 1, got "
                             f"{self.beta_min}, {self.beta_max}")
        if self.alpha_min_divisor <= 1:
            raise ValueError(f"alpha_min_divisor must exceed 1, got {self.alpha_min_divisor}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    def alpha_min(self, stage: StageConfig) -> float:
        return stage.alpha_max / self.alpha_min_divisor

    def at(self, stage: StageConfig, step: float, total_steps: int) -> tuple[float, float]:
        """(learning_rate, momentum) for a stage at one global step of it."""
        return one_cycle(
            step,
            total_steps,
            alpha_max=stage.alpha_max,
            alpha_min=self.alpha_min(stage),
            beta_min=self.beta_min,
            beta_max=self.beta_max,
            final_alpha=self.final_alpha,
        )
