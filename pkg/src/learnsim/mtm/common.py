from __future__ import annotations

from dataclasses import dataclass

from ..errors import ValidationError

MODES = ("scratch", "retain")


@dataclass(frozen=True)
class TrainConfig:
    """Inner-loop training knobs.

    ``epochs`` full passes over the data per call. ``mode="retain"`` continues
    from the state handed to ``train``; ``"scratch"`` ignores it.
    """

    epochs: int = 1
    batch_size: int = 32
    step_size: float = 0.1
    mode: str = "scratch"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.step_size < 0:
            raise ValidationError("step_size must be non-negative")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")


def minibatches(n: int, batch_size: int, rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]
