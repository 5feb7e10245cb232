"""Adam training loop, learning-rate schedule and finite-difference gradient check."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from lidarenhance._console import format_fields
from lidarenhance._core import AppearanceImage, DenseIntensityMask
from lidarenhance._errors import (
    DataError,
    DimensionMismatchError,
    OutOfBoundsError,
    TrainingDivergedError,
)
from lidarenhance._model import (
    LossValue,
    RinetLite,
    backward,
    forward,
    image_batch,
    kink_pattern,
    loss_gradient,
)

Sample = tuple[AppearanceImage, DenseIntensityMask]

FD_STEP = 1e-4
MAX_CHECK_PARAMETERS = 5000
MAX_CHECK_SIZE = 16
RESAMPLE_FACTOR = 50


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings."""

    epochs: int = 30
    learning_rate: float = 2e-2
    decay_epochs: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4
    seed: int = 0
    raydrop_weight: float = 1.0
    intensity_weight: float = 1.0

    def __post_init__(self) -> None:
        if not self.epochs >= self.decay_epochs >= 0:
            raise DataError("need epochs >= decay_epochs >= 0")
        if not self.learning_rate > 0.0:
            raise DataError("learning_rate must be positive")
        if self.batch_size < 1:
            raise DataError("batch_size must be at least 1")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise DataError("Adam betas must lie in [0, 1)")
        if not self.eps > 0.0:
            raise DataError("Adam eps must be positive")
        if self.raydrop_weight < 0.0 or self.intensity_weight < 0.0:
            raise DataError("loss weights must be non-negative")


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Constant base rate, then a linear ramp to 0 over the last ``decay_epochs``."""
    if not 0 <= epoch < cfg.epochs:
        raise OutOfBoundsError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if cfg.decay_epochs == 0 or epoch < cfg.epochs - cfg.decay_epochs:
        return cfg.learning_rate
    return cfg.learning_rate * (cfg.epochs - epoch) / cfg.decay_epochs


@dataclass
class Adam:
    """First/second moment estimates keyed by parameter name."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> Adam:
        return cls(cfg.beta1, cfg.beta2, cfg.eps)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        """Update *params* in place."""
        self.step_count += 1
        t = self.step_count
        for name in sorted(grads):
            g = grads[name]
            m = self.first.setdefault(name, np.zeros_like(g))
            v = self.second.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            params[name] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    model: RinetLite
    losses: list[LossValue]
    learning_rates: list[float]


def _stack_dataset(dataset: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    if not dataset:
        raise DataError("training dataset is empty")
    first_image, _ = dataset[0]
    shape = (first_image.height, first_image.width)
    for index, (image, mask) in enumerate(dataset):
        if (image.height, image.width) != shape or mask.shape != shape:
            raise DimensionMismatchError(
                f"sample {index} is {image.height}x{image.width} with a "
                f"{mask.shape[0]}x{mask.shape[1]} mask, expected {shape[0]}x{shape[1]}"
            )
    images = image_batch([image for image, _ in dataset])
    masks = np.stack([mask.values for _, mask in dataset])
    return images, masks


def train(
    model: RinetLite,
    dataset: Sequence[Sample],
    cfg: TrainConfig | None = None,
    report: Callable[[str], None] | None = None,
) -> TrainResult:
    """Train a copy of *model*; the input model is left untouched.

    Each recorded loss is the mean of the per-sample losses seen during the
    epoch, measured before the step that used them.
    """
    cfg = cfg or TrainConfig()
    images, masks = _stack_dataset(dataset)
    work = model.copy()
    optimizer = Adam.from_config(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    n = len(images)

    losses: list[LossValue] = []
    rates: list[float] = []
    step = 0
    for epoch in range(cfg.epochs):
        lr = learning_rate(cfg, epoch)
        order = rng.permutation(n)
        raydrop_sum = 0.0
        intensity_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            cache = forward(work, images[batch])
            batch_losses, objective, grad_out = loss_gradient(
                cache.output, masks[batch], cfg.raydrop_weight, cfg.intensity_weight
            )
            if not math.isfinite(objective):
                raise TrainingDivergedError(f"non-finite loss at step {step}", step)
            grads = backward(work, cache, grad_out)
            optimizer.step(work.params, grads, lr)
            raydrop_sum += sum(loss.raydrop for loss in batch_losses)
            intensity_sum += sum(loss.intensity for loss in batch_losses)
            step += 1

        epoch_loss = LossValue.of(raydrop_sum / n, intensity_sum / n)
        losses.append(epoch_loss)
        rates.append(lr)
        if report is not None:
            report(
                format_fields(
                    epoch=epoch + 1,
                    loss=epoch_loss.total,
                    raydrop=epoch_loss.raydrop,
                    intensity=epoch_loss.intensity,
                    lr=lr,
                )
            )
    return TrainResult(work, losses, rates)


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------


def _probe_pool(model: RinetLite) -> list[tuple[str, int]]:
    """(name, size) of every parameter tensor that can move the loss.

    Conv biases inside residual blocks feed an instance norm, which subtracts
    them again; their gradient is exactly zero and finite differences only
    measure rounding noise there.
    """
    pool = []
    for name, value in model.named_parameters():
        if name.startswith("block") and ".conv" in name and name.endswith(".b"):
            continue
        pool.append((name, int(value.size)))
    return pool


def _patterns_match(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(
    model: RinetLite,
    sample: Sample,
    probes: int = 64,
    seed: int = 0,
    raydrop_weight: float = 1.0,
    intensity_weight: float = 1.0,
    step: float = FD_STEP,
) -> float:
    """Max relative error between backprop and central differences.

    A probe is redrawn when the two stencil points sit on different pieces of
    the piecewise-smooth loss (a ReLU flips, pred_R crosses its target, or L_I
    becomes zero); at most ``50 * probes`` draws are made.
    """
    image, mask = sample
    if model.num_parameters > MAX_CHECK_PARAMETERS:
        raise DataError(f"gradient check needs <= {MAX_CHECK_PARAMETERS} parameters")
    if image.height > MAX_CHECK_SIZE or image.width > MAX_CHECK_SIZE:
        raise DataError(
            f"gradient check needs an image of at most {MAX_CHECK_SIZE}x{MAX_CHECK_SIZE}"
        )
    if probes <= 0:
        return 0.0

    images, masks = _stack_dataset([sample])
    work = model.copy()

    def evaluate() -> tuple[float, list[np.ndarray]]:
        cache = forward(work, images)
        _, objective, _ = loss_gradient(cache.output, masks, raydrop_weight, intensity_weight)
        return objective, kink_pattern(cache, masks)

    cache = forward(work, images)
    _, _, grad_out = loss_gradient(cache.output, masks, raydrop_weight, intensity_weight)
    analytic = backward(work, cache, grad_out)

    pool = _probe_pool(work)
    sizes = np.array([size for _, size in pool])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)

    worst = 0.0
    accepted = 0
    attempts = 0
    while accepted < probes and attempts < RESAMPLE_FACTOR * probes:
        attempts += 1
        flat = int(rng.integers(offsets[-1]))
        slot = int(np.searchsorted(offsets, flat, side="right")) - 1
        name, index = pool[slot][0], flat - int(offsets[slot])
        param = work.params[name].reshape(-1)
        original = param[index]

        param[index] = original + step
        loss_plus, pattern_plus = evaluate()
        param[index] = original - step
        loss_minus, pattern_minus = evaluate()
        param[index] = original

        if not _patterns_match(pattern_plus, pattern_minus):
            continue
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        exact = float(analytic[name].reshape(-1)[index])
        error = abs(exact - numeric) / max(1e-8, abs(exact) + abs(numeric))
        worst = max(worst, error)
        accepted += 1
    return worst


# ---------------------------------------------------------------------------
# Scalar L1 fit
# ---------------------------------------------------------------------------


def fit_scalar_l1(
    targets: np.ndarray, cfg: TrainConfig | None = None, initial: float = 0.5
) -> float:
    """Fit one scalar to *targets* under the mean L1 loss with Adam.

    One full-batch step per epoch, following the configured schedule. The
    L1 minimizer is the median of the targets.
    """
    cfg = cfg or TrainConfig()
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if targets.size == 0:
        raise DataError("need at least one target")
    params = {"theta": np.array([initial], dtype=np.float64)}
    optimizer = Adam.from_config(cfg)
    for epoch in range(cfg.epochs):
        grad = np.array([np.mean(np.sign(params["theta"][0] - targets))])
        optimizer.step(params, {"theta": grad}, learning_rate(cfg, epoch))
    return float(params["theta"][0])
