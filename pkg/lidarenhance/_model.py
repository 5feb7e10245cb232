"""RinetLite: a small residual, instance-normalized, fully convolutional predictor.

Forward and backward passes are written out by hand on numpy arrays so the
model trains on a CPU without an autodiff framework. Layout is NCHW throughout.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from lidarenhance._core import AppearanceImage, DenseIntensityMask, PredictorOutput
from lidarenhance._errors import DataError, DimensionMismatchError

NORM_EPS = 1e-5
MIN_INPUT_SIZE = 8
DEFAULT_CHANNELS = 8
DEFAULT_BLOCKS = 2


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


def param_shapes(channels: int, blocks: int) -> dict[str, tuple[int, ...]]:
    """Ordered parameter names and shapes of a RinetLite(channels, blocks)."""
    shapes: dict[str, tuple[int, ...]] = {
        "in.w": (channels, 3, 3, 3),
        "in.b": (channels,),
    }
    for k in range(blocks):
        for conv in ("conv1", "conv2"):
            shapes[f"block{k}.{conv}.w"] = (channels, channels, 3, 3)
            shapes[f"block{k}.{conv}.b"] = (channels,)
        for norm in ("norm1", "norm2"):
            shapes[f"block{k}.{norm}.gamma"] = (channels,)
            shapes[f"block{k}.{norm}.beta"] = (channels,)
    shapes["out.w"] = (2, channels, 3, 3)
    shapes["out.b"] = (2,)
    return shapes


@dataclass(eq=False)
class RinetLite:
    """Input conv, ``blocks`` residual blocks, output conv and a sigmoid."""

    channels: int = DEFAULT_CHANNELS
    blocks: int = DEFAULT_BLOCKS
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.channels < 1 or self.blocks < 0:
            raise DataError("RinetLite needs channels >= 1 and blocks >= 0")
        expected = param_shapes(self.channels, self.blocks)
        if not self.params:
            self.params = {name: np.zeros(shape) for name, shape in expected.items()}
            self._reset_norms()
        if set(self.params) != set(expected):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise DataError(f"parameter set mismatch (missing {missing}, unexpected {extra})")
        for name, shape in expected.items():
            value = np.array(self.params[name], dtype=np.float64)
            if value.shape != shape:
                raise DimensionMismatchError(
                    f"parameter {name} has shape {value.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(value)):
                raise DataError(f"parameter {name} contains non-finite values")
            self.params[name] = value

    def _reset_norms(self) -> None:
        for name in self.params:
            if name.endswith(".gamma"):
                self.params[name][:] = 1.0

    @classmethod
    def zeros(cls, channels: int = DEFAULT_CHANNELS, blocks: int = DEFAULT_BLOCKS) -> RinetLite:
        """All weights and biases zero, norms at identity (gamma=1, beta=0)."""
        return cls(channels, blocks)

    @classmethod
    def initialize(
        cls, channels: int = DEFAULT_CHANNELS, blocks: int = DEFAULT_BLOCKS, seed: int = 0
    ) -> RinetLite:
        """Uniform(-k, k) weights and biases with k = 1/sqrt(fan_in)."""
        rng = np.random.default_rng([seed, 0])
        params: dict[str, np.ndarray] = {}
        shapes = param_shapes(channels, blocks)
        for name, shape in shapes.items():
            if name.endswith(".gamma"):
                params[name] = np.ones(shape)
            elif name.endswith(".beta"):
                params[name] = np.zeros(shape)
            else:
                weight_shape = shapes[name[:-1] + "w"]
                bound = 1.0 / math.sqrt(weight_shape[1] * 9)
                params[name] = rng.uniform(-bound, bound, size=shape)
        return cls(channels, blocks, params)

    def copy(self) -> RinetLite:
        return RinetLite(
            self.channels, self.blocks, {k: v.copy() for k, v in self.params.items()}
        )

    def named_parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in param_shapes(self.channels, self.blocks):
            yield name, self.params[name]

    @property
    def num_parameters(self) -> int:
        return sum(int(v.size) for v in self.params.values())

    def same_as(self, other: RinetLite) -> bool:
        return (
            self.channels == other.channels
            and self.blocks == other.blocks
            and all(np.array_equal(v, other.params[k]) for k, v in self.params.items())
        )


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, C, H, W) -> (B*H*W, C*9) patches of a zero-padded 3x3 neighborhood."""
    batch, channels, height, width = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        batch * height * width, channels * 9
    )


def conv_forward(
    x: np.ndarray, weight: np.ndarray, bias: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """3x3 convolution, stride 1, zero padding 1. Returns (output, patches)."""
    batch, _, height, width = x.shape
    out_channels = weight.shape[0]
    cols = _im2col(x)
    out = cols @ weight.reshape(out_channels, -1).T + bias
    return out.reshape(batch, height, width, out_channels).transpose(0, 3, 1, 2), cols


def conv_backward(
    grad_out: np.ndarray, cols: np.ndarray, weight: np.ndarray, in_channels: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (input, weight, bias) of :func:`conv_forward`."""
    batch, out_channels, height, width = grad_out.shape
    flat = grad_out.transpose(0, 2, 3, 1).reshape(-1, out_channels)
    grad_w = (flat.T @ cols).reshape(weight.shape)
    grad_b = flat.sum(axis=0)
    grad_cols = (flat @ weight.reshape(out_channels, -1)).reshape(
        batch, height, width, in_channels, 3, 3
    )
    padded = np.zeros((batch, in_channels, height + 2, width + 2))
    for ki in range(3):
        for kj in range(3):
            padded[:, :, ki : ki + height, kj : kj + width] += grad_cols[
                :, :, :, :, ki, kj
            ].transpose(0, 3, 1, 2)
    return padded[:, :, 1:-1, 1:-1], grad_w, grad_b


def instance_norm(x: np.ndarray, eps: float = NORM_EPS) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample, per-channel normalization. Returns (normalized, inverse std)."""
    mean = x.mean(axis=(2, 3), keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    return centered * inv_std, inv_std


def _norm_backward(
    grad_out: np.ndarray, xhat: np.ndarray, inv_std: np.ndarray, gamma: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    count = xhat.shape[2] * xhat.shape[3]
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_xhat = grad_out * gamma[None, :, None, None]
    grad_x = (inv_std / count) * (
        count * grad_xhat
        - grad_xhat.sum(axis=(2, 3), keepdims=True)
        - xhat * (grad_xhat * xhat).sum(axis=(2, 3), keepdims=True)
    )
    return grad_x, grad_gamma, grad_beta


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Overflow-free logistic function."""
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, consumed by :func:`backward`."""

    output: np.ndarray
    steps: list[tuple[str, tuple]] = field(default_factory=list)
    relu_masks: list[np.ndarray] = field(default_factory=list)


def _affine(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return x * gamma[None, :, None, None] + beta[None, :, None, None]


def forward(model: RinetLite, x: np.ndarray) -> ForwardCache:
    """Run the network on a (B, 3, H, W) batch; output is (B, 2, H, W) in (0, 1)."""
    if x.ndim != 4 or x.shape[1] != 3:
        raise DimensionMismatchError(f"expected a (B, 3, H, W) batch, got {x.shape}")
    if x.shape[2] < MIN_INPUT_SIZE or x.shape[3] < MIN_INPUT_SIZE:
        raise DimensionMismatchError(
            f"input must be at least {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}, "
            f"got {x.shape[2]}x{x.shape[3]}"
        )
    p = model.params
    cache = ForwardCache(output=np.empty(0))

    pre, cols = conv_forward(x, p["in.w"], p["in.b"])
    active = pre > 0.0
    h = np.where(active, pre, 0.0)
    cache.steps.append(("in", (cols, active)))
    cache.relu_masks.append(active)

    for k in range(model.blocks):
        name = f"block{k}"
        a1, cols1 = conv_forward(h, p[f"{name}.conv1.w"], p[f"{name}.conv1.b"])
        xhat1, inv1 = instance_norm(a1)
        n1 = _affine(xhat1, p[f"{name}.norm1.gamma"], p[f"{name}.norm1.beta"])
        active1 = n1 > 0.0
        r1 = np.where(active1, n1, 0.0)
        a2, cols2 = conv_forward(r1, p[f"{name}.conv2.w"], p[f"{name}.conv2.b"])
        xhat2, inv2 = instance_norm(a2)
        n2 = _affine(xhat2, p[f"{name}.norm2.gamma"], p[f"{name}.norm2.beta"])
        summed = h + n2
        active_out = summed > 0.0
        h = np.where(active_out, summed, 0.0)
        cache.steps.append(
            (name, (cols1, xhat1, inv1, active1, cols2, xhat2, inv2, active_out))
        )
        cache.relu_masks.extend([active1, active_out])

    logits, cols_out = conv_forward(h, p["out.w"], p["out.b"])
    cache.steps.append(("out", (cols_out,)))
    cache.output = sigmoid(logits)
    return cache


def backward(
    model: RinetLite, cache: ForwardCache, grad_output: np.ndarray
) -> dict[str, np.ndarray]:
    """Parameter gradients given dLoss/dOutput (post-sigmoid)."""
    p = model.params
    grads: dict[str, np.ndarray] = {}
    channels = model.channels

    out = cache.output
    grad = grad_output * out * (1.0 - out)

    (cols_out,) = cache.steps[-1][1]
    grad, grads["out.w"], grads["out.b"] = conv_backward(grad, cols_out, p["out.w"], channels)

    for k in reversed(range(model.blocks)):
        name = f"block{k}"
        _, (cols1, xhat1, inv1, active1, cols2, xhat2, inv2, active_out) = cache.steps[1 + k]
        grad_sum = np.where(active_out, grad, 0.0)
        grad_a2, grads[f"{name}.norm2.gamma"], grads[f"{name}.norm2.beta"] = _norm_backward(
            grad_sum, xhat2, inv2, p[f"{name}.norm2.gamma"]
        )
        grad_r1, grads[f"{name}.conv2.w"], grads[f"{name}.conv2.b"] = conv_backward(
            grad_a2, cols2, p[f"{name}.conv2.w"], channels
        )
        grad_n1 = np.where(active1, grad_r1, 0.0)
        grad_a1, grads[f"{name}.norm1.gamma"], grads[f"{name}.norm1.beta"] = _norm_backward(
            grad_n1, xhat1, inv1, p[f"{name}.norm1.gamma"]
        )
        grad_h, grads[f"{name}.conv1.w"], grads[f"{name}.conv1.b"] = conv_backward(
            grad_a1, cols1, p[f"{name}.conv1.w"], channels
        )
        # Skip connection.
        grad = grad_h + grad_sum

    cols_in, active_in = cache.steps[0][1]
    grad = np.where(active_in, grad, 0.0)
    _, grads["in.w"], grads["in.b"] = conv_backward(grad, cols_in, p["in.w"], 3)
    return grads


def image_batch(images: list[AppearanceImage]) -> np.ndarray:
    """Stack (H, W, 3) appearance images into a (B, 3, H, W) array."""
    return np.stack([img.pixels.transpose(2, 0, 1) for img in images])


def predict(model: RinetLite, image: AppearanceImage) -> PredictorOutput:
    """Raydrop probability (channel 0) and intensity (channel 1) for *image*."""
    out = forward(model, image_batch([image])).output[0]
    return PredictorOutput(out[0], out[1])


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossValue:
    """Raydrop term, intensity term and their sum."""

    raydrop: float
    intensity: float
    total: float

    def __post_init__(self) -> None:
        if self.raydrop < 0.0 or self.intensity < 0.0:
            raise DataError("loss terms must be non-negative")
        if abs(self.total - (self.raydrop + self.intensity)) > 1e-12:
            raise DataError("total loss must equal the sum of its terms")

    @classmethod
    def of(cls, raydrop: float, intensity: float) -> LossValue:
        return cls(float(raydrop), float(intensity), float(raydrop) + float(intensity))


def _check_same_shape(pred: np.ndarray, target: DenseIntensityMask) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionMismatchError(
            f"prediction {pred.shape} and target mask {target.shape} differ in shape"
        )
    return pred


def _raydrop_term(pred_r: np.ndarray, mask: np.ndarray) -> float:
    return float(np.mean(np.abs(pred_r - (mask > 0.0))))


def _intensity_term(pred_i: np.ndarray, mask: np.ndarray) -> float:
    valid = mask > 0.0
    count = int(valid.sum())
    if count == 0:
        return 0.0
    residual = (pred_i - mask)[valid]
    return math.sqrt(float(np.sum(residual * residual)) / count)


def raydrop_loss(pred_r: np.ndarray, target: DenseIntensityMask) -> float:
    """Mean absolute error between the raydrop channel and 1[M > 0]."""
    return _raydrop_term(_check_same_shape(pred_r, target), target.values)


def intensity_loss(pred_i: np.ndarray, target: DenseIntensityMask) -> float:
    """Root-mean-square intensity error over pixels with M > 0 (0 if none)."""
    return _intensity_term(_check_same_shape(pred_i, target), target.values)


def total_loss(pred: PredictorOutput, target: DenseIntensityMask) -> LossValue:
    return LossValue.of(
        raydrop_loss(pred.raydrop, target), intensity_loss(pred.intensity, target)
    )


def combine_prediction(pred: PredictorOutput, threshold: float = 0.5) -> np.ndarray:
    """Intensity gated by the thresholded raydrop channel (strict ``>``)."""
    return np.where(pred.raydrop > threshold, pred.intensity, 0.0)


def loss_gradient(
    output: np.ndarray,
    masks: np.ndarray,
    raydrop_weight: float = 1.0,
    intensity_weight: float = 1.0,
) -> tuple[list[LossValue], float, np.ndarray]:
    """Per-sample losses, batch objective and dObjective/dOutput.

    The objective is the batch mean of ``w_R * L_R + w_I * L_I``.
    """
    batch = output.shape[0]
    grad = np.zeros_like(output)
    losses = []
    objective = 0.0
    pixels = masks.shape[1] * masks.shape[2]
    for s in range(batch):
        pred_r, pred_i, mask = output[s, 0], output[s, 1], masks[s]
        target = (mask > 0.0).astype(np.float64)
        loss = LossValue.of(_raydrop_term(pred_r, mask), _intensity_term(pred_i, mask))
        losses.append(loss)
        objective += raydrop_weight * loss.raydrop + intensity_weight * loss.intensity

        grad[s, 0] = raydrop_weight * np.sign(pred_r - target) / pixels
        valid = mask > 0.0
        count = int(valid.sum())
        if count and loss.intensity > 0.0:
            grad[s, 1] = np.where(
                valid,
                intensity_weight * (pred_i - mask) / (count * loss.intensity),
                0.0,
            )
    return losses, objective / batch, grad / batch


def kink_pattern(cache: ForwardCache, masks: np.ndarray) -> list[np.ndarray]:
    """Which piece of every piecewise-smooth function the evaluation sits on."""
    output = cache.output
    pattern = [m.copy() for m in cache.relu_masks]
    pattern.append(np.sign(output[:, 0] - (masks > 0.0)))
    residual = np.where(masks > 0.0, output[:, 1] - masks, 0.0)
    pattern.append(np.array([np.any(r != 0.0) for r in residual]))
    return pattern
