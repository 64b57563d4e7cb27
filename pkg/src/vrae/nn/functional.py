"""Stateless forward/backward kernels for the layer types the VRAE needs.

Every tensor is a rank-4 ``numpy.ndarray`` laid out ``(n, c, h, w)``.  The
kernels preserve the dtype of their inputs, so the same code runs in float32
for training and in float64 inside finite-difference checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import as_strided

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class ShapeError(ValueError):
    """Raised when tensor dimensions do not fit a layer's contract."""


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    padding: int = 0
    pad_mode: Literal["zero", "reflect"] = "zero"
    has_bias: bool = False

    def __post_init__(self):
        p, q = self.kernel
        if p < 1 or q < 1:
            raise ValueError(f"kernel dims must be >= 1, got {self.kernel}")
        if min(self.stride) < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")
        if self.pad_mode not in ("zero", "reflect"):
            raise ValueError(f"unknown pad mode {self.pad_mode!r}")

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        p, q = self.kernel
        sh, sw = self.stride
        ho = (h + 2 * self.padding - p) // sh + 1
        wo = (w + 2 * self.padding - q) // sw + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"kernel {self.kernel} does not fit a padded {h}x{w} input")
        return ho, wo

    def transposed_output_hw(self, h: int, w: int) -> tuple[int, int]:
        p, q = self.kernel
        sh, sw = self.stride
        ho = (h - 1) * sh - 2 * self.padding + p
        wo = (w - 1) * sw - 2 * self.padding + q
        if ho < 1 or wo < 1:
            raise ShapeError(
                f"transposed conv {self.kernel}/s{self.stride}/p{self.padding} "
                f"yields no output for a {h}x{w} input"
            )
        return ho, wo


@dataclass
class LayerGradients:
    params: dict[str, np.ndarray] = field(default_factory=dict)
    input: np.ndarray | None = None


def check_tensor4(x: np.ndarray, name: str = "input") -> np.ndarray:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        got = getattr(x, "shape", type(x).__name__)
        raise ShapeError(f"{name} must be a rank-4 (n, c, h, w) array, got {got}")
    return x


# --------------------------------------------------------------------------
# padding


def pad2d(x: np.ndarray, pad: int, mode: str = "zero", value: float = 0.0) -> np.ndarray:
    if pad == 0:
        return x
    widths = ((0, 0), (0, 0), (pad, pad), (pad, pad))
    if mode == "reflect":
        if pad >= x.shape[2] or pad >= x.shape[3]:
            raise ShapeError(f"reflect padding {pad} needs spatial dims > {pad}, got {x.shape[2:]}")
        return np.pad(x, widths, mode="reflect")
    return np.pad(x, widths, mode="constant", constant_values=value)


def pad2d_backward(g: np.ndarray, pad: int, mode: str = "zero") -> np.ndarray:
    """Fold the gradient of a padded tensor back onto the unpadded one."""
    if pad == 0:
        return g
    if mode != "reflect":
        return g[:, :, pad:-pad, pad:-pad]
    # reflect: padded row -k mirrors row k, padded row h-1+k mirrors row h-1-k
    g = g.copy()
    for k in range(1, pad + 1):
        g[:, :, pad + k, :] += g[:, :, pad - k, :]
        g[:, :, -pad - 1 - k, :] += g[:, :, -pad - 1 + k, :]
    g = g[:, :, pad:-pad, :]
    for k in range(1, pad + 1):
        g[:, :, :, pad + k] += g[:, :, :, pad - k]
        g[:, :, :, -pad - 1 - k] += g[:, :, :, -pad - 1 + k]
    return np.ascontiguousarray(g[:, :, :, pad:-pad])


# --------------------------------------------------------------------------
# im2col / col2im


def _windows(xp: np.ndarray, p: int, q: int, sh: int, sw: int, ho: int, wo: int) -> np.ndarray:
    n, c, _, _ = xp.shape
    s = xp.strides
    return as_strided(
        xp,
        shape=(n, ho, wo, c, p, q),
        strides=(s[0], s[2] * sh, s[3] * sw, s[1], s[2], s[3]),
        writeable=False,
    )


def im2col(xp: np.ndarray, p: int, q: int, sh: int, sw: int, ho: int, wo: int) -> np.ndarray:
    """Rows ordered (n, ho, wo); columns ordered (c, p, q)."""
    n, c = xp.shape[:2]
    return _windows(xp, p, q, sh, sw, ho, wo).reshape(n * ho * wo, c * p * q)


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int], p: int, q: int,
           sh: int, sw: int, ho: int, wo: int) -> np.ndarray:
    n, c, hp, wp = shape
    out = np.zeros(shape, dtype=cols.dtype)
    blocks = cols.reshape(n, ho, wo, c, p, q).transpose(0, 3, 4, 5, 1, 2)
    for i in range(p):
        for j in range(q):
            out[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += blocks[:, :, i, j]
    return out


# --------------------------------------------------------------------------
# convolution


def _check_conv(x: np.ndarray, spec: ConvSpec, weights: np.ndarray) -> None:
    check_tensor4(x)
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"input channels: expected {spec.in_channels}, got {x.shape[1]}")
    expected = (spec.out_channels, spec.in_channels, *spec.kernel)
    if weights.shape != expected:
        raise ShapeError(f"weights: expected shape {expected}, got {weights.shape}")


def conv2d_forward(x: np.ndarray, spec: ConvSpec, weights: np.ndarray,
                   bias: np.ndarray | None = None) -> np.ndarray:
    _check_conv(x, spec, weights)
    n, _, h, w = x.shape
    ho, wo = spec.output_hw(h, w)
    p, q = spec.kernel
    xp = pad2d(x, spec.padding, spec.pad_mode)
    cols = im2col(xp, p, q, *spec.stride, ho, wo)
    y = cols @ weights.reshape(spec.out_channels, -1).T
    if bias is not None:
        y += bias
    return np.ascontiguousarray(y.reshape(n, ho, wo, spec.out_channels).transpose(0, 3, 1, 2))


def conv2d_backward(x: np.ndarray, spec: ConvSpec, weights: np.ndarray,
                    upstream_grad: np.ndarray) -> LayerGradients:
    _check_conv(x, spec, weights)
    n, _, h, w = x.shape
    ho, wo = spec.output_hw(h, w)
    if upstream_grad.shape != (n, spec.out_channels, ho, wo):
        raise ShapeError(
            f"upstream gradient: expected {(n, spec.out_channels, ho, wo)}, got {upstream_grad.shape}"
        )
    p, q = spec.kernel
    xp = pad2d(x, spec.padding, spec.pad_mode)
    cols = im2col(xp, p, q, *spec.stride, ho, wo)
    g = upstream_grad.transpose(0, 2, 3, 1).reshape(-1, spec.out_channels)
    grads = LayerGradients()
    grads.params["weight"] = (g.T @ cols).reshape(weights.shape)
    if spec.has_bias:
        grads.params["bias"] = g.sum(axis=0)
    gcols = g @ weights.reshape(spec.out_channels, -1)
    gxp = col2im(gcols, xp.shape, p, q, *spec.stride, ho, wo)
    grads.input = pad2d_backward(gxp, spec.padding, spec.pad_mode)
    return grads


def _check_transposed(x: np.ndarray, spec: ConvSpec, weights: np.ndarray) -> None:
    check_tensor4(x)
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"input channels: expected {spec.in_channels}, got {x.shape[1]}")
    expected = (spec.in_channels, spec.out_channels, *spec.kernel)
    if weights.shape != expected:
        raise ShapeError(f"transposed weights: expected shape {expected}, got {weights.shape}")
    if spec.pad_mode != "zero":
        raise ValueError("transposed convolution supports zero padding only")


def transposed_conv2d(x: np.ndarray, spec: ConvSpec, weights: np.ndarray,
                      direction: Literal["forward", "backward"] = "forward",
                      bias: np.ndarray | None = None,
                      upstream_grad: np.ndarray | None = None):
    """Transposed convolution; weights are laid out ``(in, out, p, q)``.

    ``direction="forward"`` returns the output tensor, ``"backward"`` returns
    :class:`LayerGradients` for ``upstream_grad``.
    """
    _check_transposed(x, spec, weights)
    n, cin, h, w = x.shape
    ho, wo = spec.transposed_output_hw(h, w)
    p, q = spec.kernel
    sh, sw = spec.stride
    cout, pad = spec.out_channels, spec.padding
    full = (n, cout, (h - 1) * sh + p, (w - 1) * sw + q)
    wmat = weights.reshape(cin, -1)

    if direction == "forward":
        xmat = x.transpose(0, 2, 3, 1).reshape(-1, cin)
        y = col2im(xmat @ wmat, full, p, q, sh, sw, h, w)
        if pad:
            y = y[:, :, pad:pad + ho, pad:pad + wo]
        if bias is not None:
            y = y + bias.reshape(1, -1, 1, 1)
        return np.ascontiguousarray(y)

    if direction != "backward":
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    if upstream_grad is None or upstream_grad.shape != (n, cout, ho, wo):
        got = None if upstream_grad is None else upstream_grad.shape
        raise ShapeError(f"upstream gradient: expected {(n, cout, ho, wo)}, got {got}")
    gfull = pad2d(upstream_grad, pad)
    gcols = im2col(gfull, p, q, sh, sw, h, w)
    xmat = x.transpose(0, 2, 3, 1).reshape(-1, cin)
    grads = LayerGradients()
    grads.params["weight"] = (xmat.T @ gcols).reshape(weights.shape)
    if spec.has_bias:
        grads.params["bias"] = upstream_grad.sum(axis=(0, 2, 3))
    gx = gcols @ wmat.T
    grads.input = np.ascontiguousarray(gx.reshape(n, h, w, cin).transpose(0, 3, 1, 2))
    return grads


# --------------------------------------------------------------------------
# batch norm


@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray
    populated: bool = False


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    train: bool


def batch_statistics(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and biased variance over (n, h, w)."""
    return x.mean(axis=(0, 2, 3)), x.var(axis=(0, 2, 3))


def batchnorm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, running: RunningStats,
              mode: Literal["train", "eval"] = "train",
              momentum: float = BN_MOMENTUM, eps: float = BN_EPS) -> tuple[np.ndarray, BatchNormCache]:
    check_tensor4(x)
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must have length {c}, got {gamma.shape} and {beta.shape}")
    if x.shape[0] == 0 or x.size == 0:
        raise ShapeError("batch norm needs a non-empty batch")

    if mode == "train":
        mean, var = batch_statistics(x)
        count = x.size // c
        unbiased = var * (count / max(count - 1, 1))
        running.mean *= 1 - momentum
        running.mean += momentum * mean.astype(running.mean.dtype)
        running.var *= 1 - momentum
        running.var += momentum * unbiased.astype(running.var.dtype)
        running.populated = True
    elif mode == "eval":
        if not running.populated:
            raise ValueError("eval-mode batch norm needs populated running statistics")
        mean, var = running.mean, running.var
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    x_hat = (x - mean.astype(x.dtype).reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
    y = x_hat * gamma.reshape(1, -1, 1, 1) + beta.reshape(1, -1, 1, 1)
    return y, BatchNormCache(x_hat, inv_std, gamma, mode == "train")


def batchnorm_backward(cache: BatchNormCache, upstream_grad: np.ndarray) -> LayerGradients:
    g = upstream_grad
    grads = LayerGradients()
    grads.params["gamma"] = (g * cache.x_hat).sum(axis=(0, 2, 3))
    grads.params["beta"] = g.sum(axis=(0, 2, 3))
    gx_hat = g * cache.gamma.reshape(1, -1, 1, 1)
    inv_std = cache.inv_std.reshape(1, -1, 1, 1)
    if not cache.train:
        grads.input = gx_hat * inv_std
        return grads
    mean_g = gx_hat.mean(axis=(0, 2, 3), keepdims=True)
    mean_gx = (gx_hat * cache.x_hat).mean(axis=(0, 2, 3), keepdims=True)
    grads.input = (gx_hat - mean_g - cache.x_hat * mean_gx) * inv_std
    return grads


# --------------------------------------------------------------------------
# activations and pooling


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, upstream_grad: np.ndarray) -> np.ndarray:
    return upstream_grad * (x > 0)


def maxpool3s2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ResNet stem pooling: 3x3 window, stride 2, padding 1.

    Returns the pooled tensor and the flat argmax (0..8) of every window.
    Padded cells never win, matching the usual implicit -inf padding.
    """
    check_tensor4(x)
    n, c, h, w = x.shape
    ho, wo = (h - 1) // 2 + 1, (w - 1) // 2 + 1
    xp = pad2d(x, 1, value=-np.inf)
    stack = np.stack(
        [xp[:, :, i:i + 2 * (ho - 1) + 1:2, j:j + 2 * (wo - 1) + 1:2] for i in range(3) for j in range(3)],
        axis=-1,
    )
    arg = stack.argmax(axis=-1)
    return np.take_along_axis(stack, arg[..., None], axis=-1)[..., 0], arg


def maxpool3s2_backward(x_shape: tuple[int, ...], arg: np.ndarray, upstream_grad: np.ndarray) -> np.ndarray:
    n, c, h, w = x_shape
    ho, wo = arg.shape[2:]
    gp = np.zeros((n, c, h + 2, w + 2), dtype=upstream_grad.dtype)
    for k in range(9):
        i, j = divmod(k, 3)
        gp[:, :, i:i + 2 * (ho - 1) + 1:2, j:j + 2 * (wo - 1) + 1:2] += upstream_grad * (arg == k)
    return gp[:, :, 1:-1, 1:-1]


def avgpool3s1(x: np.ndarray) -> np.ndarray:
    """Size-preserving 3x3 mean with reflect padding.

    Sums run in float64 so a constant image maps back to itself exactly.
    """
    check_tensor4(x)
    xp = pad2d(x.astype(np.float64), 1, mode="reflect")
    h, w = x.shape[2:]
    acc = np.zeros(x.shape, dtype=np.float64)
    for i in range(3):
        for j in range(3):
            acc += xp[:, :, i:i + h, j:j + w]
    return (acc / 9.0).astype(x.dtype)


def avgpool3s1_backward(upstream_grad: np.ndarray) -> np.ndarray:
    n, c, h, w = upstream_grad.shape
    gp = np.zeros((n, c, h + 2, w + 2), dtype=upstream_grad.dtype)
    for i in range(3):
        for j in range(3):
            gp[:, :, i:i + h, j:j + w] += upstream_grad
    return pad2d_backward(gp / 9.0, 1, mode="reflect")


def _cell_edges(size: int, target: int) -> np.ndarray:
    return (np.arange(target + 1) * size) // target


def adaptive_avgpool(x: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Average over a non-overlapping partition into exactly target_h x target_w cells."""
    check_tensor4(x)
    n, c, h, w = x.shape
    if target_h > h or target_w > w or target_h < 1 or target_w < 1:
        raise ShapeError(f"adaptive pool target {(target_h, target_w)} exceeds input {(h, w)}")
    if h % target_h == 0 and w % target_w == 0:
        return x.reshape(n, c, target_h, h // target_h, target_w, w // target_w).mean(axis=(3, 5))
    eh, ew = _cell_edges(h, target_h), _cell_edges(w, target_w)
    sums = np.add.reduceat(np.add.reduceat(x, eh[:-1], axis=2), ew[:-1], axis=3)
    counts = np.outer(np.diff(eh), np.diff(ew)).astype(x.dtype)
    return sums / counts


def adaptive_avgpool_backward(x_shape: tuple[int, ...], upstream_grad: np.ndarray) -> np.ndarray:
    _, _, h, w = x_shape
    th, tw = upstream_grad.shape[2:]
    eh, ew = _cell_edges(h, th), _cell_edges(w, tw)
    rh, rw = np.diff(eh), np.diff(ew)
    g = upstream_grad / np.outer(rh, rw).astype(upstream_grad.dtype)
    return np.repeat(np.repeat(g, rh, axis=2), rw, axis=3)


def activations_and_pools(x: np.ndarray, kind: str, target_h: int | None = None,
                          target_w: int | None = None) -> np.ndarray:
    """Dispatch helper over relu / maxpool3s2 / avgpool3s1 / adaptive_avgpool."""
    if kind == "relu":
        return relu(x)
    if kind == "maxpool3s2":
        return maxpool3s2(x)[0]
    if kind == "avgpool3s1":
        return avgpool3s1(x)
    if kind == "adaptive_avgpool":
        if target_h is None or target_w is None:
            raise ValueError("adaptive_avgpool needs target_h and target_w")
        return adaptive_avgpool(x, target_h, target_w)
    raise ValueError(f"unknown activation/pool kind {kind!r}")


# --------------------------------------------------------------------------
# loss


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    return loss, (2.0 / diff.size) * diff
