"""Dense float64 tensor primitives shared by every stage of the pipeline.

Tensors are plain C-contiguous ``numpy`` arrays of ``float64`` (row-major,
``H x W x C`` for images, ``T x C`` for token sequences). All operations are
pure: inputs are never mutated and repeated calls give bit-identical output.
Spatial operations use replicate padding at borders throughout.
"""

from __future__ import annotations

import numpy as np


def as_tensor(x) -> np.ndarray:
    """Coerce to a C-contiguous float64 array without copying when possible."""
    return np.ascontiguousarray(x, dtype=np.float64)


def linear_map(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Affine map of row vectors: ``x @ w (+ bias)``.

    x: (T, Cin), w: (Cin, Cout), bias: (Cout,) or None.
    """
    x = as_tensor(x)
    w = as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(
            f"linear_map shape mismatch: x {x.shape} vs w {w.shape}"
        )
    out = x @ w
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (w.shape[1],):
            raise ValueError(f"bias shape {bias.shape} != ({w.shape[1]},)")
        out = out + bias
    return out


def layer_norm(
    x: np.ndarray,
    gain: np.ndarray,
    bias: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Per-token normalization over the channel axis, then affine.

    Each row of x (T, C) is standardized to mean 0 / population variance 1
    (eps guards constant rows), then scaled by ``gain`` and shifted by ``bias``.
    """
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError(f"layer_norm expects (T, C) with C >= 1, got {x.shape}")
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    normed = (x - mean) / np.sqrt(var + eps)
    return normed * as_tensor(gain) + as_tensor(bias)


def half_instance_norm(
    x: np.ndarray,
    gain: np.ndarray | None = None,
    bias: np.ndarray | None = None,
    eps: float = 1e-6,
) -> np.ndarray:
    """Instance-normalize the first half of the channels, pass the rest through.

    x: (H, W, C) with C even. The first C/2 channels are standardized over the
    spatial axes (per-channel mean 0 / variance 1, eps-guarded) and then given
    a learnable affine (identity when gain/bias are None); the remaining C/2
    channels are returned unchanged.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ValueError(f"half_instance_norm expects (H, W, C), got {x.shape}")
    c = x.shape[2]
    if c % 2 != 0:
        raise ValueError(f"half_instance_norm needs an even channel count, got {c}")
    half = c // 2
    head = x[:, :, :half]
    mean = head.mean(axis=(0, 1))
    var = head.var(axis=(0, 1))
    normed = (head - mean) / np.sqrt(var + eps)
    if gain is not None:
        normed = normed * as_tensor(gain)
    if bias is not None:
        normed = normed + as_tensor(bias)
    return np.concatenate([normed, x[:, :, half:]], axis=2)


def shift2d(x: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Sample x at (y + dy, x + dx) with replicate borders.

    x: (H, W, C). shift2d(x, 0, 1) moves image content one pixel to the left
    (each output pixel takes the value of its right-hand neighbour).
    """
    x = as_tensor(x)
    h, w = x.shape[0], x.shape[1]
    rows = np.clip(np.arange(h) + dy, 0, h - 1)
    cols = np.clip(np.arange(w) + dx, 0, w - 1)
    return x[np.ix_(rows, cols)]


def depthwise_conv3x3(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Per-channel 3x3 cross-correlation with replicate padding.

    x: (H, W, C), kernels: (3, 3, C).
    out[y, x, c] = sum_{dy,dx in -1..1} kernels[dy+1, dx+1, c] * x[y+dy, x+dx, c]
    """
    x = as_tensor(x)
    kernels = as_tensor(kernels)
    if x.ndim != 3:
        raise ValueError(f"depthwise_conv3x3 expects (H, W, C), got {x.shape}")
    if kernels.shape != (3, 3, x.shape[2]):
        raise ValueError(
            f"kernels shape {kernels.shape} != (3, 3, {x.shape[2]})"
        )
    out = np.zeros_like(x)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out += kernels[dy + 1, dx + 1] * shift2d(x, dy, dx)
    return out


def conv3x3(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Full 3x3 cross-correlation mixing channels, replicate padding.

    x: (H, W, Cin), kernels: (3, 3, Cin, Cout), bias: (Cout,) or None.
    Implemented as patch extraction followed by one matrix product.
    """
    x = as_tensor(x)
    kernels = as_tensor(kernels)
    if x.ndim != 3 or kernels.ndim != 4 or kernels.shape[:3] != (3, 3, x.shape[2]):
        raise ValueError(
            f"conv3x3 shape mismatch: x {x.shape} vs kernels {kernels.shape}"
        )
    h, w, cin = x.shape
    cout = kernels.shape[3]
    patches = np.empty((h, w, 9, cin))
    i = 0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            patches[:, :, i, :] = shift2d(x, dy, dx)
            i += 1
    out = patches.reshape(h * w, 9 * cin) @ kernels.reshape(9 * cin, cout)
    if bias is not None:
        out = out + as_tensor(bias)
    return out.reshape(h, w, cout)


def _axis_weights(n_out: int, n_in: int, factor: int):
    """Source indices and lerp weights for align-corners-false interpolation."""
    src = (np.arange(n_out) + 0.5) / factor - 0.5
    lo = np.floor(src).astype(np.int64)
    frac = src - lo
    lo_cl = np.clip(lo, 0, n_in - 1)
    hi_cl = np.clip(lo + 1, 0, n_in - 1)
    return lo_cl, hi_cl, frac


def bilinear_upsample(x: np.ndarray, factor: int) -> np.ndarray:
    """Bilinear upsampling by an integer factor, align-corners-false.

    x: (h, w, C) -> (h*factor, w*factor, C); edge pixels are clamped.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ValueError(f"bilinear_upsample expects (h, w, C), got {x.shape}")
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return x.copy()
    h, w, _ = x.shape
    ylo, yhi, fy = _axis_weights(h * factor, h, factor)
    rows = x[ylo] * (1.0 - fy)[:, None, None] + x[yhi] * fy[:, None, None]
    xlo, xhi, fx = _axis_weights(w * factor, w, factor)
    return rows[:, xlo] * (1.0 - fx)[None, :, None] + rows[:, xhi] * fx[None, :, None]


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable elementwise logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def concat(parts: list[np.ndarray], axis: int = 0) -> np.ndarray:
    return np.concatenate([as_tensor(p) for p in parts], axis=axis)


def split(x: np.ndarray, sizes: list[int], axis: int = 0) -> list[np.ndarray]:
    """Split along ``axis`` into chunks of the given sizes (must sum exactly)."""
    x = as_tensor(x)
    if sum(sizes) != x.shape[axis]:
        raise ValueError(
            f"split sizes {sizes} sum to {sum(sizes)}, axis has {x.shape[axis]}"
        )
    bounds = np.cumsum(sizes)[:-1]
    return [as_tensor(p) for p in np.split(x, bounds, axis=axis)]


def flatten_hw(x: np.ndarray) -> np.ndarray:
    """(H, W, C) -> (H*W, C) in row-major raster order."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ValueError(f"flatten_hw expects (H, W, C), got {x.shape}")
    return x.reshape(x.shape[0] * x.shape[1], x.shape[2])


def unflatten_hw(x: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    """(H*W, C) -> (H, W, C); inverse of flatten_hw."""
    x = as_tensor(x)
    h, w = hw
    if x.ndim != 2 or x.shape[0] != h * w:
        raise ValueError(f"unflatten_hw: {x.shape} incompatible with hw={hw}")
    return x.reshape(h, w, x.shape[1])
