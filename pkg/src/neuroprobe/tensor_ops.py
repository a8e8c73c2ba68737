"""Dense tensor kernels for the generator forward pass.

A featuremap ("Tensor3") is a C-contiguous float32 ndarray of shape
(channels, height, width); flattening order is channel-major, then row,
then column.  Every kernel here is a pure function and deterministic:
identical inputs give bit-identical outputs, and the batched variants
(leading sample axis) produce bit-identical per-sample results no matter
how samples are grouped into batches.  That last property is what keeps
activation signs, and therefore all rate statistics downstream, stable
across batch sizes and thread counts.

Convolution and the latent projection accumulate in float64 with a fixed
summation order (bias first, then taps in (in_channel, ky, kx) order) and
round to float32 once at the end.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

__all__ = [
    "as_tensor3",
    "conv2d",
    "conv2d_batch",
    "upsample2x",
    "upsample2x_batch",
    "leaky_relu",
    "pixelnorm",
    "pixelnorm_batch",
    "project_latent",
    "project_latent_batch",
]


def as_tensor3(x) -> np.ndarray:
    """Validate and return ``x`` as a float32 (C, H, W) featuremap."""
    arr = np.ascontiguousarray(x, dtype=np.float32)
    if arr.ndim != 3:
        raise ShapeError(f"expected a (C, H, W) tensor, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"all dimensions must be >= 1, got shape {arr.shape}")
    return arr


def conv2d_batch(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-size 2-D convolution over a batch.

    Args:
        x: (N, in_ch, H, W) float32.
        weights: (out_ch, in_ch, k, k) with odd k; zero padding (k-1)//2, stride 1.
        bias: (out_ch,).

    Returns:
        (N, out_ch, H, W) float32.
    """
    x = np.asarray(x)
    weights = np.asarray(weights, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    if x.ndim != 4:
        raise ShapeError(f"expected (N, C, H, W) input, got shape {x.shape}")
    if weights.ndim != 4 or weights.shape[2] != weights.shape[3]:
        raise ShapeError(f"expected (out, in, k, k) weights, got shape {weights.shape}")
    out_ch, in_ch, k, _ = weights.shape
    if k % 2 != 1:
        raise ShapeError(f"kernel size must be odd, got {k}")
    if x.shape[1] != in_ch:
        raise ShapeError(f"input has {x.shape[1]} channels, weights expect {in_ch}")
    if bias.shape != (out_ch,):
        raise ShapeError(f"bias shape {bias.shape} does not match {out_ch} output channels")

    n, _, h, w = x.shape
    pad = (k - 1) // 2
    xp = np.zeros((n, in_ch, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    xp[:, :, pad:pad + h, pad:pad + w] = x
    w64 = weights.astype(np.float64)

    out = np.empty((n, out_ch, h, w), dtype=np.float32)
    acc = np.empty((n, h, w), dtype=np.float64)
    for o in range(out_ch):
        acc[:] = np.float64(bias[o])
        for i in range(in_ch):
            for dy in range(k):
                for dx in range(k):
                    tap = w64[o, i, dy, dx]
                    if tap != 0.0:
                        # Adding an exact 0.0 contribution cannot change the
                        # accumulator, so skipping zero taps preserves
                        # bit-exactness while speeding up sparse kernels.
                        acc += tap * xp[:, i, dy:dy + h, dx:dx + w]
        out[:, o] = acc.astype(np.float32)
    return out


def conv2d(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-size zero-padded convolution of one (C, H, W) featuremap."""
    return conv2d_batch(as_tensor3(x)[None], weights, bias)[0]


def upsample2x_batch(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor 2x upsampling: each pixel becomes a 2x2 block."""
    return np.repeat(np.repeat(x, 2, axis=-2), 2, axis=-1)


def upsample2x(x: np.ndarray) -> np.ndarray:
    return upsample2x_batch(as_tensor3(x))


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    """Elementwise x if x > 0 else slope * x.  Sign-preserving for slope > 0.

    Works on any shape; slope must lie in [0, 1).
    """
    if not 0.0 <= slope < 1.0:
        raise ShapeError(f"slope must be in [0, 1), got {slope}")
    x = np.asarray(x, dtype=np.float32)
    return np.where(x > 0, x, np.float32(slope) * x)


def pixelnorm_batch(x: np.ndarray, epsilon: float) -> np.ndarray:
    """Divide each spatial location's channel vector by sqrt(mean square + eps).

    The reduction runs in float64 so per-sample results do not depend on
    batch composition.  Signs are preserved (the divisor is positive).
    """
    if epsilon <= 0:
        raise ShapeError(f"epsilon must be > 0, got {epsilon}")
    x64 = np.asarray(x).astype(np.float64)
    ms = np.mean(x64 * x64, axis=-3, keepdims=True)
    return (x64 / np.sqrt(ms + epsilon)).astype(np.float32)


def pixelnorm(x: np.ndarray, epsilon: float) -> np.ndarray:
    return pixelnorm_batch(as_tensor3(x), epsilon)


BASE_SIDE = 4  # spatial side of the projected base featuremap


def project_latent_batch(z: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine projection of latent rows to (N, C0, 4, 4).

    Args:
        z: (N, D) latents.
        weights: (C0 * 16, D).
        bias: (C0 * 16,).
    """
    z = np.asarray(z)
    weights = np.asarray(weights, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    if z.ndim != 2:
        raise ShapeError(f"expected (N, D) latents, got shape {z.shape}")
    n, d = z.shape
    if weights.ndim != 2 or weights.shape[1] != d:
        raise ShapeError(
            f"projection weights shape {weights.shape} does not match latent dim {d}")
    m = weights.shape[0]
    if m % (BASE_SIDE * BASE_SIDE) != 0:
        raise ShapeError(
            f"projection rows {m} not divisible by {BASE_SIDE * BASE_SIDE}")
    if bias.shape != (m,):
        raise ShapeError(f"projection bias shape {bias.shape} does not match ({m},)")
    channels = m // (BASE_SIDE * BASE_SIDE)

    z64 = z.astype(np.float64)
    w64 = weights.astype(np.float64)
    acc = np.tile(bias.astype(np.float64), (n, 1))
    for j in range(d):
        col = w64[:, j]
        acc += z64[:, j:j + 1] * col[None, :]
    return acc.astype(np.float32).reshape(n, channels, BASE_SIDE, BASE_SIDE)


def project_latent(z: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Project one latent vector to a (C0, 4, 4) featuremap."""
    z = np.asarray(z, dtype=np.float32)
    if z.ndim != 1:
        raise ShapeError(f"expected a 1-D latent vector, got shape {z.shape}")
    return project_latent_batch(z[None], weights, bias)[0]
