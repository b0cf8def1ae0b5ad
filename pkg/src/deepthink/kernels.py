"""Dense float32 primitives used by every other module.

All tensors are C-contiguous float32 ndarrays. Reductions inside softmax
and layer norm accumulate in float64 and cast back, which keeps outputs
stable without changing the storage precision of anything downstream.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeError

Tensor = np.ndarray

_GELU_C = math.sqrt(2.0 / math.pi)


def as_f32(x) -> Tensor:
    """Coerce to a C-contiguous float32 array."""
    return np.ascontiguousarray(x, dtype=np.float32)


def check_finite(name: str, x: Tensor) -> Tensor:
    if not np.all(np.isfinite(x)):
        raise ShapeError(f"{name} contains non-finite values")
    return x


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Row-major matrix product a[m,k] @ b[k,n]."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} vs {b.shape}")
    return (a @ b).astype(np.float32, copy=False)


def softmax_rows(x: Tensor) -> Tensor:
    """Per-row softmax with max subtraction; rows sum to 1."""
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted, dtype=np.float64)
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float) -> Tensor:
    """Per-row mean/variance normalization followed by an affine map."""
    if eps <= 0:
        raise ShapeError(f"layer_norm eps must be positive, got {eps}")
    if x.shape[-1] != gain.shape[-1] or x.shape[-1] != bias.shape[-1]:
        raise ShapeError(
            f"layer_norm width mismatch: x {x.shape}, gain {gain.shape}, bias {bias.shape}"
        )
    x64 = x.astype(np.float64)
    mean = x64.mean(axis=-1, keepdims=True)
    var = x64.var(axis=-1, keepdims=True)
    normed = (x64 - mean) / np.sqrt(var + eps)
    return (normed * gain + bias).astype(np.float32)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximation GELU, the variant GPT-2 checkpoints were trained with."""
    x = np.asarray(x, dtype=np.float32)
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    return (0.5 * x * (1.0 + np.tanh(inner))).astype(np.float32)
