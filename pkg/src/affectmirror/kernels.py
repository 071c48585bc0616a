"""Inference kernels shared by the emotion classifier and the language model.

Everything is float32, pure, and shape-checked. Convolution is
cross-correlation (no kernel flip) over HWC tensors, matching the layout the
weight converters produce.
"""

from __future__ import annotations

import numpy as np

from .errors import BadGrouping, ShapeMismatch

F32 = np.float32


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-d operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dims differ: {a.shape} x {b.shape}")
    return (a.astype(F32) @ b.astype(F32)).astype(F32)


def conv2d(
    x: np.ndarray,
    kernels: np.ndarray,
    stride: int = 1,
    padding: str = "valid",
    groups: int = 1,
) -> np.ndarray:
    """Cross-correlate x (h, w, c_in) with kernels (kh, kw, c_in/groups, c_out).

    "same" zero-pads so spatial dims are preserved at stride 1; "valid" does
    not pad. groups = c_in with single-channel kernels gives depthwise
    convolution.
    """
    if x.ndim != 3 or kernels.ndim != 4:
        raise ShapeMismatch(f"conv2d got input {x.shape}, kernels {kernels.shape}")
    if padding not in ("same", "valid"):
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    h, w, c_in = x.shape
    kh, kw, k_cin, c_out = kernels.shape
    if groups < 1 or c_in % groups or c_out % groups:
        raise BadGrouping(f"groups={groups} does not divide c_in={c_in}, c_out={c_out}")
    if k_cin != c_in // groups:
        raise ShapeMismatch(
            f"kernel expects {k_cin} input channels per group, have {c_in // groups}"
        )
    x = x.astype(F32)
    kernels = kernels.astype(F32)
    if padding == "same":
        out_h = -(-h // stride)
        out_w = -(-w // stride)
        pad_h = max(0, (out_h - 1) * stride + kh - h)
        pad_w = max(0, (out_w - 1) * stride + kw - w)
        x = np.pad(
            x,
            (
                (pad_h // 2, pad_h - pad_h // 2),
                (pad_w // 2, pad_w - pad_w // 2),
                (0, 0),
            ),
        )
        h, w = x.shape[:2]
    if kh > h or kw > w:
        raise ShapeMismatch(f"kernel {kh}x{kw} larger than padded input {h}x{w}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
    windows = windows[::stride, ::stride]  # (oh, ow, c_in, kh, kw)
    if groups == 1:
        out = np.einsum("xyckl,klcf->xyf", windows, kernels, dtype=F32)
    else:
        cpg, fpg = c_in // groups, c_out // groups
        parts = []
        for g in range(groups):
            wg = windows[:, :, g * cpg : (g + 1) * cpg]
            kg = kernels[:, :, :, g * fpg : (g + 1) * fpg]
            parts.append(np.einsum("xyckl,klcf->xyf", wg, kg, dtype=F32))
        out = np.concatenate(parts, axis=2)
    return out.astype(F32)


def layernorm(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Normalize over the last axis with population variance, then scale-shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch(f"gamma/beta must be ({d},), got {gamma.shape}/{beta.shape}")
    if eps <= 0:
        raise ValueError("eps must be > 0")
    x = x.astype(F32)
    mean = x.mean(axis=-1, keepdims=True, dtype=F32)
    var = np.square(x - mean).mean(axis=-1, keepdims=True, dtype=F32)
    norm = (x - mean) / np.sqrt(var + F32(eps))
    return (norm * gamma.astype(F32) + beta.astype(F32)).astype(F32)


_GELU_C = F32(0.7978845608028654)  # sqrt(2 / pi)


def gelu(x: np.ndarray) -> np.ndarray:
    """tanh-approximation gelu: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    x = np.asarray(x, dtype=F32)
    return (F32(0.5) * x * (1 + np.tanh(_GELU_C * (x + F32(0.044715) * x * x * x)))).astype(F32)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax; rows sum to 1 and never overflow."""
    x = np.asarray(logits, dtype=F32)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted, dtype=F32)
    return (e / e.sum(axis=axis, keepdims=True, dtype=F32)).astype(F32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0).astype(F32)


def pool2d(x: np.ndarray, k: int, stride: int, mode: str = "max") -> np.ndarray:
    if x.ndim != 3:
        raise ShapeMismatch(f"pool2d needs (h, w, c), got {x.shape}")
    h, w, _ = x.shape
    if k > h or k > w:
        raise ShapeMismatch(f"pool window {k} larger than input {h}x{w}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(0, 1))
    windows = windows[::stride, ::stride]
    if mode == "max":
        return windows.max(axis=(3, 4)).astype(F32)
    if mode == "avg":
        return windows.mean(axis=(3, 4), dtype=F32)
    raise ValueError(f"unknown pool mode {mode!r}")


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    if x.ndim != 3:
        raise ShapeMismatch(f"global_avg_pool needs (h, w, c), got {x.shape}")
    return x.mean(axis=(0, 1), dtype=F32)
