"""Forward-only numpy kernels.

These are the single source of truth for forward arithmetic: the tape ops in
`autodiff` call them for their forward pass, and no-gradient rollouts call
them directly. That makes trained-mode and inference-mode computation
bitwise identical by construction.

Module is signature-compatible with `autodiff` for the op subset used by the
model step functions, so a step function can run in either mode by swapping
the ops namespace.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError


def param(p) -> np.ndarray:
    """Unwrap a parameter leaf to its raw array (no-gradient mode)."""
    return p.data


def _windows(x: np.ndarray, padding: str) -> np.ndarray:
    """(B,H,W,C) -> (B,H,W,C,3,3) view of each cell's padded neighborhood."""
    mode = "wrap" if padding == "toroidal" else "constant"
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)), mode=mode)
    return sliding_window_view(padded, (3, 3), axis=(1, 2))


def depthwise_stencil(x: np.ndarray, kernels: np.ndarray, padding: str = "zero") -> np.ndarray:
    """Correlate each channel with each 3x3 kernel; blocks ordered by kernel.

    (B,H,W,C) -> (B,H,W,K*C). The kernel values multiply the neighborhood
    as-is (correlation, no flipping); an identity kernel copies its input
    exactly.
    """
    if x.ndim != 4:
        raise ShapeError(f"stencil input must be (B,H,W,C), got {x.shape}")
    if padding not in ("zero", "toroidal"):
        raise ValueError(f"unknown padding mode {padding!r}")
    kern = np.asarray(kernels, dtype=x.dtype)
    if kern.ndim != 3 or kern.shape[1:] != (3, 3):
        raise ShapeError(f"kernels must be (K,3,3), got {kern.shape}")
    b, h, w, c = x.shape
    k = kern.shape[0]
    out = np.einsum("bhwcij,kij->bhwkc", _windows(x, padding), kern, optimize=True)
    return np.ascontiguousarray(out.reshape(b, h, w, k * c))


def depthwise_stencil_adjoint(gout: np.ndarray, kernels: np.ndarray, c: int,
                              padding: str = "zero") -> np.ndarray:
    """Gradient of depthwise_stencil w.r.t. its input.

    The adjoint of correlation is correlation with the spatially flipped
    kernel, under the matching boundary rule (circular for toroidal, zero
    elsewhere).
    """
    b, h, w, _ = gout.shape
    kern = np.asarray(kernels, dtype=gout.dtype)
    flipped = kern[:, ::-1, ::-1]
    blocks = gout.reshape(b, h, w, kern.shape[0], c)
    mode = "wrap" if padding == "toroidal" else "constant"
    padded = np.pad(blocks, ((0, 0), (1, 1), (1, 1), (0, 0), (0, 0)), mode=mode)
    gx = np.zeros((b, h, w, c), dtype=gout.dtype)
    for ki, di, dj, tap in stencil_taps(flipped):
        gx += tap * padded[:, di:di + h, dj:dj + w, ki, :]
    return gx


def stencil_taps(kern: np.ndarray):
    """Nonzero taps of a kernel stack as (kernel_index, di, dj, value)."""
    return [(ki, di, dj, kern[ki, di, dj])
            for ki in range(kern.shape[0]) for di in range(3) for dj in range(3)
            if kern[ki, di, dj] != 0]


def pointwise_dense(x: np.ndarray, weight, bias=None) -> np.ndarray:
    """Per-position linear map over channels: out = x @ W.T (+ b)."""
    w = np.asarray(weight, dtype=x.dtype)
    if w.ndim != 2 or w.shape[1] != x.shape[-1]:
        raise ShapeError(f"weight {w.shape} does not accept {x.shape[-1]} input channels")
    lead = x.shape[:-1]
    out = (x.reshape(-1, x.shape[-1]) @ w.T).reshape(lead + (w.shape[0],))
    if bias is not None:
        b = np.asarray(bias, dtype=x.dtype)
        if b.shape != (w.shape[0],):
            raise ShapeError(f"bias {b.shape} does not match {w.shape[0]} outputs")
        out = out + b
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return a + b


def scale(x: np.ndarray, factor: float) -> np.ndarray:
    return x * x.dtype.type(factor)


def hadamard_mask(x: np.ndarray, mask) -> np.ndarray:
    out = x * np.asarray(mask, dtype=x.dtype)
    if out.shape != x.shape:
        raise ShapeError(f"mask broadcasts {x.shape} to {out.shape}")
    return out


def channel_concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(list(parts), axis=-1)


def channel_slice(x: np.ndarray, sl: slice) -> np.ndarray:
    return x[..., sl]


def channel_scatter(x: np.ndarray, n_total: int, indices: Sequence[int]) -> np.ndarray:
    idx = list(indices)
    if len(idx) != x.shape[-1]:
        raise ShapeError(f"{len(idx)} indices for {x.shape[-1]} channels")
    out = np.zeros(x.shape[:-1] + (n_total,), dtype=x.dtype)
    out[..., idx] = x
    return out


def pixelwise_mse(pred: np.ndarray, target, channels: slice | None = None):
    sl = channels if channels is not None else slice(None)
    tgt = np.asarray(target, dtype=pred.dtype)
    diff = pred[..., sl] - tgt
    if diff.shape != tgt.shape:
        raise ShapeError(f"target shape {tgt.shape} != prediction slice {diff.shape}")
    return np.asarray((diff * diff).sum() / diff.size, dtype=pred.dtype)
