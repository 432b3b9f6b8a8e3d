"""Kernels for the first-order linear recurrence ``x_k = a_k * x_{k-1} + b_k``.

Both kernels take the token axis explicitly and return every state. The
parallel kernel evaluates the associative operator

    (a1, b1) . (a2, b2) = (a2 * a1, a2 * b1 + b2)

inside fixed-size blocks (all blocks advance together), scans the block
totals recursively to get the state entering each block, then patches every
block with that state. Work is O(K) and the number of dependent steps is
about block + K / block instead of K.
"""
from __future__ import annotations

import numpy as np


def scan_sequential(a: np.ndarray, b: np.ndarray, x0: np.ndarray, axis: int = 0, block: int = 32) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    b = np.moveaxis(b, axis, 0)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b, x0))
    x = x0
    for k in range(a.shape[0]):
        x = a[k] * x + b[k]
        out[k] = x
    return np.moveaxis(out, 0, axis)


def compose(first: tuple, second: tuple) -> tuple:
    """Apply ``first`` then ``second``: returns the combined (decay, drive)."""
    a1, b1 = first
    a2, b2 = second
    return a2 * a1, a2 * b1 + b2


def block_prefix(a: np.ndarray, b: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive prefix compositions along ``axis``, every other axis at once.

    Returns ``(A, B)`` with ``x_k = A_k * x_before + B_k``.
    """
    pa = np.empty(a.shape, dtype=a.dtype)
    pb = np.empty(a.shape, dtype=a.dtype)
    lead = (slice(None),) * axis
    pa[lead + (0,)] = a[lead + (0,)]
    pb[lead + (0,)] = b[lead + (0,)]
    for k in range(1, a.shape[axis]):
        cur, prev = lead + (k,), lead + (k - 1,)
        np.multiply(a[cur], pa[prev], out=pa[cur])
        np.multiply(a[cur], pb[prev], out=pb[cur])
        pb[cur] += b[cur]
    return pa, pb


def scan_parallel(a: np.ndarray, b: np.ndarray, x0: np.ndarray, axis: int = 0, block: int = 32) -> np.ndarray:
    if block < 2:
        raise ValueError("block size must be at least 2")
    dtype = np.result_type(a, b, x0)
    a, b = np.broadcast_arrays(np.asarray(a, dtype=dtype), np.asarray(b, dtype=dtype))
    axis = axis % a.ndim
    K = a.shape[axis]
    if K <= block:
        pa, pb = block_prefix(a, b, axis)
        return pa * np.expand_dims(x0, axis) + pb
    nblocks = -(-K // block)
    pad = nblocks * block - K
    if pad:
        tail = a.shape[:axis] + (pad,) + a.shape[axis + 1:]
        a = np.concatenate([a, np.ones(tail, dtype=dtype)], axis=axis)
        b = np.concatenate([b, np.zeros(tail, dtype=dtype)], axis=axis)
    shape = a.shape[:axis] + (nblocks, block) + a.shape[axis + 1:]
    pa, pb = block_prefix(a.reshape(shape), b.reshape(shape), axis + 1)
    # state at the end of every block, then the state entering every block
    last = (slice(None),) * (axis + 1) + (-1,)
    ends = scan_parallel(pa[last], pb[last], x0, axis=axis, block=block)
    entering = np.concatenate([np.expand_dims(x0, axis).astype(dtype), np.delete(ends, -1, axis=axis)], axis=axis)
    out = pa * np.expand_dims(entering, axis + 1) + pb
    out = out.reshape(a.shape)
    if pad:
        out = np.delete(out, np.s_[K:], axis=axis)
    return out
