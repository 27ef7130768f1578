"""Dense array primitives shared by the whole pipeline.

Arrays are plain ``numpy.ndarray`` in float64, row-major.  Spatial
operations treat the last two axes as (rows, cols) unless stated
otherwise.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np


def resample_bilinear(t: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize the last two axes to (out_h, out_w) with corner-aligned
    bilinear interpolation.

    Corner-aligned means input corners map exactly to output corners,
    so resampling to the same size is an exact copy and the operator is
    linear in the input values.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be >= 1, got ({out_h}, {out_w})")
    t = np.asarray(t, dtype=np.float64)
    if t.ndim < 2:
        raise ValueError("need at least two axes to resample")
    h, w = t.shape[-2], t.shape[-1]
    if h == 0 or w == 0:
        raise ValueError("cannot resample a zero-sized axis")
    if (out_h, out_w) == (h, w):
        return t.copy()

    rows = _corner_grid(h, out_h)
    cols = _corner_grid(w, out_w)
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r0 = np.minimum(r0, h - 1 - (h > 1))
    c0 = np.minimum(c0, w - 1 - (w > 1))
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)

    flat = t.reshape(-1, h, w)
    top = flat[:, r0[:, None], c0[None, :]] * (1 - fc) + flat[:, r0[:, None], c1[None, :]] * fc
    bot = flat[:, r1[:, None], c0[None, :]] * (1 - fc) + flat[:, r1[:, None], c1[None, :]] * fc
    out = top * (1 - fr) + bot * fr
    return out.reshape(t.shape[:-2] + (out_h, out_w))


def _corner_grid(n_in: int, n_out: int) -> np.ndarray:
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out) * (n_in - 1) / (n_out - 1)


def pool(t: np.ndarray, kind: str, kernel: Sequence[int]) -> np.ndarray:
    """Windowed pooling with centered windows and truncated borders.

    ``kernel`` gives one odd extent per axis of ``t`` (1 = no pooling on
    that axis).  Border windows shrink to the part that intersects the
    array, so no padding values are invented: the average of a constant
    array is that constant everywhere.
    """
    t = np.asarray(t, dtype=np.float64)
    kernel = tuple(int(k) for k in kernel)
    if len(kernel) != t.ndim:
        raise ValueError(f"kernel has {len(kernel)} extents for a {t.ndim}-d array")
    if any(k < 1 or k % 2 == 0 for k in kernel):
        raise ValueError(f"kernel extents must be odd and >= 1, got {kernel}")
    if kind not in ("avg", "max"):
        raise ValueError(f"unknown pooling kind {kind!r}")

    if kind == "max":
        out = t
        for axis, k in enumerate(kernel):
            if k > 1:
                out = _axis_reduce(out, axis, k, np.maximum)
        return out.copy() if out is t else out

    sums = t
    counts = np.ones_like(t)
    for axis, k in enumerate(kernel):
        if k > 1:
            sums = _axis_reduce(sums, axis, k, np.add)
            counts = _axis_reduce(counts, axis, k, np.add)
    return sums / counts


def _axis_reduce(t: np.ndarray, axis: int, k: int, op) -> np.ndarray:
    """Combine each element with its +-(k//2) neighbours along one axis."""
    half = k // 2
    out = t.copy()
    n = t.shape[axis]
    for off in range(1, half + 1):
        if off >= n:
            break
        src_lo = _axis_slice(t, axis, off, n)
        dst_lo = _axis_slice(out, axis, 0, n - off)
        op(dst_lo, src_lo, out=dst_lo)
        src_hi = _axis_slice(t, axis, 0, n - off)
        dst_hi = _axis_slice(out, axis, off, n)
        op(dst_hi, src_hi, out=dst_hi)
    return out


def _axis_slice(t: np.ndarray, axis: int, start: int, stop: int) -> np.ndarray:
    idx = [slice(None)] * t.ndim
    idx[axis] = slice(start, stop)
    return t[tuple(idx)]


def concat_axis(ts: Sequence[np.ndarray], axis: int) -> np.ndarray:
    """Concatenate along one axis; all other extents must agree."""
    if not ts:
        raise ValueError("nothing to concatenate")
    arrays = [np.asarray(t, dtype=np.float64) for t in ts]
    ref = arrays[0].shape
    for a in arrays[1:]:
        if a.ndim != len(ref):
            raise ValueError("rank mismatch in concat")
        for ax, (la, lb) in enumerate(zip(ref, a.shape)):
            if ax != (axis % len(ref)) and la != lb:
                raise ValueError(
                    f"off-axis shape mismatch on axis {ax}: {ref} vs {a.shape}"
                )
    return np.concatenate(arrays, axis=axis)
