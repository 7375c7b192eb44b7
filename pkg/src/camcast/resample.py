"""Exact area-weighted (box filter) image resampling.

Each output pixel is the average of its footprint in the source grid, with
boundary source pixels weighted by fractional overlap. Resampling to the
same size is the identity, and the operation is monotone in intensity
because every output is a convex combination of inputs.
"""

from __future__ import annotations

import numpy as np


def area_weights(n_src: int, n_dst: int) -> np.ndarray:
    """Row-stochastic (n_dst, n_src) matrix of box-filter weights."""
    if n_src <= 0 or n_dst <= 0:
        raise ValueError("dimensions must be positive")
    if n_dst > n_src:
        raise ValueError(f"area resampling only reduces: {n_src} -> {n_dst}")
    weights = np.zeros((n_dst, n_src), dtype=np.float64)
    ratio = n_src / n_dst
    for i in range(n_dst):
        lo = i * ratio
        hi = (i + 1) * ratio
        j_first = int(np.floor(lo))
        j_last = min(int(np.ceil(hi)), n_src)
        for j in range(j_first, j_last):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                weights[i, j] = overlap / ratio
    return weights


def area_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Box-filter an (H, W, C) or (H, W) float image down to (out_h, out_w)."""
    image = np.asarray(image, dtype=np.float64)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[:, :, None]
    h, w, _ = image.shape
    rows = area_weights(h, out_h)
    cols = area_weights(w, out_w)
    out = np.einsum("ai,bj,ijc->abc", rows, cols, image, optimize=True)
    return out[:, :, 0] if squeeze else out
