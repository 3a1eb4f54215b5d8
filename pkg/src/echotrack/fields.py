"""Dense 2-D grid primitives: sampling, smoothing, pyramids.

Conventions used across the package
-----------------------------------
Scalar fields are float64 arrays of shape ``(H, W)`` indexed ``[row, col]``.
Vector fields are ``(H, W, 2)`` arrays whose last axis holds the ``(x, y)``
components: ``[..., 0]`` moves along columns, ``[..., 1]`` along rows.
Points are ``(x, y)`` pairs with the origin at the centre of the top-left
pixel.  Sampling and convolution clamp to the border everywhere, which
avoids spurious zero-intensity gradients at fan-shaped scan borders.

All functions are pure: inputs are never mutated and results only depend
on the arguments.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import TooManyLevels


def bilinear_sample(field: np.ndarray, x, y):
    """Sample ``field`` at continuous coordinates with border clamping.

    Parameters
    ----------
    field : (H, W) or (H, W, C) array
    x, y : scalars or arrays of matching shape, in pixel units

    Returns
    -------
    Values with the shape of ``x`` (plus a trailing channel axis for
    multi-channel fields).  Integer coordinates reproduce stored values
    exactly; out-of-domain queries clamp to the border.
    """
    f = np.asarray(field, dtype=np.float64)
    h, w = f.shape[:2]
    scalar_query = np.ndim(x) == 0 and np.ndim(y) == 0
    xq = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    yq = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xq), w - 2).astype(np.intp)
    y0 = np.minimum(np.floor(yq), h - 2).astype(np.intp)
    fx = xq - x0
    fy = yq - y0
    if f.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = (1.0 - fx) * f[y0, x0] + fx * f[y0, x0 + 1]
    bot = (1.0 - fx) * f[y0 + 1, x0] + fx * f[y0 + 1, x0 + 1]
    out = (1.0 - fy) * top + fy * bot
    if scalar_query and f.ndim == 2:
        return float(out)
    return out


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Discrete Gaussian truncated at 3*sigma and renormalized to sum 1."""
    radius = max(1, int(3.0 * sigma + 0.5))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(field: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with clamp-to-edge borders.

    ``sigma = 0`` returns the input unchanged.  Works on ``(H, W)`` and
    ``(H, W, C)`` arrays; channels are smoothed independently.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    f = np.asarray(field, dtype=np.float64)
    if sigma == 0:
        return f
    k = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(f, k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    return out


def pyramid_dims(height: int, width: int, levels: int) -> list[tuple[int, int]]:
    """Grid dimensions per level, halving with ceil rounding."""
    dims = []
    h, w = int(height), int(width)
    for _ in range(levels):
        dims.append((h, w))
        h = (h + 1) // 2
        w = (w + 1) // 2
    return dims


def build_pyramid(field: np.ndarray, levels: int) -> list[np.ndarray]:
    """Coarse-to-fine pyramid, level 0 at full resolution.

    Each downsampling step smooths with sigma=1 and keeps every second
    sample, so level k has dimensions ``ceil(dims / 2**k)``.

    Raises
    ------
    TooManyLevels
        If any requested level would drop below 2x2.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    f = np.asarray(field, dtype=np.float64)
    for h, w in pyramid_dims(f.shape[0], f.shape[1], levels):
        if h < 2 or w < 2:
            raise TooManyLevels(
                f"level below 2x2 for {f.shape[0]}x{f.shape[1]} with {levels} levels"
            )
    out = [f]
    for _ in range(levels - 1):
        smoothed = gaussian_smooth(out[-1], 1.0)
        out.append(smoothed[::2, ::2])
    return out


def check_same_dims(a: np.ndarray, b: np.ndarray, what: str = "fields") -> None:
    if a.shape[:2] != b.shape[:2]:
        from .errors import DimMismatch

        raise DimMismatch(f"{what} differ in size: {a.shape[:2]} vs {b.shape[:2]}")
