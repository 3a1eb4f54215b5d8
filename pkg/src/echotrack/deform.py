"""Diffeomorphic deformation core.

A deformation is stored as a displacement field ``d`` of shape
``(H, W, 2)`` with the mapping convention ``phi(p) = p + d(p)``; the
identity is the zero array.  Displacements produced by the motion
estimators describe forward content motion: a material point at ``p``
in the earlier frame sits at ``phi(p)`` in the later one.

Stationary velocity fields are turned into deformations by scaling and
squaring: scale the velocity by ``2**-S``, then compose the small
deformation with itself ``S`` times.
"""

from __future__ import annotations

import numpy as np

from .errors import DimMismatch, NonFinite
from .fields import bilinear_sample, check_same_dims


def identity_displacement(height: int, width: int) -> np.ndarray:
    """Zero displacement field (the identity mapping)."""
    return np.zeros((height, width, 2), dtype=np.float64)


def grid_coords(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel-centre coordinate grids ``(X, Y)``, each of shape (H, W)."""
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(np.float64), ys.astype(np.float64)


def compose(disp_a: np.ndarray, disp_b: np.ndarray) -> np.ndarray:
    """Displacement of ``phi_a o phi_b``, i.e. ``p -> phi_a(phi_b(p))``.

    ``phi_a``'s displacement is sampled bilinearly at ``phi_b(p)``.
    """
    a = np.asarray(disp_a, dtype=np.float64)
    b = np.asarray(disp_b, dtype=np.float64)
    check_same_dims(a, b, "deformations")
    h, w = b.shape[:2]
    xs, ys = grid_coords(h, w)
    sampled = bilinear_sample(a, xs + b[..., 0], ys + b[..., 1])
    return b + sampled


def integrate_svf(velocity: np.ndarray, squaring_steps: int = 7) -> np.ndarray:
    """Exponentiate a stationary velocity field into a deformation.

    Returns the displacement of ``exp(v)``.  Zero velocity yields the
    identity exactly.

    Raises
    ------
    NonFinite
        If the velocity contains NaN or infinite entries.
    """
    if squaring_steps < 1:
        raise ValueError("squaring_steps must be >= 1")
    v = np.asarray(velocity, dtype=np.float64)
    if v.ndim != 3 or v.shape[2] != 2:
        raise ValueError("velocity must have shape (H, W, 2)")
    if not np.all(np.isfinite(v)):
        raise NonFinite("velocity field contains non-finite entries")
    disp = v * (2.0 ** -squaring_steps)
    for _ in range(squaring_steps):
        disp = compose(disp, disp)
    return disp


def warp_image(img: np.ndarray, disp: np.ndarray) -> np.ndarray:
    """Resample ``img`` through a deformation: ``out(p) = img(p + d(p))``."""
    f = np.asarray(img, dtype=np.float64)
    d = np.asarray(disp, dtype=np.float64)
    check_same_dims(f, d, "image and deformation")
    h, w = f.shape[:2]
    xs, ys = grid_coords(h, w)
    return bilinear_sample(f, xs + d[..., 0], ys + d[..., 1])


def jacobian_determinant(disp: np.ndarray) -> np.ndarray:
    """Per-pixel determinant of the Jacobian of ``phi(p) = p + d(p)``.

    Central differences with unit spacing in the interior, one-sided at
    the borders.  The identity mapping yields 1 everywhere.
    """
    d = np.asarray(disp, dtype=np.float64)
    if d.shape[0] < 3 or d.shape[1] < 3:
        raise ValueError("jacobian needs at least a 3x3 grid")
    du_dy, du_dx = np.gradient(d[..., 0])
    dv_dy, dv_dx = np.gradient(d[..., 1])
    return (1.0 + du_dx) * (1.0 + dv_dy) - du_dy * dv_dx
