"""Synthetic sequences with exact ground-truth tracklets.

Two generators:

* ``translation``: the whole texture drifts by a constant number of
  pixels per frame; ground truth is exact.
* ``svf``: a fixed smooth velocity field is scaled by a breathing-like
  sinusoidal amplitude; frame k is the texture pulled back through the
  inverse map and landmarks follow the forward map, so the per-frame
  deformation is bounded by ``max_step`` pixels and landmarks oscillate
  instead of leaving the frame.

Frames are written as 16-bit grayscale PNGs along with an annotation
file covering every frame, which is what the acceptance checks consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .deform import integrate_svf, warp_image
from .fields import bilinear_sample, gaussian_smooth
from .tracker import Tracklet


@dataclass
class SynthResult:
    frames: list[np.ndarray]
    tracklets: list[Tracklet]


def make_texture(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Smoothed speckle texture in [0.05, 0.95] with trackable structure."""
    noise = gaussian_smooth(rng.standard_normal((height, width)), 1.5)
    lo, hi = noise.min(), noise.max()
    return 0.05 + 0.9 * (noise - lo) / (hi - lo)


def _cosine_plateau(n: int, roll: int = 16) -> np.ndarray:
    """1 in the interior, cosine rolloff to 0 within ``roll`` of each end."""
    roll = min(roll, n // 3)
    w = np.ones(n)
    t = np.arange(roll) / roll
    ramp = 0.5 * (1.0 - np.cos(np.pi * t))
    w[:roll] = ramp
    w[-roll:] = ramp[::-1]
    return w


def _moving_landmarks(base: np.ndarray, margin: int, min_sep: float) -> list[tuple[float, float]]:
    """Two landmark positions in high-motion regions away from borders."""
    mag = np.hypot(base[..., 0], base[..., 1]).copy()
    mag[:margin] = mag[-margin:] = -1.0
    mag[:, :margin] = mag[:, -margin:] = -1.0
    picks: list[tuple[float, float]] = []
    while len(picks) < 2:
        iy, ix = np.unravel_index(int(np.argmax(mag)), mag.shape)
        picks.append((float(ix), float(iy)))
        ys, xs = np.mgrid[0 : mag.shape[0], 0 : mag.shape[1]]
        mag[np.hypot(xs - ix, ys - iy) < min_sep] = -1.0
    return picks


def synth_translation(
    n_frames: int = 100,
    size: int = 128,
    px_per_frame: float = 0.5,
    seed: int = 0,
    noise: float = 0.0,
) -> SynthResult:
    """Texture drifting ``px_per_frame`` pixels per frame along +x."""
    rng = np.random.default_rng(seed)
    h = w = size
    texture = make_texture(h, w, rng)
    starts = [(w * 0.25, h * 0.45), (w * 0.3, h * 0.65)]
    frames = []
    tracklets = [Tracklet(landmark_id=i + 1) for i in range(len(starts))]
    for k in range(n_frames):
        shift = px_per_frame * k
        disp = np.zeros((h, w, 2))
        disp[..., 0] = -shift
        frame = warp_image(texture, disp)
        if noise > 0:
            frame = np.clip(frame + noise * rng.standard_normal((h, w)), 0.0, 1.0)
        frames.append(frame)
        for tr, (sx, sy) in zip(tracklets, starts):
            tr.points.append((k, sx + shift, sy))
    return SynthResult(frames=frames, tracklets=tracklets)


def synth_svf(
    n_frames: int = 100,
    size: int = 128,
    max_step: float = 4.0,
    period: int = 24,
    seed: int = 0,
    noise: float = 0.0,
) -> SynthResult:
    """Breathing-like smooth deformation with ``max_step`` px/frame peaks."""
    rng = np.random.default_rng(seed)
    h = w = size
    texture = make_texture(h, w, rng)
    base = gaussian_smooth(rng.standard_normal((h, w, 2)), 12.0)
    # taper to zero at the borders: motion stays inside the frame and the
    # smoothing's border inflation cannot dominate the normalization
    base *= np.outer(_cosine_plateau(h), _cosine_plateau(w))[..., None]
    base /= np.max(np.hypot(base[..., 0], base[..., 1]))
    amplitude = max_step * period / (2.0 * np.pi)

    margin = min(max(8, size // 5, int(amplitude) + 4), size // 3)
    landmarks = _moving_landmarks(base, margin=margin, min_sep=size / 4)
    frames = []
    tracklets = [Tracklet(landmark_id=i + 1) for i in range(len(landmarks))]
    for k in range(n_frames):
        a = amplitude * np.sin(2.0 * np.pi * k / period)
        forward = integrate_svf(a * base) if a != 0.0 else np.zeros((h, w, 2))
        backward = integrate_svf(-a * base) if a != 0.0 else np.zeros((h, w, 2))
        frame = warp_image(texture, backward)
        if noise > 0:
            frame = np.clip(frame + noise * rng.standard_normal((h, w)), 0.0, 1.0)
        frames.append(frame)
        for tr, (sx, sy) in zip(tracklets, landmarks):
            d = bilinear_sample(forward, float(sx), float(sy))
            tr.points.append((k, sx + float(d[0]), sy + float(d[1])))
    return SynthResult(frames=frames, tracklets=tracklets)


def save_frame_png(frame: np.ndarray, path: str | Path) -> None:
    """Write a [0, 1] float frame as 16-bit grayscale PNG."""
    arr = np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0)
    img = Image.fromarray(np.round(arr * 65535.0).astype(np.uint16))
    img.save(path)


def write_synth(result: SynthResult, directory: str | Path) -> tuple[Path, Path]:
    """Write frames plus a full-coverage annotation file.

    Returns ``(frames_dir, annotations_path)``.
    """
    directory = Path(directory)
    frames_dir = directory / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(result.frames):
        save_frame_png(frame, frames_dir / f"{k:04d}.png")
    annot_path = directory / "annotations.txt"
    with open(annot_path, "w", encoding="utf-8") as fh:
        fh.write("# landmark_id frame x y (frames are 1-based)\n")
        for tr in result.tracklets:
            for frame, x, y in tr.points:
                fh.write(f"{tr.landmark_id} {frame + 1} {x:.4f} {y:.4f}\n")
    return frames_dir, annot_path
