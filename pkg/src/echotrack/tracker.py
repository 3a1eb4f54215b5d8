"""Correlation tracker with a long/short motion prior.

Each frame is matched against a fixed appearance exemplar cropped around
the initial landmark in frame 0.  Appearance features are a bank of
intensity and gradient channels; motion context enters two ways:

* feature fusion: the aligned long/short deformations are turned into a
  deformation pyramid (magnitude and Jacobian channels) and concatenated
  to the appearance channels of both exemplar and search window.  The
  appearance exemplar stays fixed; the motion channels are re-cropped
  around the current estimate every frame, which is the adaptive part of
  the template.
* peak selection: the raw short deformation predicts where the landmark
  moved, and a Gaussian prior around that prediction gates the response.

With ``prior_weight = 0`` and ``use_dpn = False`` the tracker reduces
exactly to plain normalized cross-correlation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .deform import jacobian_determinant
from .emma import EmmaConfig, emma_align
from .errors import ChannelMismatch, DimMismatch
from .fields import bilinear_sample, build_pyramid, gaussian_smooth, pyramid_dims
from .motion import LongShortMotion, MotionConfig, estimate_long_short, sample_delta_t


@dataclass
class TrackerConfig:
    exemplar_size: int = 64
    search_size: int = 128
    label_sigma: float = 2.0
    prior_sigma: float = 6.0
    prior_weight: float = 0.5
    dpn_levels: int = 3
    feature_bank: str = "intensity+gradients"
    template_update: float = 0.0
    use_dpn: bool = True

    def __post_init__(self) -> None:
        if self.search_size <= self.exemplar_size:
            raise ValueError("search_size must exceed exemplar_size")
        if not 0.0 <= self.prior_weight <= 1.0:
            raise ValueError("prior_weight must be in [0, 1]")
        if self.label_sigma <= 0 or self.prior_sigma <= 0:
            raise ValueError("label_sigma and prior_sigma must be > 0")
        if self.dpn_levels < 1:
            raise ValueError("dpn_levels must be >= 1")
        if not 0.0 <= self.template_update <= 1.0:
            raise ValueError("template_update must be in [0, 1]")
        if self.feature_bank != "intensity+gradients":
            raise ValueError(f"unknown feature_bank {self.feature_bank!r}")


@dataclass
class Tracklet:
    """Per-frame landmark estimates, frame indices strictly increasing."""

    landmark_id: int
    sequence: str = ""
    points: list[tuple[int, float, float]] = field(default_factory=list)
    out_of_view: list[int] = field(default_factory=list)

    def position(self, frame: int) -> tuple[float, float] | None:
        for f, x, y in self.points:
            if f == frame:
                return (x, y)
        return None


def _normalize_channel(c: np.ndarray) -> np.ndarray:
    c = c - c.mean()
    std = c.std()
    if std < 1e-12:
        return np.zeros_like(c)
    return c / std


def extract_features(img: np.ndarray, cfg: TrackerConfig) -> np.ndarray:
    """Feature bank (4, H, W): smoothed intensity, gradients, magnitude.

    Each channel is normalized to zero mean and unit variance over the
    patch; constant channels map to zeros.
    """
    f = np.asarray(img, dtype=np.float64)
    smoothed = gaussian_smooth(f, 1.0)
    gy, gx = np.gradient(smoothed)
    mag = np.hypot(gx, gy)
    return np.stack([_normalize_channel(c) for c in (smoothed, gx, gy, mag)])


def gaussian_label(
    center: tuple[float, float], sigma: float, size: tuple[int, int]
) -> np.ndarray:
    """Isotropic Gaussian map with peak value 1 at ``center`` (x, y)."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    h, w = size
    ys, xs = np.mgrid[0:h, 0:w]
    d2 = (xs - center[0]) ** 2 + (ys - center[1]) ** 2
    return np.exp(-0.5 * d2 / sigma**2)


def _dpn_channels(phi_l: np.ndarray, phi_s: np.ndarray) -> np.ndarray:
    mag_l = np.hypot(phi_l[..., 0], phi_l[..., 1])
    mag_s = np.hypot(phi_s[..., 0], phi_s[..., 1])
    jac_l = jacobian_determinant(phi_l) - 1.0
    jac_s = jacobian_determinant(phi_s) - 1.0
    return np.stack([mag_l, mag_s, jac_l, jac_s], axis=-1)


def build_dpn(motion: LongShortMotion, levels: int) -> list[np.ndarray]:
    """Deformation pyramid: motion channels downsampled level by level.

    Level k holds an ``(h_k, w_k, 4)`` array with the long/short
    displacement magnitudes and the centered Jacobian determinants.
    Coarser levels accumulate more smoothing.
    """
    return build_pyramid(_dpn_channels(motion.phi_l, motion.phi_s), levels)


def _resize_map(m: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    h2, w2 = dims
    h1, w1 = m.shape[:2]
    if (h1, w1) == (h2, w2):
        return m
    xs, ys = np.meshgrid(np.arange(w2, dtype=float), np.arange(h2, dtype=float))
    sx = (w1 - 1) / max(w2 - 1, 1)
    sy = (h1 - 1) / max(h2 - 1, 1)
    return bilinear_sample(m, xs * sx, ys * sy)


def fuse(features: np.ndarray, dpn: list[np.ndarray], level: int) -> np.ndarray:
    """Concatenate a DPN level onto appearance features, renormalized.

    The chosen level is resampled to the feature dims; every channel of
    the fused map is normalized like :func:`extract_features`, so already
    normalized appearance channels pass through unchanged.
    """
    feats = np.asarray(features, dtype=np.float64)
    lvl = _resize_map(dpn[level], feats.shape[1:])
    if lvl.shape[:2] != feats.shape[1:]:
        raise DimMismatch("DPN level does not match feature dims after resampling")
    fused = np.concatenate([feats, lvl.transpose(2, 0, 1)], axis=0)
    return np.stack([_normalize_channel(c) for c in fused])


def _window_sums(img: np.ndarray, eh: int, ew: int) -> np.ndarray:
    h, w = img.shape
    p = np.zeros((h + 1, w + 1), dtype=np.float64)
    p[1:, 1:] = img.cumsum(axis=0).cumsum(axis=1)
    return (
        p[eh:, ew:]
        - p[: h - eh + 1, ew:]
        - p[eh:, : w - ew + 1]
        + p[: h - eh + 1, : w - ew + 1]
    )


def correlate(exemplar: np.ndarray, search: np.ndarray) -> np.ndarray:
    """Valid-mode normalized cross-correlation averaged over channels.

    Scores lie in [-1, 1]; windows or exemplar channels with variance
    below 1e-12 contribute a score of exactly 0.
    """
    ex = np.asarray(exemplar, dtype=np.float64)
    se = np.asarray(search, dtype=np.float64)
    if ex.ndim != 3 or se.ndim != 3:
        raise ValueError("feature maps must be (C, H, W)")
    if ex.shape[0] != se.shape[0]:
        raise ChannelMismatch(f"{ex.shape[0]} exemplar channels vs {se.shape[0]}")
    eh, ew = ex.shape[1:]
    sh, sw = se.shape[1:]
    if eh > sh or ew > sw:
        raise DimMismatch("exemplar larger than search window")
    ne = eh * ew
    out = np.zeros((sh - eh + 1, sw - ew + 1), dtype=np.float64)
    for c in range(ex.shape[0]):
        e0 = ex[c] - ex[c].mean()
        e_energy = float(np.sum(e0 * e0))
        if e_energy <= 1e-12:
            continue
        num = fftconvolve(se[c], e0[::-1, ::-1], mode="valid")
        s1 = _window_sums(se[c], eh, ew)
        s2 = _window_sums(se[c] * se[c], eh, ew)
        var_w = np.maximum(s2 - s1 * s1 / ne, 0.0)
        denom = np.sqrt(var_w * e_energy)
        out += np.where(var_w > 1e-12, num / np.where(denom > 0, denom, 1.0), 0.0)
    return out / ex.shape[0]


def _axis_window(center: float, size: int, dim: int) -> tuple[int, int, bool]:
    """Clamped 1-D window placement: (origin, span, clipped)."""
    if size >= dim:
        return 0, dim, False
    ideal = int(round(center)) - size // 2
    origin = min(max(ideal, 0), dim - size)
    return origin, size, origin != ideal


def motion_prior_map(
    motion: LongShortMotion,
    prev_pos: tuple[float, float],
    cfg: TrackerConfig,
    window_center: tuple[float, float] | None = None,
    grid_origin: tuple[float, float] | None = None,
    grid_shape: tuple[int, int] | None = None,
) -> np.ndarray:
    """Gaussian prior around the short-motion prediction of ``prev_pos``.

    The predicted position is ``prev_pos + phi_s(prev_pos)``.  By default
    the map covers the search window centred at ``prev_pos`` (peak value
    1 at the prediction); ``window_center`` relocates that window, and
    ``grid_origin``/``grid_shape`` instead evaluate the same Gaussian on
    an arbitrary grid (used to align the prior with a response map).
    """
    h, w = motion.phi_s.shape[:2]
    d = bilinear_sample(motion.phi_s, float(prev_pos[0]), float(prev_pos[1]))
    px = prev_pos[0] + float(d[0])
    py = prev_pos[1] + float(d[1])
    if grid_origin is not None:
        return gaussian_label(
            (px - grid_origin[0], py - grid_origin[1]), cfg.prior_sigma, grid_shape
        )
    cx, cy = window_center if window_center is not None else prev_pos
    ox, sw_, _ = _axis_window(cx, cfg.search_size, w)
    oy, sh_, _ = _axis_window(cy, cfg.search_size, h)
    return gaussian_label((px - ox, py - oy), cfg.prior_sigma, (sh_, sw_))


def select_peak(
    response: np.ndarray, prior: np.ndarray, w: float
) -> tuple[float, float]:
    """Blend response and prior, return the subpixel peak in map coords.

    The response is min-max normalized (a constant map normalizes to
    ones so the prior decides), combined as
    ``(1-w)*r + w*r*prior``, and the integer argmax is refined by a
    per-axis quadratic fit clamped to +-0.5 px.
    """
    r = np.asarray(response, dtype=np.float64)
    p = np.asarray(prior, dtype=np.float64)
    if r.shape != p.shape:
        raise DimMismatch(f"response {r.shape} vs prior {p.shape}")
    rmin, rmax = float(r.min()), float(r.max())
    rn = np.ones_like(r) if rmax - rmin < 1e-12 else (r - rmin) / (rmax - rmin)
    combined = (1.0 - w) * rn + w * rn * p
    iy, ix = np.unravel_index(int(np.argmax(combined)), combined.shape)

    def refine(minus: float, centre: float, plus: float) -> float:
        denom = minus - 2.0 * centre + plus
        if abs(denom) < 1e-12:
            return 0.0
        return float(np.clip(0.5 * (minus - plus) / denom, -0.5, 0.5))

    dx = dy = 0.0
    if 0 < ix < combined.shape[1] - 1:
        dx = refine(combined[iy, ix - 1], combined[iy, ix], combined[iy, ix + 1])
    if 0 < iy < combined.shape[0] - 1:
        dy = refine(combined[iy - 1, ix], combined[iy, ix], combined[iy + 1, ix])
    return (ix + dx, iy + dy)


def _crop_motion(motion: LongShortMotion, oy: int, ox: int, h: int, w: int) -> LongShortMotion:
    sl = (slice(oy, oy + h), slice(ox, ox + w))
    return LongShortMotion(
        phi_l=motion.phi_l[sl],
        phi_s=motion.phi_s[sl],
        v_l=motion.v_l[sl],
        v_s=motion.v_s[sl],
        t=motion.t,
        delta_t=motion.delta_t,
    )


def _feasible_levels(dims: tuple[int, int], levels: int) -> int:
    feasible = 0
    for h, w in pyramid_dims(dims[0], dims[1], levels):
        if h < 2 or w < 2:
            break
        feasible += 1
    return max(feasible, 1)


def track_sequence(
    frames,
    init: tuple[float, float],
    cfg: TrackerConfig,
    mcfg: MotionConfig,
    ecfg: EmmaConfig,
    seed: int = 0,
    landmark_id: int = 0,
    sequence: str = "",
) -> Tracklet:
    """Track one landmark through a frame sequence.

    Per frame t >= 1: sample the short interval, estimate the long/short
    motion (warm-started from the previous frame), align it with EMMA,
    fuse deformation-pyramid channels into the exemplar and search
    features, correlate, gate with the motion prior and pick the peak.
    Deterministic for a fixed seed.  When the ideal search window leaves
    the frame it is clamped and the frame index recorded in
    ``out_of_view``.
    """
    f0 = np.asarray(frames[0], dtype=np.float64)
    h, w = f0.shape
    if not (0 <= init[0] <= w - 1 and 0 <= init[1] <= h - 1):
        raise ValueError("init position lies outside frame 0")

    ex_ox, ex_w, _ = _axis_window(init[0], cfg.exemplar_size, w)
    ex_oy, ex_h, _ = _axis_window(init[1], cfg.exemplar_size, h)
    exemplar_feats = extract_features(f0[ex_oy : ex_oy + ex_h, ex_ox : ex_ox + ex_w], cfg)
    # landmark offset from the exemplar's geometric centre, re-added to
    # every estimate so subpixel inits and clamped crops stay calibrated
    cxe = (ex_w - 1) / 2.0
    cye = (ex_h - 1) / 2.0
    off_x = init[0] - (ex_ox + cxe)
    off_y = init[1] - (ex_oy + cye)

    track = Tracklet(landmark_id=landmark_id, sequence=sequence)
    track.points.append((0, float(init[0]), float(init[1])))
    positions = {0: (float(init[0]), float(init[1]))}
    prev = (float(init[0]), float(init[1]))
    warm: tuple[np.ndarray, np.ndarray] | None = None

    for t in range(1, len(frames)):
        dt = sample_delta_t(t, mcfg, seed)
        motion = estimate_long_short(frames, t, dt, mcfg, init=warm)
        warm = (motion.v_l, motion.v_s)

        wox, w_w, clip_x = _axis_window(prev[0], cfg.search_size, w)
        woy, w_h, clip_y = _axis_window(prev[1], cfg.search_size, h)
        frame_t = np.asarray(frames[t], dtype=np.float64)
        search_feats = extract_features(frame_t[woy : woy + w_h, wox : wox + w_w], cfg)

        if cfg.use_dpn:
            al_l, al_s, _ = emma_align(motion.phi_l, motion.phi_s, ecfg)
            aligned = LongShortMotion(al_l, al_s, motion.v_l, motion.v_s, t, dt)
            # adaptive motion template: crop around the current estimate
            mox, _, _ = _axis_window(prev[0], cfg.exemplar_size, w)
            moy, _, _ = _axis_window(prev[1], cfg.exemplar_size, h)
            ex_levels = _feasible_levels((ex_h, ex_w), cfg.dpn_levels)
            se_levels = _feasible_levels((w_h, w_w), cfg.dpn_levels)
            dpn_ex = build_dpn(_crop_motion(aligned, moy, mox, ex_h, ex_w), ex_levels)
            dpn_se = build_dpn(_crop_motion(aligned, woy, wox, w_h, w_w), se_levels)
            ex_used = fuse(exemplar_feats, dpn_ex, 0)
            se_used = fuse(search_feats, dpn_se, 0)
        else:
            ex_used = exemplar_feats
            se_used = search_feats

        response = correlate(ex_used, se_used)
        anchor = positions[t - dt]
        prior = motion_prior_map(
            motion,
            anchor,
            cfg,
            grid_origin=(wox + cxe + off_x, woy + cye + off_y),
            grid_shape=response.shape,
        )
        rx, ry = select_peak(response, prior, cfg.prior_weight)

        est_x = wox + rx + cxe + off_x
        est_y = woy + ry + cye + off_y
        clamped_x = min(max(est_x, 0.0), w - 1.0)
        clamped_y = min(max(est_y, 0.0), h - 1.0)
        if clip_x or clip_y or clamped_x != est_x or clamped_y != est_y:
            track.out_of_view.append(t)
        prev = (clamped_x, clamped_y)
        positions[t] = prev
        track.points.append((t, clamped_x, clamped_y))

        if cfg.template_update > 0.0:
            uox, uw, _ = _axis_window(prev[0], cfg.exemplar_size, w)
            uoy, uh, _ = _axis_window(prev[1], cfg.exemplar_size, h)
            if (uh, uw) == (ex_h, ex_w):
                current = extract_features(frame_t[uoy : uoy + uh, uox : uox + uw], cfg)
                rate = cfg.template_update
                exemplar_feats = (1.0 - rate) * exemplar_feats + rate * current

    return track
