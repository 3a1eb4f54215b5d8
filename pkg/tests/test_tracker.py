import numpy as np
import pytest

from echotrack.deform import warp_image
from echotrack.emma import EmmaConfig
from echotrack.errors import ChannelMismatch, DimMismatch
from echotrack.fields import gaussian_smooth
from echotrack.motion import LongShortMotion, MotionConfig
from echotrack.synth import make_texture, synth_translation
from echotrack.tracker import (
    TrackerConfig,
    build_dpn,
    correlate,
    extract_features,
    fuse,
    gaussian_label,
    motion_prior_map,
    select_peak,
    track_sequence,
)


def small_cfg(**kw):
    base = dict(exemplar_size=16, search_size=32, dpn_levels=2)
    base.update(kw)
    return TrackerConfig(**base)


def make_motion(phi_l, phi_s, t=1, dt=1):
    zeros = np.zeros_like(phi_l)
    return LongShortMotion(phi_l, phi_s, zeros, zeros, t, dt)


class TestExtractFeatures:
    def test_constant_image_zero_gradients(self):
        feats = extract_features(np.full((20, 20), 0.5), small_cfg())
        assert feats.shape == (4, 20, 20)
        assert np.all(feats == 0.0)

    def test_offset_invariance(self):
        rng = np.random.default_rng(0)
        img = rng.random((20, 20))
        a = extract_features(img, small_cfg())
        b = extract_features(img + 0.3, small_cfg())
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_step_edge_peaks_on_edge_column(self):
        img = np.zeros((20, 20))
        img[:, 10:] = 1.0
        feats = extract_features(img, small_cfg())
        gx = feats[1]
        col_energy = np.abs(gx).sum(axis=0)
        assert abs(int(np.argmax(col_energy)) - 10) <= 1


class TestGaussianLabel:
    def test_peak_value_one(self):
        lab = gaussian_label((7.0, 5.0), 2.0, (11, 15))
        assert lab[5, 7] == pytest.approx(1.0)

    def test_value_at_sigma(self):
        lab = gaussian_label((7.0, 5.0), 2.0, (11, 15))
        assert lab[5, 9] == pytest.approx(np.exp(-0.5))

    def test_isotropy(self):
        lab = gaussian_label((6.0, 6.0), 3.0, (13, 13))
        assert lab[6, 9] == pytest.approx(lab[9, 6])
        assert lab[6, 3] == pytest.approx(lab[3, 6])


class TestBuildDpn:
    def test_zero_motion_all_zero(self):
        m = make_motion(np.zeros((32, 32, 2)), np.zeros((32, 32, 2)))
        dpn = build_dpn(m, 3)
        assert len(dpn) == 3
        for level in dpn:
            assert np.all(level == 0.0)

    def test_uniform_translation_channels(self):
        phi_l = np.zeros((32, 32, 2))
        phi_l[..., 0] = 2.0
        m = make_motion(phi_l, np.zeros((32, 32, 2)))
        dpn = build_dpn(m, 1)
        np.testing.assert_allclose(dpn[0][..., 0], 2.0, atol=1e-12)
        np.testing.assert_allclose(dpn[0][..., 1], 0.0, atol=1e-12)
        np.testing.assert_allclose(dpn[0][..., 2], 0.0, atol=1e-12)

    def test_level_dims(self):
        m = make_motion(np.zeros((64, 64, 2)), np.zeros((64, 64, 2)))
        dpn = build_dpn(m, 3)
        assert [lvl.shape[:2] for lvl in dpn] == [(64, 64), (32, 32), (16, 16)]


class TestFuse:
    def test_zero_motion_appends_zeros(self):
        rng = np.random.default_rng(1)
        feats = extract_features(rng.random((16, 16)), small_cfg())
        m = make_motion(np.zeros((16, 16, 2)), np.zeros((16, 16, 2)))
        fused = fuse(feats, build_dpn(m, 2), 0)
        assert fused.shape[0] == feats.shape[0] + 4
        np.testing.assert_allclose(fused[:4], feats, atol=1e-9)
        np.testing.assert_allclose(fused[4:], 0.0, atol=1e-12)

    def test_round_trip_drop_appended(self):
        rng = np.random.default_rng(2)
        feats = extract_features(rng.random((16, 16)), small_cfg())
        phi = gaussian_smooth(rng.standard_normal((16, 16, 2)), 3.0)
        m = make_motion(phi, phi)
        fused = fuse(feats, build_dpn(m, 2), 0)
        np.testing.assert_allclose(fused[:4], feats, atol=1e-9)

    def test_coarser_level_resampled(self):
        rng = np.random.default_rng(3)
        feats = extract_features(rng.random((16, 16)), small_cfg())
        phi = gaussian_smooth(rng.standard_normal((16, 16, 2)), 3.0)
        fused = fuse(feats, build_dpn(make_motion(phi, phi), 2), 1)
        assert fused.shape == (8, 16, 16)


def brute_force_ncc(exemplar, search):
    """Sliding-window normalized cross-correlation, loops only."""
    c, eh, ew = exemplar.shape
    _, sh, sw = search.shape
    out = np.zeros((sh - eh + 1, sw - ew + 1))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            total = 0.0
            for ch in range(c):
                e = exemplar[ch] - exemplar[ch].mean()
                e_energy = np.sum(e * e)
                win = search[ch, i : i + eh, j : j + ew]
                w0 = win - win.mean()
                w_energy = np.sum(w0 * w0)
                if e_energy <= 1e-12 or w_energy <= 1e-12:
                    continue
                total += np.sum(e * w0) / np.sqrt(e_energy * w_energy)
            out[i, j] = total / c
    return out


class TestCorrelate:
    def test_exact_copy_peaks_at_offset(self):
        rng = np.random.default_rng(4)
        search = rng.random((1, 20, 20))
        exemplar = search[:, 5:13, 7:15].copy()
        resp = correlate(exemplar, search)
        iy, ix = np.unravel_index(np.argmax(resp), resp.shape)
        assert (iy, ix) == (5, 7)
        assert resp[5, 7] == pytest.approx(1.0, abs=1e-9)

    def test_negation_anticorrelates(self):
        rng = np.random.default_rng(5)
        search = rng.random((1, 12, 12))
        exemplar = -search[:, 2:8, 3:9].copy()
        resp = correlate(exemplar, search)
        assert resp[2, 3] == pytest.approx(-1.0, abs=1e-9)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            c = int(rng.integers(1, 4))
            eh, ew = rng.integers(3, 10, size=2)
            sh, sw = rng.integers(12, 33, size=2)
            exemplar = rng.standard_normal((c, eh, ew))
            search = rng.standard_normal((c, sh, sw))
            got = correlate(exemplar, search)
            expect = brute_force_ncc(exemplar, search)
            np.testing.assert_allclose(got, expect, atol=1e-6)

    def test_scores_bounded(self):
        rng = np.random.default_rng(7)
        resp = correlate(rng.standard_normal((2, 5, 5)), rng.standard_normal((2, 16, 16)))
        assert np.all(resp <= 1.0 + 1e-9)
        assert np.all(resp >= -1.0 - 1e-9)

    def test_channel_mismatch(self):
        with pytest.raises(ChannelMismatch):
            correlate(np.zeros((2, 4, 4)), np.zeros((3, 8, 8)))

    def test_exemplar_larger_than_search(self):
        with pytest.raises(DimMismatch):
            correlate(np.zeros((1, 9, 9)), np.zeros((1, 8, 8)))


class TestMotionPriorMap:
    def test_zero_motion_peaks_at_prev_pos(self):
        m = make_motion(np.zeros((64, 64, 2)), np.zeros((64, 64, 2)))
        cfg = small_cfg()
        prior = motion_prior_map(m, (30.0, 28.0), cfg)
        iy, ix = np.unravel_index(np.argmax(prior), prior.shape)
        ox = round(30.0) - cfg.search_size // 2
        oy = round(28.0) - cfg.search_size // 2
        assert (ox + ix, oy + iy) == (30, 28)
        assert prior[iy, ix] == pytest.approx(1.0)

    def test_uniform_short_motion_shifts_peak(self):
        phi_s = np.zeros((64, 64, 2))
        phi_s[..., 0] = 3.0
        phi_s[..., 1] = -1.0
        m = make_motion(np.zeros((64, 64, 2)), phi_s)
        cfg = small_cfg()
        prior = motion_prior_map(m, (30.0, 28.0), cfg)
        iy, ix = np.unravel_index(np.argmax(prior), prior.shape)
        ox = round(30.0) - cfg.search_size // 2
        oy = round(28.0) - cfg.search_size // 2
        assert (ox + ix, oy + iy) == (33, 27)

    def test_peak_value_one(self):
        m = make_motion(np.zeros((64, 64, 2)), np.zeros((64, 64, 2)))
        prior = motion_prior_map(m, (32.0, 32.0), small_cfg())
        assert prior.max() == pytest.approx(1.0)


class TestSelectPeak:
    def test_weight_zero_ignores_prior(self):
        rng = np.random.default_rng(8)
        resp = rng.random((9, 9))
        prior = gaussian_label((1.0, 1.0), 2.0, (9, 9))
        x, y = select_peak(resp, prior, 0.0)
        iy, ix = np.unravel_index(np.argmax(resp), resp.shape)
        assert abs(x - ix) <= 0.5 and abs(y - iy) <= 0.5

    def test_uniform_response_follows_prior(self):
        resp = np.full((11, 11), 0.4)
        prior = gaussian_label((3.0, 7.0), 2.0, (11, 11))
        x, y = select_peak(resp, prior, 0.5)
        assert (round(x), round(y)) == (3, 7)

    def test_quadratic_bump_subpixel(self):
        # separable quadratic with analytic vertex at (4.3, 5.6)
        ys, xs = np.mgrid[0:11, 0:11].astype(float)
        resp = 1.0 - 0.05 * (xs - 4.3) ** 2 - 0.04 * (ys - 5.6) ** 2
        x, y = select_peak(resp, np.ones((11, 11)), 0.0)
        assert abs(x - 4.3) < 1e-3
        assert abs(y - 5.6) < 1e-3

    def test_affine_rescaling_invariance(self):
        rng = np.random.default_rng(9)
        resp = rng.random((13, 13))
        prior = gaussian_label((6.0, 6.0), 3.0, (13, 13))
        a = select_peak(resp, prior, 0.5)
        b = select_peak(3.7 * resp + 11.0, prior, 0.5)
        # same integer argmax; subpixel refinement agrees up to rounding
        assert (round(a[0]), round(a[1])) == (round(b[0]), round(b[1]))
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            select_peak(np.zeros((4, 4)), np.zeros((5, 4)), 0.5)


def fast_motion_cfg():
    return MotionConfig(pyramid_levels=2, iters_per_level=8)


def small_emma_cfg():
    return EmmaConfig(k=8, iterations=2, descriptor_patch=4)


class TestTrackSequence:
    def test_static_sequence_stays_put(self):
        rng = np.random.default_rng(10)
        tex = make_texture(48, 48, rng)
        frames = [tex] * 20
        cfg = small_cfg()
        tr = track_sequence(frames, (22.0, 25.0), cfg, fast_motion_cfg(), small_emma_cfg())
        assert len(tr.points) == 20
        for frame, x, y in tr.points:
            assert abs(x - 22.0) < 0.5
            assert abs(y - 25.0) < 0.5

    def test_frames_strictly_increasing_and_inside(self):
        rng = np.random.default_rng(11)
        tex = make_texture(48, 48, rng)
        frames = [tex] * 6
        tr = track_sequence(frames, (24.0, 24.0), small_cfg(), fast_motion_cfg(), small_emma_cfg())
        frame_ids = [p[0] for p in tr.points]
        assert frame_ids == sorted(set(frame_ids))
        for _, x, y in tr.points:
            assert 0 <= x <= 47 and 0 <= y <= 47

    def test_translation_tracked(self):
        result = synth_translation(n_frames=25, size=64, px_per_frame=0.5, seed=12)
        gt = result.tracklets[0]
        init = gt.points[0][1:]
        cfg = small_cfg()
        tr = track_sequence(
            result.frames, init, cfg, fast_motion_cfg(), small_emma_cfg(), seed=1
        )
        errors = [
            np.hypot(px - gx, py - gy)
            for (_, px, py), (_, gx, gy) in zip(tr.points, gt.points)
        ]
        assert np.mean(errors) < 1.0

    def test_ablation_equals_plain_correlation(self):
        # with w=0 and no DPN channels the tracker must reproduce a plain
        # NCC tracker exactly; oracle below re-implements that baseline
        result = synth_translation(n_frames=8, size=48, px_per_frame=0.4, seed=13)
        init = result.tracklets[0].points[0][1:]
        cfg = small_cfg(prior_weight=0.0, use_dpn=False)
        mcfg = fast_motion_cfg()
        tr = track_sequence(result.frames, init, cfg, mcfg, small_emma_cfg(), seed=0)

        frames = result.frames
        h, w = frames[0].shape
        e, s = cfg.exemplar_size, cfg.search_size

        def axis_origin(c, size, dim):
            if size >= dim:
                return 0, dim
            ideal = int(round(c)) - size // 2
            return min(max(ideal, 0), dim - size), size

        ex_ox, ex_w = axis_origin(init[0], e, w)
        ex_oy, ex_h = axis_origin(init[1], e, h)
        exemplar = extract_features(frames[0][ex_oy : ex_oy + ex_h, ex_ox : ex_ox + ex_w], cfg)
        off = (init[0] - (ex_ox + (ex_w - 1) / 2), init[1] - (ex_oy + (ex_h - 1) / 2))
        prev = init
        expected = [(0, init[0], init[1])]
        for t in range(1, len(frames)):
            wox, ww = axis_origin(prev[0], s, w)
            woy, wh = axis_origin(prev[1], s, h)
            feats = extract_features(frames[t][woy : woy + wh, wox : wox + ww], cfg)
            resp = correlate(exemplar, feats)
            x, y = select_peak(resp, np.ones_like(resp), 0.0)
            px = wox + x + (ex_w - 1) / 2 + off[0]
            py = woy + y + (ex_h - 1) / 2 + off[1]
            px, py = min(max(px, 0.0), w - 1.0), min(max(py, 0.0), h - 1.0)
            expected.append((t, px, py))
            prev = (px, py)
        assert tr.points == expected

    def test_out_of_view_flag(self):
        rng = np.random.default_rng(14)
        tex = make_texture(48, 48, rng)
        frames = [tex] * 4
        # landmark close to the border: the ideal search window is clamped
        tr = track_sequence(frames, (3.0, 24.0), small_cfg(), fast_motion_cfg(), small_emma_cfg())
        assert tr.out_of_view

    def test_init_outside_rejected(self):
        frames = [np.zeros((32, 32))] * 2
        with pytest.raises(ValueError):
            track_sequence(
                frames, (40.0, 10.0), small_cfg(), fast_motion_cfg(), small_emma_cfg()
            )

    def test_deterministic_per_seed(self):
        result = synth_translation(n_frames=6, size=48, px_per_frame=0.3, seed=15)
        init = result.tracklets[0].points[0][1:]
        mcfg = MotionConfig(
            pyramid_levels=2, iters_per_level=6, delta_t_mode="uniform-random"
        )
        a = track_sequence(result.frames, init, small_cfg(), mcfg, small_emma_cfg(), seed=3)
        b = track_sequence(result.frames, init, small_cfg(), mcfg, small_emma_cfg(), seed=3)
        assert a.points == b.points
