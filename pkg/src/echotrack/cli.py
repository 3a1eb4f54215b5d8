"""Command-line interface.

Subcommands: ``register`` (single-pair motion), ``emma`` (align two
deformation fields), ``track`` (full pipeline over a sequence), ``eval``
(tracking-error report) and ``synth`` (synthetic data generation).

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import emma as emma_mod
from . import io as io_mod
from . import metrics, motion, synth, tracker
from .config import load_config
from .errors import (
    ConfigError,
    Diverged,
    EchotrackError,
    NonFinite,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="echotrack",
        description="Ultrasound landmark tracking with a long/short diffeomorphic motion prior",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    reg = sub.add_parser("register", help="estimate motion between two frames")
    reg.add_argument("--fixed", required=True, help="fixed/template image (PNG or PGM)")
    reg.add_argument("--moving", required=True, help="moving/target image")
    reg.add_argument("--out", required=True, help="output deformation field (.lsdf)")
    reg.add_argument("--config", default=None, help="flat key = value config file")

    em = sub.add_parser("emma", help="align long and short deformation fields")
    em.add_argument("--long", dest="long_field", required=True)
    em.add_argument("--short", dest="short_field", required=True)
    em.add_argument("--out-long", required=True)
    em.add_argument("--out-short", required=True)
    em.add_argument("--iters", type=int, default=None, help="EM iterations (default 5)")
    em.add_argument("--config", default=None)

    tr = sub.add_parser("track", help="track annotated landmarks through a sequence")
    tr.add_argument("--seq", required=True, help="directory of image frames")
    tr.add_argument("--annot", required=True, help="annotation file")
    tr.add_argument("--out", required=True, help="output tracklet CSV")
    tr.add_argument("--config", default=None)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--prior-weight", type=float, default=None)
    tr.add_argument("--coupling", choices=["complete", "partial"], default=None)
    tr.add_argument("--emma-iters", type=int, default=None)

    ev = sub.add_parser("eval", help="tracking-error report against annotations")
    ev.add_argument("--pred", required=True, help="tracklet CSV")
    ev.add_argument("--annot", required=True)
    ev.add_argument("--report", required=True, help="output report CSV")

    sy = sub.add_parser("synth", help="generate a synthetic sequence with ground truth")
    sy.add_argument("--out", required=True, help="output directory")
    sy.add_argument("--motion", choices=["translation", "svf"], required=True)
    sy.add_argument("--frames", type=int, default=100)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--size", type=int, default=128)
    sy.add_argument("--px-per-frame", type=float, default=0.5)
    sy.add_argument("--max-step", type=float, default=4.0)
    sy.add_argument("--noise", type=float, default=0.0)
    return parser


def _cmd_register(args) -> int:
    bundle = load_config(args.config)
    fixed = io_mod.load_image(args.fixed)
    moving = io_mod.load_image(args.moving)
    _, disp, trace = motion.estimate_pair(fixed, moving, bundle.motion)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io_mod.write_field(disp, out)
    motion.write_energy_csv(trace, out.parent / "energy.csv")
    print(f"wrote {out} and {out.parent / 'energy.csv'}")
    return 0


def _cmd_emma(args) -> int:
    bundle = load_config(args.config)
    ecfg = bundle.emma
    if args.iters is not None:
        ecfg = dataclasses.replace(ecfg, iterations=args.iters)
    phi_l = io_mod.read_field(args.long_field)
    phi_s = io_mod.read_field(args.short_field)
    if phi_l.ndim != 3 or phi_s.ndim != 3:
        raise EchotrackError("emma expects 2-channel deformation fields")
    out_l, out_s, trace = emma_mod.emma_align(phi_l, phi_s, ecfg)
    out_long = Path(args.out_long)
    out_long.parent.mkdir(parents=True, exist_ok=True)
    io_mod.write_field(out_l, out_long)
    io_mod.write_field(out_s, args.out_short)
    emma_mod.write_elbo_csv(trace, out_long.parent / "elbo.csv")
    print(f"wrote {out_long}, {args.out_short} and {out_long.parent / 'elbo.csv'}")
    return 0


def _cmd_track(args) -> int:
    bundle = load_config(args.config)
    tcfg, mcfg, ecfg = bundle.tracker, bundle.motion, bundle.emma
    if args.prior_weight is not None:
        tcfg = dataclasses.replace(tcfg, prior_weight=args.prior_weight)
    if args.coupling is not None:
        mcfg = dataclasses.replace(mcfg, coupling=args.coupling)
    if args.emma_iters is not None:
        ecfg = dataclasses.replace(ecfg, iterations=args.emma_iters)
    dataset = io_mod.load_sequence(args.seq)
    annotations = io_mod.load_annotations(args.annot)
    tracklets = []
    for lid in annotations.ids():
        init = annotations.at_frame(lid, 0)
        if init is None:
            raise EchotrackError(f"landmark {lid} has no frame-1 annotation to initialize from")
        print(f"tracking landmark {lid} from ({init[0]:.2f}, {init[1]:.2f})", file=sys.stderr)
        tracklets.append(
            tracker.track_sequence(
                dataset,
                init,
                tcfg,
                mcfg,
                ecfg,
                seed=args.seed,
                landmark_id=lid,
                sequence=dataset.name,
            )
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io_mod.write_tracklets(tracklets, out)
    print(f"wrote {out} ({len(tracklets)} tracklets, {len(dataset)} frames)")
    return 0


def _cmd_eval(args) -> int:
    tracklets = io_mod.read_tracklets(args.pred)
    annotations = io_mod.load_annotations(args.annot)
    report = metrics.evaluate(tracklets, annotations)
    metrics.write_report_csv(report, args.report)
    pooled = report.pooled
    base = report.note_pooled
    print(
        f"pooled TE mean {pooled.mean:.4f} std {pooled.std:.4f} p95 {pooled.p95:.4f} "
        f"(NoTE mean {base.mean:.4f}) over n={pooled.n}"
    )
    return 0


def _cmd_synth(args) -> int:
    if args.motion == "translation":
        result = synth.synth_translation(
            n_frames=args.frames,
            size=args.size,
            px_per_frame=args.px_per_frame,
            seed=args.seed,
            noise=args.noise,
        )
    else:
        result = synth.synth_svf(
            n_frames=args.frames,
            size=args.size,
            max_step=args.max_step,
            seed=args.seed,
            noise=args.noise,
        )
    frames_dir, annot = synth.write_synth(result, args.out)
    print(f"wrote {len(result.frames)} frames to {frames_dir} and ground truth to {annot}")
    return 0


_COMMANDS = {
    "register": _cmd_register,
    "emma": _cmd_emma,
    "track": _cmd_track,
    "eval": _cmd_eval,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (Diverged, NonFinite) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except EchotrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
