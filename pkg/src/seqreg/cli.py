"""Command-line entry point.

Subcommands: ``gen`` (synthetic dataset), ``register`` (closed-loop
sequence registration), ``stitch`` (panorama), ``eval`` (accuracy and
match-count reports), ``bench`` (matcher timing).  Every report writes CSV
plus a rendered PNG figure into the chosen output directory.

Options resolve as: command-line flag, then ``--config`` file entry
(flat ``key=value`` lines, keys match flag names with underscores), then
the built-in default.  Exit codes: 0 success, 2 input/spec error,
3 registration failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import evaluation, feedback, figures, stitching, synthetic
from .errors import SeqregError
from .features import ExtractorConfig
from .feedback import MotionPrior, RegistrationConfig, SpeedUncertainty
from .geometry import CorrespondenceSet, Homography, TranslationModel
from .image_io import read_pgm, write_pgm
from .matching import GateConfig, MatchSet
from .synthetic import DistortionSpec, GridSpec, NoiseSpec


class _InputError(Exception):
    """User-facing input problem; maps to exit code 2."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise _InputError(f"not a boolean: {text!r}")


# Per-subcommand option schema: name -> (type, default, help).  The same
# names are accepted in config files; anything else there is rejected.
_SCHEMAS = {
    "gen": {
        "shape": (str, "square", "grid pattern: square, circle or hexagon"),
        "cell": (float, None, "square side or circle/hexagon radius (px)"),
        "pitch": (float, 60.0, "center spacing (px)"),
        "width": (int, 400, "frame width (px)"),
        "height": (int, 400, "frame height (px)"),
        "frames": (int, 20, "number of frames"),
        "motion_dx": (float, 60.0, "per-frame x motion (px)"),
        "motion_dy": (float, 60.0, "per-frame y motion (px)"),
        "factor": (float, 1.0, "local affine distortion factor"),
        "seed": (int, 0, "master seed (distortion; noise uses seed+1)"),
        "noise_seed": (int, None, "noise seed override"),
        "blur_mask": (int, 7, "Gaussian blur mask size (odd; 1 disables)"),
        "blur_sigma": (float, 1.0, "Gaussian blur sigma"),
        "sp_density": (float, 0.05, "salt-and-pepper density"),
        "awgn_variance": (float, 0.02, "additive Gaussian noise variance"),
        "no_noise": (bool, False, "disable all noise stages"),
    },
    "register": {
        "data": (str, None, "dataset directory (from gen)"),
        "dx0": (float, None, "initial x offset (px)"),
        "dy0": (float, None, "initial y offset (px)"),
        "speed": (float, None, "web speed (m/s)"),
        "fps": (float, None, "camera frame rate (1/s)"),
        "pixel_scale": (float, None, "pixel scale (m/px)"),
        "radius": (float, None, "explicit search radius (px)"),
        "coverage": (float, None, "coverage for the truncated-normal radius"),
        "speed_sigma": (float, None, "speed standard deviation (m/s)"),
        "thr": (float, 0.5, "descriptor SSD threshold"),
        "min_matches": (int, 8, "matches needed to accept a feedback update"),
        "method": (str, "gated", "matcher: gated or lowest-ssd"),
        "kernel": (str, "vectorized", "SSD kernel: vectorized or loop"),
        "feedback_stat": (str, "mean", "feedback statistic: mean or median"),
        "median_filter": (int, 3, "extractor median prefilter size (0 disables)"),
        "corner_threshold": (float, 0.01, "corner response threshold fraction"),
        "blob_threshold": (float, 0.05, "blob response threshold fraction"),
    },
    "stitch": {
        "data": (str, None, "dataset directory"),
        "registration": (str, None, "registration output directory"),
        "feather": (bool, False, "feather blend weights instead of uniform"),
    },
    "eval": {
        "data": (str, None, "dataset directory"),
        "registration": (str, None, "registration output directory"),
        "methods": (str, None, "comma list for count report: lowest-ssd,ransac,gated"),
        "radius": (float, 10.0, "gate radius for the gated method"),
        "thr": (float, 0.5, "descriptor SSD threshold"),
    },
    "bench": {
        "data": (str, None, "dataset directory"),
        "pair": (int, 0, "pair index to benchmark"),
        "reps": (int, 5, "timing repetitions"),
        "radius": (float, 10.0, "gate radius (px)"),
        "thr": (float, 0.5, "descriptor SSD threshold"),
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, schema in _SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--out-dir", required=True, help="output directory")
        p.add_argument("--verbose", action="store_true")
        for key, (typ, _default, help_text) in schema.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, action="store_const", const=True, default=None, help=help_text)
            else:
                p.add_argument(flag, type=typ, default=None, help=help_text)
    return parser


def _resolve_options(command: str, args, config: dict) -> dict:
    schema = _SCHEMAS[command]
    unknown = set(config) - set(schema)
    if unknown:
        raise _InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, (typ, default, _help) in schema.items():
        cli_val = getattr(args, key)
        if cli_val is not None:
            out[key] = cli_val
        elif key in config:
            raw = config[key]
            out[key] = _parse_bool(raw) if typ is bool else typ(raw)
        else:
            out[key] = default
    return out


def _require_file(path) -> str:
    if not os.path.isfile(path):
        raise _InputError(f"missing input file: {path}")
    return path


def _load_dataset(data_dir: str):
    manifest = synthetic.load_manifest(_require_file(os.path.join(data_dir, "manifest.txt")))
    g, d, n = synthetic.specs_from_manifest(manifest)
    images = []
    for k in range(g.frames):
        images.append(read_pgm(_require_file(os.path.join(data_dir, f"frame_{k:03d}.pgm"))))
    return manifest, g, d, n, images


def _load_ground_truth(data_dir: str, g: GridSpec):
    frames, pairs = [], []
    for k in range(g.frames):
        path = _require_file(os.path.join(data_dir, f"centers_{k:03d}.csv"))
        rows = []
        with open(path) as fh:
            next(fh)
            for line in fh:
                line = line.strip()
                if line:
                    x, y = line.split(",")
                    rows.append((float(x), float(y)))
        centers = np.array(rows) if rows else np.empty((0, 2))
        frames.append(synthetic.FrameCenters(centers, centers))
    for k in range(g.frames - 1):
        pairs.append(
            CorrespondenceSet.load(_require_file(os.path.join(data_dir, f"gt_pairs_{k:03d}.csv")))
        )
    return synthetic.GroundTruth(frames=frames, pairs=pairs, motion=g.motion)


def cmd_gen(args, config: dict) -> int:
    opt = _resolve_options("gen", args, config)
    g = GridSpec(
        shape=opt["shape"],
        cell_param=opt["cell"],
        pitch=opt["pitch"],
        image_size=(opt["width"], opt["height"]),
        frames=opt["frames"],
        motion=(opt["motion_dx"], opt["motion_dy"]),
    )
    d = DistortionSpec(factor=opt["factor"], seed=opt["seed"])
    noise_seed = opt["noise_seed"] if opt["noise_seed"] is not None else opt["seed"] + 1
    if opt["no_noise"]:
        n = NoiseSpec.none(seed=noise_seed)
    else:
        n = NoiseSpec(
            gaussian_blur_mask=opt["blur_mask"],
            blur_sigma=opt["blur_sigma"],
            sp_density=opt["sp_density"],
            awgn_variance=opt["awgn_variance"],
            seed=noise_seed,
        )

    os.makedirs(args.out_dir, exist_ok=True)
    images, gt = synthetic.generate_sequence(g, d, n)
    for k, (img, centers) in enumerate(zip(images, gt.frames)):
        write_pgm(os.path.join(args.out_dir, f"frame_{k:03d}.pgm"), img)
        with open(os.path.join(args.out_dir, f"centers_{k:03d}.csv"), "w") as fh:
            fh.write("x,y\n")
            for x, y in centers.deformed:
                fh.write(f"{float(x)!r},{float(y)!r}\n")
        if args.verbose:
            print(f"frame {k}: {len(centers)} centers")
    for k, pair in enumerate(gt.pairs):
        pair.save(os.path.join(args.out_dir, f"gt_pairs_{k:03d}.csv"))
    synthetic.save_manifest(os.path.join(args.out_dir, "manifest.txt"), synthetic.manifest_dict(g, d, n))
    print(f"wrote {g.frames} frames to {args.out_dir}")
    return 0


def _registration_config(opt: dict) -> RegistrationConfig:
    extractor = ExtractorConfig(
        corner_threshold=opt["corner_threshold"],
        blob_threshold=opt["blob_threshold"],
        median_prefilter=opt["median_filter"],
    )
    return RegistrationConfig(
        extractor=extractor,
        gate_threshold=opt["thr"],
        min_matches=opt["min_matches"],
        feedback_stat=opt["feedback_stat"],
        method=opt["method"],
        kernel=opt["kernel"],
    )


def _initial_prior(opt: dict, manifest: dict) -> TranslationModel:
    if opt["speed"] is not None:
        if opt["fps"] is None or opt["pixel_scale"] is None:
            raise _InputError("--speed needs --fps and --pixel-scale")
        prior = MotionPrior(opt["speed"], opt["fps"], opt["pixel_scale"])
        t = feedback.initial_offset(prior)
        return TranslationModel(t.dx, opt["dy0"] if opt["dy0"] is not None else 0.0)
    if opt["dx0"] is not None:
        return TranslationModel(opt["dx0"], opt["dy0"] if opt["dy0"] is not None else 0.0)
    if "motion_dx" in manifest:
        return TranslationModel(float(manifest["motion_dx"]), float(manifest["motion_dy"]))
    raise _InputError("no initial offset: give --dx0 or --speed/--fps/--pixel-scale")


def _search_radius(opt: dict, dx0: float) -> float:
    if opt["radius"] is not None:
        return max(feedback.R_MIN, opt["radius"])
    if opt["coverage"] is not None:
        if opt["speed"] is None or opt["speed_sigma"] is None:
            raise _InputError("--coverage needs --speed and --speed-sigma")
        if opt["fps"] is None or opt["pixel_scale"] is None:
            raise _InputError("--coverage needs --fps and --pixel-scale")
        v = opt["speed"]
        u = SpeedUncertainty(
            mu=v, sigma=opt["speed_sigma"], a=0.9 * v, b=1.1 * v, coverage=opt["coverage"]
        )
        return feedback.radius_coverage(u, MotionPrior(v, opt["fps"], opt["pixel_scale"]))
    return max(feedback.R_MIN, feedback.radius_worst_case(dx0))


def cmd_register(args, config: dict) -> int:
    opt = _resolve_options("register", args, config)
    if not opt["data"]:
        raise _InputError("--data is required")
    manifest, g, _d, _n, images = _load_dataset(opt["data"])
    initial = _initial_prior(opt, manifest)
    radius = _search_radius(opt, initial.dx)
    cfg = _registration_config(opt)

    if args.verbose:
        print(f"initial prior ({initial.dx}, {initial.dy}), radius {radius}")
    result = feedback.register_sequence(images, initial, cfg, radius=radius)

    os.makedirs(args.out_dir, exist_ok=True)
    for k, (ms, h) in enumerate(zip(result.match_sets, result.homographies)):
        ms.save(os.path.join(args.out_dir, f"matches_{k:03d}.csv"))
        with open(os.path.join(args.out_dir, f"homography_{k:03d}.txt"), "w") as fh:
            fh.write(h.to_flat() + "\n")
    feedback.save_trace(result.state.history, os.path.join(args.out_dir, "trace.csv"))
    figures.plot_trace(result.state.history, os.path.join(args.out_dir, "trace.png"))

    n_flagged = sum(rec.flagged for rec in result.state.history)
    print(
        f"registered {len(result.match_sets)} pairs "
        f"({n_flagged} flagged); final prior ({result.state.dx:.2f}, {result.state.dy:.2f})"
    )
    if result.state.all_flagged:
        print("registration failed: every pair was flagged", file=sys.stderr)
        return 3
    return 0


def _load_registration(reg_dir: str, n_pairs: int):
    match_sets, homographies = [], []
    for k in range(n_pairs):
        match_sets.append(MatchSet.load(_require_file(os.path.join(reg_dir, f"matches_{k:03d}.csv"))))
        with open(_require_file(os.path.join(reg_dir, f"homography_{k:03d}.txt"))) as fh:
            homographies.append(Homography.from_flat(fh.read()))
    return match_sets, homographies


def cmd_stitch(args, config: dict) -> int:
    opt = _resolve_options("stitch", args, config)
    if not opt["data"] or not opt["registration"]:
        raise _InputError("--data and --registration are required")
    _manifest, g, _d, _n, images = _load_dataset(opt["data"])
    _match_sets, homographies = _load_registration(opt["registration"], g.frames - 1)

    os.makedirs(args.out_dir, exist_ok=True)
    pano = stitching.stitch(images, homographies, feather=opt["feather"])
    write_pgm(os.path.join(args.out_dir, "panorama.pgm"), pano)
    ghosting = stitching.overlap_disagreement(images, homographies)
    with open(os.path.join(args.out_dir, "ghosting.csv"), "w") as fh:
        fh.write("pair,disagreement\n")
        for k, v in enumerate(ghosting):
            fh.write(f"{k},{float(v)!r}\n")
    figures.plot_ghosting(ghosting, os.path.join(args.out_dir, "ghosting.png"))
    print(
        f"panorama {pano.shape[1]}x{pano.shape[0]}, "
        f"mean ghosting {float(np.nanmean(ghosting)):.4f}"
    )
    return 0


def cmd_eval(args, config: dict) -> int:
    opt = _resolve_options("eval", args, config)
    if not opt["data"] or not opt["registration"]:
        raise _InputError("--data and --registration are required")
    _manifest, g, _d, _n, images = _load_dataset(opt["data"])
    gt = _load_ground_truth(opt["data"], g)
    match_sets, _h = _load_registration(opt["registration"], g.frames - 1)

    os.makedirs(args.out_dir, exist_ok=True)
    report = evaluation.sequence_center_report(match_sets, gt)
    report.save(os.path.join(args.out_dir, "center_report.csv"))
    figures.plot_center_report(report, os.path.join(args.out_dir, "center_report.png"))
    print(report.summary())

    if opt["methods"]:
        from .features import extract
        from .matching import match_gated, match_lowest_ssd, ransac_filter

        names = [m.strip() for m in opt["methods"].split(",") if m.strip()]
        known = {"lowest-ssd", "ransac", "gated"}
        bad = set(names) - known
        if bad:
            raise _InputError(f"unknown methods: {', '.join(sorted(bad))}")
        cfg = RegistrationConfig()
        feats = [extract(im, cfg.extractor) for im in images]
        prior = TranslationModel(g.motion[0], g.motion[1])
        gate = GateConfig(radius=opt["radius"], threshold=opt["thr"])
        totals = {name: 0 for name in names}
        baseline_total = 0
        for k in range(g.frames - 1):
            base = match_lowest_ssd(feats[k], feats[k + 1], opt["thr"])
            baseline_total += len(base)
            for name in names:
                if name == "lowest-ssd":
                    totals[name] += len(base)
                elif name == "ransac":
                    if len(base) >= 4:
                        try:
                            _, inliers = ransac_filter(base, seed=0)
                            totals[name] += len(inliers)
                        except SeqregError:
                            pass
                elif name == "gated":
                    totals[name] += len(match_gated(feats[k], feats[k + 1], prior, gate))
        if baseline_total == 0:
            raise _InputError("baseline produced no matches; count report undefined")
        with open(os.path.join(args.out_dir, "counts.csv"), "w") as fh:
            fh.write("method,percent_of_baseline\n")
            print(f"{'method':<12} %of baseline")
            for name in names:
                pct = 100.0 * totals[name] / baseline_total
                fh.write(f"{name},{pct!r}\n")
                print(f"{name:<12} {pct:8.2f}")
    return 0


def cmd_bench(args, config: dict) -> int:
    opt = _resolve_options("bench", args, config)
    if not opt["data"]:
        raise _InputError("--data is required")
    _manifest, g, _d, _n, images = _load_dataset(opt["data"])
    k = opt["pair"]
    if not (0 <= k < g.frames - 1):
        raise _InputError(f"pair index {k} out of range")
    from .features import extract

    cfg = RegistrationConfig()
    fs_prev = extract(images[k], cfg.extractor)
    fs_curr = extract(images[k + 1], cfg.extractor)
    prior = TranslationModel(g.motion[0], g.motion[1])
    gate = GateConfig(radius=opt["radius"], threshold=opt["thr"])
    report = evaluation.bench_matchers(fs_prev, fs_curr, prior, gate, repetitions=opt["reps"])

    os.makedirs(args.out_dir, exist_ok=True)
    report.save(os.path.join(args.out_dir, "timing.csv"))
    figures.plot_timing(report, os.path.join(args.out_dir, "timing.png"))
    print(report.summary())
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "register": cmd_register,
    "stitch": cmd_stitch,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = {}
        if args.config:
            config = synthetic.load_manifest(_require_file(args.config))
        return _COMMANDS[args.command](args, config)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SeqregError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
