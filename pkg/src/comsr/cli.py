"""Command line front end.

Subcommands cover the full workflow: synthesize test imagery and
bursts, register a burst, fuse it, build dictionaries, super-resolve
with any pipeline, check the multi-frame/fused-image solver agreement,
and drive benchmark sweeps from a config file.

Burst directories hold frame_XXX.png/.pgm plus manifest.txt with one
"k dx dy [edx edy]" line per frame (shifts in HR pixels). Comment lines
starting with '#' carry generation metadata (seed, blur, noise) and are
preserved across registration and copied into run manifests.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import fusion, harness, image, pipelines, registration, testimages
from .degradation import (
    MANIFEST_NAME,
    SHIFT_MODELS,
    DegradationConfig,
    generate_burst,
    load_burst,
    save_burst,
    write_manifest,
)
from .dictionary import build_dictionary_pair, load_dictionary, save_dictionary
from .ista import SolverParams
from .multiframe import verify_equivalence


def _manifest_comments(directory):
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        return []
    return [ln for ln in path.read_text().splitlines() if ln.lstrip().startswith("#")]


def _write_manifest_keeping_comments(frames, directory):
    comments = _manifest_comments(directory)
    write_manifest(frames, directory)
    if comments:
        path = Path(directory) / MANIFEST_NAME
        path.write_text("\n".join(comments) + "\n" + path.read_text())


def _comment_metadata(directory):
    """Parse '# key value' manifest comments into a dict."""
    meta = {}
    for line in _manifest_comments(directory):
        parts = line.lstrip("# ").split(None, 1)
        if len(parts) == 2:
            meta[parts[0]] = parts[1]
    return meta


def _load_builtin(name):
    for image_name, img in testimages.desk_set():
        if image_name == name:
            return img
    names = ", ".join(n for n, _ in testimages.desk_set())
    raise ValueError(f"unknown built-in image {name!r}; choose from {names}")


def _input_image(args):
    if args.image is not None:
        return image.load_image(args.image)
    return _load_builtin(args.builtin)


def _parse_split(raw):
    a, sep, b = raw.lower().partition("x")
    if not sep:
        raise argparse.ArgumentTypeError(f"split must look like 2x2, got {raw!r}")
    return (int(a), int(b))


def _parse_dict_flag(raw):
    scale, sep, path = raw.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected SCALE:PATH, got {raw!r}")
    return (int(scale), path)


def _parse_seeds(raw):
    """Seed list syntax: 'a:b' half-open range or comma separated."""
    if ":" in raw:
        lo, _, hi = raw.partition(":")
        seeds = list(range(int(lo), int(hi)))
    else:
        seeds = [int(v) for v in raw.split(",") if v.strip()]
    if not seeds:
        raise argparse.ArgumentTypeError(f"no seeds in {raw!r}")
    return seeds


def _ensure_registered(frames, scale, mode):
    if any(f.estimated_shift is None for f in frames):
        registration.register_burst(frames, scale, mode)
    return frames


def _save_counts_pgm(path, counts):
    """Counts map as ASCII PGM: lossless for small integer counts."""
    counts = np.asarray(counts, dtype=np.int64)
    maxval = max(1, int(counts.max()))
    lines = [f"P2\n{counts.shape[1]} {counts.shape[0]}\n{maxval}"]
    for row in counts:
        lines.append(" ".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _cmd_synth_images(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, img in testimages.desk_set(args.size):
        image.save_image(out / f"{name}.png", img)
        print(f"wrote {out / (name + '.png')}")
    return 0


def _cmd_synth_burst(args):
    hr = _input_image(args)
    cfg = DegradationConfig(
        scale=args.scale,
        frames=args.frames,
        blur_sigma=args.blur_sigma,
        noise_sigma=args.noise_sigma,
        shift_model=args.shift_model,
        shift_range=args.shift_range,
        seed=args.seed,
    )
    frames = generate_burst(hr, cfg)
    save_burst(frames, args.out, fmt=args.fmt)
    header = [
        f"# seed {cfg.seed}",
        f"# scale {cfg.scale}",
        f"# blur-sigma {cfg.blur_sigma!r}",
        f"# noise-sigma {cfg.noise_sigma!r}",
        f"# shift-model {cfg.shift_model}",
    ]
    manifest = Path(args.out) / MANIFEST_NAME
    manifest.write_text("\n".join(header) + "\n" + manifest.read_text())
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


def _cmd_register(args):
    frames = load_burst(args.burst)
    registration.register_burst(
        frames, args.scale, "estimated",
        subpixel_upsample=args.upsample, taper_width=args.taper,
    )
    _write_manifest_keeping_comments(frames, args.burst)
    for frame in frames:
        edx, edy = frame.estimated_shift
        print(f"frame {frame.index}: ({edx:.4f}, {edy:.4f}) HR px")
    return 0


def _cmd_fuse(args):
    frames = load_burst(args.burst)
    _ensure_registered(frames, args.scale, args.registration)
    acc = fusion.shift_and_add(frames, args.scale)
    if args.mode == "shift-add":
        fused = fusion.normalize_fusion(acc, args.hole_fill)
    else:
        fused = fusion.curve_fit_fuse(
            frames, args.scale,
            window_radius=args.window_radius, weight_sigma=args.weight_sigma,
            neighbors=args.neighbors, fit_degree=args.fit_degree,
        )
    image.save_image(args.out, np.clip(fused, 0.0, 1.0))
    counts_path = args.counts or str(Path(args.out).with_suffix("")) + ".counts.pgm"
    _save_counts_pgm(counts_path, acc.count_image)
    covered = int(np.count_nonzero(acc.count_image))
    total = acc.count_image.size
    print(f"wrote {args.out} ({args.mode}, coverage {covered}/{total})")
    print(f"wrote {counts_path}")
    return 0


def _cmd_dict_build(args):
    if args.images:
        training = [image.load_image(p) for p in args.images]
    else:
        training = [img for _, img in testimages.desk_set()]
    pair = build_dictionary_pair(
        training, args.num_atoms, patch_size=args.patch_size,
        scale=args.scale, blur_sigma=args.blur_sigma, seed=args.seed,
    )
    save_dictionary(pair, args.out)
    print(
        f"wrote {args.out}: K={pair.num_atoms} patch={pair.patch_size} "
        f"scale={pair.scale} L={pair.lipschitz:.6g}"
    )
    return 0


def _cmd_verify_equivalence(args):
    rows = []
    failures = 0
    for seed in args.seeds:
        report = verify_equivalence(
            args.patch_size, args.scale, args.frames, args.num_atoms,
            seed, iterations=args.iterations, tolerance=args.tolerance,
        )
        verdict = "PASS" if report.max_deviation <= args.tolerance else "FAIL"
        failures += verdict == "FAIL"
        rows.append((seed, report.max_deviation, verdict))
        print(f"seed {seed:6d}  max deviation {report.max_deviation:.3e}  {verdict}")
    print(
        f"{len(rows) - failures}/{len(rows)} passed "
        f"(patch {args.patch_size}, scale {args.scale}, frames {args.frames}, "
        f"atoms {args.num_atoms}, {args.iterations} iterations, "
        f"tolerance {args.tolerance:g})"
    )
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as handle:
            handle.write("seed,max_deviation,verdict\r\n")
            for seed, deviation, verdict in rows:
                handle.write(f"{seed},{deviation:.6e},{verdict}\r\n")
        print(f"wrote {args.csv}")
    return 1 if failures else 0


def _cmd_sr(args):
    frames = load_burst(args.burst)
    solver = SolverParams(
        lam=args.lam, max_iterations=args.max_iterations, tolerance=args.tolerance,
    )
    spec = pipelines.PipelineSpec(
        kind=args.pipeline,
        scale=args.scale,
        split=args.split,
        registration_mode=args.registration,
        solver=solver,
        stride=args.stride,
        fusion_mode=args.fusion_mode,
        hole_fill=args.hole_fill,
        window_radius=args.window_radius,
        weight_sigma=args.weight_sigma,
        neighbors=args.neighbors,
        fit_degree=args.fit_degree,
    )
    spec.validate()
    dicts = {scale: load_dictionary(path) for scale, path in (args.dict or [])}
    stats = pipelines.PipelineStats()
    t0 = time.perf_counter()
    out = pipelines.run_pipeline(frames, spec, dicts, stats=stats)
    wall = time.perf_counter() - t0
    image.save_image(args.out, np.clip(out, 0.0, 1.0))
    manifest_path = args.run_manifest or args.out + ".run.json"
    run_manifest = {
        "pipeline": spec.kind,
        "scale": spec.scale,
        "split": list(spec.split) if spec.split else None,
        "registration": spec.registration_mode,
        "solver": {
            "lam": solver.lam,
            "max_iterations": solver.max_iterations,
            "tolerance": solver.tolerance,
        },
        "stride": spec.stride,
        "fusion_mode": spec.fusion_mode,
        "hole_fill": spec.hole_fill,
        "window_radius": spec.window_radius,
        "weight_sigma": spec.weight_sigma,
        "neighbors": spec.neighbors,
        "fit_degree": spec.fit_degree,
        "dictionaries": {str(s): p for s, p in (args.dict or [])},
        "burst": str(args.burst),
        "frames": len(frames),
        "shifts": [
            {
                "index": f.index,
                "true": list(f.true_shift),
                "estimated": list(f.estimated_shift) if f.estimated_shift else None,
            }
            for f in frames
        ],
        "source": _comment_metadata(args.burst),
        "stages": [{"name": n, "seconds": round(s, 6)} for n, s in stats.stages],
        "solves": stats.solves,
        "total_iterations": stats.total_iterations,
        "wall_seconds": round(wall, 6),
        "output": str(args.out),
    }
    Path(manifest_path).write_text(json.dumps(run_manifest, indent=2) + "\n")
    print(f"wrote {args.out} ({out.shape[0]}x{out.shape[1]}, {stats.solves} solves)")
    print(f"wrote {manifest_path}")
    return 0


def _cmd_experiment(args):
    cfg = harness.load_experiment_config(args.config)
    table = harness.run_experiment(cfg, jobs=args.jobs)
    harness.emit_csv(table, args.out)
    aggregates = sum(r.trial in ("mean", "std") for r in table.rows)
    print(f"wrote {len(table.rows)} rows ({aggregates} aggregate) to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="comsr",
        description="Single-image and multi-frame super-resolution toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-images", help="write the built-in test images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, default=testimages.DESK_SIZE)
    p.set_defaults(func=_cmd_synth_images)

    p = sub.add_parser("synth-burst", help="degrade an image into an LR burst")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image", help="input image path")
    src.add_argument("--builtin", help="built-in test image name")
    p.add_argument("--out", required=True, help="burst directory")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--blur-sigma", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--shift-model", choices=SHIFT_MODELS, default="continuous")
    p.add_argument("--shift-range", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fmt", choices=("png", "pgm"), default="png")
    p.set_defaults(func=_cmd_synth_burst)

    p = sub.add_parser("register", help="estimate burst shifts, update manifest")
    p.add_argument("--burst", required=True, help="burst directory")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--upsample", type=int, default=8,
                   help="sub-pixel refinement factor")
    p.add_argument("--taper", type=int, default=0,
                   help="raised-cosine border taper width in LR pixels")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("fuse", help="fuse a burst onto the HR grid")
    p.add_argument("--burst", required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--mode", choices=(pipelines.SHIFT_ADD, pipelines.CURVE_FIT),
                   default=pipelines.SHIFT_ADD)
    p.add_argument("--hole-fill", choices=("bicubic", "nearest"),
                   default="bicubic")
    p.add_argument("--window-radius", type=float, default=None)
    p.add_argument("--weight-sigma", type=float, default=None)
    p.add_argument("--neighbors", type=int, default=None,
                   help="adaptive curve-fit span: k nearest samples")
    p.add_argument("--fit-degree", type=int, choices=(1, 2), default=None)
    p.add_argument("--registration", choices=("ideal", "estimated"),
                   default="ideal", help="used only if the manifest lacks estimates")
    p.add_argument("--out", required=True, help="fused image path")
    p.add_argument("--counts", default=None,
                   help="counts map path (default <out>.counts.pgm)")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("dict", help="dictionary utilities")
    dict_sub = p.add_subparsers(dest="dict_command", required=True)
    b = dict_sub.add_parser("build", help="sample a coupled dictionary pair")
    b.add_argument("--images", nargs="*", default=None,
                   help="training images (default: built-in test set)")
    b.add_argument("--out", required=True, help="dictionary file path")
    b.add_argument("--num-atoms", type=int, required=True)
    b.add_argument("--patch-size", type=int, default=8)
    b.add_argument("--scale", type=int, required=True)
    b.add_argument("--blur-sigma", type=float, default=1.0)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=_cmd_dict_build)

    p = sub.add_parser(
        "verify-equivalence",
        help="check collapsed multi-frame ISTA against the stacked solver",
    )
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--frames", type=int, default=4)
    p.add_argument("--num-atoms", type=int, default=64)
    p.add_argument("--seeds", type=_parse_seeds, default=list(range(10)),
                   help="'a:b' half-open range or comma list")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--csv", default=None, help="also write a CSV report")
    p.set_defaults(func=_cmd_verify_equivalence)

    p = sub.add_parser("sr", help="super-resolve a burst with a pipeline")
    p.add_argument("--burst", required=True)
    p.add_argument("--pipeline", choices=pipelines.ALL_KINDS, required=True)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--split", type=_parse_split, default=None,
                   help="two-stage factorization, e.g. 2x2")
    p.add_argument("--registration", choices=("ideal", "estimated"),
                   default="ideal")
    p.add_argument("--dict", type=_parse_dict_flag, action="append",
                   help="SCALE:PATH, repeatable")
    p.add_argument("--lam", type=float, default=0.05)
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--fusion-mode",
                   choices=(pipelines.SHIFT_ADD, pipelines.CURVE_FIT),
                   default=pipelines.SHIFT_ADD)
    p.add_argument("--hole-fill", choices=("bicubic", "nearest"),
                   default="bicubic")
    p.add_argument("--window-radius", type=float, default=None)
    p.add_argument("--weight-sigma", type=float, default=None)
    p.add_argument("--neighbors", type=int, default=None,
                   help="adaptive curve-fit span: k nearest samples")
    p.add_argument("--fit-degree", type=int, choices=(1, 2), default=None)
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--run-manifest", default=None,
                   help="run manifest path (default <out>.run.json)")
    p.set_defaults(func=_cmd_sr)

    p = sub.add_parser("experiment", help="run a benchmark sweep from a config")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
