"""Command-line front end: single morphs, manifest batches, synthetic benches.

Exit codes: 0 success (including batches with failed rows), 1 fatal
usage or I/O problems, 2 numerical breakdown during alignment.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import MorphAlignError, NumericalBreakdownError
from .imagecore import save_image
from .pipeline import (
    MorphJob,
    align_params_from_config,
    execute_job,
    load_config,
    read_manifest,
    run_batch,
    write_manifest,
)
from .pwalign import gauss_newton_align
from .synthbench import SHAPE_KINDS, endpoint_error, make_pair, residual_reduction

__all__ = ["main", "build_parser"]


def _pair_of_floats(label, sep=":"):
    def parse(text):
        parts = text.split(sep)
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"{label} must look like A{sep}B, got {text!r}")
        try:
            return float(parts[0]), float(parts[1])
        except ValueError:
            raise argparse.ArgumentTypeError(f"{label} needs two numbers, got {text!r}")

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morphalign",
        description="Ghosting-free face morphs via landmark warping plus "
        "pixel-wise symmetric alignment.",
    )
    sub = parser.add_subparsers(dest="command", metavar="{single,batch,synth}")

    p = sub.add_parser("single", help="morph one image pair")
    p.add_argument("--image-a", required=True, help="first input image (PNG/JPEG)")
    p.add_argument("--image-b", required=True, help="second input image")
    p.add_argument("--lm-a", required=True, help="landmark file for image A")
    p.add_argument("--lm-b", required=True, help="landmark file for image B")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--alpha", type=float, default=None, help="blend factor (default 0.5)")
    p.add_argument("--method", choices=("pw", "simple"), default=None,
                   help="pixel-wise alignment or landmark-only (default pw)")
    p.add_argument("--jpeg-target", type=_pair_of_floats("jpeg target"), default=None,
                   metavar="MIN:MAX", help="target JPEG size window in kB, e.g. 15:20")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="regularization weight")
    p.add_argument("--hp-sigma", type=float, default=None, help="high-pass filter sigma")
    p.add_argument("--dump-warps", default=None, metavar="DIR",
                   help="write recovered warp fields (binary + false-color) here")
    p.add_argument("--config", default=None, help="key=value config file")
    p.set_defaults(func=_cmd_single)

    p = sub.add_parser("batch", help="run a CSV manifest of jobs")
    p.add_argument("--manifest", required=True, help="input job manifest (CSV)")
    p.add_argument("--parallel", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--out-manifest", default=None,
                   help="result manifest path (default: <manifest>_results.csv)")
    p.add_argument("--strict", action="store_true", help="abort on the first failed job")
    p.add_argument("--config", default=None, help="key=value config file")
    p.set_defaults(func=_cmd_batch)

    p = sub.add_parser("synth", help="generate a synthetic pair and score alignment")
    p.add_argument("--kind", required=True, choices=SHAPE_KINDS, help="shape kind")
    p.add_argument("--offset", type=_pair_of_floats("offset"), default=(2.0, 0.0),
                   metavar="DX:DY", help="true displacement in px (default 2:0)")
    p.add_argument("--size", type=int, default=128, help="image side in px (default 128)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--noise-sigma", type=float, default=0.0,
                   help="additive Gaussian pixel noise (default 0)")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="regularization weight")
    p.add_argument("--hp-sigma", type=float, default=None, help="high-pass filter sigma")
    p.set_defaults(func=_cmd_synth)

    return parser


def _job_settings(cfg, args):
    """Resolve job settings with CLI > config > defaults precedence."""
    alpha = args.alpha if args.alpha is not None else float(cfg.get("alpha", 0.5))
    method = args.method if args.method is not None else cfg.get("method", "pw")
    jpeg_target = getattr(args, "jpeg_target", None)
    if jpeg_target is None and "jpeg_min_kb" in cfg and "jpeg_max_kb" in cfg:
        jpeg_target = (float(cfg["jpeg_min_kb"]), float(cfg["jpeg_max_kb"]))
    split_sigma = float(cfg.get("split_sigma", 8.0))
    feather_sigma = float(cfg.get("feather_sigma", 8.0))
    return alpha, method, jpeg_target, split_sigma, feather_sigma


def _cmd_single(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    params = align_params_from_config(cfg, lam=args.lam, hp_sigma=args.hp_sigma)
    alpha, method, jpeg_target, split_sigma, feather_sigma = _job_settings(cfg, args)
    job = MorphJob(
        job_id=os.path.splitext(os.path.basename(args.out))[0],
        image_a=args.image_a,
        image_b=args.image_b,
        landmarks_a=args.lm_a,
        landmarks_b=args.lm_b,
        output=args.out,
        method=method,
        alpha=alpha,
        align_params=params,
        jpeg_target=jpeg_target,
        split_sigma=split_sigma,
        feather_sigma=feather_sigma,
        dump_warps=args.dump_warps,
    )
    row = execute_job(job)
    print(f"wrote {row.output} ({row.output_bytes} bytes)")
    if method == "pw":
        print(
            f"alignment: {row.iterations} iterations, "
            f"energy {row.initial_energy:.6g} -> {row.final_energy:.6g}"
        )
    return 0


def _cmd_batch(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    params = align_params_from_config(cfg)
    alpha, method, jpeg_target, split_sigma, feather_sigma = _job_settings(
        cfg, argparse.Namespace(alpha=None, method=None, jpeg_target=None)
    )
    del alpha, method  # manifest rows carry their own
    jobs = read_manifest(
        args.manifest,
        align_params=params,
        jpeg_target=jpeg_target,
        split_sigma=split_sigma,
        feather_sigma=feather_sigma,
    )
    rows = run_batch(jobs, parallelism=args.parallel, strict=args.strict)
    out_path = args.out_manifest
    if out_path is None:
        out_path = os.path.splitext(args.manifest)[0] + "_results.csv"
    write_manifest(rows, out_path)
    n_ok = sum(1 for r in rows if r.ok)
    print(f"{n_ok}/{len(rows)} jobs ok; results in {out_path}")
    for row in rows:
        if not row.ok:
            print(f"  {row.job_id}: {row.status}", file=sys.stderr)
    return 0


def _cmd_synth(args) -> int:
    pair = make_pair(args.kind, args.size, args.offset,
                     noise_sigma=args.noise_sigma, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    save_image(pair.img1, os.path.join(args.out, "pair_a.png"))
    save_image(pair.img2, os.path.join(args.out, "pair_b.png"))

    w, h = pair.size
    truth = {
        "kind": pair.kind,
        "width": w,
        "height": h,
        "seed": pair.seed,
        "noise_sigma": pair.noise_sigma,
        "offset_x": pair.offset[0],
        "offset_y": pair.offset[1],
    }
    _write_kv(os.path.join(args.out, "ground_truth.txt"), truth)

    params = align_params_from_config({}, lam=args.lam, hp_sigma=args.hp_sigma)
    result = gauss_newton_align(pair.img1, pair.img2, params)
    err = endpoint_error(result, pair)
    ratio = residual_reduction(pair, result, params)
    report = dict(truth)
    report.update(
        {
            "mean_endpoint_error": f"{err.mean:.6f}",
            "max_endpoint_error": f"{err.max:.6f}",
            "residual_reduction": f"{ratio:.6f}",
            "iterations": result.iterations_used,
            "converged": str(result.converged).lower(),
            "initial_energy": f"{result.initial_energy:.6e}",
            "final_energy": f"{result.final_energy:.6e}",
        }
    )
    _write_kv(os.path.join(args.out, "report.txt"), report)
    print(
        f"{pair.kind} {w}x{h} offset ({pair.offset[0]}, {pair.offset[1]}): "
        f"mean endpoint error {err.mean:.3f}px, residual reduction {ratio:.4f}"
    )
    return 0


def _write_kv(path, mapping) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, value in mapping.items():
            f.write(f"{key}={value}\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits itself on --help and usage errors
        return 0 if exc.code in (0, None) else 1
    if not getattr(args, "func", None):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except NumericalBreakdownError as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return 2
    except (MorphAlignError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
