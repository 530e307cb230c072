"""Command-line entry point.

Subcommands:
    augment    run the pipeline over an images/+labels/ dataset
    preview    render a panel grid of the stages applied to one image
    kernel     dump a blur kernel as CSV and a grayscale PNG heatmap
    selfcheck  run the attention/aggregation verification suite
    bench      per-stage and end-to-end throughput on a dataset

Set AQUAAUG_LOG=debug|info|warning to control verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import dataio, optics, pipeline, selfcheck
from .errors import AquaAugError, StageFailure
from .imgcore import ImageBuffer, normalize, quantize_u8

log = logging.getLogger("aquaaug.cli")


def _setup_logging() -> None:
    level = os.environ.get("AQUAAUG_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_config(path: str | None, seed: int | None, target: int | None = None):
    if path is None:
        cfg = pipeline.PipelineConfig.default()
    else:
        cfg = pipeline.PipelineConfig.from_json(path)
    if seed is not None:
        cfg.global_seed = seed
    if target is not None:
        cfg.target_size = target
    return cfg


def cmd_augment(args: argparse.Namespace) -> int:
    try:
        if args.replay:
            manifest_in = pipeline.AugmentManifest.read(args.replay)
            cfg = pipeline.PipelineConfig.from_dict(manifest_in.config)
            if args.seed is not None:
                raise ValueError("--seed conflicts with --replay")
        else:
            manifest_in = None
            cfg = _load_config(args.config, args.seed)
        in_layout = dataio.DatasetLayout.under(args.input)
        out_layout = dataio.DatasetLayout.under(args.output)
        entries = dataio.scan_layout(in_layout)
    except (AquaAugError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    load_skips = []
    dataset = []
    for entry in entries:
        try:
            dataset.append(dataio.load_pair(entry))
        except AquaAugError as exc:
            log.warning("skipping %s: %s", entry.stem, exc)
            load_skips.append(
                {"image_id": entry.stem, "stage": "load", "cause": str(exc)}
            )

    if manifest_in is not None:
        results, mismatched = pipeline.verify_against_manifest(
            manifest_in, dataset, threads=args.threads
        )
        if mismatched:
            print(f"replay FAILED for {len(mismatched)} image(s): {mismatched}")
            return 2
        dataio.write_dataset(results, out_layout)
        print(f"replay ok: {len(results)} image(s) reproduced")
        return 0

    results, manifest = pipeline.run_pipeline(cfg, dataset, threads=args.threads)
    manifest.skipped.extend(load_skips)
    written = dataio.write_dataset(results, out_layout)
    manifest_path = Path(args.output) / "manifest.jsonl"
    manifest.write(manifest_path)

    boxes_in = sum(len(ann.boxes) for _, ann in dataset)
    boxes_out = sum(len(ann.boxes) for _, ann in results)
    skipped = len(manifest.skipped)
    print(
        f"processed {written} image(s), skipped {skipped}, "
        f"boxes {boxes_in} -> {boxes_out}, manifest {manifest_path}"
    )
    return 2 if skipped else 0


def _panel_image(img: ImageBuffer, label: str, bar: int = 18) -> Image.Image:
    u8 = img if img.depth == "U8" else quantize_u8(img)
    pixels = u8.pixels[:, :, 0] if u8.channels == 1 else u8.pixels
    panel = Image.new("RGB", (u8.width, u8.height + bar), (16, 16, 16))
    panel.paste(Image.fromarray(pixels).convert("RGB"), (0, bar))
    ImageDraw.Draw(panel).text((4, 3), label, fill=(240, 240, 240))
    return panel


def cmd_preview(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args.config, args.seed)
        entry = dataio.PairEntry(
            stem=Path(args.input).stem, image_path=Path(args.input), label_path=None
        )
        img, ann = dataio.load_pair(entry)
    except (AquaAugError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    work = normalize(img)
    panels = [_panel_image(work, "original")]
    current = work
    for spec in cfg.stages:
        if spec.name in pipeline.FINAL_STAGES or not spec.enabled:
            continue
        rng = pipeline.derive_stream(cfg.global_seed, ann.image_id, spec.name)
        # preview always applies the stage: show the effect, not the coin flip
        forced = pipeline.StageSpec(
            name=spec.name, enabled=True, probability=1.0, params=spec.params
        )
        base = work if args.independent else current
        stage_img, _, _ = pipeline._STAGE_RUNNERS[spec.name](
            base, ann.copy(), forced, rng
        )
        if not args.independent:
            current = stage_img
        panels.append(_panel_image(stage_img, spec.name))

    width = sum(p.width for p in panels) + 2 * (len(panels) - 1)
    height = max(p.height for p in panels)
    grid = Image.new("RGB", (width, height), (0, 0, 0))
    x = 0
    for p in panels:
        grid.paste(p, (x, 0))
        x += p.width + 2
    grid.save(args.output, format="PNG")
    print(f"wrote {len(panels)}-panel grid to {args.output}")
    return 0


def cmd_kernel(args: argparse.Namespace) -> int:
    try:
        if args.kind == "psf":
            kernel = optics.build_psf(
                optics.PsfParams(
                    lambda_scatter=args.lambda_scatter,
                    lambda_turb=args.lambda_turb,
                    kernel_radius=args.radius,
                )
            )
        else:
            kernel = optics.build_depth_gaussian(
                optics.DepthKernelParams(
                    sigma_ref=args.sigma_ref,
                    z_ref=args.z_ref,
                    z=args.z,
                    exponent=args.exponent,
                )
            )
    except (AquaAugError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.out_csv:
        np.savetxt(args.out_csv, kernel.weights, delimiter=",", fmt="%.17g")
        print(f"wrote {kernel.side}x{kernel.side} kernel CSV to {args.out_csv}")
    if args.out_png:
        w = kernel.weights
        scaled = (w / w.max() * 255.0).round().astype(np.uint8)
        Image.fromarray(scaled, mode="L").save(args.out_png, format="PNG")
        print(f"wrote heatmap PNG to {args.out_png}")
    if not args.out_csv and not args.out_png:
        print(f"kernel side={kernel.side} sum={kernel.weights.sum():.12f}")
    return 0


def cmd_selfcheck(args: argparse.Namespace) -> int:
    results = selfcheck.run_selfcheck(seed=args.seed if args.seed is not None else 0)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.detail}")
        failures += not r.passed
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 1 if failures else 0


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        cfg = _load_config(args.config, args.seed)
        layout = dataio.DatasetLayout.under(args.input)
        dataset = list(dataio.load_dataset(layout))
    except (AquaAugError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not dataset:
        print("error: empty dataset", file=sys.stderr)
        return 1

    stage_names = [
        s.name
        for s in cfg.stages
        if s.enabled and (s.name not in pipeline.FINAL_STAGES or s.name == "letterbox")
    ]
    if "normalize" not in stage_names:
        stage_names.append("normalize")

    samples: dict[str, list[float]] = {name: [] for name in stage_names}
    samples["end_to_end"] = []
    n = len(dataset)
    for _ in range(args.reps):
        stage_time = {name: 0.0 for name in stage_names}
        t_all = time.perf_counter()
        for img, ann in dataset:
            t0 = time.perf_counter()
            work = normalize(img) if img.depth == "U8" else img
            stage_time["normalize"] += time.perf_counter() - t0
            for spec in cfg.stages:
                if spec.name in pipeline.FINAL_STAGES or not spec.enabled:
                    continue
                rng = pipeline.derive_stream(cfg.global_seed, ann.image_id, spec.name)
                t0 = time.perf_counter()
                work, ann2, _ = pipeline._STAGE_RUNNERS[spec.name](
                    work, ann.copy(), spec, rng
                )
                stage_time[spec.name] += time.perf_counter() - t0
            if cfg.stage("letterbox").enabled:
                from .imgcore import letterbox_resize

                t0 = time.perf_counter()
                work, _ = letterbox_resize(work, ann.copy(), cfg.target_size)
                stage_time["letterbox"] += time.perf_counter() - t0
        samples["end_to_end"].append(time.perf_counter() - t_all)
        for name in stage_names:
            samples[name].append(stage_time[name])

    report = {
        "images": n,
        "repetitions": args.reps,
        "stages": {
            name: {
                "samples_s": vals,
                "median_s": statistics.median(vals),
                "images_per_s": n / statistics.median(vals)
                if statistics.median(vals) > 0
                else float("inf"),
            }
            for name, vals in samples.items()
        },
    }
    print(f"{'stage':<12} {'median_s':>10} {'img/s':>10}")
    for name in stage_names + ["end_to_end"]:
        med = report["stages"][name]["median_s"]
        rate = report["stages"][name]["images_per_s"]
        print(f"{name:<12} {med:>10.4f} {rate:>10.1f}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(report, indent=2, sort_keys=True))
        print(f"wrote JSON report to {args.json_out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aquaaug",
        description="Physics-informed underwater image augmentation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_aug = sub.add_parser("augment", help="augment a dataset and emit a manifest")
    p_aug.add_argument("--config", help="pipeline config JSON (default: built-in)")
    p_aug.add_argument("--input", required=True, help="dataset root (images/, labels/)")
    p_aug.add_argument("--output", required=True, help="output dataset root")
    p_aug.add_argument("--seed", type=int, help="override the config global seed")
    p_aug.add_argument(
        "--threads", type=int, default=0, help="worker threads (0 = auto)"
    )
    p_aug.add_argument(
        "--replay",
        help="re-run from this manifest and verify output checksums match",
    )
    p_aug.set_defaults(func=cmd_augment)

    p_prev = sub.add_parser("preview", help="render a stage-by-stage panel grid")
    p_prev.add_argument("--config", help="pipeline config JSON (default: built-in)")
    p_prev.add_argument("--input", required=True, help="one image file")
    p_prev.add_argument("--output", required=True, help="output PNG path")
    p_prev.add_argument("--seed", type=int, help="override the config global seed")
    p_prev.add_argument(
        "--independent",
        action="store_true",
        help="apply each stage to the original instead of cumulatively",
    )
    p_prev.set_defaults(func=cmd_preview)

    p_ker = sub.add_parser("kernel", help="dump a blur kernel (CSV and/or PNG)")
    p_ker.add_argument("--kind", choices=("psf", "gaussian"), required=True)
    p_ker.add_argument("--lambda-scatter", type=float, default=2.0)
    p_ker.add_argument("--lambda-turb", type=float, default=2.0)
    p_ker.add_argument("--radius", type=int, help="explicit kernel radius (px)")
    p_ker.add_argument("--sigma-ref", type=float, default=1.5)
    p_ker.add_argument("--z-ref", type=float, default=5.0)
    p_ker.add_argument("--z", type=float, default=5.0)
    p_ker.add_argument("--exponent", type=float, default=0.78)
    p_ker.add_argument("--out-csv", help="write weights as row-major CSV")
    p_ker.add_argument("--out-png", help="write grayscale heatmap PNG")
    p_ker.set_defaults(func=cmd_kernel)

    p_chk = sub.add_parser("selfcheck", help="verify the reference kernels")
    p_chk.add_argument("--seed", type=int, help="seed for the random configs")
    p_chk.set_defaults(func=cmd_selfcheck)

    p_bench = sub.add_parser("bench", help="measure per-stage throughput")
    p_bench.add_argument("--config", help="pipeline config JSON (default: built-in)")
    p_bench.add_argument("--input", required=True, help="dataset root")
    p_bench.add_argument("--seed", type=int, help="override the config global seed")
    p_bench.add_argument("--reps", type=int, default=3, help="timing repetitions")
    p_bench.add_argument("--json-out", help="write the JSON report here")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageFailure as exc:  # defensive: stages are normally skipped
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
