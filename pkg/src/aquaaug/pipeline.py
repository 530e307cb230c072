"""Deterministic augmentation pipeline with a replayable manifest.

Every stochastic stage draws from its own counter-based substream keyed by
(global_seed, image_id, stage), so results do not depend on batch order,
thread count, or how many draws other stages made. The manifest records
every sampled parameter per image plus a checksum of the quantized output
pixels; re-running with the manifest's config and seed reproduces the
outputs bit-exactly.

Pixels enter as U8 and are normalized to unit-interval float32 at ingest
(all stages operate at F32; U8 is an I/O format only), then flow through
the configured stage order, letterboxing last.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import geometry, occlusion, optics, spectral
from .errors import StageFailure
from .imgcore import AnnotationSet, ImageBuffer, letterbox_resize, normalize, quantize_u8
from .occlusion import EraseConfig

log = logging.getLogger("aquaaug.pipeline")

AUG_STAGES = ("flip", "blur", "hsv", "erase")
FINAL_STAGES = ("letterbox", "normalize")
MANIFEST_VERSION = 1

# Table-driven defaults: flip -> blur -> hsv -> erase, the order in which
# the cumulative ablation added the transforms.
_DEFAULT_STAGE_PARAMS: dict[str, dict] = {
    "flip": {},
    "blur": {
        "kind": "depth_gaussian",
        "sigma_ref": 1.5,
        "z_ref": 5.0,
        "exponent": 0.78,
        "z_range": [1.0, 10.0],
    },
    "hsv": {
        "z_range": [1.0, 10.0],
        "beta_range": [0.0, 0.4],
        "c_d": 0.1,
        "irradiance_ratio": 1.0,
        "spectral_table": None,
    },
    "erase": {
        "max_occluders": 3,
        "fractal_dim": 1.7,
        "area_min": 0.02,
        "area_max": 0.20,
        "tau": 0.0,
        "fill": "uniform_noise",
        "drop_visibility_below": 0.2,
    },
}
_DEFAULT_PROBABILITIES = {"flip": 0.5, "blur": 1.0, "hsv": 1.0, "erase": 0.5}


def derive_stream(global_seed: int, image_id: str, stage: str) -> np.random.Generator:
    """Independent counter-based stream for one (seed, image, stage) triple."""
    digest = hashlib.sha256(
        f"{global_seed}\x1f{image_id}\x1f{stage}".encode("utf-8")
    ).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class StageSpec:
    name: str
    enabled: bool = True
    probability: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in AUG_STAGES + FINAL_STAGES:
            raise ValueError(f"unknown stage {self.name!r}")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"stage {self.name}: probability must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "enabled": self.enabled,
            "probability": self.probability,
            "params": self.params,
        }


@dataclass
class PipelineConfig:
    stages: list[StageSpec] = field(default_factory=list)
    global_seed: int = 0
    target_size: int = 640

    def __post_init__(self):
        if self.target_size < 32:
            raise ValueError("target_size must be >= 32")
        names = [s.name for s in self.stages]
        if len(names) != len(set(names)):
            raise ValueError(f"duplicate stage names in {names}")
        by_name = {s.name: s for s in self.stages}

        aug = [s for s in self.stages if s.name in AUG_STAGES]
        trailing = [s.name for s in self.stages if s.name in FINAL_STAGES]
        if trailing and names[-len(trailing) :] != trailing:
            raise ValueError("letterbox/normalize must come after all other stages")
        if trailing not in ([], ["letterbox"], ["normalize"], ["letterbox", "normalize"]):
            raise ValueError("final stages must be letterbox then normalize")

        letterbox = by_name.get("letterbox", StageSpec("letterbox"))
        norm = by_name.get("normalize", StageSpec("normalize"))
        if not norm.enabled:
            raise ValueError(
                "normalize cannot be disabled: stages operate at F32 depth"
            )
        self.stages = aug + [letterbox, norm]

    @classmethod
    def default(cls, global_seed: int = 0, target_size: int = 640) -> "PipelineConfig":
        stages = [
            StageSpec(
                name=name,
                probability=_DEFAULT_PROBABILITIES[name],
                params=dict(_DEFAULT_STAGE_PARAMS[name]),
            )
            for name in AUG_STAGES
        ]
        return cls(stages=stages, global_seed=global_seed, target_size=target_size)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        stages = [
            StageSpec(
                name=s["name"],
                enabled=bool(s.get("enabled", True)),
                probability=float(
                    s.get("probability", _DEFAULT_PROBABILITIES.get(s["name"], 1.0))
                ),
                params={
                    **_DEFAULT_STAGE_PARAMS.get(s["name"], {}),
                    **s.get("params", {}),
                },
            )
            for s in doc.get("stages", [])
        ]
        cfg = cls(
            stages=stages,
            global_seed=int(doc.get("global_seed", 0)),
            target_size=int(doc.get("target_size", 640)),
        )
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "global_seed": self.global_seed,
            "target_size": self.target_size,
            "stages": [s.to_dict() for s in self.stages],
        }

    def stage(self, name: str) -> StageSpec:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)


def pixel_checksum(img: ImageBuffer) -> str:
    """SHA-256 of the quantized U8 pixel bytes, prefixed with the dimensions."""
    u8 = img if img.depth == "U8" else quantize_u8(img)
    h = hashlib.sha256()
    h.update(f"{u8.height}x{u8.width}x{u8.channels}:".encode())
    h.update(np.ascontiguousarray(u8.pixels).tobytes())
    return h.hexdigest()


def _uniform_from_range(rng: np.random.Generator, value) -> float:
    if isinstance(value, (list, tuple)):
        lo, hi = float(value[0]), float(value[1])
        return lo if lo == hi else float(rng.uniform(lo, hi))
    return float(value)


def _run_flip(img, ann, spec: StageSpec, rng) -> tuple[ImageBuffer, AnnotationSet, dict]:
    applied = bool(rng.random() < spec.probability)
    rec = {"name": "flip", "applied": applied}
    if applied:
        img, ann = geometry.hflip(img, ann)
    return img, ann, rec


def _run_blur(img, ann, spec: StageSpec, rng) -> tuple[ImageBuffer, AnnotationSet, dict]:
    applied = bool(rng.random() < spec.probability)
    rec: dict = {"name": "blur", "applied": applied}
    if not applied:
        return img, ann, rec
    params = spec.params
    kind = params.get("kind", "depth_gaussian")
    if kind == "depth_gaussian":
        z = _uniform_from_range(rng, params.get("z_range", params.get("z", 5.0)))
        kp = optics.DepthKernelParams(
            sigma_ref=float(params.get("sigma_ref", 1.5)),
            z_ref=float(params.get("z_ref", 5.0)),
            z=z,
            exponent=float(params.get("exponent", 0.78)),
        )
        kernel = optics.build_depth_gaussian(kp)
        rec.update({"kind": kind, "z": z, "sigma": kp.sigma, "side": kernel.side})
    elif kind == "psf":
        lam_s = _uniform_from_range(rng, params.get("lambda_scatter", 2.0))
        lam_t = _uniform_from_range(rng, params.get("lambda_turb", 2.0))
        radius = params.get("kernel_radius")
        kernel = optics.build_psf(
            optics.PsfParams(
                lambda_scatter=lam_s,
                lambda_turb=lam_t,
                kernel_radius=radius,
            )
        )
        rec.update(
            {
                "kind": kind,
                "lambda_scatter": lam_s,
                "lambda_turb": lam_t,
                "side": kernel.side,
            }
        )
    else:
        raise ValueError(f"unknown blur kind {kind!r}")
    return optics.convolve(img, kernel), ann, rec


def _run_hsv(img, ann, spec: StageSpec, rng) -> tuple[ImageBuffer, AnnotationSet, dict]:
    applied = bool(rng.random() < spec.probability)
    rec: dict = {"name": "hsv", "applied": applied}
    if not applied:
        return img, ann, rec
    params = spec.params
    z = _uniform_from_range(rng, params.get("z_range", 5.0))
    beta = _uniform_from_range(rng, params.get("beta_range", 0.0))
    table_path = params.get("spectral_table")
    table = (
        spectral.load_table(table_path).at_depth(z)
        if table_path
        else spectral.default_table(z)
    )
    delta_h = spectral.hue_shift_degrees(table)
    water = spectral.WaterParams(
        beta_turbidity=beta,
        c_d=float(params.get("c_d", 0.1)),
        z=z,
        irradiance_ratio=float(params.get("irradiance_ratio", 1.0)),
    )
    rec.update(
        {
            "z": z,
            "beta_turbidity": beta,
            "delta_h_degrees": delta_h,
            "c_d": water.c_d,
            "irradiance_ratio": water.irradiance_ratio,
            "value_factor": water.value_factor,
        }
    )
    return spectral.apply_spectral(img, delta_h, water), ann, rec


def _run_erase(img, ann, spec: StageSpec, rng) -> tuple[ImageBuffer, AnnotationSet, dict]:
    params = {k: v for k, v in spec.params.items() if k != "probability"}
    cfg = EraseConfig(probability=spec.probability, **params)
    img, ann, record = occlusion.apply_erase(img, ann, cfg, rng)
    rec = {
        "name": "erase",
        "applied": bool(record.rects),
        "rects": [list(r) for r in record.rects],
        "dropped_boxes": record.dropped,
        "visibility": [[i, before, after] for i, before, after in record.visibility],
    }
    return img, ann, rec


_STAGE_RUNNERS = {
    "flip": _run_flip,
    "blur": _run_blur,
    "hsv": _run_hsv,
    "erase": _run_erase,
}


def process_one(
    cfg: PipelineConfig, img: ImageBuffer, ann: AnnotationSet
) -> tuple[ImageBuffer, AnnotationSet, dict]:
    """Run every configured stage on one image; returns its manifest record."""
    image_id = ann.image_id
    stage_records: list[dict] = []

    if img.depth == "U8":
        img = normalize(img)
        ingest_normalized = True
    else:
        ingest_normalized = False

    for spec in cfg.stages:
        if spec.name in FINAL_STAGES:
            continue
        if not spec.enabled:
            stage_records.append({"name": spec.name, "applied": False})
            continue
        rng = derive_stream(cfg.global_seed, image_id, spec.name)
        try:
            img, ann, rec = _STAGE_RUNNERS[spec.name](img, ann, spec, rng)
        except Exception as exc:
            raise StageFailure(image_id, spec.name, exc) from exc
        stage_records.append(rec)

    letterbox_spec = cfg.stage("letterbox")
    if letterbox_spec.enabled:
        try:
            img, ann = letterbox_resize(img, ann, cfg.target_size)
        except Exception as exc:
            raise StageFailure(image_id, "letterbox", exc) from exc
        stage_records.append(
            {"name": "letterbox", "applied": True, "target": cfg.target_size}
        )
    else:
        stage_records.append({"name": "letterbox", "applied": False})
    stage_records.append({"name": "normalize", "applied": ingest_normalized})

    record = {
        "type": "image",
        "image_id": image_id,
        "stages": stage_records,
        "output_checksum": pixel_checksum(img),
        "output_width": img.width,
        "output_height": img.height,
        "boxes_out": len(ann.boxes),
    }
    return img, ann, record


@dataclass
class AugmentManifest:
    global_seed: int
    config: dict
    records: list[dict] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)

    def finalize(self) -> None:
        self.records.sort(key=lambda r: r["image_id"])
        self.skipped.sort(key=lambda r: r["image_id"])

    def to_jsonl(self) -> str:
        self.finalize()
        lines = [
            _json_line(
                {
                    "type": "header",
                    "format_version": MANIFEST_VERSION,
                    "global_seed": self.global_seed,
                    "config": self.config,
                }
            )
        ]
        lines.extend(_json_line(r) for r in self.records)
        lines.extend(
            _json_line({"type": "skipped", **s}) for s in self.skipped
        )
        lines.append(
            _json_line(
                {
                    "type": "summary",
                    "images": len(self.records),
                    "skipped": len(self.skipped),
                }
            )
        )
        return "".join(line + "\n" for line in lines)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def read(cls, path: str | Path) -> "AugmentManifest":
        header = None
        records: list[dict] = []
        skipped: list[dict] = []
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            kind = doc.get("type")
            if kind == "header":
                header = doc
            elif kind == "image":
                records.append(doc)
            elif kind == "skipped":
                skipped.append(doc)
        if header is None:
            raise ValueError(f"{path}: no manifest header line")
        return cls(
            global_seed=header["global_seed"],
            config=header["config"],
            records=records,
            skipped=skipped,
        )


def _json_line(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def run_pipeline(
    cfg: PipelineConfig,
    dataset: Iterable[tuple[ImageBuffer, AnnotationSet]],
    threads: int = 0,
) -> tuple[list[tuple[ImageBuffer, AnnotationSet]], AugmentManifest]:
    """Process a dataset; failed images are skipped and logged, not fatal.

    Output is a pure function of (config, seed, dataset) regardless of
    thread count: streams are derived per image and records are sorted on
    finalize.
    """
    items = list(dataset)
    manifest = AugmentManifest(global_seed=cfg.global_seed, config=cfg.to_dict())
    results: list[tuple[ImageBuffer, AnnotationSet]] = []

    def work(item):
        img, ann = item
        return process_one(cfg, img, ann)

    workers = threads if threads > 0 else min(len(items) or 1, os.cpu_count() or 1)
    outputs: list[Optional[tuple]] = [None] * len(items)
    if workers <= 1:
        for i, item in enumerate(items):
            outputs[i] = _safe(lambda item=item: work(item))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(
                pool.map(lambda item: _safe(lambda: work(item)), items)
            )

    for out in outputs:
        if isinstance(out, StageFailure):
            log.warning("skipping %s: %s", out.image_id, out)
            manifest.skipped.append(
                {
                    "image_id": out.image_id,
                    "stage": out.stage,
                    "cause": str(out.cause),
                }
            )
            continue
        img, ann, record = out
        results.append((img, ann))
        manifest.records.append(record)

    manifest.finalize()
    return results, manifest


def _safe(thunk):
    try:
        return thunk()
    except StageFailure as exc:
        return exc


def verify_against_manifest(
    manifest: AugmentManifest,
    dataset: Iterable[tuple[ImageBuffer, AnnotationSet]],
    threads: int = 0,
) -> tuple[list[tuple[ImageBuffer, AnnotationSet]], list[str]]:
    """Re-run the manifest's config+seed over the dataset and compare checksums.

    Returns the regenerated outputs and a list of image_ids whose checksum
    (or presence) does not match the manifest record.
    """
    cfg = PipelineConfig.from_dict(manifest.config)
    results, fresh = run_pipeline(cfg, dataset, threads=threads)
    want = {r["image_id"]: r["output_checksum"] for r in manifest.records}
    got = {r["image_id"]: r["output_checksum"] for r in fresh.records}
    mismatched = [iid for iid, chk in want.items() if got.get(iid) != chk]
    mismatched.extend(iid for iid in got if iid not in want)
    return results, sorted(set(mismatched))
