"""Structured random erasing with power-law occluder sizes.

Occluder area fractions follow a Pareto tail truncated to
[area_min, area_max] with exponent D/2, where D is the fractal dimension of
marine occluder boundaries; aspect ratios are uniform in [0.5, 2]. An
optional texture gate keeps a candidate rectangle only where the mean
absolute discrete cross-derivative of image intensity exceeds tau. Box
visibility is maintained against the exact pixel-mask union of all erased
rectangles, so overlapping occluders are counted once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .imgcore import AnnotationSet, ImageBuffer, luma

_ASPECT_RANGE = (0.5, 2.0)
_GATE_ATTEMPTS = 10


@dataclass(frozen=True)
class EraseConfig:
    probability: float = 0.5
    max_occluders: int = 3
    fractal_dim: float = 1.7
    area_min: float = 0.02
    area_max: float = 0.20
    tau: float = 0.0  # texture gate threshold; 0 disables the gate
    fill: str = "uniform_noise"  # or "channel_mean"
    drop_visibility_below: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must be in [0, 1]")
        if self.max_occluders < 1:
            raise ValueError("max_occluders must be >= 1")
        if not 1.0 <= self.fractal_dim <= 2.0:
            raise ValueError("fractal_dim must be in [1.0, 2.0]")
        if not 0.0 < self.area_min <= self.area_max <= 0.5:
            raise ValueError("need 0 < area_min <= area_max <= 0.5")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.fill not in ("uniform_noise", "channel_mean"):
            raise ValueError(f"unknown fill mode {self.fill!r}")
        if not 0.0 <= self.drop_visibility_below <= 1.0:
            raise ValueError("drop_visibility_below must be in [0, 1]")


@dataclass
class EraseRecord:
    """What one apply_erase call did, sufficient for manifest auditing."""

    rects: list[tuple[int, int, int, int]] = field(default_factory=list)
    visibility: list[tuple[int, float, float]] = field(default_factory=list)
    dropped: list[int] = field(default_factory=list)  # original box indices


def truncated_pareto_sample(
    rng: np.random.Generator, alpha: float, lo: float, hi: float
) -> float:
    """Inverse-CDF draw from density ~ a**-(alpha+1) restricted to [lo, hi]."""
    if hi <= lo:
        return lo
    u = rng.random()
    lo_a, hi_a = lo**-alpha, hi**-alpha
    return float((lo_a - u * (lo_a - hi_a)) ** (-1.0 / alpha))


def _draw_rect(
    rng: np.random.Generator, cfg: EraseConfig, width: int, height: int
) -> tuple[int, int, int, int]:
    frac = truncated_pareto_sample(
        rng, cfg.fractal_dim / 2.0, cfg.area_min, cfg.area_max
    )
    aspect = rng.uniform(*_ASPECT_RANGE)
    area_px = frac * width * height
    w = max(1, min(width, int(round(np.sqrt(area_px * aspect)))))
    h = max(1, min(height, int(round(np.sqrt(area_px / aspect)))))
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return x, y, w, h


def sample_occluders(
    cfg: EraseConfig, width: int, height: int, rng: np.random.Generator
) -> list[tuple[int, int, int, int]]:
    """Draw fully-contained (x, y, w, h) rectangles, or [] with prob. 1-p.

    Draw order is fixed (gate, count, then per-rect area/aspect/position) so
    a seeded stream reproduces the exact same rectangles.
    """
    if rng.random() >= cfg.probability:
        return []
    count = int(rng.integers(1, cfg.max_occluders + 1))
    return [_draw_rect(rng, cfg, width, height) for _ in range(count)]


def _cross_derivative_mean(d2: np.ndarray, rect: tuple[int, int, int, int]) -> float:
    """Mean |d2 I / dx dy| over differences fully inside the rect; 0 if none."""
    x, y, w, h = rect
    window = d2[y : y + h - 1, x : x + w - 1]
    if window.size == 0:
        return 0.0
    return float(np.abs(window).mean())


def apply_erase(
    img: ImageBuffer,
    ann: AnnotationSet,
    cfg: EraseConfig,
    rng: np.random.Generator,
) -> tuple[ImageBuffer, AnnotationSet, EraseRecord]:
    """Erase sampled rectangles and update box visibilities.

    With tau > 0, each candidate is redrawn up to 10 times until its mean
    absolute cross-derivative (measured on the unmodified image) exceeds
    tau, then skipped. Visibility multiplies by (1 - covered fraction)
    against the union mask; boxes below the drop threshold are removed.
    """
    if img.depth != "F32":
        raise ValueError("apply_erase expects an F32 image")
    width, height = img.width, img.height

    candidates = sample_occluders(cfg, width, height, rng)
    if cfg.tau > 0.0 and candidates:
        intensity = luma(img)
        d2 = np.diff(np.diff(intensity, axis=0), axis=1)
        gated = []
        for rect in candidates:
            kept = rect if _cross_derivative_mean(d2, rect) > cfg.tau else None
            attempts = 0
            while kept is None and attempts < _GATE_ATTEMPTS:
                attempts += 1
                rect = _draw_rect(rng, cfg, width, height)
                if _cross_derivative_mean(d2, rect) > cfg.tau:
                    kept = rect
            if kept is not None:
                gated.append(kept)
        rects = gated
    else:
        rects = candidates

    record = EraseRecord(rects=list(rects))
    if not rects:
        return img.copy(), ann.copy(), record

    out = img.pixels.copy()
    channel_mean = img.pixels.reshape(-1, img.channels).mean(axis=0)
    mask = np.zeros((height, width), dtype=bool)
    for x, y, w, h in rects:
        if cfg.fill == "uniform_noise":
            out[y : y + h, x : x + w] = rng.random(
                (h, w, img.channels), dtype=np.float32
            )
        else:
            out[y : y + h, x : x + w] = channel_mean
        mask[y : y + h, x : x + w] = True

    boxes = []
    for idx, box in enumerate(ann.boxes):
        rows, cols = box.pixel_slice(width, height)
        area = (rows.stop - rows.start) * (cols.stop - cols.start)
        covered = int(mask[rows, cols].sum()) / area if area > 0 else 1.0
        new_vis = box.visibility * (1.0 - covered)
        record.visibility.append((idx, box.visibility, new_vis))
        if new_vis < cfg.drop_visibility_below:
            record.dropped.append(idx)
            continue
        boxes.append(replace(box, visibility=new_vis))

    return (
        ImageBuffer(out),
        AnnotationSet(boxes=boxes, image_id=ann.image_id),
        record,
    )
