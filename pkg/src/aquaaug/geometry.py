"""Constrained horizontal flip.

Only the left-right axis is mirrored; rows (the dorsal-ventral axis) are
never touched, so gravity-aligned orientation survives. Box centers reflect
as cx -> 1 - cx, which is exactly involutive on the coordinate lattice
enforced by BBox.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .imgcore import AnnotationSet, ImageBuffer


@dataclass(frozen=True)
class FlipConfig:
    probability: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must be in [0, 1]")


def hflip(img: ImageBuffer, ann: AnnotationSet) -> tuple[ImageBuffer, AnnotationSet]:
    """Mirror columns (j -> width-1-j) and reflect box centers across x=0.5."""
    flipped = ImageBuffer(img.pixels[:, ::-1].copy())
    boxes = [replace(box, cx=1.0 - box.cx) for box in ann.boxes]
    return flipped, AnnotationSet(boxes=boxes, image_id=ann.image_id)
