"""Core raster and annotation types shared by every augmentation stage.

Images are numpy arrays wrapped in :class:`ImageBuffer`, shape (H, W, C) with
C in {1, 3}, either uint8 (I/O format) or float32 in [0, 1] (working format).
Hue is carried in degrees in [0, 360).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import DegenerateImage, WrongDepth

# Box coordinates are snapped onto this lattice so that the horizontal-flip
# map x -> 1 - x is closed and exactly involutive in float64 (values off the
# lattice round on the first complement, e.g. 1-(1-0.3) != 0.3). The snap
# error is <= 2**-54, invisible at 6-decimal label precision.
_COORD_LATTICE = float(2**53)


def _snap(x: float) -> float:
    return round(float(x) * _COORD_LATTICE) / _COORD_LATTICE


@dataclass(frozen=True)
class BBox:
    """Normalized bounding box: center (cx, cy), extent (w, h), all in [0, 1]."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    visibility: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "cx", _snap(self.cx))
        object.__setattr__(self, "cy", _snap(self.cy))
        object.__setattr__(self, "w", _snap(self.w))
        object.__setattr__(self, "h", _snap(self.h))

    def clamped(self) -> "BBox":
        """Clip the box edges into the unit frame and recompute center/extent."""
        x0 = min(max(self.cx - self.w / 2, 0.0), 1.0)
        x1 = min(max(self.cx + self.w / 2, 0.0), 1.0)
        y0 = min(max(self.cy - self.h / 2, 0.0), 1.0)
        y1 = min(max(self.cy + self.h / 2, 0.0), 1.0)
        return replace(
            self, cx=(x0 + x1) / 2, cy=(y0 + y1) / 2, w=x1 - x0, h=y1 - y0
        )

    def pixel_slice(self, width: int, height: int) -> tuple[slice, slice]:
        """Rounded (rows, cols) slices of the box on a width x height raster."""
        x0 = min(max(int(round((self.cx - self.w / 2) * width)), 0), width)
        x1 = min(max(int(round((self.cx + self.w / 2) * width)), 0), width)
        y0 = min(max(int(round((self.cy - self.h / 2) * height)), 0), height)
        y1 = min(max(int(round((self.cy + self.h / 2) * height)), 0), height)
        return slice(y0, y1), slice(x0, x1)


@dataclass
class AnnotationSet:
    """Ordered boxes for one image; order is stable under non-dropping transforms."""

    boxes: list[BBox] = field(default_factory=list)
    image_id: str = ""

    def copy(self) -> "AnnotationSet":
        return AnnotationSet(boxes=list(self.boxes), image_id=self.image_id)


@dataclass
class ImageBuffer:
    """H x W x C raster; uint8 or float32 in [0, 1], row-major, channel-interleaved."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim == 2:
            p = p[:, :, None]
            self.pixels = p
        if p.ndim != 3:
            raise ValueError(f"expected (H, W, C) array, got shape {p.shape}")
        if p.shape[2] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {p.shape[2]}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"empty image: shape {p.shape}")
        if p.dtype == np.uint8:
            pass
        elif p.dtype == np.float32:
            if p.size and (float(p.min()) < 0.0 or float(p.max()) > 1.0):
                raise ValueError("float32 samples must lie in [0, 1]")
        else:
            raise ValueError(f"dtype must be uint8 or float32, got {p.dtype}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def depth(self) -> str:
        return "U8" if self.pixels.dtype == np.uint8 else "F32"

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.pixels.copy())


class HsvPixel(NamedTuple):
    """One HSV sample: h in degrees [0, 360), s and v in [0, 1]."""

    h: float
    s: float
    v: float


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB -> HSV on the last axis; input channels in [0, 1].

    Hue comes back in degrees in [0, 360). Achromatic pixels (max == min)
    get h = 0 and s = 0 by convention.
    """
    rgb = np.asarray(rgb)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    c = maxc - minc

    safe_c = np.where(c > 0, c, 1)
    h = np.zeros_like(maxc)
    h = np.where((c > 0) & (maxc == r), (g - b) / safe_c % 6.0, h)
    h = np.where((c > 0) & (maxc == g) & (maxc != r), (b - r) / safe_c + 2.0, h)
    h = np.where(
        (c > 0) & (maxc == b) & (maxc != r) & (maxc != g), (r - g) / safe_c + 4.0, h
    )
    h = h * 60.0 % 360.0

    s = np.where(maxc > 0, c / np.where(maxc > 0, maxc, 1), 0.0)
    return np.stack([h, s, maxc], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Inverse hexcone mapping; h in degrees, output clamped to [0, 1]."""
    hsv = np.asarray(hsv)
    h = hsv[..., 0] % 360.0 / 60.0
    s = np.clip(hsv[..., 1], 0.0, 1.0)
    v = np.clip(hsv[..., 2], 0.0, 1.0)

    c = v * s
    x = c * (1.0 - np.abs(h % 2.0 - 1.0))
    m = v - c
    z = np.zeros_like(c)

    sector = np.floor(h).astype(np.int64) % 6
    r = np.choose(sector, [c, x, z, z, x, c])
    g = np.choose(sector, [x, c, c, x, z, z])
    b = np.choose(sector, [z, z, x, c, c, x])
    return np.clip(np.stack([r + m, g + m, b + m], axis=-1), 0.0, 1.0)


def rgb_pixel_to_hsv(r: float, g: float, b: float) -> HsvPixel:
    h, s, v = rgb_to_hsv(np.array([r, g, b], dtype=np.float64))
    return HsvPixel(float(h), float(s), float(v))


def hsv_pixel_to_rgb(p: HsvPixel) -> tuple[float, float, float]:
    r, g, b = hsv_to_rgb(np.array([p.h, p.s, p.v], dtype=np.float64))
    return float(r), float(g), float(b)


def _bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center alignment (float array in/out)."""
    in_h, in_w = src.shape[:2]
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0.0, in_h - 1)
    xs = np.clip(xs, 0.0, in_w - 1)

    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0).astype(src.dtype)[:, None, None]
    wx = (xs - x0).astype(src.dtype)[None, :, None]

    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bot = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def letterbox_resize(
    img: ImageBuffer, ann: AnnotationSet, target: int
) -> tuple[ImageBuffer, AnnotationSet]:
    """Scale the longest side to `target`, zero-pad the short side to a square.

    Padding splits symmetrically; an odd remainder goes to the bottom/right.
    Boxes are rescaled into the padded frame; a box that collapses to zero
    area is dropped with a :class:`DegenerateImage` warning.
    """
    if target < 32:
        raise ValueError(f"target must be >= 32, got {target}")

    w, h = img.width, img.height
    if w == target and h == target:
        return img.copy(), ann.copy()

    if w >= h:
        new_w = target
        new_h = max(1, int(h * target / w + 0.5))
    else:
        new_h = target
        new_w = max(1, int(w * target / h + 0.5))

    if (new_w, new_h) == (w, h):
        resized = img.pixels.copy()
    elif img.depth == "U8":
        out = _bilinear_resize(img.pixels.astype(np.float32), new_h, new_w)
        resized = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    else:
        resized = np.clip(_bilinear_resize(img.pixels, new_h, new_w), 0.0, 1.0)

    pad_left = (target - new_w) // 2
    pad_top = (target - new_h) // 2
    canvas = np.zeros((target, target, img.channels), dtype=img.pixels.dtype)
    canvas[pad_top : pad_top + new_h, pad_left : pad_left + new_w] = resized

    boxes = []
    for box in ann.boxes:
        new = replace(
            box,
            cx=(box.cx * new_w + pad_left) / target,
            cy=(box.cy * new_h + pad_top) / target,
            w=box.w * new_w / target,
            h=box.h * new_h / target,
        ).clamped()
        if new.w <= 0.0 or new.h <= 0.0:
            warnings.warn(
                f"box (class {box.class_id}) collapsed to zero area on "
                f"{ann.image_id or 'image'}; dropped",
                DegenerateImage,
                stacklevel=2,
            )
            continue
        boxes.append(new)
    return ImageBuffer(canvas), AnnotationSet(boxes=boxes, image_id=ann.image_id)


def normalize(img: ImageBuffer) -> ImageBuffer:
    """Map U8 samples to unit-interval float32 by dividing by 255.0."""
    if img.depth != "U8":
        raise WrongDepth("normalize expects a U8 image")
    return ImageBuffer((img.pixels.astype(np.float32)) / np.float32(255.0))


def quantize_u8(img: ImageBuffer) -> ImageBuffer:
    """Map unit-interval float32 back to U8 (round to nearest)."""
    if img.depth != "F32":
        raise WrongDepth("quantize_u8 expects an F32 image")
    return ImageBuffer(
        np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    )


def luma(img: ImageBuffer) -> np.ndarray:
    """Rec.601 intensity of an F32 image as a (H, W) float array."""
    p = img.pixels
    if p.shape[2] == 1:
        return p[:, :, 0].astype(np.float64)
    return (
        0.299 * p[:, :, 0].astype(np.float64)
        + 0.587 * p[:, :, 1].astype(np.float64)
        + 0.114 * p[:, :, 2].astype(np.float64)
    )
