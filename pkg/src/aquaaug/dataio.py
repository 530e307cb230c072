"""Dataset ingestion and emission in images/ + labels/ directory layout.

Labels are plain text, one object per line: `class_id cx cy w h` with
normalized floats. Outputs are always PNG so augmented pixels survive
re-encoding byte-for-byte (the replay contract is unachievable through a
lossy codec).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import IoFailure, MalformedLine, OrphanLabel, UnreadableImage
from .imgcore import AnnotationSet, BBox, ImageBuffer, quantize_u8

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
LABEL_PRECISION = 6  # decimals; sub-pixel at 8K resolution, diff-friendly


@dataclass(frozen=True)
class DatasetLayout:
    images_dir: Path
    labels_dir: Path

    @classmethod
    def under(cls, root: str | Path) -> "DatasetLayout":
        root = Path(root)
        return cls(images_dir=root / "images", labels_dir=root / "labels")


@dataclass(frozen=True)
class PairEntry:
    stem: str
    image_path: Path
    label_path: Optional[Path]


def scan_layout(layout: DatasetLayout) -> list[PairEntry]:
    """Pair images with same-stem label files, in lexicographic stem order.

    Unpaired label files are errors; unpaired images get no label path
    (empty annotations). Two images sharing a stem are ambiguous.
    """
    images: dict[str, Path] = {}
    for path in sorted(layout.images_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_EXTENSIONS:
            continue
        if path.stem in images:
            raise IoFailure(
                f"duplicate image stem '{path.stem}': {images[path.stem]} and {path}"
            )
        images[path.stem] = path

    labels: dict[str, Path] = {}
    if layout.labels_dir.is_dir():
        for path in sorted(layout.labels_dir.glob("*.txt")):
            if path.stem not in images:
                raise OrphanLabel(f"label {path} has no matching image")
            labels[path.stem] = path

    return [
        PairEntry(stem=stem, image_path=images[stem], label_path=labels.get(stem))
        for stem in sorted(images)
    ]


def _parse_label_line(path: Path, lineno: int, line: str) -> BBox:
    fields = line.split()
    if len(fields) != 5:
        raise MalformedLine(path, lineno, f"expected 5 fields, got {len(fields)}")
    try:
        class_id = int(fields[0])
        cx, cy, w, h = (float(f) for f in fields[1:])
    except ValueError as exc:
        raise MalformedLine(path, lineno, str(exc)) from None
    if class_id < 0:
        raise MalformedLine(path, lineno, f"class_id {class_id} is negative")
    for name, value in (("cx", cx), ("cy", cy)):
        if not 0.0 <= value <= 1.0:
            raise MalformedLine(path, lineno, f"{name}={value} out of [0, 1]")
    for name, value in (("w", w), ("h", h)):
        if not 0.0 < value <= 1.0:
            raise MalformedLine(path, lineno, f"{name}={value} out of (0, 1]")
    return BBox(class_id=class_id, cx=cx, cy=cy, w=w, h=h, visibility=1.0)


def load_pair(entry: PairEntry) -> tuple[ImageBuffer, AnnotationSet]:
    try:
        with Image.open(entry.image_path) as im:
            rgb = im.convert("RGB")
            pixels = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise UnreadableImage(f"{entry.image_path}: {exc}") from exc

    boxes: list[BBox] = []
    if entry.label_path is not None:
        for lineno, raw in enumerate(
            entry.label_path.read_text().splitlines(), start=1
        ):
            line = raw.strip()
            if not line:
                continue
            boxes.append(_parse_label_line(entry.label_path, lineno, line))
    return ImageBuffer(pixels), AnnotationSet(boxes=boxes, image_id=entry.stem)


def load_dataset(
    layout: DatasetLayout,
) -> Iterator[tuple[ImageBuffer, AnnotationSet]]:
    """Yield (image, annotations) pairs in lexicographic stem order."""
    for entry in scan_layout(layout):
        yield load_pair(entry)


def write_pair(
    img: ImageBuffer, ann: AnnotationSet, layout: DatasetLayout
) -> Path:
    """Write one PNG plus its label file; returns the image path."""
    if not ann.image_id:
        raise IoFailure("cannot write a pair without an image_id")
    try:
        layout.images_dir.mkdir(parents=True, exist_ok=True)
        layout.labels_dir.mkdir(parents=True, exist_ok=True)
        out = img if img.depth == "U8" else quantize_u8(img)
        pixels = out.pixels[:, :, 0] if out.channels == 1 else out.pixels
        image_path = layout.images_dir / f"{ann.image_id}.png"
        Image.fromarray(pixels).save(image_path, format="PNG")

        lines = [
            f"{b.class_id} {b.cx:.{LABEL_PRECISION}f} {b.cy:.{LABEL_PRECISION}f} "
            f"{b.w:.{LABEL_PRECISION}f} {b.h:.{LABEL_PRECISION}f}"
            for b in ann.boxes
        ]
        label_path = layout.labels_dir / f"{ann.image_id}.txt"
        label_path.write_text("".join(line + "\n" for line in lines))
    except OSError as exc:
        raise IoFailure(f"failed writing {ann.image_id}: {exc}") from exc
    return image_path


def write_dataset(
    pairs: Iterable[tuple[ImageBuffer, AnnotationSet]], layout: DatasetLayout
) -> int:
    """Write all pairs; creates the output directories even when empty."""
    try:
        layout.images_dir.mkdir(parents=True, exist_ok=True)
        layout.labels_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    count = 0
    for img, ann in pairs:
        write_pair(img, ann, layout)
        count += 1
    return count
