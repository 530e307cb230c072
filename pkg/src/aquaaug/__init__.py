"""Physics-informed underwater image augmentation with reference attention kernels."""

from .imgcore import (
    AnnotationSet,
    BBox,
    HsvPixel,
    ImageBuffer,
    hsv_to_rgb,
    letterbox_resize,
    normalize,
    rgb_to_hsv,
)
from .spectral import SpectralTable, WaterParams, default_table, hue_shift_degrees
from .optics import DepthKernelParams, PsfKernel, PsfParams, build_depth_gaussian, build_psf, convolve
from .occlusion import EraseConfig, EraseRecord, apply_erase, sample_occluders
from .geometry import FlipConfig, hflip
from .pipeline import AugmentManifest, PipelineConfig, derive_stream, run_pipeline
from .dataio import DatasetLayout, load_dataset, write_dataset

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet",
    "AugmentManifest",
    "BBox",
    "DatasetLayout",
    "DepthKernelParams",
    "EraseConfig",
    "EraseRecord",
    "FlipConfig",
    "HsvPixel",
    "ImageBuffer",
    "PipelineConfig",
    "PsfKernel",
    "PsfParams",
    "SpectralTable",
    "WaterParams",
    "apply_erase",
    "build_depth_gaussian",
    "build_psf",
    "convolve",
    "default_table",
    "derive_stream",
    "hflip",
    "hsv_to_rgb",
    "hue_shift_degrees",
    "letterbox_resize",
    "load_dataset",
    "normalize",
    "rgb_to_hsv",
    "run_pipeline",
    "sample_occluders",
    "write_dataset",
    "__version__",
]
