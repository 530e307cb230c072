"""HSV water-column color transforms: spectral hue shift, turbidity
saturation loss, and depth-dependent brightness decay.

The hue shift integrates transmitted spectral power against a signed hue
response over 400-700 nm; saturation scales by (1 - beta_turbidity); value
scales by the irradiance ratio times exp(-c_d * z). The bundled table stores
pure-seawater transmission through 1 m of water (red absorbs much faster
than blue), a flat illuminant, and a linear hue-response ramp from -1 at
400 nm to +1 at 700 nm; transmission at depth z is the 1 m column raised to
the z-th power.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DegenerateSpectrum
from .imgcore import ImageBuffer, hsv_to_rgb, rgb_to_hsv

SPECTRAL_CSV_HEADER = ("wavelength_nm", "transmission", "illuminant", "hue_response")

_MIN_SAMPLES = 16
_GRID_SPAN = 300.0  # nm, 400..700


@dataclass(frozen=True)
class SpectralTable:
    """Sampled transmission, illuminant and hue response on a uniform nm grid."""

    wavelengths: np.ndarray
    transmission: np.ndarray
    illuminant: np.ndarray
    hue_response: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.wavelengths, dtype=np.float64)
        n = lam.size
        if n < _MIN_SAMPLES:
            raise ValueError(f"need >= {_MIN_SAMPLES} wavelength samples, got {n}")
        if lam[0] != 400.0 or lam[-1] != 700.0:
            raise ValueError("wavelength grid must span exactly 400..700 nm")
        steps = np.diff(lam)
        if not np.allclose(steps, steps[0], rtol=0, atol=1e-9):
            raise ValueError("wavelength grid must be uniform")
        if abs(_GRID_SPAN / steps[0] - round(_GRID_SPAN / steps[0])) > 1e-9:
            raise ValueError("grid step must divide 300 nm evenly")
        for name in ("transmission", "illuminant", "hue_response"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != lam.shape:
                raise ValueError(f"{name} length does not match wavelengths")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "wavelengths", lam)
        if np.any(self.transmission < 0) or np.any(self.illuminant < 0):
            raise ValueError("transmission and illuminant must be >= 0")
        if not np.any(self.illuminant > 0):
            raise ValueError("illuminant must not be identically zero")

    def at_depth(self, z: float) -> "SpectralTable":
        """Table with transmission re-scaled from the 1 m reference to depth z."""
        if z < 0:
            raise ValueError("depth must be >= 0")
        return SpectralTable(
            wavelengths=self.wavelengths,
            transmission=self.transmission**z,
            illuminant=self.illuminant,
            hue_response=self.hue_response,
        )


@dataclass(frozen=True)
class WaterParams:
    """Optical water-column parameters for the saturation and value transforms."""

    beta_turbidity: float = 0.0
    c_d: float = 0.0  # diffuse attenuation, 1/m
    z: float = 0.0  # optical depth, m
    irradiance_ratio: float = 1.0  # E_d(z)/E_d(0)

    def __post_init__(self):
        if not 0.0 <= self.beta_turbidity <= 1.0:
            raise ValueError("beta_turbidity must be in [0, 1]")
        if self.c_d < 0 or self.z < 0:
            raise ValueError("c_d and z must be >= 0")
        if not 0.0 < self.irradiance_ratio <= 1.0:
            raise ValueError("irradiance_ratio must be in (0, 1]")

    @property
    def value_factor(self) -> float:
        return self.irradiance_ratio * math.exp(-self.c_d * self.z)


def load_table(path: str | Path) -> SpectralTable:
    """Read a spectral table CSV (wavelength_nm,transmission,illuminant,hue_response)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(h.strip() for h in next(reader))
        if header != SPECTRAL_CSV_HEADER:
            raise ValueError(
                f"bad spectral CSV header {header!r}, expected {SPECTRAL_CSV_HEADER!r}"
            )
        rows = [[float(cell) for cell in row] for row in reader if row]
    data = np.array(rows, dtype=np.float64)
    return SpectralTable(
        wavelengths=data[:, 0],
        transmission=data[:, 1],
        illuminant=data[:, 2],
        hue_response=data[:, 3],
    )


@lru_cache(maxsize=1)
def _bundled_table() -> SpectralTable:
    ref = resources.files("aquaaug.data") / "default_spectral_table.csv"
    with resources.as_file(ref) as path:
        return load_table(path)


def default_table(z: float = 5.0) -> SpectralTable:
    """Bundled pure-seawater table evaluated at depth z (meters)."""
    return _bundled_table().at_depth(z)


def hue_shift_degrees(table: SpectralTable) -> float:
    """Spectral hue shift in degrees: arctan of the hue-weighted to total
    transmitted power ratio, by trapezoidal quadrature on the table grid."""
    ti = table.transmission * table.illuminant
    denom = float(np.trapezoid(ti, table.wavelengths))
    if denom <= 1e-12:
        raise DegenerateSpectrum(
            f"transmitted power integral {denom:.3e} is below 1e-12 (opaque water)"
        )
    num = float(np.trapezoid(ti * table.hue_response, table.wavelengths))
    return math.degrees(math.atan(num / denom))


def apply_hue_shift(img: ImageBuffer, delta_h: float) -> ImageBuffer:
    """Rotate every pixel's hue by delta_h degrees (modulo 360)."""
    _require_f32_rgb(img)
    hsv = rgb_to_hsv(img.pixels)
    hsv[..., 0] = (hsv[..., 0] + delta_h) % 360.0
    return ImageBuffer(hsv_to_rgb(hsv).astype(np.float32))


def apply_saturation_scale(img: ImageBuffer, params: WaterParams) -> ImageBuffer:
    """Scale saturation by (1 - beta_turbidity); hue and value untouched."""
    _require_f32_rgb(img)
    hsv = rgb_to_hsv(img.pixels)
    hsv[..., 1] = np.clip(hsv[..., 1] * (1.0 - params.beta_turbidity), 0.0, 1.0)
    return ImageBuffer(hsv_to_rgb(hsv).astype(np.float32))


def apply_value_decay(img: ImageBuffer, params: WaterParams) -> ImageBuffer:
    """Scale value by E_d(z)/E_d(0) * exp(-c_d * z)."""
    _require_f32_rgb(img)
    hsv = rgb_to_hsv(img.pixels)
    hsv[..., 2] = np.clip(hsv[..., 2] * params.value_factor, 0.0, 1.0)
    return ImageBuffer(hsv_to_rgb(hsv).astype(np.float32))


def apply_spectral(
    img: ImageBuffer, delta_h: float, params: WaterParams
) -> ImageBuffer:
    """All three HSV transforms in a single RGB->HSV->RGB round trip.

    Equivalent to shift/saturation/value applied in sequence (each touches a
    disjoint HSV channel) but avoids cumulative round-trip error.
    """
    _require_f32_rgb(img)
    hsv = rgb_to_hsv(img.pixels)
    hsv[..., 0] = (hsv[..., 0] + delta_h) % 360.0
    hsv[..., 1] = np.clip(hsv[..., 1] * (1.0 - params.beta_turbidity), 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * params.value_factor, 0.0, 1.0)
    return ImageBuffer(hsv_to_rgb(hsv).astype(np.float32))


def _require_f32_rgb(img: ImageBuffer) -> None:
    if img.depth != "F32" or img.channels != 3:
        raise ValueError("spectral transforms require a 3-channel F32 image")
