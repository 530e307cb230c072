"""Underwater blur kernels and their application.

The point-spread function combines an exponential scattering profile
exp(-r/lambda_s)/lambda_s with a Lorentzian turbulence profile
1/(1 + (r/lambda_t)^2), composed by full 2-D convolution of the two sampled
grids and renormalized to unit mass (the Lorentzian is not integrable on the
plane; truncation at 6*lambda plus renormalization is a deliberate
regularization). Depth-variant blur uses an isotropic Gaussian whose width
follows sigma(z) = sigma_ref * (z / z_ref)**0.78.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage, signal

from .errors import RadiusOverflow
from .imgcore import ImageBuffer

MAX_RADIUS = 64  # hard cap, keeps the worst-case kernel at 129x129

# Kernels up to this side use direct spatial convolution; larger ones go
# through the FFT path. Gaussians always take the separable path.
_DIRECT_SIDE_LIMIT = 33

_SIGMA_IDENTITY = 0.05  # below this width the Gaussian is a single tap


@dataclass(frozen=True)
class PsfParams:
    """Scatter/turbulence length scales in pixels; radius is auto unless set."""

    lambda_scatter: float
    lambda_turb: float
    kernel_radius: Optional[int] = None

    def __post_init__(self):
        if self.lambda_scatter <= 0 or self.lambda_turb <= 0:
            raise ValueError("lambda_scatter and lambda_turb must be > 0")
        if self.kernel_radius is not None:
            if self.kernel_radius < 1:
                raise ValueError("kernel_radius must be >= 1")
            if self.kernel_radius > MAX_RADIUS:
                raise RadiusOverflow(
                    f"requested radius {self.kernel_radius} exceeds cap {MAX_RADIUS}"
                )


@dataclass(frozen=True)
class DepthKernelParams:
    """Gaussian width law sigma(z) = sigma_ref * (z / z_ref)**exponent."""

    sigma_ref: float = 1.5
    z_ref: float = 5.0
    z: float = 0.0
    exponent: float = 0.78

    def __post_init__(self):
        if self.sigma_ref <= 0 or self.z_ref <= 0:
            raise ValueError("sigma_ref and z_ref must be > 0")
        if self.z < 0:
            raise ValueError("z must be >= 0")

    @property
    def sigma(self) -> float:
        if self.z == 0:
            return 0.0
        return self.sigma_ref * (self.z / self.z_ref) ** self.exponent


@dataclass(frozen=True)
class PsfKernel:
    """Normalized odd-sided 2-D kernel plus the parameters that built it."""

    weights: np.ndarray  # (side, side) float64, unit sum, >= 0
    kind: str  # "psf" | "depth_gaussian" | "identity"
    provenance: dict

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
            raise ValueError(f"kernel must be odd and square, got {w.shape}")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"kernel mass {w.sum()!r} is not 1 within 1e-9")
        if float(w.min()) < 0:
            raise ValueError("kernel weights must be >= 0")
        if (
            np.abs(w - w.T).max() > 1e-12
            or np.abs(w - w[::-1, :]).max() > 1e-12
        ):
            raise ValueError("kernel must be 4-fold rotationally symmetric")
        object.__setattr__(self, "weights", w)

    @property
    def side(self) -> int:
        return self.weights.shape[0]

    @property
    def is_identity(self) -> bool:
        return self.side == 1


def _radial_grid(radius: int) -> np.ndarray:
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.hypot(ax[:, None], ax[None, :])


def build_psf(params: PsfParams) -> PsfKernel:
    """Sample the scatter and turbulence profiles, convolve them, normalize."""
    lam_s, lam_t = params.lambda_scatter, params.lambda_turb
    if params.kernel_radius is not None:
        radius = params.kernel_radius
    else:
        radius = min(int(np.ceil(6.0 * max(lam_s, lam_t))), MAX_RADIUS)
        radius = max(radius, 1)

    r = _radial_grid(radius)
    scatter = np.exp(-r / lam_s) / lam_s
    turb = 1.0 / (1.0 + (r / lam_t) ** 2)

    # Full 2-D convolution of the two grids, cropped back to (2R+1)^2. The
    # FFT path can leave ~1e-16 negative dust where the product underflows;
    # clip before normalizing so the positivity invariant holds exactly.
    full = signal.fftconvolve(scatter, turb, mode="full")
    combined = np.clip(full[radius:-radius, radius:-radius], 0.0, None)
    combined /= combined.sum()
    return PsfKernel(
        weights=combined,
        kind="psf",
        provenance={
            "lambda_scatter": lam_s,
            "lambda_turb": lam_t,
            "radius": radius,
        },
    )


def build_depth_gaussian(params: DepthKernelParams) -> PsfKernel:
    """Isotropic Gaussian at sigma(z); a 1x1 identity once sigma < 0.05 px."""
    sigma = params.sigma
    prov = {
        "sigma_ref": params.sigma_ref,
        "z_ref": params.z_ref,
        "z": params.z,
        "exponent": params.exponent,
        "sigma": sigma,
    }
    if sigma < _SIGMA_IDENTITY:
        return PsfKernel(
            weights=np.ones((1, 1), dtype=np.float64),
            kind="identity" if sigma == 0.0 else "depth_gaussian",
            provenance=prov,
        )
    radius = int(np.ceil(4.0 * sigma))
    if radius > MAX_RADIUS:
        raise RadiusOverflow(
            f"sigma {sigma:.3f} needs radius {radius} > cap {MAX_RADIUS}"
        )
    r = _radial_grid(radius)
    weights = np.exp(-(r**2) / (2.0 * sigma**2))
    weights /= weights.sum()
    prov["radius"] = radius
    return PsfKernel(weights=weights, kind="depth_gaussian", provenance=prov)


def identity_kernel() -> PsfKernel:
    return PsfKernel(
        weights=np.ones((1, 1), dtype=np.float64), kind="identity", provenance={}
    )


def _gaussian_1d(kernel: PsfKernel) -> Optional[np.ndarray]:
    """Unit-sum 1-D profile if the kernel factors as an outer product."""
    if kernel.kind not in ("depth_gaussian", "identity"):
        return None
    sigma = kernel.provenance.get("sigma")
    if not sigma:
        return None
    radius = kernel.side // 2
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    return g / g.sum()


def convolve(img: ImageBuffer, kernel: PsfKernel) -> ImageBuffer:
    """Per-channel 2-D correlation with reflect-101 borders; dims preserved.

    Accumulates in float64 regardless of image depth, so the result is
    independent of the internal path (separable, direct, or FFT).
    """
    if img.depth != "F32":
        raise ValueError("convolve expects an F32 image")
    if kernel.is_identity:
        return img.copy()

    pixels = img.pixels.astype(np.float64)
    g1d = _gaussian_1d(kernel)
    out = np.empty_like(pixels)
    for ch in range(pixels.shape[2]):
        plane = pixels[:, :, ch]
        if g1d is not None:
            tmp = ndimage.correlate1d(plane, g1d, axis=0, mode="mirror")
            out[:, :, ch] = ndimage.correlate1d(tmp, g1d, axis=1, mode="mirror")
        elif kernel.side <= _DIRECT_SIDE_LIMIT or not _can_pad_reflect(plane, kernel):
            out[:, :, ch] = ndimage.correlate(plane, kernel.weights, mode="mirror")
        else:
            radius = kernel.side // 2
            padded = np.pad(plane, radius, mode="reflect")
            # symmetric kernel: convolution equals correlation
            out[:, :, ch] = signal.fftconvolve(padded, kernel.weights, mode="valid")
    return ImageBuffer(np.clip(out, 0.0, 1.0).astype(np.float32))


def _can_pad_reflect(plane: np.ndarray, kernel: PsfKernel) -> bool:
    radius = kernel.side // 2
    return radius < plane.shape[0] and radius < plane.shape[1]
