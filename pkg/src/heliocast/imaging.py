"""Hemispherical/spherical image handling and sky-aperture extraction.

Two projection models are supported: an equidistant fisheye (square
image, r = f * theta, default 180 degree field of view) and a full
equirectangular sphere (width = 2 * height).  Camera-frame directions use
the same (zenith, azimuth) convention as the Earth frame, with the
optical axis along +z and the image "up" along +y.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from heliocast.errors import FormatError, GeometryError
from heliocast.frames import GeoTime, direction

FISHEYE = "equidistant-fisheye"
EQUIRECT = "equirectangular-sphere"

LUMA = np.array([0.2126, 0.7152, 0.0722])

# segment_sky defaults; all thresholds are relative to per-image statistics
# so the segmentation is invariant to global exposure scaling
SKY_LUM_RATIO = 2.0
SKY_BLUE_CHROMA = 0.34
MIN_COMPONENT_FRACTION = 0.005
CLOSING_RADIUS = 3

SUN_LUM_RATIO = 50.0


@dataclass(frozen=True)
class ProjectionModel:
    """Mapping between pixels and camera-frame unit directions."""

    kind: str = FISHEYE
    fov: float = math.pi  # full field of view, fisheye only

    def __post_init__(self):
        if self.kind not in (FISHEYE, EQUIRECT):
            raise FormatError(f"unknown projection kind {self.kind!r}")
        if self.kind == FISHEYE and not 0.0 < self.fov <= 2.0 * math.pi:
            raise FormatError("fisheye field of view must be in (0, 2*pi]")

    def unproject(self, u, v, width: int, height: int):
        """Pixel coordinates -> (directions (..., 3), valid mask)."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kind == FISHEYE:
            cx, cy = width / 2.0, height / 2.0
            du, dv = u - cx, v - cy
            r = np.hypot(du, dv)
            f = (width / 2.0) / (self.fov / 2.0)
            theta = r / f
            valid = theta <= self.fov / 2.0 + 1e-12
            phi = np.arctan2(du, -dv)
            st = np.sin(theta)
            d = np.stack(
                [st * np.sin(phi), st * np.cos(phi), np.cos(theta)], axis=-1
            )
            return d, valid
        phi = (u + 0.5) / width * 2.0 * math.pi
        theta = (v + 0.5) / height * math.pi
        st = np.sin(theta)
        d = np.stack([st * np.sin(phi), st * np.cos(phi), np.cos(theta)], axis=-1)
        valid = np.ones(np.shape(u), dtype=bool)
        return d, valid

    def project(self, dirs, width: int, height: int):
        """Unit directions (..., 3) -> (u, v, valid mask)."""
        d = np.asarray(dirs, dtype=float)
        x, y, z = d[..., 0], d[..., 1], d[..., 2]
        if self.kind == FISHEYE:
            theta = np.arccos(np.clip(z, -1.0, 1.0))
            phi = np.arctan2(x, y)
            f = (width / 2.0) / (self.fov / 2.0)
            r = theta * f
            u = width / 2.0 + r * np.sin(phi)
            v = height / 2.0 - r * np.cos(phi)
            valid = theta <= self.fov / 2.0 + 1e-12
            return u, v, valid
        theta = np.arccos(np.clip(z, -1.0, 1.0))
        phi = np.mod(np.arctan2(x, y), 2.0 * math.pi)
        u = phi / (2.0 * math.pi) * width - 0.5
        v = theta / math.pi * height - 0.5
        return u, v, np.ones(np.shape(theta), dtype=bool)


def projection_for_shape(width: int, height: int) -> ProjectionModel:
    if width == height:
        return ProjectionModel(FISHEYE)
    if width == 2 * height:
        return ProjectionModel(EQUIRECT)
    raise FormatError(
        f"image {width}x{height}: expected square fisheye or 2:1 equirectangular"
    )


@dataclass
class HdrImage:
    """Linear-radiance HDR image with optional capture metadata."""

    data: np.ndarray  # (H, W, 3) float, >= 0
    geo: Optional[GeoTime] = None
    gravity: Optional[np.ndarray] = None  # camera-frame, points down
    projection: ProjectionModel = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise FormatError("image data must have shape (H, W, 3)")
        if not np.all(np.isfinite(self.data)) or np.any(self.data < 0):
            raise FormatError("image pixels must be finite and >= 0")
        if self.projection is None:
            self.projection = projection_for_shape(self.width, self.height)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def luminance(self) -> np.ndarray:
        return self.data @ LUMA

    def valid_mask(self) -> np.ndarray:
        """Pixels inside the modeled field of view."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        _, valid = self.projection.unproject(u, v, self.width, self.height)
        return valid

    def pixel_directions(self) -> np.ndarray:
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        d, _ = self.projection.unproject(u, v, self.width, self.height)
        return d


@dataclass
class SkyAperture:
    """Binary sky-visibility function over camera-frame directions."""

    mask: np.ndarray  # (H, W) uint8 in {0, 1}
    projection: ProjectionModel

    def __post_init__(self):
        self.mask = np.asarray(self.mask)
        if self.mask.ndim != 2:
            raise FormatError("aperture mask must be 2-D")
        uniq = np.unique(self.mask)
        if not np.all(np.isin(uniq, [0, 1])):
            raise FormatError("aperture mask must be binary")
        self.mask = self.mask.astype(np.uint8)

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    def sample(self, dirs) -> np.ndarray:
        """Nearest-pixel aperture lookup; 0 outside the field of view."""
        u, v, valid = self.projection.project(dirs, self.width, self.height)
        ui = np.clip(np.rint(u).astype(int), 0, self.width - 1)
        vi = np.clip(np.rint(v).astype(int), 0, self.height - 1)
        out = np.where(valid, self.mask[vi, ui], 0)
        return out

    @property
    def empty(self) -> bool:
        return not bool(self.mask.any())


def full_aperture(size: int = 256, kind: str = FISHEYE) -> SkyAperture:
    """All-sky aperture, handy for tests and unobstructed sites."""
    proj = ProjectionModel(kind)
    shape = (size, 2 * size) if kind == EQUIRECT else (size, size)
    return SkyAperture(mask=np.ones(shape, dtype=np.uint8), projection=proj)


def log_compress(image: HdrImage) -> HdrImage:
    """Per-pixel log(x + 1) dynamic-range compression."""
    return HdrImage(
        data=np.log1p(image.data),
        geo=image.geo,
        gravity=image.gravity,
        projection=image.projection,
    )


def log_expand(image: HdrImage) -> HdrImage:
    """Inverse of :func:`log_compress`."""
    return HdrImage(
        data=np.expm1(image.data),
        geo=image.geo,
        gravity=image.gravity,
        projection=image.projection,
    )


def segment_sky(
    image: HdrImage,
    lum_ratio: float = SKY_LUM_RATIO,
    blue_chroma: float = SKY_BLUE_CHROMA,
    min_fraction: float = MIN_COMPONENT_FRACTION,
    closing_radius: int = CLOSING_RADIUS,
) -> SkyAperture:
    """Heuristic sky segmentation.

    A pixel is a sky candidate when it is much brighter than the image
    median or bright-ish and blue-dominant.  Candidate components smaller
    than ``min_fraction`` of the hemisphere are dropped, then the mask is
    closed with a disk of ``closing_radius`` pixels.
    """
    valid = image.valid_mask()
    lum = image.luminance()
    med = float(np.median(lum[valid])) if valid.any() else 0.0
    total = image.data.sum(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        chroma_b = np.where(total > 0, image.data[..., 2] / np.maximum(total, 1e-300), 0.0)
    if med > 0:
        cand = (lum > lum_ratio * med) | ((chroma_b > blue_chroma) & (lum > 0.5 * med))
    else:
        cand = lum > 0
    cand &= valid

    labels, n = ndimage.label(cand)
    if n:
        counts = np.bincount(labels.ravel())
        min_px = min_fraction * int(valid.sum())
        keep = np.flatnonzero(counts >= min_px)
        keep = keep[keep != 0]
        cand = np.isin(labels, keep)
    if cand.any() and closing_radius > 0:
        yy, xx = np.mgrid[-closing_radius : closing_radius + 1, -closing_radius : closing_radius + 1]
        disk = (xx**2 + yy**2) <= closing_radius**2
        cand = ndimage.binary_closing(cand, structure=disk) & valid
    if not cand.any():
        warnings.warn("segment_sky produced an empty aperture", stacklevel=2)
    return SkyAperture(mask=cand.astype(np.uint8), projection=image.projection)


def sphere_grid(grid_deg: float = 1.0):
    """Midpoint quadrature grid over the full sphere (flat arrays)."""
    step = math.radians(grid_deg)
    n_z = max(1, round(math.pi / step))
    n_a = max(1, round(2.0 * math.pi / step))
    zen = (np.arange(n_z) + 0.5) * (math.pi / n_z)
    az = (np.arange(n_a) + 0.5) * (2.0 * math.pi / n_a)
    zz, aa = np.meshgrid(zen, az, indexing="ij")
    w = np.sin(zz) * (math.pi / n_z) * (2.0 * math.pi / n_a)
    st = np.sin(zz)
    dirs = np.stack([st * np.sin(aa), st * np.cos(aa), np.cos(zz)], axis=-1)
    return dirs.reshape(-1, 3), w.ravel()


def sky_view_factor(
    aperture: SkyAperture, panel_normal: np.ndarray, grid_deg: float = 1.0
) -> float:
    """Cosine-weighted visible-sky fraction of the panel's hemisphere."""
    n = direction(*panel_normal)
    dirs, w = sphere_grid(grid_deg)
    cosine = dirs @ n
    sel = cosine > 0.0
    a = aperture.sample(dirs[sel]).astype(float)
    return float(np.sum(a * cosine[sel] * w[sel]) / math.pi)


def scene_view_factor(
    aperture: SkyAperture, panel_normal: np.ndarray, grid_deg: float = 1.0
) -> float:
    """Cosine-weighted non-sky fraction: 1 - SVF on the same grid."""
    return 1.0 - sky_view_factor(aperture, panel_normal, grid_deg)


def detect_sun(image: HdrImage, lum_ratio: float = SUN_LUM_RATIO):
    """Direction of the brightest saturated region, or None.

    Candidate pixels exceed ``lum_ratio`` times the median luminance; the
    largest connected component whose mean also exceeds the threshold
    wins, and its luminance-weighted centroid direction is returned.
    """
    valid = image.valid_mask()
    lum = image.luminance()
    med = float(np.median(lum[valid])) if valid.any() else 0.0
    if med <= 0.0:
        return None
    cand = (lum > lum_ratio * med) & valid
    labels, n = ndimage.label(cand)
    if n == 0:
        return None
    best = None
    best_size = 0
    for lab in range(1, n + 1):
        sel = labels == lab
        size = int(sel.sum())
        if size > best_size and float(lum[sel].mean()) > lum_ratio * med:
            best, best_size = sel, size
    if best is None:
        return None
    dirs = image.pixel_directions()[best]
    wgt = lum[best]
    v = (dirs * wgt[:, None]).sum(axis=0)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return None
    return v / nv


def gravity_from_metadata(image: HdrImage) -> tuple[np.ndarray, bool]:
    """Unit camera-frame gravity and whether a leveled capture was assumed.

    Without metadata the camera is assumed leveled with +z up, so gravity
    is (0, 0, -1).
    """
    if image.gravity is not None:
        g = np.asarray(image.gravity, dtype=float)
        if np.linalg.norm(g) == 0.0:
            raise GeometryError("gravity metadata is a zero vector")
        return g / np.linalg.norm(g), False
    return np.array([0.0, 0.0, -1.0]), True
