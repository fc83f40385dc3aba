"""Scene-irradiance functions over sun position and their predictors.

The reflected-light contribution of the surroundings is tabulated on a
36 x 144 grid over the sun's (zenith, azimuth), 2.5 degree bins with
values at bin centers (zenith centers 1.25, 3.75, ..., 88.75 degrees).
Predictors evaluate the table with bilinear interpolation, wrapping in
azimuth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from heliocast.errors import DomainError, FormatError
from heliocast.imaging import SkyAperture, scene_view_factor
from heliocast.weather import WeatherRecord, clear_sky_profile

N_ZENITH = 36
N_AZIMUTH = 144
BIN_DEG = 2.5

ZENITH_CENTERS = np.radians((np.arange(N_ZENITH) + 0.5) * BIN_DEG)
AZIMUTH_CENTERS = np.radians((np.arange(N_AZIMUTH) + 0.5) * BIN_DEG)

GROUND_ALBEDO = 0.2
WALL_ALBEDO = 0.3


@dataclass
class SceneIrradianceFunction:
    """36 x 144 grid of scene irradiance (W/m^2) vs sun position."""

    grid: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.shape != (N_ZENITH, N_AZIMUTH):
            raise FormatError(
                f"scene grid must be {N_ZENITH}x{N_AZIMUTH}, got {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.grid)) or np.any(self.grid < 0):
            raise FormatError("scene grid entries must be finite and >= 0")

    def __call__(self, zenith: float, azimuth: float) -> float:
        """Bilinear interpolation between bin centers; azimuth wraps."""
        zi = (math.degrees(zenith) / BIN_DEG) - 0.5
        zi = min(max(zi, 0.0), N_ZENITH - 1.0)
        ai = ((math.degrees(azimuth) % 360.0) / BIN_DEG) - 0.5
        z0 = int(math.floor(zi))
        z1 = min(z0 + 1, N_ZENITH - 1)
        fz = zi - z0
        a0 = int(math.floor(ai)) % N_AZIMUTH
        a1 = (a0 + 1) % N_AZIMUTH
        fa = ai - math.floor(ai)
        g = self.grid
        return float(
            (1 - fz) * ((1 - fa) * g[z0, a0] + fa * g[z0, a1])
            + fz * ((1 - fa) * g[z1, a0] + fa * g[z1, a1])
        )

    def save_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(
                "# scene irradiance W/m^2; 36 zenith rows x 144 azimuth cols, "
                "2.5 deg bins, values at bin centers (first center 1.25 deg)\n"
            )
            for row in self.grid:
                fh.write(",".join(f"{v:.6g}" for v in row) + "\n")

    @classmethod
    def load_csv(cls, path) -> "SceneIrradianceFunction":
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                rows.append([float(v) for v in line.split(",")])
        return cls(grid=np.array(rows))


def analytic_canyon_predictor(
    aperture: SkyAperture,
    r_ec: np.ndarray,
    normal: np.ndarray,
    albedo: float = GROUND_ALBEDO,
    capture_weather: WeatherRecord | None = None,
    capture_sun_zenith: float | None = None,
) -> SceneIrradianceFunction:
    """Single-albedo scene model: reflected clear-sky flux times the
    cosine-weighted non-sky fraction of the panel's hemisphere.

    Per sun bin, E = albedo * (DNI * cos(zs) + DHI) * F_scene, where
    DNI/DHI follow the analytic clear-sky template, optionally rescaled so
    the template matches the capture-time weather at the capture-time sun
    zenith.
    """
    if not 0.0 <= albedo <= 1.0:
        raise DomainError("albedo must be in [0, 1]")
    # aperture is sampled in the camera frame: map Earth directions through r_ec
    f_scene = _scene_fraction(aperture, r_ec, normal)
    scale_dni = scale_dhi = 1.0
    if capture_weather is not None and capture_sun_zenith is not None:
        dni_t, dhi_t = clear_sky_profile(capture_sun_zenith)
        if dni_t > 0.0:
            scale_dni = capture_weather.dni / dni_t
        if dhi_t > 0.0:
            scale_dhi = capture_weather.dhi / dhi_t
    grid = np.zeros((N_ZENITH, N_AZIMUTH))
    for i, zs in enumerate(ZENITH_CENTERS):
        dni, dhi = clear_sky_profile(float(zs))
        flux = scale_dni * dni * math.cos(zs) + scale_dhi * dhi
        grid[i, :] = albedo * flux * f_scene
    return SceneIrradianceFunction(grid=grid)


def _scene_fraction(aperture: SkyAperture, r_ec: np.ndarray, normal: np.ndarray) -> float:
    """Cosine-weighted non-sky fraction seen by the panel (Earth frame)."""

    class _EarthAperture:
        def sample(self, dirs):
            return aperture.sample(np.asarray(dirs) @ r_ec)

    # the quadrature can overshoot 1 by a pixel-discretization hair
    f = scene_view_factor(_EarthAperture(), normal)  # type: ignore[arg-type]
    return min(1.0, max(0.0, f))


def pca_explained_variance(dataset: list[SceneIrradianceFunction]) -> np.ndarray:
    """Cumulative explained-variance ratios of a PCA on the flattened grids.

    A dataset with zero variance is reported as fully explained by one
    component.
    """
    if len(dataset) < 2:
        raise DomainError("PCA needs at least 2 scene functions")
    x = np.array([f.grid.ravel() for f in dataset])
    x = x - x.mean(axis=0, keepdims=True)
    svals = np.linalg.svd(x, compute_uv=False)
    var = svals**2
    total = float(var.sum())
    k = min(len(dataset), x.shape[1])
    if total <= 0.0:
        return np.ones(k)
    return np.minimum(np.cumsum(var[:k]) / total, 1.0)
