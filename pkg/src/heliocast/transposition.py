"""Plane-of-array transposition baseline.

Beam + Perez tilted-surface diffuse attenuated by the sky view factor +
isotropic ground reflection.  This is the conventional comparison model;
it assumes an isotropic sky when attenuating the diffuse term, which is
exactly the failure mode the image-based pipeline avoids in canyons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from heliocast.errors import DomainError
from heliocast.frames import SolarPosition
from heliocast.imaging import SkyAperture, sky_view_factor
from heliocast.irradiance import PanelPose
from heliocast.sky import clearness_bin, condition_indices, transposition_table
from heliocast.weather import WeatherRecord

COS85 = math.cos(math.radians(85.0))


@dataclass(frozen=True)
class TranspositionConfig:
    ground_albedo: float = 0.2
    svf: Optional[float] = None  # scalar SVF when no aperture is supplied

    def __post_init__(self):
        if not 0.0 <= self.ground_albedo <= 1.0:
            raise DomainError("ground albedo must be in [0, 1]")
        if self.svf is not None and not 0.0 <= self.svf <= 1.0:
            raise DomainError("svf must be in [0, 1]")


def perez_transposition_diffuse(
    dni: float,
    dhi: float,
    sun: SolarPosition,
    panel: PanelPose,
    day_of_year: int,
) -> float:
    """Tilted-plane diffuse irradiance (isotropic + circumsolar + horizon)."""
    if dhi <= 0.0:
        return 0.0
    tilt = panel.tilt
    if sun.zenith >= math.pi / 2.0:
        # no circumsolar weighting without a sun; fall back to isotropic
        return dhi * (1.0 + math.cos(tilt)) / 2.0
    idx = condition_indices(dni, dhi, sun, day_of_year)
    f = transposition_table()[clearness_bin(idx.clearness)]
    f1 = max(0.0, f[0, 0] + f[0, 1] * idx.brightness + f[0, 2] * sun.zenith)
    f2 = f[1, 0] + f[1, 1] * idx.brightness + f[1, 2] * sun.zenith
    cos_inc = float(np.dot(panel.normal, sun.vector))
    a = max(0.0, cos_inc)
    b = max(COS85, math.cos(sun.zenith))
    value = dhi * (
        (1.0 - f1) * (1.0 + math.cos(tilt)) / 2.0 + f1 * a / b + f2 * math.sin(tilt)
    )
    return max(0.0, value)


def e_ground(
    dni: float, dhi: float, sun: SolarPosition, tilt: float, albedo: float
) -> float:
    """Isotropic ground-reflected irradiance on a tilted panel."""
    if not 0.0 <= albedo <= 1.0:
        raise DomainError("albedo must be in [0, 1]")
    ghi = max(0.0, dni * math.cos(sun.zenith)) + dhi
    return albedo * ghi * (1.0 - math.cos(tilt)) / 2.0


def baseline_total(
    weather: WeatherRecord,
    sun: SolarPosition,
    panel: PanelPose,
    aperture: Optional[SkyAperture] = None,
    r_ec: Optional[np.ndarray] = None,
    config: TranspositionConfig = TranspositionConfig(),
) -> float:
    """Transposition-model plane-of-array irradiance.

    With an aperture, the SVF is computed from it and the beam term is
    gated by the sun's visibility; with only a scalar SVF, the sun is
    assumed visible (coarse-aperture semantics).
    """
    if aperture is not None:
        if r_ec is None:
            r_ec = np.eye(3)

        class _EarthAperture:
            def sample(self, dirs):
                return aperture.sample(np.asarray(dirs) @ r_ec)

        svf = sky_view_factor(_EarthAperture(), panel.normal)  # type: ignore[arg-type]
        sun_visible = (
            float(aperture.sample(r_ec.T @ sun.vector)) if sun.above_horizon else 0.0
        )
    else:
        svf = config.svf if config.svf is not None else 1.0
        sun_visible = 1.0 if sun.above_horizon else 0.0

    cos_inc = float(np.dot(panel.normal, sun.vector)) if sun.above_horizon else 0.0
    beam = weather.dni * sun_visible * max(0.0, cos_inc)
    day = weather.instant.timetuple().tm_yday
    diffuse = perez_transposition_diffuse(weather.dni, weather.dhi, sun, panel, day)
    ground = e_ground(weather.dni, weather.dhi, sun, panel.tilt, config.ground_albedo)
    return beam + diffuse * svf + ground
