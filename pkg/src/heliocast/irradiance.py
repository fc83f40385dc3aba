"""The forecasting engine: sun, sky, and scene components and their sum.

The sun is a point source gated by the sky aperture (beam term), the sky
is integrated against the Perez radiance distribution over the visible
aperture, and the scene term comes from a pluggable predictor scaled by
the clear-sky ratio R = GHI / GHI_clear when clear-sky GHI is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from typing import Optional

import numpy as np

from heliocast.errors import DomainError, FormatError
from heliocast.frames import GeoTime, SolarPosition, direction
from heliocast.imaging import SkyAperture
from heliocast.sky import SkyRadianceModel, build_sky, hemisphere_grid
from heliocast.solar import day_of_year, solar_position
from heliocast.weather import WeatherRecord, WeatherSeries

DEFAULT_GRID_DEG = 1.0

FORECAST_HEADER = "timestamp,e_sun_wm2,e_sky_wm2,e_scene_wm2,e_total_wm2"


@dataclass(frozen=True)
class PanelPose:
    """Panel normal in the Earth frame; must face above the horizon."""

    normal: np.ndarray

    def __post_init__(self):
        n = direction(*self.normal)
        if n[2] < 0.0:
            raise DomainError("panel normal must not point below the horizon")
        object.__setattr__(self, "normal", n)

    @property
    def tilt(self) -> float:
        """Zenith angle of the normal, radians."""
        return math.acos(min(1.0, max(-1.0, float(self.normal[2]))))

    @property
    def azimuth(self) -> float:
        return math.atan2(float(self.normal[0]), float(self.normal[1])) % (2.0 * math.pi)


@dataclass(frozen=True)
class ForecastPoint:
    instant: datetime
    e_sun: float
    e_sky: float
    e_scene: float

    @property
    def e_total(self) -> float:
        return self.e_sun + self.e_sky + self.e_scene


def e_sun(
    dni: float,
    aperture: SkyAperture,
    r_ec: np.ndarray,
    normal: np.ndarray,
    sun: SolarPosition,
) -> float:
    """Beam irradiance: DNI gated by sun visibility and foreshortening."""
    if not sun.above_horizon:
        return 0.0
    s = sun.vector
    cos_inc = float(np.dot(normal, s))
    if cos_inc <= 0.0:
        return 0.0
    visible = float(aperture.sample(r_ec.T @ s))
    return dni * visible * cos_inc


def e_sky(
    sky: SkyRadianceModel,
    aperture: SkyAperture,
    r_ec: np.ndarray,
    normal: np.ndarray,
    grid_deg: float = DEFAULT_GRID_DEG,
) -> float:
    """Sky irradiance: aperture-masked, cosine-weighted Perez integral."""
    zen, az, w = hemisphere_grid(grid_deg)
    st = np.sin(zen)
    dirs = np.stack([st * np.sin(az), st * np.cos(az), np.cos(zen)], axis=-1)
    cosine = dirs @ np.asarray(normal, dtype=float)
    sel = cosine > 0.0
    if not sel.any():
        return 0.0
    a = aperture.sample(dirs[sel] @ r_ec).astype(float)
    radiance = sky.radiance(zen[sel], az[sel])
    return float(np.sum(radiance * a * cosine[sel] * w[sel]))


def clear_sky_ratio(weather: WeatherRecord, sun: SolarPosition) -> float:
    """R = GHI / GHI_clear, or 1 when no clear-sky GHI accompanies the record."""
    if weather.ghi_clear is None:
        return 1.0
    if weather.ghi_clear <= 0.0:
        if sun.above_horizon:
            raise DomainError("ghi_clear is 0 with the sun above the horizon")
        return 0.0
    return weather.ghi / weather.ghi_clear


def e_scene(predictor, sun: SolarPosition, weather: WeatherRecord) -> float:
    """Scene-reflection irradiance via the predictor and the R scaling."""
    if not sun.above_horizon:
        return 0.0
    return float(predictor(sun.zenith, sun.azimuth)) * clear_sky_ratio(weather, sun)


@dataclass
class Site:
    """Everything needed to forecast one panel from one capture."""

    aperture: SkyAperture
    r_ec: np.ndarray
    panel: PanelPose
    latitude: float
    longitude: float
    predictor: Optional[object] = None  # callable (zenith, azimuth) -> W/m^2
    grid_deg: float = DEFAULT_GRID_DEG


def forecast_point(site: Site, record: WeatherRecord) -> ForecastPoint:
    geo = GeoTime(site.latitude, site.longitude, record.instant)
    sun = solar_position(geo)
    if not sun.above_horizon and record.ghi == 0.0:
        return ForecastPoint(record.instant, 0.0, 0.0, 0.0)
    sun_term = e_sun(record.dni, site.aperture, site.r_ec, site.panel.normal, sun)
    sky_term = 0.0
    if record.dhi > 0.0 and sun.above_horizon:
        sky = build_sky(
            record.dni, record.dhi, sun, day_of_year(record.instant), site.grid_deg
        )
        sky_term = e_sky(sky, site.aperture, site.r_ec, site.panel.normal, site.grid_deg)
    scene_term = 0.0
    if site.predictor is not None:
        scene_term = e_scene(site.predictor, sun, record)
    return ForecastPoint(record.instant, sun_term, sky_term, scene_term)


def forecast_series(site: Site, weather: WeatherSeries) -> list[ForecastPoint]:
    """One ForecastPoint per weather record."""
    return [forecast_point(site, rec) for rec in weather]


def annual_irradiation(site: Site, tmy: WeatherSeries) -> float:
    """Trapezoidal time integral of e_total over a full year, kWh/m^2/yr."""
    points = forecast_series(site, tmy)
    return integrate_total(points, tmy.nominal_step)


def integrate_total(points: list[ForecastPoint], nominal_step: float) -> float:
    """Trapezoidal integral of e_total, kWh/m^2; validates step regularity."""
    if len(points) < 2:
        raise FormatError("need at least two forecast points to integrate")
    times = np.array(
        [p.instant.timestamp() for p in points]
    )
    gaps = np.diff(times)
    if nominal_step > 0 and np.any(gaps > 2.0 * nominal_step):
        raise FormatError("time series contains gaps larger than 2x the nominal step")
    totals = np.array([p.e_total for p in points])
    joules = float(np.trapezoid(totals, times))
    return joules / 3.6e6  # W*s/m^2 -> kWh/m^2


def save_forecast(path, points: list[ForecastPoint], extra_header: str = "") -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(FORECAST_HEADER + (("," + extra_header) if extra_header else "") + "\n")
        for p in points:
            fh.write(
                f"{p.instant.strftime('%Y-%m-%dT%H:%M:%SZ')},"
                f"{p.e_sun:.6g},{p.e_sky:.6g},{p.e_scene:.6g},{p.e_total:.6g}\n"
            )


def load_forecast(path) -> list[ForecastPoint]:
    points = []
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith(FORECAST_HEADER):
            raise FormatError(f"{path}: unexpected forecast header")
        for line in fh:
            if not line.strip():
                continue
            parts = line.split(",")
            p = ForecastPoint(
                instant=datetime.fromisoformat(parts[0].replace("Z", "+00:00")),
                e_sun=float(parts[1]),
                e_sky=float(parts[2]),
                e_scene=float(parts[3]),
            )
            points.append(p)
    return points
