"""Solar ephemeris.

Closed-form solar position after the Astronomical Almanac's low-precision
algorithm (Michalsky-style), which is accurate to a few hundredths of a
degree over 1950-2100.  Positions are geometric (no atmospheric
refraction), which is the quantity the irradiance models need.
"""

from __future__ import annotations

import math
from datetime import datetime, timezone

from heliocast.frames import GeoTime, SolarPosition

_J2000 = 2451545.0


def julian_day(instant: datetime) -> float:
    """Julian day number of a UTC datetime."""
    t = instant.astimezone(timezone.utc)
    frac = (
        t.hour / 24.0
        + t.minute / 1440.0
        + (t.second + t.microsecond * 1e-6) / 86400.0
    )
    y, m = t.year, t.month
    if m <= 2:
        y -= 1
        m += 12
    a = y // 100
    b = 2 - a + a // 4
    return math.floor(365.25 * (y + 4716)) + math.floor(30.6001 * (m + 1)) + t.day + b - 1524.5 + frac


def solar_position(geo_time: GeoTime) -> SolarPosition:
    """Sun zenith/azimuth (radians, azimuth clockwise from North)."""
    n = julian_day(geo_time.instant) - _J2000

    mean_lon = math.radians((280.460 + 0.9856474 * n) % 360.0)
    mean_anom = math.radians((357.528 + 0.9856003 * n) % 360.0)
    ecl_lon = mean_lon + math.radians(
        1.915 * math.sin(mean_anom) + 0.020 * math.sin(2.0 * mean_anom)
    )
    obliquity = math.radians(23.439 - 0.0000004 * n)

    ra = math.atan2(math.cos(obliquity) * math.sin(ecl_lon), math.cos(ecl_lon))
    dec = math.asin(math.sin(obliquity) * math.sin(ecl_lon))

    t = geo_time.instant
    ut_hours = t.hour + t.minute / 60.0 + (t.second + t.microsecond * 1e-6) / 3600.0
    gmst = (6.697375 + 0.0657098242 * (n - ut_hours / 24.0) + 1.00273790935 * ut_hours) % 24.0
    lmst = (gmst + geo_time.longitude / 15.0) % 24.0
    hour_angle = math.radians(lmst * 15.0) - ra

    lat = math.radians(geo_time.latitude)
    sin_el = math.sin(lat) * math.sin(dec) + math.cos(lat) * math.cos(dec) * math.cos(hour_angle)
    sin_el = min(1.0, max(-1.0, sin_el))
    el = math.asin(sin_el)
    az = math.atan2(
        -math.cos(dec) * math.sin(hour_angle),
        (math.sin(dec) - math.sin(lat) * sin_el) / max(math.cos(lat), 1e-12),
    )
    return SolarPosition(zenith=math.pi / 2.0 - el, azimuth=az % (2.0 * math.pi))


def day_of_year(instant: datetime) -> int:
    return instant.astimezone(timezone.utc).timetuple().tm_yday
