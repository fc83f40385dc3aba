"""Perez all-weather sky radiance model.

The sky state is parameterized by DNI/DHI.  From those we derive the
clearness and brightness indices, look up the published 8-bin coefficient
table (shipped as CSV data), evaluate the relative radiance distribution,
and normalize it so that the cosine-weighted hemisphere integral equals
the DHI.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from heliocast.errors import DomainError
from heliocast.frames import SolarPosition

KAPPA = 1.041
SOLAR_CONSTANT = 1367.0  # W/m^2
# clearness bin edges; a value exactly on an edge falls in the lower bin
CLEARNESS_EDGES = np.array([1.065, 1.230, 1.500, 1.950, 2.800, 4.500, 6.200])

DEFAULT_GRID_DEG = 1.0


def _load_table(name: str) -> np.ndarray:
    with resources.files("heliocast.data").joinpath(name).open() as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return np.array([[float(v) for v in r[1:]] for r in rows[1:]])


@lru_cache(maxsize=None)
def _allweather_table() -> np.ndarray:
    return _load_table("perez_allweather.csv").reshape(8, 5, 4)


@lru_cache(maxsize=None)
def transposition_table() -> np.ndarray:
    return _load_table("perez_transposition.csv").reshape(8, 2, 3)


def extraterrestrial_normal(day_of_year: int) -> float:
    """Extraterrestrial normal irradiance with eccentricity correction."""
    g = 2.0 * math.pi * day_of_year / 365.0
    return SOLAR_CONSTANT * (
        1.00011
        + 0.034221 * math.cos(g)
        + 0.00128 * math.sin(g)
        + 0.000719 * math.cos(2.0 * g)
        + 0.000077 * math.sin(2.0 * g)
    )


def relative_air_mass(zenith: float) -> float:
    """Kasten-Young relative air mass for a sun zenith in radians."""
    zdeg = math.degrees(zenith)
    if zdeg >= 90.0:
        return 38.0  # horizon limit of the Kasten-Young formula
    return 1.0 / (math.cos(zenith) + 0.50572 * (96.07995 - zdeg) ** -1.6364)


@dataclass(frozen=True)
class SkyConditionIndices:
    clearness: float
    brightness: float
    sun_zenith: float

    def __post_init__(self):
        if self.clearness < 1.0 or self.brightness < 0.0:
            raise DomainError("clearness must be >= 1 and brightness >= 0")


@dataclass(frozen=True)
class PerezCoefficients:
    a: float
    b: float
    c: float
    d: float
    e: float


def condition_indices(
    dni: float, dhi: float, sun: SolarPosition, day_of_year: int
) -> SkyConditionIndices:
    """Clearness and brightness indices for the given sky state."""
    if dhi <= 0.0:
        raise DomainError("condition indices need dhi > 0")
    if dni < 0.0:
        raise DomainError("dni must be >= 0")
    if sun.zenith >= math.pi / 2.0:
        raise DomainError("sun must be above the horizon")
    z3 = KAPPA * sun.zenith**3
    clearness = (((dhi + dni) / dhi) + z3) / (1.0 + z3)
    brightness = relative_air_mass(sun.zenith) * dhi / extraterrestrial_normal(day_of_year)
    return SkyConditionIndices(clearness, brightness, sun.zenith)


def clearness_bin(clearness: float) -> int:
    """0-based bin index; boundary values fall in the lower bin."""
    return int(np.searchsorted(CLEARNESS_EDGES, clearness, side="left"))


def perez_coefficients(indices: SkyConditionIndices) -> PerezCoefficients:
    """Coefficients a-e from the published 8-bin table.

    Bin 1 (overcast) uses the published special forms for c and d.  The
    brightness floor for intermediate skies and the b <= 0 clamp keep the
    horizon factor bounded, matching common reference implementations.
    """
    binno = clearness_bin(indices.clearness)
    zs = indices.sun_zenith
    delta = indices.brightness
    if 0 < binno < 5:
        delta = max(delta, 0.2)
    t = _allweather_table()[binno]
    a, b, c, d, e = (row[0] + row[1] * zs + delta * (row[2] + row[3] * zs) for row in t)
    if binno == 0:
        c = math.exp((delta * (t[2, 0] + t[2, 1] * zs)) ** t[2, 2]) - t[2, 3]
        d = -math.exp(delta * (t[3, 0] + t[3, 1] * zs)) + t[3, 2] + delta * t[3, 3]
    return PerezCoefficients(a=a, b=min(b, 0.0), c=c, d=d, e=e)


def relative_radiance(
    coeffs: PerezCoefficients,
    zenith,
    azimuth,
    sun: SolarPosition,
):
    """Dimensionless sky radiance, clamped to >= 0; 0 below the horizon.

    Accepts scalars or numpy arrays for zenith/azimuth.
    """
    zenith = np.asarray(zenith, dtype=float)
    azimuth = np.asarray(azimuth, dtype=float)
    cos_z = np.cos(zenith)
    cos_gamma = np.clip(
        np.cos(zenith) * math.cos(sun.zenith)
        + np.sin(zenith) * math.sin(sun.zenith) * np.cos(azimuth - sun.azimuth),
        -1.0,
        1.0,
    )
    gamma = np.arccos(cos_gamma)
    with np.errstate(over="ignore", divide="ignore"):
        horiz = 1.0 + coeffs.a * np.exp(coeffs.b / np.maximum(cos_z, 1e-12))
    circum = 1.0 + coeffs.c * np.exp(coeffs.d * gamma) + coeffs.e * cos_gamma**2
    out = np.where(zenith < math.pi / 2.0, np.maximum(horiz * circum, 0.0), 0.0)
    return out if out.ndim else float(out)


@lru_cache(maxsize=8)
def hemisphere_grid(grid_deg: float = DEFAULT_GRID_DEG):
    """Midpoint quadrature grid over the upper hemisphere.

    Returns (zenith, azimuth, solid-angle weight) flat arrays; the weight
    is sin(zen) * dzen * daz.
    """
    step = math.radians(grid_deg)
    n_z = max(1, round((math.pi / 2.0) / step))
    n_a = max(1, round((2.0 * math.pi) / step))
    zen = (np.arange(n_z) + 0.5) * (math.pi / 2.0 / n_z)
    az = (np.arange(n_a) + 0.5) * (2.0 * math.pi / n_a)
    zz, aa = np.meshgrid(zen, az, indexing="ij")
    w = np.sin(zz) * (math.pi / 2.0 / n_z) * (2.0 * math.pi / n_a)
    return zz.ravel(), aa.ravel(), w.ravel()


@dataclass(frozen=True)
class SkyRadianceModel:
    """Absolute sky radiance L(zenith, azimuth) in W/m^2/sr."""

    coefficients: PerezCoefficients
    sun: SolarPosition
    dhi: float
    dni: float
    normalization: float  # W/m^2/sr per relative-radiance unit

    def radiance(self, zenith, azimuth):
        return self.normalization * relative_radiance(
            self.coefficients, zenith, azimuth, self.sun
        )


def build_sky(
    dni: float,
    dhi: float,
    sun: SolarPosition,
    day_of_year: int,
    grid_deg: float = DEFAULT_GRID_DEG,
) -> SkyRadianceModel:
    """Sky model normalized so the hemisphere cosine integral equals DHI."""
    idx = condition_indices(dni, dhi, sun, day_of_year)
    coeffs = perez_coefficients(idx)
    return build_sky_from_coefficients(coeffs, sun, dni, dhi, grid_deg)


def build_sky_from_coefficients(
    coeffs: PerezCoefficients,
    sun: SolarPosition,
    dni: float,
    dhi: float,
    grid_deg: float = DEFAULT_GRID_DEG,
) -> SkyRadianceModel:
    zen, az, w = hemisphere_grid(grid_deg)
    rel = relative_radiance(coeffs, zen, az, sun)
    integral = float(np.sum(rel * np.cos(zen) * w))
    if integral <= 0.0:
        raise DomainError("relative radiance integrates to zero")
    return SkyRadianceModel(
        coefficients=coeffs,
        sun=sun,
        dhi=dhi,
        dni=dni,
        normalization=dhi / integral,
    )


def uniform_sky(dni: float, dhi: float, sun: SolarPosition) -> SkyRadianceModel:
    """Isotropic sky with the exact analytic normalization DHI / pi."""
    coeffs = PerezCoefficients(a=0.0, b=-1.0, c=0.0, d=-1.0, e=0.0)
    return SkyRadianceModel(
        coefficients=coeffs, sun=sun, dhi=dhi, dni=dni, normalization=dhi / math.pi
    )
